# pylint: disable=missing-docstring

import unittest

import numpy as np

from inpaint.schwarz.core import ImageBuffer, InpaintingMask, InvalidInput
from inpaint.schwarz.decomposition import SchwarzConfig, solve_schwarz
from inpaint.schwarz.masks import random_mask
from inpaint.schwarz.multilevel import (Averaging, MultilevelConfig, Solver,
                                        build_pyramid, multilevel_solve,
                                        prolongate, restrict_mask)
from inpaint.schwarz.solvers import SolverConfig
from inpaint.schwarz.synthetic import sample_image

import tests.schwarz.util as util

# pylint: disable=no-self-use

EXACT_LOCAL = SolverConfig(tolerance=1e-12, max_iterations=500)


def tight_config(**kwargs) -> SchwarzConfig:
    settings = dict(tolerance=1e-10, block_size=12, overlap=3,
                    local=EXACT_LOCAL, max_outer_iterations=5000, threads=1)
    settings.update(kwargs)
    return SchwarzConfig(**settings)


def brute_force_restrict(known: np.ndarray, values: np.ndarray):
    height, width = known.shape
    coarse_height, coarse_width = -(-height // 2), -(-width // 2)
    coarse_known = np.zeros((coarse_height, coarse_width), dtype=bool)
    coarse_values = np.zeros((coarse_height, coarse_width))
    for i in range(coarse_height):
        for j in range(coarse_width):
            block = known[2 * i:2 * i + 2, 2 * j:2 * j + 2]
            if block.any():
                coarse_known[i, j] = True
                coarse_values[i, j] = np.mean(
                    values[2 * i:2 * i + 2, 2 * j:2 * j + 2][block])
    return coarse_known, coarse_values


class TestRestrictMask(unittest.TestCase):
    def test_mean_of_known_values(self):
        mask = InpaintingMask(np.ones((2, 2), dtype=bool))
        values = ImageBuffer([[0.2, 0.4], [0.6, 0.8]])
        coarse_mask, coarse_values = restrict_mask(mask, values)
        self.assertTrue(coarse_mask.known[0, 0])
        self.assertAlmostEqual(coarse_values.data[0, 0, 0], 0.5)

    def test_single_known_value_passes_through(self):
        known = np.zeros((2, 2), dtype=bool)
        known[1, 0] = True
        values = ImageBuffer([[0.9, 0.1], [0.3, 0.7]])
        _, coarse_values = restrict_mask(InpaintingMask(known), values)
        self.assertEqual(coarse_values.data[0, 0, 0], 0.3)

    def test_equal_values_pass_through(self):
        mask = InpaintingMask(np.ones((4, 4), dtype=bool))
        values = ImageBuffer(np.full((3, 4, 4), 0.1))
        _, coarse_values = restrict_mask(mask, values)
        np.testing.assert_array_equal(coarse_values.data, 0.1)

    def test_all_pixel_averaging(self):
        known = np.zeros((2, 2), dtype=bool)
        known[0, 0] = True
        values = ImageBuffer([[0.3, 0.5], [0.5, 0.7]])
        _, coarse_values = restrict_mask(InpaintingMask(known), values,
                                         Averaging.ALL)
        self.assertAlmostEqual(coarse_values.data[0, 0, 0], 0.5)

    def test_density_grows(self):
        known = np.zeros((4, 4), dtype=bool)
        known[0, 1] = known[1, 2] = known[2, 0] = known[3, 3] = True
        coarse_mask, _ = restrict_mask(InpaintingMask(known),
                                       ImageBuffer(np.zeros((4, 4))))
        self.assertEqual(coarse_mask.density, 1.0)

    def test_unknown_block_stays_unknown(self):
        known = np.zeros((4, 4), dtype=bool)
        known[0, 0] = True
        coarse_mask, coarse_values = restrict_mask(
            InpaintingMask(known), ImageBuffer(np.full((4, 4), 0.6)))
        np.testing.assert_array_equal(coarse_mask.known,
                                      [[True, False], [False, False]])
        self.assertEqual(coarse_values.data[0, 1, 1], 0.0)

    def test_odd_size(self):
        known = np.zeros((3, 5), dtype=bool)
        known[2, 4] = True
        coarse_mask, coarse_values = restrict_mask(
            InpaintingMask(known), ImageBuffer(np.full((3, 5), 0.25)))
        self.assertEqual(coarse_mask.shape, (2, 3))
        self.assertTrue(coarse_mask.known[1, 2])
        self.assertEqual(coarse_values.data[0, 1, 2], 0.25)

    def test_brute_force(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            height, width = rng.integers(2, 15, size=2)
            known = rng.uniform(size=(height, width)) < 0.3
            known[0, 0] = True
            values = rng.uniform(size=(height, width))
            coarse_mask, coarse_values = restrict_mask(
                InpaintingMask(known), ImageBuffer(values))
            expected_known, expected_values = brute_force_restrict(known,
                                                                   values)
            np.testing.assert_array_equal(coarse_mask.known, expected_known)
            np.testing.assert_allclose(coarse_values.data[0],
                                       expected_values, rtol=0, atol=1e-15)

    def test_density_never_drops(self):
        rng = np.random.default_rng(22)
        for _ in range(100):
            height, width = 4 * rng.integers(2, 12, size=2)
            mask = random_mask(int(width), int(height),
                               float(rng.uniform(0.05, 0.5)),
                               seed=int(rng.integers(1 << 30)))
            values = ImageBuffer(np.zeros(mask.shape))
            densities = [mask.density]
            for _ in range(2):
                mask, values = restrict_mask(mask, values)
                densities.append(mask.density)
            self.assertEqual(densities, sorted(densities))

    def test_too_small(self):
        mask = InpaintingMask(np.ones((1, 4), dtype=bool))
        with self.assertRaises(InvalidInput):
            restrict_mask(mask, ImageBuffer(np.zeros((1, 4))))


class TestProlongate(unittest.TestCase):
    def test_constant(self):
        fine = prolongate(np.full((3, 4, 5), 0.7), (8, 9))
        self.assertEqual(fine.shape, (3, 8, 9))
        np.testing.assert_allclose(fine, 0.7, rtol=0, atol=1e-15)

    def test_single_pixel(self):
        np.testing.assert_array_equal(prolongate([[0.4]], (2, 1)),
                                      [[0.4], [0.4]])

    def test_ramp(self):
        fine = prolongate([[0.0, 1.0], [0.0, 1.0]], (4, 4))
        for row in fine:
            np.testing.assert_allclose(row, [0.0, 0.25, 0.75, 1.0])

    def test_within_coarse_range(self):
        coarse = np.random.default_rng(5).uniform(size=(7, 6))
        fine = prolongate(coarse, (13, 12))
        self.assertGreaterEqual(fine.min(), coarse.min() - 1e-15)
        self.assertLessEqual(fine.max(), coarse.max() + 1e-15)

    def test_size_mismatch(self):
        with self.assertRaises(InvalidInput):
            prolongate(np.zeros((2, 2)), (5, 5))


class TestPyramid(unittest.TestCase):
    def test_levels(self):
        image, mask = util.random_problem(40, 30, 0.05)
        pyramid = build_pyramid(image, mask, levels=3, block_size=12,
                                overlap=3)
        self.assertEqual([problem.mask.shape for problem in pyramid.levels],
                         [(30, 40), (15, 20), (8, 10)])
        self.assertEqual(pyramid.coarsest.level, 2)
        self.assertIs(pyramid.finest.mask, mask)
        self.assertEqual(pyramid.coarsest.partition.width, 10)

    def test_stops_when_too_small(self):
        image, mask = util.random_problem(4, 4, 0.25)
        with self.assertLogs('inpaint.schwarz.multilevel', level='WARNING'):
            pyramid = build_pyramid(image, mask, levels=5)
        self.assertEqual(len(pyramid), 3)
        self.assertEqual(pyramid.coarsest.mask.shape, (1, 1))

    def test_invalid_levels(self):
        with self.assertRaises(InvalidInput):
            MultilevelConfig(levels=0)


class TestMultilevelSolve(unittest.TestCase):
    def test_single_level_is_plain_schwarz(self):
        image, mask = util.random_problem(40, 40, 0.05, seed=1)
        config = SchwarzConfig(block_size=12, overlap=3, threads=1)
        multilevel, ml_trace = multilevel_solve(
            image, mask, Solver.ORAS, MultilevelConfig(levels=1), config)
        single, trace = solve_schwarz(image, mask, config=config)
        np.testing.assert_array_equal(multilevel.data, single.data)
        self.assertEqual(ml_trace.iterations, trace.iterations)

    def test_constant_needs_no_fine_iterations(self):
        image = ImageBuffer(np.full((3, 64, 64), 0.4), source=True)
        mask = random_mask(64, 64, 0.05, seed=2)
        _, trace = multilevel_solve(
            image, mask, Solver.ORAS,
            MultilevelConfig(levels=3, coarse_tolerance=1e-10),
            tight_config(tolerance=1e-3, block_size=16, overlap=4))
        self.assertEqual(trace.iterations, 0)
        self.assertTrue(trace.converged)

    def test_schwarz_matches_dense_solution(self):
        image, mask = util.random_problem(32, 32, 0.05, channels=3, seed=3)
        exact = util.dense_solution(image, mask)
        for solver in (Solver.RAS, Solver.ORAS):
            result, trace = multilevel_solve(image, mask, solver,
                                             MultilevelConfig(levels=3),
                                             tight_config())
            self.assertTrue(trace.converged)
            np.testing.assert_allclose(result.vectors(), exact, atol=1e-6)

    def test_random_instances_match_dense_solution(self):
        rng = np.random.default_rng(10)
        config = SchwarzConfig(tolerance=1e-8, block_size=8, overlap=2,
                               threads=1)
        for i in range(50):
            width, height = (int(v) for v in rng.integers(8, 33, size=2))
            density = float(rng.uniform(0.05, 0.5))
            channels = 3 if i % 2 else 1
            image, mask = util.random_problem(width, height, density,
                                              channels, seed=i)
            result, trace = multilevel_solve(image, mask, Solver.ORAS,
                                             MultilevelConfig(levels=3),
                                             config)
            self.assertTrue(trace.converged, (width, height, density))
            np.testing.assert_allclose(result.vectors(),
                                       util.dense_solution(image, mask),
                                       rtol=0, atol=1e-6,
                                       err_msg=f"instance {i}")

    def test_all_pixel_averaging_solves_the_same_problem(self):
        image, mask = util.random_problem(32, 32, 0.05, seed=4)
        result, _ = multilevel_solve(
            image, mask, Solver.ORAS,
            MultilevelConfig(levels=3, averaging=Averaging.ALL),
            tight_config())
        np.testing.assert_allclose(result.vectors(),
                                   util.dense_solution(image, mask),
                                   atol=1e-6)

    def test_cg_matches_dense_solution(self):
        image, mask = util.random_problem(32, 32, 0.05, seed=5)
        result, trace = multilevel_solve(
            image, mask, Solver.CG, MultilevelConfig(levels=3),
            cg_config=SolverConfig(tolerance=1e-11))
        self.assertTrue(trace.converged)
        np.testing.assert_allclose(result.vectors(),
                                   util.dense_solution(image, mask),
                                   atol=1e-6)

    def test_finest_trace(self):
        image, mask = util.random_problem(48, 48, 0.05, seed=6)
        _, trace = multilevel_solve(
            image, mask, Solver.ORAS, MultilevelConfig(levels=3),
            SchwarzConfig(block_size=12, overlap=3, threads=1),
            reference=image)
        self.assertEqual(trace.rows[0].iteration, 0)
        self.assertIsNotNone(trace.rows[0].psnr)
        # coarse work happens before the first finest row
        self.assertGreater(trace.rows[0].time_ms, 0.0)
        self.assertLessEqual(trace.final_relative_residual, 1e-3)

    def test_tolerance_per_level(self):
        image, mask = util.random_problem(32, 32, 0.05, seed=7)
        with self.assertRaises(InvalidInput):
            multilevel_solve(image, mask, Solver.ORAS,
                             MultilevelConfig(levels=3), tight_config(),
                             tolerances=[1e-3])
        _, trace = multilevel_solve(image, mask, Solver.ORAS,
                                    MultilevelConfig(levels=3),
                                    tight_config(),
                                    tolerances=[1e-4, 1e-3, 1e-2])
        self.assertTrue(trace.converged)
        self.assertLessEqual(trace.final_relative_residual, 1e-4)

    def test_unconverged_coarse_level_is_reported(self):
        image, mask = util.random_problem(64, 64, 0.05, seed=9)
        config = SchwarzConfig(tolerance=0.5, block_size=12, overlap=3,
                               max_outer_iterations=2, threads=1)
        for solver in (Solver.ORAS, Solver.CG):
            with self.assertLogs('inpaint.schwarz.multilevel',
                                 level='WARNING') as logs:
                _, trace = multilevel_solve(
                    image, mask, solver,
                    MultilevelConfig(levels=3, coarse_tolerance=1e-14),
                    config, SolverConfig(tolerance=0.5, max_iterations=2))
            self.assertFalse(trace.converged, solver)
            self.assertIn('1, 2', logs.output[-1])

    @util.slow
    def test_coarse_levels_save_fine_iterations(self):
        image = sample_image(256, 256)
        mask = random_mask(256, 256, 0.05, seed=8)
        config = SchwarzConfig(tolerance=1e-3)
        _, single = multilevel_solve(image, mask, Solver.ORAS,
                                     MultilevelConfig(levels=1), config)
        _, multilevel = multilevel_solve(image, mask, Solver.ORAS,
                                         MultilevelConfig(levels=3), config)
        self.assertTrue(multilevel.converged)
        self.assertLess(multilevel.iterations, single.iterations)


if __name__ == '__main__':
    unittest.main()  # pragma: no cover
