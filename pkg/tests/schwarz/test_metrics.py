# pylint: disable=missing-docstring

import math
import unittest

import numpy as np

from inpaint.schwarz.core import ImageBuffer, InvalidInput
from inpaint.schwarz.metrics import (EXACT_PSNR, TRACE_HEADER,
                                     ConvergenceTrace, format_psnr,
                                     mse_per_channel, psnr, psnr_from_mse,
                                     sufficient_residual)

import tests.schwarz.util as util


class TestPsnr(unittest.TestCase):
    def test_identical(self):
        image = util.random_image(8, 6, channels=3)
        self.assertEqual(psnr(image, image), EXACT_PSNR)
        self.assertEqual(format_psnr(psnr(image, image)), 'exact')

    def test_one_grey_level(self):
        f = ImageBuffer(np.full((3, 4, 4), 0.5))
        u = ImageBuffer(np.full((3, 4, 4), 0.5 + 1 / 255))
        self.assertAlmostEqual(psnr(u, f), 10 * math.log10(65025), places=6)
        self.assertAlmostEqual(psnr(u, f), 48.1308, places=4)

    def test_black_and_white(self):
        black = ImageBuffer(np.zeros((3, 2, 2)))
        white = ImageBuffer(np.ones((3, 2, 2)))
        self.assertAlmostEqual(psnr(black, white), 0.0)

    def test_mse_per_channel(self):
        f = ImageBuffer(np.zeros((3, 2, 2)))
        data = np.zeros((3, 2, 2))
        data[1, 0, 0] = 2 / 255
        u = ImageBuffer(data)
        np.testing.assert_allclose(mse_per_channel(u, f), [0.0, 1.0, 0.0])
        self.assertAlmostEqual(psnr(u, f), psnr_from_mse(1 / 3))

    def test_mse_brute_force(self):
        u = util.random_image(5, 4, channels=3, seed=1)
        f = util.random_image(5, 4, channels=3, seed=2)
        expected = []
        for c in range(3):
            total = 0.0
            for y in range(4):
                for x in range(5):
                    total += (255 * u.data[c, y, x] - 255 * f.data[c, y, x]) ** 2
            expected.append(total / 20)
        np.testing.assert_allclose(mse_per_channel(u, f), expected,
                                   rtol=1e-12)

    def test_symmetric(self):
        u = util.random_image(6, 6, channels=3, seed=3)
        f = util.random_image(6, 6, channels=3, seed=4)
        self.assertEqual(psnr(u, f), psnr(f, u))

    def test_channel_order_does_not_matter(self):
        u = util.random_image(6, 6, channels=3, seed=5)
        f = util.random_image(6, 6, channels=3, seed=6)
        order = [2, 0, 1]
        swapped = psnr(ImageBuffer(u.data[order]), ImageBuffer(f.data[order]))
        self.assertAlmostEqual(swapped, psnr(u, f), places=10)

    def test_mismatch(self):
        with self.assertRaises(InvalidInput):
            psnr(util.random_image(4, 4), util.random_image(4, 5))
        with self.assertRaises(InvalidInput):
            psnr(util.random_image(4, 4), util.random_image(4, 4, channels=3))


class TestConvergenceTrace(util.TestWithTempDirectory):
    def sample_trace(self) -> ConvergenceTrace:
        trace = ConvergenceTrace()
        trace.append(0, 0.5, 1.0, 20.0)
        trace.append(1, 2.0, 0.1, 30.0)
        trace.append(2, 3.5, 1e-3, 35.0)
        trace.append(3, 5.0, 1e-4, 35.005)
        return trace

    def test_iterations_must_increase(self):
        trace = ConvergenceTrace()
        trace.append(0, 0.0, 1.0)
        with self.assertRaises(InvalidInput):
            trace.append(0, 1.0, 0.5)

    def test_times_never_decrease(self):
        trace = ConvergenceTrace()
        trace.append(0, 2.0, 1.0)
        trace.append(1, 1.5, 0.5)
        self.assertEqual(trace.rows[1].time_ms, 2.0)

    def test_queries(self):
        trace = self.sample_trace()
        self.assertEqual(trace.iterations, 3)
        self.assertEqual(trace.iterations_to(1e-2), 2)
        self.assertEqual(trace.time_to(1e-2), 3.5)
        self.assertEqual(trace.psnr_at(1e-3), 35.0)
        self.assertIsNone(trace.iterations_to(1e-6))
        self.assertEqual(trace.final_psnr, 35.005)

    def test_empty(self):
        trace = ConvergenceTrace()
        self.assertEqual(trace.iterations, 0)
        self.assertTrue(math.isnan(trace.final_relative_residual))
        self.assertIsNone(sufficient_residual(trace))

    def test_csv(self):
        trace = ConvergenceTrace()
        trace.append(0, 0.0, 1.0)
        trace.append(1, 1.25, 0.015625, 31.5)
        trace.append(2, 2.5, 0.0, EXACT_PSNR)
        path = self.output_path('trace.csv')
        trace.to_csv(path)

        with open(path, 'r', encoding='utf8') as input_file:
            lines = input_file.read().splitlines()
        self.assertEqual(lines[0], ','.join(TRACE_HEADER))
        self.assertEqual(lines[1], '0,0.000,1.0,')
        self.assertTrue(lines[3].endswith(',exact'))

        loaded = ConvergenceTrace.from_csv(path)
        self.assertEqual(loaded.rows, trace.rows)

    def test_not_a_trace(self):
        path = self.output_path('other.csv')
        with open(path, 'w', encoding='utf8') as output_file:
            output_file.write('a,b\n1,2\n')
        with self.assertRaises(InvalidInput):
            ConvergenceTrace.from_csv(path)

    def test_bad_rows(self):
        header = ','.join(TRACE_HEADER)
        for body in ('0,0.000\n', '0,0.000,1.0,,7\n', 'x,0.000,1.0,\n',
                     '0,0.000,small,\n', '0,0.000,1.0,high\n'):
            path = self.output_path('bad.csv')
            with open(path, 'w', encoding='utf8') as output_file:
                output_file.write(f"{header}\n{body}")
            with self.assertRaises(InvalidInput) as context:
                ConvergenceTrace.from_csv(path)
            self.assertIn(':2:', str(context.exception))

    def test_sufficient_residual(self):
        self.assertEqual(sufficient_residual(self.sample_trace()), 1e-3)

    def test_sufficient_residual_exact(self):
        trace = ConvergenceTrace()
        trace.append(0, 0.0, 1.0, 12.0)
        trace.append(1, 1.0, 1e-2, EXACT_PSNR)
        trace.append(2, 2.0, 1e-3, EXACT_PSNR)
        self.assertEqual(sufficient_residual(trace), 1e-2)


if __name__ == '__main__':
    unittest.main()  # pragma: no cover
