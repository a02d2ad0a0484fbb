"""Main method for the schwarzinpaint CLI"""

import argparse
import logging
import sys

from typing import List, Tuple

import inpaint.schwarz.experiments as experiments
import inpaint.schwarz.masks as masks
import inpaint.schwarz.pnm as pnm

from inpaint.schwarz.core import ImageBuffer, InpaintingError, InvalidInput
from inpaint.schwarz.decomposition import DEFAULT_ALPHA, SchwarzConfig
from inpaint.schwarz.experiments import Method, SolverSettings
from inpaint.schwarz.metrics import format_psnr, psnr
from inpaint.schwarz.multilevel import Averaging, MultilevelConfig
from inpaint.schwarz.parallel import resolve_threads
from inpaint.schwarz.solvers import SolverConfig
from inpaint.schwarz.synthetic import sample_image

log = logging.getLogger(__name__)

DEFAULT_RESOLUTIONS = '960x540,1920x1080,2880x1620,3840x2160'
DEFAULT_METHODS = ','.join(method.value for method in Method)
ROBIN_METHODS = (Method.ORAS, Method.MLORAS)


class UsageError(Exception):
    """The exception raised for flag combinations argparse can't check.
    """


def parse_size(text: str) -> Tuple[int, int]:
    """
    Parses a :code:`WIDTHxHEIGHT` resolution.

    Raises
    ------
    InvalidInput
        If the text isn't a positive resolution
    """
    try:
        width, height = (int(part) for part in text.lower().split('x'))
    except ValueError as e:
        raise InvalidInput(f"Expected a resolution like 960x540, got "
                           f"'{text}'") from e
    if width < 1 or height < 1:
        raise InvalidInput(f"Resolution {text} is empty")
    return width, height


def _size_arg(text: str) -> Tuple[int, int]:
    try:
        return parse_size(text)
    except InvalidInput as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _methods_arg(text: str) -> List[Method]:
    try:
        return Method.parse_list(text)
    except InvalidInput as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _floats_arg(text: str) -> List[float]:
    try:
        return [float(value) for value in text.split(',')]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Expected a comma separated list "
                                         f"of numbers, got '{text}'") from e


def _source_arguments(parser: argparse.ArgumentParser, required: bool = True):
    source = parser.add_mutually_exclusive_group(required=required)
    source.add_argument('--image', help='path to a binary PGM/PPM image')
    source.add_argument('--sample', type=_size_arg, metavar='WxH',
                        help='use a generated sample image of this size')


def _solver_arguments(parser: argparse.ArgumentParser, tolerance: float):
    parser.add_argument('--tol', type=float, default=tolerance,
                        help='relative residual target (default: '
                             '%(default)g)')
    parser.add_argument('--levels', type=int,
                        help='pyramid levels of the multilevel methods '
                             '(default: 3)')
    parser.add_argument('--block', type=int, default=32,
                        help='Schwarz block size (default: %(default)d)')
    parser.add_argument('--overlap', type=int, default=6,
                        help='Schwarz block overlap (default: %(default)d)')
    parser.add_argument('--alpha', type=float,
                        help='Robin parameter of ORAS (default: '
                             f"{DEFAULT_ALPHA:g})")
    parser.add_argument('--coarse-tol', type=float, default=1e-2,
                        help='relative residual target of coarse levels '
                             '(default: %(default)g)')
    parser.add_argument('--averaging', choices=[a.value for a in Averaging],
                        default=Averaging.KNOWN.value,
                        help='fine pixels a coarse value averages over '
                             '(default: %(default)s)')
    parser.add_argument('--local-tol', type=float, default=1e-2,
                        help='relative residual target of the local solves '
                             '(default: %(default)g)')
    parser.add_argument('--local-iter', type=int, default=30,
                        help='iteration cap of the local solves (default: '
                             '%(default)d)')
    parser.add_argument('--max-iter', type=int,
                        help='outer iteration cap (default: 500 for RAS/ORAS,'
                             ' 20000 for CG)')
    parser.add_argument('--threads', type=int,
                        help='worker threads (default: '
                             '$SCHWARZ_INPAINT_THREADS or the CPU count)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Homogeneous diffusion inpainting with multilevel '
                    'optimised restricted additive Schwarz')
    parser.prog = 'schwarzinpaint'
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='log progress (repeat for solver iterations)')
    parser.add_argument('-q', '--quiet', action='store_true',
                        help='only log errors')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True

    inpaint = commands.add_parser('inpaint', help='inpaint one image')
    _source_arguments(inpaint)
    inpaint.add_argument('--mask', required=True, help='path to a PBM mask')
    inpaint.add_argument('--out', required=True,
                         help='path of the reconstruction')
    inpaint.add_argument('--method', type=Method, default=Method.MLORAS,
                         choices=list(Method),
                         metavar='{' + DEFAULT_METHODS + '}',
                         help='solver (default: mloras)')
    inpaint.add_argument('--trace', help='path of a convergence trace csv')
    inpaint.add_argument('--reference',
                         help='ground truth image to measure PSNR against')
    _solver_arguments(inpaint, 1e-3)
    inpaint.set_defaults(run=cmd_inpaint)

    mask = commands.add_parser('mask', help='generate an inpainting mask')
    _source_arguments(mask)
    mask.add_argument('--density', type=float, default=0.05,
                      help='share of known pixels (default: %(default)g)')
    mask.add_argument('--out', required=True, help='path of the PBM mask')
    mask.add_argument('--strategy', choices=['random', 'voronoi'],
                      default='random',
                      help='mask generator (default: %(default)s)')
    mask.add_argument('--seed', type=int, default=0,
                      help='random seed (default: %(default)d)')
    mask.add_argument('--initial', type=float, default=0.01,
                      help='starting density of voronoi densification '
                           '(default: %(default)g)')
    mask.add_argument('--steps', type=int, default=100,
                      help='sweep cap of voronoi densification (default: '
                           '%(default)d)')
    _solver_arguments(mask, 1e-3)
    mask.set_defaults(run=cmd_mask)

    compare = commands.add_parser('compare',
                                  help='compare solver convergence')
    _source_arguments(compare)
    compare.add_argument('--mask', required=True, help='path to a PBM mask')
    compare.add_argument('--methods', type=_methods_arg,
                         default=Method.parse_list(DEFAULT_METHODS),
                         help=f"comma separated methods (default: "
                              f"{DEFAULT_METHODS})")
    compare.add_argument('--out-dir', required=True,
                         help='directory for the trace and summary csvs')
    _solver_arguments(compare, 1e-3)
    compare.set_defaults(run=cmd_compare)

    bench = commands.add_parser('bench', help='time solvers against image '
                                              'size')
    _source_arguments(bench)
    bench.add_argument('--resolutions', default=DEFAULT_RESOLUTIONS,
                       help='comma separated WxH sizes (default: '
                            '%(default)s)')
    bench.add_argument('--density', type=float, default=0.05,
                       help='mask density (default: %(default)g)')
    bench.add_argument('--methods', type=_methods_arg,
                       default=[Method.MLORAS, Method.MLCG],
                       help='comma separated methods (default: mloras,mlcg)')
    bench.add_argument('--seed', type=int, default=0,
                       help='mask seed (default: %(default)d)')
    bench.add_argument('--out', required=True, help='path of the timing csv')
    _solver_arguments(bench, 1e-3)
    bench.set_defaults(run=cmd_bench)

    calibrate = commands.add_parser('calibrate',
                                    help='sweep the ORAS Robin parameter')
    _source_arguments(calibrate, required=False)
    calibrate.add_argument('--mask', help='path to a PBM mask (default: a '
                                          'random mask of --density)')
    calibrate.add_argument('--density', type=float, default=0.05,
                           help='density of the random mask (default: '
                                '%(default)g)')
    calibrate.add_argument('--seed', type=int, default=0,
                           help='mask seed (default: %(default)d)')
    calibrate.add_argument('--alphas', type=_floats_arg,
                           default=list(experiments.CALIBRATION_ALPHAS),
                           help='comma separated values to try (default: '
                                '0.1,0.25,0.5,1,2,4)')
    _solver_arguments(calibrate, 1e-6)
    calibrate.set_defaults(run=cmd_calibrate)
    return parser


def configure_logging(verbose: int, quiet: bool):
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level,
                        format='%(levelname)s %(name)s: %(message)s')


def check_arguments(args: argparse.Namespace):
    """
    Raises
    ------
    UsageError
        On flag values or combinations argparse doesn't catch
    """
    if not 0 < args.overlap < args.block:
        raise UsageError(f"need 0 < --overlap < --block, got "
                         f"{args.overlap} and {args.block}")
    for flag in ('tol', 'coarse_tol', 'local_tol'):
        if not getattr(args, flag) > 0:
            raise UsageError(f"--{flag.replace('_', '-')} must be positive")
    if args.levels is not None and args.levels < 1:
        raise UsageError('--levels must be at least 1')
    if args.threads is not None and args.threads < 1:
        raise UsageError('--threads must be at least 1')
    if args.local_iter < 1 or (args.max_iter is not None and
                               args.max_iter < 1):
        raise UsageError('iteration caps must be at least 1')
    if args.alpha is not None and args.alpha < 0:
        raise UsageError('--alpha must be non-negative')

    method = getattr(args, 'method', None)
    if method is not None:
        if args.levels not in (None, 1) and not method.multilevel:
            raise UsageError(f"--levels needs a multilevel method, got "
                             f"{method.value}")
        if args.alpha is not None and method not in ROBIN_METHODS:
            raise UsageError(f"--alpha only applies to oras and mloras, got "
                             f"{method.value}")


def solver_settings(args: argparse.Namespace) -> SolverSettings:
    local = SolverConfig(tolerance=args.local_tol,
                         max_iterations=args.local_iter,
                         residual_check_interval=args.local_iter)
    schwarz = SchwarzConfig(
        tolerance=args.tol, block_size=args.block, overlap=args.overlap,
        alpha=DEFAULT_ALPHA if args.alpha is None else args.alpha,
        local=local,
        max_outer_iterations=500 if args.max_iter is None else args.max_iter,
        threads=resolve_threads(args.threads))
    multilevel = MultilevelConfig(
        levels=3 if args.levels is None else args.levels,
        coarse_tolerance=args.coarse_tol,
        averaging=Averaging(args.averaging))
    cg = SolverConfig(tolerance=args.tol,
                      max_iterations=(20000 if args.max_iter is None
                                      else args.max_iter))
    return SolverSettings(schwarz, multilevel, cg)


def load_source(args: argparse.Namespace) -> ImageBuffer:
    if args.image is not None:
        return pnm.read_pnm(args.image)
    width, height = args.sample if args.sample is not None else (256, 256)
    return sample_image(width, height)


def cmd_inpaint(args: argparse.Namespace) -> int:
    image = load_source(args)
    mask = pnm.read_mask_pbm(args.mask, expected=image)
    reference = None
    if args.reference is not None:
        reference = pnm.read_pnm(args.reference)

    result = experiments.run_method(args.method, image, mask,
                                    solver_settings(args))
    pnm.write_pnm(result.image, args.out)
    if args.trace is not None:
        result.trace.to_csv(args.trace)

    print(f"time_ms: {result.time_ms:.3f}")
    print(f"iterations: {result.trace.iterations}")
    print(f"rel_residual: {result.trace.final_relative_residual:.3e}")
    if reference is not None:
        print(f"psnr: {format_psnr(psnr(result.image, reference))}")
    return 0 if result.converged else 1


def cmd_mask(args: argparse.Namespace) -> int:
    image = load_source(args)
    if args.strategy == 'random':
        mask = masks.random_mask(image.width, image.height, args.density,
                                 args.seed)
        reached = True
    else:
        settings = solver_settings(args)
        result = masks.voronoi_densify(
            image, args.density, args.initial, args.steps, args.seed,
            tolerance=args.tol, levels=settings.multilevel.levels,
            schwarz_config=settings.schwarz)
        mask, reached = result.mask, result.reached_target

    pnm.write_mask_pbm(mask, args.out)
    print(f"known: {mask.count}")
    print(f"density: {mask.density:.6f}")
    return 0 if reached else 1


def cmd_compare(args: argparse.Namespace) -> int:
    image = load_source(args)
    mask = pnm.read_mask_pbm(args.mask, expected=image)
    settings = solver_settings(args)
    results = experiments.compare(image, mask, args.methods, args.out_dir,
                                  settings)

    print(','.join(experiments.SUMMARY_HEADER))
    for row in experiments.summary_rows(results, settings.tolerance):
        print(','.join(row))
    return 0 if all(result.converged for result in results) else 1


def cmd_bench(args: argparse.Namespace) -> int:
    resolutions = [parse_size(size) for size in args.resolutions.split(',')]
    image = load_source(args)
    rows = experiments.bench(image, resolutions, args.methods, args.density,
                             args.seed, solver_settings(args))
    experiments.write_bench(rows, args.out)

    largest = max(resolutions, key=lambda size: size[0] * size[1])
    for method in args.methods:
        timed = [row for row in rows if row.method is method]
        if len({row.pixels for row in timed}) >= 2:
            slope = experiments.loglog_slope([row.pixels for row in timed],
                                             [row.time_ms for row in timed])
            print(f"{method.value} slope: {slope:.3f}")
        final = [row for row in timed if (row.width, row.height) == largest]
        budget = 'within' if final[-1].time_ms <= experiments.REAL_TIME_MS \
            else 'over'
        print(f"{method.value} {largest[0]}x{largest[1]}: "
              f"{final[-1].time_ms:.1f} ms, {budget} the 30 fps budget")
    return 0 if all(row.converged for row in rows) else 1


def cmd_calibrate(args: argparse.Namespace) -> int:
    image = load_source(args)
    if args.mask is not None:
        mask = pnm.read_mask_pbm(args.mask, expected=image)
    else:
        mask = masks.random_mask(image.width, image.height, args.density,
                                 args.seed)
    counts = experiments.calibrate_alpha(image, mask, args.alphas, args.tol,
                                         solver_settings(args).schwarz)

    print('alpha,iterations')
    for alpha, count in counts.items():
        print(f"{alpha:g},{'' if count is None else count}")
    best = experiments.best_alpha(counts)
    if best is None:
        print('no alpha converged')
        return 1
    print(f"best: {best:g}")
    return 0


def main():
    """Main method for the schwarzinpaint CLI"""
    parser = build_parser()
    args = parser.parse_args()
    configure_logging(args.verbose, args.quiet)

    try:
        check_arguments(args)
        if getattr(args, 'resolutions', None) is not None:
            for size in args.resolutions.split(','):
                parse_size(size)
    except (UsageError, InvalidInput) as e:
        parser.error(str(e))

    try:
        code = args.run(args)
    except (InpaintingError, OSError) as e:
        print(str(e), file=sys.stderr)
        sys.exit(1)
    if code:
        sys.exit(code)
