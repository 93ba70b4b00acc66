import argparse
import logging
import math
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import tqdm

sys.path.append(os.path.dirname(os.path.split(os.path.abspath(__file__))[0]))
from evaluation.geosparse_fixtures import make_flow_fixture, make_piecewise_fixture, make_random_guidance
from evaluation.geosparse_metrics import evaluate, rmse, sample_masks
from evaluation.geosparse_sampling import (
    EDGE_THRESHOLD,
    PATCH_MAX,
    REGULAR_GRID,
    SamplingSpec,
    grid_phases,
    sample,
    sample_regular,
    sampling_step,
)
from interpolation.geosparse_baselines import bilateral_interpolate, nadaraya_watson
from interpolation.geosparse_core import (
    DEFAULT_SIGMA_R,
    DEFAULT_SIGMA_S,
    FilterParams,
    GeoSparseError,
    ImageGrid,
    ParameterDomainError,
    SparseField,
    derive_params,
)
from interpolation.geosparse_filter import interpolate
from interpolation.geosparse_oracle import exact_filter
from misc.formats import FormatParseError, read_field, read_image, read_mask, read_sparse, write_field, write_image, write_sparse
from misc.utils import (
    BENCH_HEADER,
    EVALUATE_HEADER,
    SWEEP_HEADER,
    best_of,
    fmt_timespan,
    parse_density_list,
    timed,
    write_csv,
)

"""
Command-line front end: densify sparse samples against a guidance image, produce
sample sets from dense ground truth, score estimates, and run the density sweeps
and timing benchmarks.

    python experiments/geosparse_cli.py interpolate -g left.ppm -s matches.sparse -o dense.pfm
    python experiments/geosparse_cli.py sweep -g left.ppm -t disp.pfm -d 1/4,1/9,1/25 -o sweep.csv
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DOMAIN = 3

DEFAULT_SEED = 0

METHODS = ('geodesic', 'bilateral', 'nw', 'exact')
SAMPLE_MODES = {'edges': EDGE_THRESHOLD, 'patchmax': PATCH_MAX, 'regular': REGULAR_GRID}
FIXTURE_KINDS = ('disparity', 'flow', 'random')


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
            format='%(asctime)s [%(levelname)s] %(message)s',
            level=logging.DEBUG if verbose else logging.INFO,
            handlers=handlers,
            force=True)


def run_method(method: str, sparse: SparseField, guidance: ImageGrid, params: FilterParams, workers: int = 1) -> ImageGrid:
    """
    Densify `sparse` with one of METHODS.

    Args:
        method (str): 'geodesic', 'bilateral', 'nw' or 'exact'
        sparse (SparseField): known samples
        guidance (ImageGrid): guidance image
        params (FilterParams): kernel parameters
        workers (int): thread pool size, only used by the geodesic filter

    Returns:
        dense ImageGrid
    """
    if method == 'geodesic':
        return interpolate(sparse, guidance, params, workers)
    elif method == 'bilateral':
        return bilateral_interpolate(sparse, guidance, params)
    elif method == 'nw':
        return nadaraya_watson(sparse, params)
    elif method == 'exact':
        return exact_filter(sparse, guidance, params)
    raise ParameterDomainError(f'unknown method {method}, expected one of {METHODS}')


def sample_sets(gt: ImageGrid, guidance: ImageGrid, mode: str, density: float,
                phase_average: bool = False) -> List[SparseField]:
    """
    Sample sets a sweep point is scored on: one per grid phase when `phase_average`
    is set (regular grid only), otherwise the single set `mode` produces.
    """
    if phase_average:
        if mode != REGULAR_GRID:
            raise ParameterDomainError(f'phase averaging needs regular-grid sampling, not {mode}')
        return [sample_regular(gt, density, offset) for offset in grid_phases(sampling_step(density))]
    return [sample(SamplingSpec(mode, density), gt, guidance)]


def mean_rmse(method: str, sets: Sequence[SparseField], gt: ImageGrid, guidance: ImageGrid, params: FilterParams,
              workers: int = 1) -> Tuple[float, float]:
    """
    Average RMSE of `method` over several sample sets.

    Returns:
        tuple(mean rmse, total interpolation seconds)
    """
    errors = []
    total = 0.0
    for sparse in sets:
        dense, elapsed = timed(run_method, method, sparse, guidance, params, workers)
        errors.append(rmse(dense, gt))
        total += elapsed
    return float(np.mean(errors)), total


def _density_list(text: str) -> List[float]:
    try:
        return parse_density_list(text)
    except ParameterDomainError as e:
        raise argparse.ArgumentTypeError(str(e))


def _density(text: str) -> float:
    values = _density_list(text)
    if len(values) != 1:
        raise argparse.ArgumentTypeError(f'expected a single density, got {text!r}')
    return values[0]


def _method_list(text: str) -> List[str]:
    methods = [m.strip() for m in text.split(',') if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if not methods or unknown:
        raise argparse.ArgumentTypeError(f'invalid method list {text!r}, choose from {",".join(METHODS)}')
    return methods


class GeoSparseInterpolate:
    """Run one interpolator over a guidance image and a sparse sample file, and write the dense result."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args

    def run(self) -> int:
        guidance = read_image(self.args.guidance)
        sparse = read_sparse(self.args.sparse)
        params = derive_params(self.args.sigma_r, self.args.sigma_s)
        logging.info(f'Interpolating {sparse.count} samples ({sparse.density:.4%}) on a '
                     f'{guidance.width}x{guidance.height} guidance image with method={self.args.method}')

        dense, elapsed = timed(run_method, self.args.method, sparse, guidance, params, self.args.workers)
        path = write_field(self.args.out, dense)
        logging.info(f'Wrote {path} ({fmt_timespan(elapsed)})')
        print(f'{elapsed:.6f}')
        return EXIT_OK


class GeoSparseSample:
    """Sparsify a dense ground-truth field with one of the sampling protocols."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args

    def run(self) -> int:
        gt = read_field(self.args.gt)
        guidance = read_image(self.args.guidance)
        spec = SamplingSpec(SAMPLE_MODES[self.args.mode], self.args.density)

        sparse = sample(spec, gt, guidance)
        write_sparse(self.args.out, sparse)
        logging.info(f'Wrote {sparse.count} samples to {self.args.out} '
                     f'(requested density {spec.density:.4%}, achieved {sparse.density:.4%})')
        return EXIT_OK


class GeoSparseEvaluate:
    """Score a dense estimate against ground truth and emit a one-row CSV."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args

    def run(self) -> int:
        estimate = read_field(self.args.estimate)
        gt = read_field(self.args.gt)

        mask = None
        mask_name = 'all'
        density = None
        if self.args.mask is not None:
            mask = read_mask(self.args.mask, self.args.invert_mask)
            mask_name = 'external-mask'
        if self.args.sparse is not None:
            sparse = read_sparse(self.args.sparse)
            density = sparse.density
            if self.args.mask_kind != 'all':
                if mask is not None:
                    raise ParameterDomainError('--mask and --mask-kind known/unknown are mutually exclusive')
                known, unknown = sample_masks(sparse)
                mask = known if self.args.mask_kind == 'known' else unknown
                mask_name = self.args.mask_kind
        elif self.args.mask_kind != 'all':
            raise ParameterDomainError(f'--mask-kind {self.args.mask_kind} needs --sparse')

        start_time = time.time()
        report = evaluate(estimate, gt, self.args.metric, mask, mask_name, density)
        elapsed = time.time() - start_time
        row = report.csv_row()
        row[-1] = f'{elapsed:.6f}'
        write_csv(EVALUATE_HEADER, [row], self.args.out)
        return EXIT_OK


class GeoSparseSweep:
    """
    Density sweep: for every (method, density) pair, sample the ground truth,
    interpolate, and record the RMSE against the full ground truth.

    With --phase-average a regular-grid point is the mean RMSE over every grid
    phase, and --sigma-s-per-step ties the spatial bandwidth to the grid step
    (sigma_s = factor * step) instead of using --sigma-s.

    Rows are ordered by method, then by density as given on the command line.
    """

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args

    def params_for(self, density: float) -> FilterParams:
        if self.args.sigma_s_per_step is not None:
            return derive_params(self.args.sigma_r, self.args.sigma_s_per_step * sampling_step(density))
        return derive_params(self.args.sigma_r, self.args.sigma_s)

    def run(self) -> int:
        gt = read_field(self.args.gt)
        guidance = read_image(self.args.guidance)
        mode = SAMPLE_MODES[self.args.mode]

        samples: Dict[float, List[SparseField]] = {}
        for density in self.args.densities:
            samples[density] = sample_sets(gt, guidance, mode, density, self.args.phase_average)

        rows = []
        pb = tqdm.tqdm(total=len(self.args.methods) * len(self.args.densities))
        for method in self.args.methods:
            for density in self.args.densities:
                pb.set_description(f'{method} @ {density:.4g}')
                error, elapsed = mean_rmse(method, samples[density], gt, guidance, self.params_for(density),
                                           self.args.workers)
                rows.append([method, f'{1.0 / math.sqrt(density):.6f}', f'{error:.6f}', f'{elapsed:.6f}'])
                logging.debug(f'{method} density={density:.6g}: rmse={error:.4f} over {len(samples[density])} '
                              f'sample set(s) in {fmt_timespan(elapsed)}')
                pb.update(1)
        pb.close()

        write_csv(SWEEP_HEADER, rows, self.args.out)
        return EXIT_OK


class GeoSparseBench:
    """
    Timing-only sweep. Each density gets a regular-grid sample set of seeded random
    values, and every run is timed best-of `repeats`.
    """

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args

    def run(self) -> int:
        if self.args.guidance is not None:
            guidance = read_image(self.args.guidance)
        else:
            guidance = make_random_guidance(self.args.width, self.args.height, self.args.seed)
        params = derive_params(self.args.sigma_r, self.args.sigma_s)

        rng = np.random.default_rng(self.args.seed)
        values = ImageGrid(rng.uniform(0.0, 100.0, size=guidance.shape))

        rows = []
        pb = tqdm.tqdm(total=len(self.args.methods) * len(self.args.densities))
        for method in self.args.methods:
            for density in self.args.densities:
                pb.set_description(f'{method} @ {density:.4g}')
                sparse = sample_regular(values, density)
                _, elapsed = best_of(self.args.repeats, run_method, method, sparse, guidance, params, self.args.workers)
                rows.append([method, f'{density:.6g}', str(guidance.width), str(guidance.height), f'{elapsed:.6f}'])
                pb.update(1)
        pb.close()

        write_csv(BENCH_HEADER, rows, self.args.out)
        return EXIT_OK


class GeoSparseFixture:
    """Write a seeded synthetic guidance image and its ground truth."""

    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args

    def run(self) -> int:
        kind = self.args.kind
        if kind == 'disparity':
            guidance, gt = make_piecewise_fixture(self.args.width, self.args.height, self.args.seed)
        elif kind == 'flow':
            guidance, gt = make_flow_fixture(self.args.width, self.args.height, self.args.seed)
        else:
            guidance = make_random_guidance(self.args.width, self.args.height, self.args.seed)
            gt = None

        write_image(self.args.out_guidance, guidance)
        print(f'> Wrote guidance image {self.args.out_guidance}')
        if gt is not None:
            if self.args.out_gt is None:
                raise ParameterDomainError(f'--out-gt is required for --kind {kind}')
            path = write_field(self.args.out_gt, gt)
            print(f'> Wrote ground truth {path}')
        return EXIT_OK


COMMANDS = {
    'interpolate': GeoSparseInterpolate,
    'sample': GeoSparseSample,
    'evaluate': GeoSparseEvaluate,
    'sweep': GeoSparseSweep,
    'bench': GeoSparseBench,
    'fixture': GeoSparseFixture,
}


class UsageErrorParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def _add_filter_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('-r', '--sigma-r', help=f'Range bandwidth in guidance units (default {DEFAULT_SIGMA_R})',
                        default=DEFAULT_SIGMA_R, type=float)
    parser.add_argument('-S', '--sigma-s', help=f'Spatial bandwidth in pixels (default {DEFAULT_SIGMA_S})',
                        default=DEFAULT_SIGMA_S, type=float)
    parser.add_argument('-w', '--workers', help='Thread pool size for the geodesic filter (default 1)', default=1, type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = UsageErrorParser(prog='geosparse_cli.py')
    parser.add_argument('-v', '--verbose', help='Enable debug logging', action='store_true')
    parser.add_argument('-L', '--log-file', help='Also write log messages to this file', type=str)
    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=UsageErrorParser)

    p = subparsers.add_parser('interpolate', help='Densify a sparse sample file')
    p.add_argument('-g', '--guidance', help='Path to the PGM/PPM guidance image', required=True, type=str)
    p.add_argument('-s', '--sparse', help='Path to the .sparse sample file', required=True, type=str)
    p.add_argument('-m', '--method', help='Interpolation method (default geodesic)', default='geodesic', choices=METHODS)
    p.add_argument('-o', '--out', help='Output path (.pfm for 1 channel, .flo for 2 channels)', required=True, type=str)
    _add_filter_args(p)

    p = subparsers.add_parser('sample', help='Sparsify a dense ground-truth field')
    p.add_argument('-t', '--gt', help='Path to the ground truth (.pfm or .flo)', required=True, type=str)
    p.add_argument('-g', '--guidance', help='Path to the PGM/PPM guidance image', required=True, type=str)
    p.add_argument('-m', '--mode', help='Sampling protocol', required=True, choices=tuple(SAMPLE_MODES))
    p.add_argument('-d', '--density', help='Target density, e.g. 0.04 or 1/25', required=True,
                   type=_density)
    p.add_argument('-o', '--out', help='Path for the output .sparse file', required=True, type=str)

    p = subparsers.add_parser('evaluate', help='Score an estimate against ground truth')
    p.add_argument('-e', '--estimate', help='Path to the estimated field', required=True, type=str)
    p.add_argument('-t', '--gt', help='Path to the ground truth', required=True, type=str)
    p.add_argument('-k', '--mask', help='Optional PGM mask of scored pixels', type=str)
    p.add_argument('-i', '--invert-mask', help='Score the dark pixels of --mask instead (occlusion maps)', action='store_true')
    p.add_argument('-s', '--sparse', help='Sample file the estimate was built from', type=str)
    p.add_argument('-K', '--mask-kind', help='Score all, known or unknown pixels (known/unknown need --sparse)',
                   default='all', choices=('all', 'known', 'unknown'))
    p.add_argument('-M', '--metric', help='Error metric', required=True, choices=('rmse', 'epe'))
    p.add_argument('-o', '--out', help='Write the CSV here instead of stdout', type=str)

    p = subparsers.add_parser('sweep', help='RMSE versus density for several methods')
    p.add_argument('-t', '--gt', help='Path to the single-channel ground truth (.pfm)', required=True, type=str)
    p.add_argument('-g', '--guidance', help='Path to the PGM/PPM guidance image', required=True, type=str)
    p.add_argument('-M', '--methods', help='Comma separated methods (default geodesic,bilateral,nw)',
                   default=['geodesic', 'bilateral', 'nw'], type=_method_list)
    p.add_argument('-d', '--densities', help='Comma separated densities, e.g. 1/4,1/9,1/25', required=True, type=_density_list)
    p.add_argument('-m', '--mode', help='Sampling protocol (default regular)', default='regular', choices=tuple(SAMPLE_MODES))
    p.add_argument('-P', '--phase-average', help='Average each regular-grid point over every grid phase',
                   action='store_true')
    p.add_argument('--sigma-s-per-step', help='Use sigma_s = FACTOR * grid step instead of --sigma-s', type=float,
                   metavar='FACTOR')
    p.add_argument('-o', '--out', help='Write the CSV here instead of stdout', type=str)
    _add_filter_args(p)

    p = subparsers.add_parser('bench', help='Time the interpolators at several densities')
    p.add_argument('-g', '--guidance', help='Path to a PGM/PPM guidance image (default: random image)', type=str)
    p.add_argument('-W', '--width', help='Width of the random guidance image (default 1024)', default=1024, type=int)
    p.add_argument('-H', '--height', help='Height of the random guidance image (default 436)', default=436, type=int)
    p.add_argument('-d', '--densities', help='Comma separated densities, e.g. 1/9,1/1000', required=True, type=_density_list)
    p.add_argument('-M', '--methods', help='Comma separated methods (default geodesic)', default=['geodesic'], type=_method_list)
    p.add_argument('-n', '--repeats', help='Keep the best of this many runs (default 3)', default=3, type=int)
    p.add_argument('--seed', help=f'Random seed (default {DEFAULT_SEED})', default=DEFAULT_SEED, type=int)
    p.add_argument('-o', '--out', help='Write the CSV here instead of stdout', type=str)
    _add_filter_args(p)

    p = subparsers.add_parser('fixture', help='Generate a synthetic guidance image and ground truth')
    p.add_argument('-g', '--out-guidance', help='Path for the PGM/PPM guidance image', required=True, type=str)
    p.add_argument('-t', '--out-gt', help='Path for the ground truth (.pfm or .flo)', type=str)
    p.add_argument('-k', '--kind', help='Fixture kind (default disparity)', default='disparity', choices=FIXTURE_KINDS)
    p.add_argument('-W', '--width', help='Width in pixels (default 256)', default=256, type=int)
    p.add_argument('-H', '--height', help='Height in pixels (default 256)', default=256, type=int)
    p.add_argument('--seed', help=f'Random seed (default {DEFAULT_SEED})', default=DEFAULT_SEED, type=int)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    configure_logging(args.verbose, args.log_file)
    try:
        return COMMANDS[args.command](args).run()
    except (OSError, FormatParseError) as e:
        logging.error(f'{args.command} failed: {e}')
        return EXIT_IO
    except GeoSparseError as e:
        logging.error(f'{args.command} failed: {e}')
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
