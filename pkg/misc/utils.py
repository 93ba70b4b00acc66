import csv
import math
import sys
import time
from fractions import Fraction
from typing import Any, Callable, List, Optional, Sequence, Tuple

from interpolation.geosparse_core import ParameterDomainError

# column order of the CSV files the experiment commands emit
EVALUATE_HEADER = ['metric', 'value', 'mask', 'elapsed']
SWEEP_HEADER = ['method', 'inv_root_density', 'rmse', 'elapsed']
BENCH_HEADER = ['method', 'density', 'width', 'height', 'elapsed']


def fmt_timespan(t_secs: float) -> str:
    """
    Simple timespan formatting method.

    Args:
        t_secs (float): a timespan in seconds

    Returns:
        a string representation of the timespan
    """
    ts = ""
    if t_secs < 0:
        ts = "0"
    elif t_secs < 1:
        ts = f'{t_secs * 1000:.1f} ms'
    elif t_secs < 60:
        ts = f'{t_secs:.2f} secs'
    elif t_secs < 3600:
        ts = f'{t_secs / 60:.1f} mins'
    else:
        ts = f'{t_secs / 3600:.1f} hours'

    return ts


def timed(func: Callable[..., Any], *args, **kwargs) -> Tuple[Any, float]:
    """Call func(*args, **kwargs) and return (result, wall-clock seconds)."""
    start = time.perf_counter()
    result = func(*args, **kwargs)
    return result, time.perf_counter() - start


def best_of(repeats: int, func: Callable[..., Any], *args, **kwargs) -> Tuple[Any, float]:
    """
    Run func `repeats` times and keep the fastest wall-clock time.

    The minimum is the least noisy estimate on a shared machine; the result
    of the last call is returned alongside it.
    """
    if repeats < 1:
        raise ParameterDomainError(f'repeats must be >= 1, got {repeats}')
    best = math.inf
    result = None
    for _ in range(repeats):
        result, elapsed = timed(func, *args, **kwargs)
        best = min(best, elapsed)
    return result, best


def parse_density(text: str) -> float:
    """
    Parse a density given as a fraction ("1/9") or a decimal ("0.04").

    Returns:
        the density as a float in (0, 1]
    """
    try:
        value = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ParameterDomainError(f'cannot parse density {text!r}')
    if not 0 < value <= 1:
        raise ParameterDomainError(f'density must lie in (0, 1], got {text}')
    return value


def parse_density_list(text: str) -> List[float]:
    """Parse a comma-separated density list such as "1/4,1/9,0.01"."""
    items = [t for t in text.split(',') if t.strip()]
    if not items:
        raise ParameterDomainError('empty density list')
    return [parse_density(t) for t in items]


def write_csv(header: Sequence[str], rows: Sequence[Sequence[Any]], output_file: Optional[str] = None) -> None:
    """
    Write a header row and data rows as CSV, to a file or to stdout.

    Args:
        header (list): column names
        rows (list): data rows, same length as header
        output_file (str): destination path, or None for stdout
    """
    if output_file is None:
        writer = csv.writer(sys.stdout, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
        sys.stdout.flush()
        return

    with open(output_file, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
