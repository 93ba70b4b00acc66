import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from interpolation.geosparse_core import (
    FilterParams,
    ImageGrid,
    NoSamplesError,
    ParameterDomainError,
    SparseField,
    check_same_shape,
    clip_to_samples,
    edge_costs,
    fill_from_nearest,
)

# denominators below this are treated as underflowed
UNDERFLOW_FLOOR = 1e-300

LEFT_TO_RIGHT = 'left_to_right'
RIGHT_TO_LEFT = 'right_to_left'
TOP_TO_BOTTOM = 'top_to_bottom'
BOTTOM_TO_TOP = 'bottom_to_top'
DIRECTIONS = (LEFT_TO_RIGHT, RIGHT_TO_LEFT, TOP_TO_BOTTOM, BOTTOM_TO_TOP)

# quadrant -> (horizontal scan, vertical scan). The horizontal scan gathers along
# the source row up to the target column, then the vertical scan descends that column.
QUADRANT_SCANS: Dict[str, Tuple[str, str]] = {
    'TL': (LEFT_TO_RIGHT, TOP_TO_BOTTOM),
    'TR': (RIGHT_TO_LEFT, TOP_TO_BOTTOM),
    'BL': (LEFT_TO_RIGHT, BOTTOM_TO_TOP),
    'BR': (RIGHT_TO_LEFT, BOTTOM_TO_TOP),
}


@dataclass(frozen=True, eq=False)
class EdgeWeights:
    """
    Exponentiated lattice edge costs, exp(-a * (||I_k - I_l|| + delta)).

    horizontal[y, x] joins (x, y) and (x+1, y); vertical[y, x] joins (x, y) and (x, y+1).
    """
    horizontal: np.ndarray
    vertical: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.vertical.shape[0] + 1, self.horizontal.shape[1] + 1)


def compute_edge_weights(guidance: ImageGrid, params: FilterParams) -> EdgeWeights:
    """
    Compute the per-edge decay factors of the geodesic kernel.

    The product of these factors along a path equals exp(-a * path cost), so the
    best path product is the exact geodesic affinity between its end points.

    Args:
        guidance (ImageGrid): 1 or 3 channel guidance image with values in [0, 255]
        params (FilterParams): kernel parameters

    Returns:
        EdgeWeights for every horizontal and vertical lattice edge
    """
    if guidance.channels not in (1, 3):
        raise ParameterDomainError(f'guidance must have 1 or 3 channels, got {guidance.channels}')
    horizontal, vertical = edge_costs(guidance, params.delta)
    return EdgeWeights(np.exp(-params.a * horizontal), np.exp(-params.a * vertical))


def _causal_scan(z: np.ndarray, g: np.ndarray) -> np.ndarray:
    """
    First-order recursion along axis 0: out[0] = z[0], out[i] = z[i] + g[i-1] * out[i-1].

    Each step is vectorised over the whole scan line, so every row (or column)
    of the image is processed in the same pass.
    """
    out = np.empty_like(z)
    out[0] = z[0]
    for i in range(1, z.shape[0]):
        np.multiply(out[i - 1], g[i - 1, :, None], out=out[i])
        out[i] += z[i]
    return out


def directional_pass(z: np.ndarray, weights: EdgeWeights, direction: str) -> np.ndarray:
    """
    One causal 1D geodesic recursion over every scan line of a field.

    Scanning in `direction`, B_p = z_p + g * B_prev where g is the weight of the edge
    joining p to the previous pixel; the first pixel of a scan line has B = z.
    On a single scan line this is the exact geodesic filter sum over all sources
    upstream of p, since the line is the only path.

    Args:
        z (np.ndarray): field of shape (height, width, channels) (or (height, width))
        weights (EdgeWeights): lattice edge weights of the same grid
        direction (str): one of DIRECTIONS

    Returns:
        float64 array with the same shape as z
    """
    z = np.asarray(z, dtype=np.float64)
    squeeze = z.ndim == 2
    if squeeze:
        z = z[:, :, None]
    if z.shape[:2] != weights.shape:
        raise ParameterDomainError(f'field shape {z.shape[:2]} does not match the weight grid {weights.shape}')

    if direction == TOP_TO_BOTTOM:
        out = _causal_scan(z, weights.vertical)
    elif direction == BOTTOM_TO_TOP:
        out = _causal_scan(z[::-1], weights.vertical[::-1])[::-1]
    elif direction == LEFT_TO_RIGHT:
        zt = np.ascontiguousarray(z.transpose(1, 0, 2))
        out = _causal_scan(zt, weights.horizontal.T).transpose(1, 0, 2)
    elif direction == RIGHT_TO_LEFT:
        zt = np.ascontiguousarray(z.transpose(1, 0, 2)[::-1])
        out = _causal_scan(zt, weights.horizontal.T[::-1])[::-1].transpose(1, 0, 2)
    else:
        raise ParameterDomainError(f'unknown scan direction {direction}, expected one of {DIRECTIONS}')

    out = np.ascontiguousarray(out)
    return out[:, :, 0] if squeeze else out


def quadrant_accumulate(z: np.ndarray, weights: EdgeWeights, quadrant: str) -> np.ndarray:
    """
    Accumulate the contributions of one quadrant-domain of every pixel.

    For quadrant TL the response at p to an impulse at q (q.x <= p.x, q.y <= p.y) is
    the product of the horizontal edge weights from q to (p.x, q.y) times the product
    of the vertical edge weights from (p.x, q.y) down to p. The other quadrants are
    the mirror images.

    Args:
        z (np.ndarray): field of shape (height, width, channels)
        weights (EdgeWeights): lattice edge weights
        quadrant (str): 'TL', 'TR', 'BL' or 'BR'

    Returns:
        the quadrant sum A for every pixel
    """
    if quadrant not in QUADRANT_SCANS:
        raise ParameterDomainError(f'unknown quadrant {quadrant}, expected one of {tuple(QUADRANT_SCANS)}')
    horizontal, vertical = QUADRANT_SCANS[quadrant]
    return directional_pass(directional_pass(z, weights, horizontal), weights, vertical)


def combine_quadrants(a_tl: np.ndarray, a_tr: np.ndarray, a_bl: np.ndarray, a_br: np.ndarray,
                      b_left: np.ndarray, b_right: np.ndarray, b_up: np.ndarray, b_down: np.ndarray,
                      z: np.ndarray) -> np.ndarray:
    """
    Merge the four quadrant sums so every source pixel is counted exactly once.

    A source on p's row is in two quadrants and in one row pass, a source on p's
    column likewise, and p itself is in all four quadrants and all four passes:
    Total = sum(A) - sum(B) + z.

    Args:
        a_tl, a_tr, a_bl, a_br: quadrant sums
        b_left: left_to_right pass (gathers sources to the left of p)
        b_right: right_to_left pass
        b_up: top_to_bottom pass (gathers sources above p)
        b_down: bottom_to_top pass
        z: the field that was filtered

    Returns:
        the combined non-normalized filter sum
    """
    total = a_tl + a_tr
    total += a_bl
    total += a_br
    total -= b_left
    total -= b_right
    total -= b_up
    total -= b_down
    total += z
    return total


def accumulate_total(z: np.ndarray, weights: EdgeWeights, workers: int = 1) -> np.ndarray:
    """
    Non-normalized geodesic filter sum of a field: sum over q of w(p, q) * z_q.

    The cost is a fixed number of raster scans whatever the content of z. Feeding an
    impulse gives the filter's effective pairwise weight (its impulse response).

    Args:
        z (np.ndarray): field of shape (height, width, channels)
        weights (EdgeWeights): lattice edge weights
        workers (int): > 1 evaluates the vertical recursions on a thread pool

    Returns:
        the combined sum, same shape as z
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        return accumulate_total(z[:, :, None], weights, workers)[:, :, 0]

    b_left = directional_pass(z, weights, LEFT_TO_RIGHT)
    b_right = directional_pass(z, weights, RIGHT_TO_LEFT)

    # the quadrant sums reuse the row passes instead of recomputing them
    jobs = {
        'TL': (b_left, TOP_TO_BOTTOM),
        'TR': (b_right, TOP_TO_BOTTOM),
        'BL': (b_left, BOTTOM_TO_TOP),
        'BR': (b_right, BOTTOM_TO_TOP),
        'up': (z, TOP_TO_BOTTOM),
        'down': (z, BOTTOM_TO_TOP),
    }
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {k: pool.submit(directional_pass, field, weights, d) for k, (field, d) in jobs.items()}
            results = {k: f.result() for k, f in futures.items()}
    else:
        results = {k: directional_pass(field, weights, d) for k, (field, d) in jobs.items()}

    return combine_quadrants(results['TL'], results['TR'], results['BL'], results['BR'],
                             b_left, b_right, results['up'], results['down'], z)


def interpolate(sparse: SparseField, guidance: ImageGrid, params: FilterParams, workers: int = 1) -> ImageGrid:
    """
    Densify a sparse field with the fast geodesic-kernel filter.

    The output is the ratio of two non-normalized filter sums, sum(w * y~) / sum(w * c),
    sharing one denominator across all value channels. Both sums are computed in one
    set of scans by stacking y~ and c as channels of a single array, so the running
    time depends on the pixel count only and not on the number of samples.

    Pixels whose denominator underflows take the value of the nearest known pixel
    in grid (L1) distance.

    Args:
        sparse (SparseField): known samples (any number of channels)
        guidance (ImageGrid): 1 or 3 channel guidance image, same size as sparse
        params (FilterParams): kernel parameters
        workers (int): thread pool size for the scan passes

    Returns:
        dense ImageGrid with sparse.channels channels
    """
    check_same_shape(sparse.values, guidance, 'sparse field vs guidance')
    if sparse.count == 0:
        raise NoSamplesError('cannot interpolate: the sparse field has no confident pixels')

    start_time = time.time()
    weights = compute_edge_weights(guidance, params)

    channels = sparse.channels
    stacked = np.concatenate([sparse.values.data, sparse.confidence.data], axis=2)
    total = accumulate_total(stacked, weights, workers)

    numerator = total[:, :, :channels]
    denominator = total[:, :, channels]
    holes = ~(denominator >= UNDERFLOW_FLOOR)

    output = np.zeros(numerator.shape)
    ok = ~holes
    output[ok] = numerator[ok] / denominator[ok][:, None]
    fill_from_nearest(output, sparse, holes, 'l1')

    logging.debug(f'geodesic filter on {guidance.width}x{guidance.height}, {sparse.count} samples: '
                  f'{time.time() - start_time:.3f}s')
    return ImageGrid(clip_to_samples(output, sparse))
