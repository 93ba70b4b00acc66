import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from interpolation.geosparse_core import (
    ImageGrid,
    ParameterDomainError,
    SparseField,
    check_same_shape,
)

"""
The three sparsification protocols used by the experiments: top-k gradient
(edge threshold), one sample per patch at the gradient maximum, and a regular grid.
"""

EDGE_THRESHOLD = 'edge_threshold'
PATCH_MAX = 'patch_max'
REGULAR_GRID = 'regular_grid'
SAMPLING_MODES = (EDGE_THRESHOLD, PATCH_MAX, REGULAR_GRID)

# absorbs float noise in rho * N, e.g. (1/9) * 81 = 9.000000000000002
COUNT_SLACK = 1e-9


@dataclass(frozen=True)
class SamplingSpec:
    mode: str
    density: float

    def __post_init__(self) -> None:
        if self.mode not in SAMPLING_MODES:
            raise ParameterDomainError(f'unknown sampling mode {self.mode}, expected one of {SAMPLING_MODES}')
        check_density(self.density)

    @property
    def step(self) -> int:
        return sampling_step(self.density)


def check_density(density: float) -> None:
    if not (math.isfinite(density) and 0 < density <= 1):
        raise ParameterDomainError(f'density must lie in (0, 1], got {density}')


def sampling_step(density: float) -> int:
    """Grid step / patch size for a density: 1/sqrt(rho) rounded half up, at least 1."""
    check_density(density)
    return max(1, int(math.floor(1.0 / math.sqrt(density) + 0.5)))


def _finite_gt(gt: ImageGrid) -> np.ndarray:
    valid = np.all(np.isfinite(gt.data), axis=2)
    skipped = valid.size - int(np.count_nonzero(valid))
    if skipped > 0:
        logging.debug(f'{skipped} pixel(s) with non-finite ground truth excluded from sampling')
    return valid


def gradient_norm(guidance: ImageGrid) -> ImageGrid:
    """
    Norm of the image gradient.

    Central differences in the interior and one-sided differences at the borders,
    per channel; the result is the L2 norm over (dx, dy) and all channels. An axis of
    length 1 has zero derivative.

    Args:
        guidance (ImageGrid): guidance image

    Returns:
        single-channel ImageGrid
    """
    g = guidance.data
    squared = np.zeros(guidance.shape)
    for axis in (0, 1):
        if g.shape[axis] < 2:
            continue
        squared += np.sum(np.gradient(g, axis=axis) ** 2, axis=2)
    return ImageGrid(np.sqrt(squared))


def sample_edge_threshold(gt: ImageGrid, guidance: ImageGrid, density: float) -> SparseField:
    """
    Keep the ceil(rho * N) pixels with the largest guidance gradient.

    This realises a gradient threshold T chosen so that exactly the requested density
    is reached. Ties are broken in raster order. Only pixels with finite ground truth
    can be selected.

    Args:
        gt (ImageGrid): dense ground truth to copy values from
        guidance (ImageGrid): guidance image whose gradient ranks the pixels
        density (float): fraction of pixels to keep, in (0, 1]

    Returns:
        SparseField
    """
    check_same_shape(gt, guidance, 'ground truth vs guidance')
    check_density(density)

    valid = _finite_gt(gt).ravel()
    count = min(int(math.ceil(density * gt.pixel_count - COUNT_SLACK)), int(np.count_nonzero(valid)))

    norm = gradient_norm(guidance).data.ravel()
    candidates = np.flatnonzero(valid)
    # stable sort on the negated norm keeps raster order among ties
    order = np.argsort(-norm[candidates], kind='stable')
    chosen = candidates[order[:count]]

    mask = np.zeros(gt.pixel_count, dtype=bool)
    mask[chosen] = True
    return SparseField.from_mask(gt, mask.reshape(gt.shape))


def sample_patch_max(gt: ImageGrid, guidance: ImageGrid, density: float) -> SparseField:
    """
    One sample per s x s patch, at the pixel with the largest guidance gradient.

    s = round(1/sqrt(rho)); patches on the right and bottom borders keep their
    natural smaller size. Ties inside a patch go to the first pixel in raster order.

    Args:
        gt (ImageGrid): dense ground truth
        guidance (ImageGrid): guidance image
        density (float): target density, in (0, 1]

    Returns:
        SparseField
    """
    check_same_shape(gt, guidance, 'ground truth vs guidance')
    step = sampling_step(density)
    height, width = gt.shape

    score = gradient_norm(guidance).data[:, :, 0].copy()
    score[~_finite_gt(gt)] = -np.inf

    # pad to whole patches; padding can never win a patch
    rows = -(-height // step)
    cols = -(-width // step)
    padded = np.full((rows * step, cols * step), -np.inf)
    padded[:height, :width] = score

    patches = padded.reshape(rows, step, cols, step).transpose(0, 2, 1, 3).reshape(rows, cols, step * step)
    best = np.argmax(patches, axis=2)
    best_score = np.take_along_axis(patches, best[:, :, None], axis=2)[:, :, 0]

    patch_row, patch_col = np.nonzero(np.isfinite(best_score))
    offset = best[patch_row, patch_col]
    ys = patch_row * step + offset // step
    xs = patch_col * step + offset % step

    mask = np.zeros(gt.shape, dtype=bool)
    mask[ys, xs] = True
    return SparseField.from_mask(gt, mask)


def sample_regular(gt: ImageGrid, density: float, offset: Tuple[int, int] = (0, 0)) -> SparseField:
    """
    Regular grid sampling at (ox + i*s, oy + j*s) with s = round(1/sqrt(rho)).

    Args:
        gt (ImageGrid): dense ground truth
        density (float): target density, in (0, 1]
        offset (tuple): (x, y) grid phase, each in [0, s)

    Returns:
        SparseField
    """
    step = sampling_step(density)
    ox, oy = offset
    if not (0 <= ox < step and 0 <= oy < step):
        raise ParameterDomainError(f'grid offset {offset} must lie in [0, {step}) on both axes')
    mask = np.zeros(gt.shape, dtype=bool)
    mask[oy::step, ox::step] = True
    mask &= _finite_gt(gt)
    return SparseField.from_mask(gt, mask)


def sample(spec: SamplingSpec, gt: ImageGrid, guidance: ImageGrid) -> SparseField:
    if spec.mode == EDGE_THRESHOLD:
        return sample_edge_threshold(gt, guidance, spec.density)
    elif spec.mode == PATCH_MAX:
        return sample_patch_max(gt, guidance, spec.density)
    return sample_regular(gt, spec.density)


def grid_phases(step: int) -> List[Tuple[int, int]]:
    """
    The diagonal grid offsets (o, o) for o in [0, step).

    Averaging over them visits every column phase and every row phase once, so
    errors no longer depend on how the grid happens to line up with the scene.
    """
    if step < 1:
        raise ParameterDomainError(f'grid step must be >= 1, got {step}')
    return [(o, o) for o in range(step)]
