import math
from typing import Optional, Tuple

import numpy as np

from interpolation.geosparse_core import (
    DimensionMismatchError,
    EmptyMaskError,
    EvalReport,
    ImageGrid,
    ParameterDomainError,
    SparseField,
    check_same_shape,
)


def _scored_pixels(estimate: ImageGrid, gt: ImageGrid, mask: Optional[np.ndarray], channels: int) -> np.ndarray:
    """
    Validate a metric's inputs and return the boolean (height, width) set of scored pixels.

    A supplied mask is intersected with the pixels whose ground truth is finite.
    """
    for name, grid in (('estimate', estimate), ('ground truth', gt)):
        if grid.channels != channels:
            raise DimensionMismatchError(f'{name} must have {channels} channel(s), got {grid.channels}')
    check_same_shape(estimate, gt, 'estimate vs ground truth')

    scored = np.all(np.isfinite(gt.data), axis=2)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.ndim == 3 and mask.shape[2] == 1:
            mask = mask[:, :, 0]
        if mask.shape != gt.shape:
            raise DimensionMismatchError(f'mask shape {mask.shape} does not match field shape {gt.shape}')
        if not np.all((mask == 0) | (mask == 1)):
            raise ParameterDomainError('mask entries must be 0 or 1')
        scored &= mask.astype(bool)

    if not np.any(scored):
        raise EmptyMaskError('no pixels left to score: the mask is empty or covers only unknown ground truth')
    return scored


def rmse(estimate: ImageGrid, gt: ImageGrid, mask: Optional[np.ndarray] = None) -> float:
    """
    Root-mean-squared error of a single-channel field.

    Args:
        estimate (ImageGrid): interpolated field
        gt (ImageGrid): ground truth; non-finite entries are never scored
        mask (np.ndarray): optional 0/1 (height, width) array selecting the scored pixels

    Returns:
        sqrt(mean((estimate - gt)^2)) over the scored pixels
    """
    scored = _scored_pixels(estimate, gt, mask, 1)
    diff = estimate.data[scored, 0] - gt.data[scored, 0]
    return math.sqrt(float(np.mean(diff * diff)))


def epe(estimate: ImageGrid, gt: ImageGrid, mask: Optional[np.ndarray] = None) -> float:
    """
    Average endpoint error of a 2-channel (u, v) flow field.

    Args:
        estimate (ImageGrid): interpolated flow
        gt (ImageGrid): ground-truth flow
        mask (np.ndarray): optional 0/1 (height, width) array, e.g. non-occluded pixels

    Returns:
        mean of ||(u, v)_est - (u, v)_gt||_2 over the scored pixels
    """
    scored = _scored_pixels(estimate, gt, mask, 2)
    diff = estimate.data[scored] - gt.data[scored]
    return float(np.mean(np.hypot(diff[:, 0], diff[:, 1])))


def mean_abs_error(estimate: ImageGrid, gt: ImageGrid, mask: Optional[np.ndarray] = None) -> float:
    scored = _scored_pixels(estimate, gt, mask, 1)
    return float(np.mean(np.abs(estimate.data[scored, 0] - gt.data[scored, 0])))


def sample_masks(sparse: SparseField) -> Tuple[np.ndarray, np.ndarray]:
    """(known, unknown) boolean masks of a sparse field, for the 'known'/'unknown' report kinds."""
    known = sparse.mask
    return known, ~known


METRICS = {
    'rmse': rmse,
    'epe': epe,
}


def evaluate(estimate: ImageGrid, gt: ImageGrid, metric: str, mask: Optional[np.ndarray] = None,
             mask_name: str = 'all', density: Optional[float] = None, elapsed: float = 0.0) -> EvalReport:
    """
    Score an estimate and package the result.

    Args:
        estimate (ImageGrid): interpolated field
        gt (ImageGrid): ground truth
        metric (str): 'rmse' or 'epe'
        mask (np.ndarray): optional 0/1 array of scored pixels
        mask_name (str): which mask kind `mask` represents
        density (float): density of the samples behind the estimate, if known
        elapsed (float): seconds spent producing the estimate

    Returns:
        EvalReport
    """
    if metric not in METRICS:
        raise ParameterDomainError(f'unknown metric {metric}, expected one of {tuple(METRICS)}')
    if mask is None and mask_name != 'all':
        raise ParameterDomainError(f'mask kind {mask_name} needs a mask')
    value = METRICS[metric](estimate, gt, mask)
    return EvalReport(metric, value, mask_name, density, elapsed)
