import logging
import math
import time

import numpy as np
from scipy.ndimage import correlate1d

from interpolation.geosparse_core import (
    FilterParams,
    ImageGrid,
    NoSamplesError,
    SparseField,
    check_same_shape,
    clip_to_samples,
    fill_from_nearest,
)

# the Gaussian windows are truncated at this many sigmas
TRUNCATE_SIGMAS = 3.0

# pairwise weights evaluated per block in bilateral_interpolate
PAIR_BUDGET = 2_000_000


def window_radius(params: FilterParams, truncate: float = TRUNCATE_SIGMAS) -> int:
    return int(math.ceil(truncate * params.sigma_s))


def gaussian_taps(sigma: float, radius: int) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-offsets ** 2 / (2.0 * sigma ** 2))


def _ratio_with_fallback(numerator: np.ndarray, denominator: np.ndarray, sparse: SparseField) -> np.ndarray:
    output = np.zeros(numerator.shape)
    ok = denominator > 0
    output[ok] = numerator[ok] / denominator[ok][:, None]
    # windows that caught no sample at all
    fill_from_nearest(output, sparse, ~ok, 'l2')
    return clip_to_samples(output, sparse)


def nadaraya_watson(sparse: SparseField, params: FilterParams, truncate: float = TRUNCATE_SIGMAS) -> ImageGrid:
    """
    Nadaraya-Watson kernel regression with a spatial Gaussian.

    w_pq = exp(-||p - q||^2 / (2 sigma_s^2)) inside a square window of half-width
    ceil(3 sigma_s); the guidance image plays no part. The kernel is separable, so
    both sums are two 1D correlations with zero padding outside the image.

    Args:
        sparse (SparseField): known samples
        params (FilterParams): only sigma_s is used
        truncate (float): window half-width in units of sigma_s

    Returns:
        dense ImageGrid
    """
    if sparse.count == 0:
        raise NoSamplesError('cannot interpolate: the sparse field has no confident pixels')

    start_time = time.time()
    taps = gaussian_taps(params.sigma_s, window_radius(params, truncate))

    stacked = np.concatenate([sparse.values.data, sparse.confidence.data], axis=2)
    for axis in (0, 1):
        stacked = correlate1d(stacked, taps, axis=axis, mode='constant', cval=0.0)

    channels = sparse.channels
    output = _ratio_with_fallback(stacked[:, :, :channels], stacked[:, :, channels], sparse)
    logging.debug(f'nadaraya-watson on {sparse.width}x{sparse.height}: {time.time() - start_time:.3f}s')
    return ImageGrid(output)


def bilateral_interpolate(sparse: SparseField, guidance: ImageGrid, params: FilterParams,
                          truncate: float = TRUNCATE_SIGMAS) -> ImageGrid:
    """
    Interpolation with the classic joint bilateral kernel.

    w_pq = exp(-||p - q||^2 / (2 sigma_s^2) - ||I_p - I_q||^2 / (2 sigma_r^2)), same
    square window and empty-window fallback as nadaraya_watson.

    The kernel is not separable, so it is evaluated pairwise: known samples are taken
    in raster order in blocks, and each block only touches the band of rows its
    windows can reach. The cost therefore grows with the number of samples.

    Args:
        sparse (SparseField): known samples
        guidance (ImageGrid): guidance image of the same size
        params (FilterParams): kernel parameters
        truncate (float): window half-width in units of sigma_s

    Returns:
        dense ImageGrid
    """
    check_same_shape(sparse.values, guidance, 'sparse field vs guidance')
    if sparse.count == 0:
        raise NoSamplesError('cannot interpolate: the sparse field has no confident pixels')

    start_time = time.time()
    height, width = sparse.shape
    channels = sparse.channels
    radius = window_radius(params, truncate)
    inv_s = 1.0 / (2.0 * params.sigma_s ** 2)
    inv_r = 1.0 / (2.0 * params.sigma_r ** 2)

    ys, xs = np.nonzero(sparse.mask)
    sample_values = sparse.values.data[ys, xs]
    sample_colours = guidance.data[ys, xs]

    numerator = np.zeros((height, width, channels))
    denominator = np.zeros((height, width))
    col_index = np.arange(width)

    start = 0
    while start < ys.size:
        # grow the block while the pairwise matrix stays within budget
        stop = start + 1
        while stop < ys.size:
            band_rows = min(height - 1, ys[stop] + radius) - max(0, ys[start] - radius) + 1
            if (stop + 1 - start) * band_rows * width > PAIR_BUDGET:
                break
            stop += 1

        by, bx = ys[start:stop], xs[start:stop]
        row_lo = max(0, int(by[0]) - radius)
        row_hi = min(height - 1, int(by[-1]) + radius)
        rows = np.arange(row_lo, row_hi + 1)

        dy = rows[None, :, None] - by[:, None, None]
        dx = col_index[None, None, :] - bx[:, None, None]
        inside = (np.abs(dy) <= radius) & (np.abs(dx) <= radius)

        colour_diff = guidance.data[row_lo:row_hi + 1][None] - sample_colours[start:stop, None, None, :]
        exponent = (dy * dy + dx * dx) * inv_s + np.sum(colour_diff ** 2, axis=3) * inv_r
        w = np.where(inside, np.exp(-exponent), 0.0)

        denominator[row_lo:row_hi + 1] += w.sum(axis=0)
        numerator[row_lo:row_hi + 1] += np.einsum('kij,kc->ijc', w, sample_values[start:stop])
        start = stop

    output = _ratio_with_fallback(numerator, denominator, sparse)
    logging.debug(f'bilateral interpolation on {width}x{height}, {ys.size} samples: {time.time() - start_time:.3f}s')
    return ImageGrid(output)
