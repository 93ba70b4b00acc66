import logging
import math
import numbers
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

"""
Domain types shared by every interpolator, sampler and experiment driver.

All rasters are stored as float64 numpy arrays of shape (height, width, channels),
which is exactly the row-major, channel-interleaved layout the on-disk formats use.
Guidance values are reals in [0, 255] per channel and sigma_r is expressed in those units.
"""

# default bilateral-style bandwidths
DEFAULT_SIGMA_R = 50.0
DEFAULT_SIGMA_S = 100.0

# nominal value range descriptor attached to guidance images
GUIDANCE_SCALE = (0.0, 255.0)

METRIC_NAMES = ('rmse', 'epe')
MASK_KINDS = ('all', 'known', 'unknown', 'external-mask')

# (x, y, value-vector)
Site = Tuple[int, int, Tuple[float, ...]]


class GeoSparseError(Exception):
    """Base class for every error raised by the interpolation pipeline."""


class ParameterDomainError(GeoSparseError):
    pass


class DimensionMismatchError(GeoSparseError):
    pass


class NoSamplesError(GeoSparseError):
    pass


class DuplicateSiteError(GeoSparseError):
    pass


class OutOfBoundsError(GeoSparseError):
    pass


class OracleScaleError(GeoSparseError):
    pass


class EmptyMaskError(GeoSparseError):
    pass


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """
    A multi-channel 2D raster.

    Houses guidance images (1 or 3 channels), scalar fields such as disparity (1 channel)
    and flow fields (2 channels). Pixels are the vertices of a 4-connected grid graph.

    Args:
        data (np.ndarray): array of shape (height, width, channels), converted to float64
        value_scale (tuple): nominal (low, high) range of the values, informational only
        allow_nonfinite (bool): ground-truth fields may carry NaN/Inf as "unknown" markers
    """
    data: np.ndarray
    value_scale: Optional[Tuple[float, float]] = None
    allow_nonfinite: bool = False

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise DimensionMismatchError(f'ImageGrid needs a (height, width, channels) array, got shape {data.shape}')
        if min(data.shape) < 1:
            raise DimensionMismatchError(f'ImageGrid dimensions must all be >= 1, got shape {data.shape}')
        if not self.allow_nonfinite and not np.all(np.isfinite(data)):
            raise ParameterDomainError('ImageGrid contains non-finite values')
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, 'data', data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def channel(self, c: int) -> np.ndarray:
        return self.data[:, :, c]

    def __repr__(self) -> str:
        return f'ImageGrid({self.width}x{self.height}x{self.channels})'


@dataclass(frozen=True, eq=False)
class SparseField:
    """
    The extended sparse data set: a value raster plus a binary confidence raster.

    Wherever confidence is 0 the stored value is 0, so `values` can be fed directly
    into the numerator sum of the interpolation ratio and `confidence` into the denominator.
    """
    values: ImageGrid
    confidence: ImageGrid

    def __post_init__(self) -> None:
        if self.confidence.channels != 1:
            raise DimensionMismatchError(f'confidence must have 1 channel, got {self.confidence.channels}')
        if self.values.shape != self.confidence.shape:
            raise DimensionMismatchError(
                f'values are {self.values.width}x{self.values.height} but confidence is '
                f'{self.confidence.width}x{self.confidence.height}')
        c = self.confidence.data
        if not np.all((c == 0.0) | (c == 1.0)):
            raise ParameterDomainError('confidence entries must be exactly 0 or 1')
        if np.any(self.values.data[c[:, :, 0] == 0.0] != 0.0):
            raise ParameterDomainError('values must be 0 wherever confidence is 0')

    @staticmethod
    def from_mask(gt: ImageGrid, mask: np.ndarray) -> 'SparseField':
        """
        Build a sparse field by copying gt values verbatim at the pixels where mask is set.

        Args:
            gt (ImageGrid): dense field to sample from
            mask (np.ndarray): boolean (height, width) array of known sites

        Returns:
            SparseField with confidence = mask
        """
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape:
            raise DimensionMismatchError(f'mask shape {mask.shape} does not match field shape {gt.shape}')
        values = np.zeros(gt.data.shape)
        values[mask] = gt.data[mask]
        return SparseField(ImageGrid(values), ImageGrid(mask.astype(np.float64)))

    @property
    def width(self) -> int:
        return self.values.width

    @property
    def height(self) -> int:
        return self.values.height

    @property
    def channels(self) -> int:
        return self.values.channels

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def mask(self) -> np.ndarray:
        return self.confidence.data[:, :, 0] == 1.0

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def density(self) -> float:
        return self.count / self.values.pixel_count

    def sites(self) -> List[Site]:
        """
        Enumerate the known sites in raster order.

        Returns:
            list of (x, y, value tuple) for every pixel with confidence 1
        """
        ys, xs = np.nonzero(self.mask)
        return [(int(x), int(y), tuple(float(v) for v in self.values.data[y, x])) for y, x in zip(ys, xs)]

    def sample_range(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-channel (min, max) over the known samples."""
        known = self.values.data[self.mask]
        if known.shape[0] == 0:
            raise NoSamplesError('sparse field has no confident pixels')
        return known.min(axis=0), known.max(axis=0)


@dataclass(frozen=True)
class FilterParams:
    """
    User bandwidths and the derived geodesic kernel constants.

    a = 2 / sigma_r^2 is the decay rate of the exponential affinity and
    delta = sigma_r^2 / sigma_s^2 is the per-edge spatial increment. Both
    are computed properties so they can never disagree with the sigmas.
    """
    sigma_r: float
    sigma_s: float

    def __post_init__(self) -> None:
        for name in ('sigma_r', 'sigma_s'):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ParameterDomainError(f'{name} must be a positive finite number, got {value}')

    @property
    def a(self) -> float:
        return 2.0 / self.sigma_r ** 2

    @property
    def delta(self) -> float:
        return self.sigma_r ** 2 / self.sigma_s ** 2


@dataclass(frozen=True)
class EvalReport:
    """
    One evaluation result, as emitted by the evaluate/sweep commands.

    Args:
        metric_name (str): 'rmse' or 'epe'
        value (float): metric value, >= 0
        mask (str): which pixels were scored: 'all', 'known', 'unknown' or 'external-mask'
        density (float | None): density of the sample set behind the estimate, if known
        elapsed (float): seconds spent producing the value
    """
    metric_name: str
    value: float
    mask: str
    density: Optional[float]
    elapsed: float

    def __post_init__(self) -> None:
        if self.metric_name not in METRIC_NAMES:
            raise ParameterDomainError(f'unknown metric {self.metric_name}, expected one of {METRIC_NAMES}')
        if self.mask not in MASK_KINDS:
            raise ParameterDomainError(f'unknown mask kind {self.mask}, expected one of {MASK_KINDS}')
        if not self.value >= 0:
            raise ParameterDomainError(f'metric value must be >= 0, got {self.value}')
        if self.density is not None and not 0 < self.density <= 1:
            raise ParameterDomainError(f'density must lie in (0, 1], got {self.density}')

    def csv_row(self) -> List[str]:
        return [self.metric_name, f'{self.value:.6f}', self.mask, f'{self.elapsed:.6f}']


def derive_params(sigma_r: float, sigma_s: float) -> FilterParams:
    """
    Map bilateral-style bandwidths onto the geodesic kernel constants.

    Args:
        sigma_r (float): range bandwidth, in guidance value units
        sigma_s (float): spatial bandwidth, in pixels

    Returns:
        FilterParams with a = 2/sigma_r^2 and delta = sigma_r^2/sigma_s^2
    """
    return FilterParams(float(sigma_r), float(sigma_s))


def extend_sparse(sites: Sequence[Tuple[int, int, object]], width: int, height: int, channels: int) -> SparseField:
    """
    Extend a list of known samples to a full-raster sparse field.

    Each site is (x, y, value) where value is a scalar or a sequence of `channels`
    reals. Unlisted pixels get confidence 0 and value 0.

    Args:
        sites: known samples
        width (int): raster width
        height (int): raster height
        channels (int): number of value channels

    Returns:
        SparseField (raises OutOfBoundsError / DuplicateSiteError on bad input)
    """
    if width < 1 or height < 1 or channels < 1:
        raise ParameterDomainError(f'invalid raster size {width}x{height}x{channels}')

    values = np.zeros((height, width, channels))
    confidence = np.zeros((height, width, 1))

    for x, y, value in sites:
        if not (isinstance(x, numbers.Integral) and isinstance(y, numbers.Integral)):
            raise ParameterDomainError(f'site ({x!r}, {y!r}) does not have integer pixel coordinates')
        if not (0 <= x < width and 0 <= y < height):
            raise OutOfBoundsError(f'site ({x}, {y}) lies outside the {width}x{height} raster')
        if confidence[y, x, 0] == 1.0:
            raise DuplicateSiteError(f'site ({x}, {y}) listed more than once')
        vec = np.atleast_1d(np.asarray(value, dtype=np.float64))
        if vec.shape != (channels,):
            raise DimensionMismatchError(f'site ({x}, {y}) has {vec.size} values, expected {channels}')
        if not np.all(np.isfinite(vec)):
            raise ParameterDomainError(f'site ({x}, {y}) has a non-finite value')
        values[y, x] = vec
        confidence[y, x, 0] = 1.0

    return SparseField(ImageGrid(values), ImageGrid(confidence))


def edge_costs(guidance: ImageGrid, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-edge costs of the 4-connected grid graph: ||I_k - I_l||_2 + delta.

    The colour norm is the unweighted Euclidean norm over channels.

    Args:
        guidance (ImageGrid): guidance image
        delta (float): spatial increment per lattice step

    Returns:
        tuple(horizontal costs of shape (height, width-1), vertical costs of shape (height-1, width))
    """
    g = guidance.data
    horizontal = np.sqrt(np.sum(np.diff(g, axis=1) ** 2, axis=2)) + delta
    vertical = np.sqrt(np.sum(np.diff(g, axis=0) ** 2, axis=2)) + delta
    return horizontal, vertical


def check_same_shape(first: ImageGrid, second: ImageGrid, what: str) -> None:
    if first.shape != second.shape:
        raise DimensionMismatchError(
            f'{what}: {first.width}x{first.height} does not match {second.width}x{second.height}')


def nearest_confident(mask: np.ndarray, pixels: np.ndarray, metric: str = 'l1', budget: int = 4_000_000) -> np.ndarray:
    """
    For each query pixel find the nearest known pixel.

    Ties are broken by smallest row, then smallest column: the known pixels are
    enumerated in raster order and argmin returns the first minimum.

    Args:
        mask (np.ndarray): boolean (height, width) array of known pixels
        pixels (np.ndarray): (n, 2) integer array of (row, col) query pixels
        metric (str): 'l1' (grid distance) or 'l2' (Euclidean distance)
        budget (int): rough number of pairwise distances held in memory at once

    Returns:
        (n, 2) integer array of (row, col) of the chosen known pixel per query
    """
    known = np.argwhere(mask)
    if known.shape[0] == 0:
        raise NoSamplesError('no confident pixels to fall back on')

    chunk = max(1, budget // known.shape[0])
    result = np.empty((pixels.shape[0], 2), dtype=np.int64)
    for start in range(0, pixels.shape[0], chunk):
        block = pixels[start:start + chunk]
        dr = block[:, None, 0] - known[None, :, 0]
        dc = block[:, None, 1] - known[None, :, 1]
        if metric == 'l1':
            dist = np.abs(dr) + np.abs(dc)
        else:
            # squared distance keeps the comparison exact on integers
            dist = dr * dr + dc * dc
        result[start:start + chunk] = known[np.argmin(dist, axis=1)]
    return result


def fill_from_nearest(output: np.ndarray, sparse: SparseField, holes: np.ndarray, metric: str) -> int:
    """
    Overwrite `output` at the hole pixels with the value of the nearest known sample.

    Returns:
        number of pixels filled
    """
    pixels = np.argwhere(holes)
    if pixels.shape[0] == 0:
        return 0
    nearest = nearest_confident(sparse.mask, pixels, metric)
    output[pixels[:, 0], pixels[:, 1]] = sparse.values.data[nearest[:, 0], nearest[:, 1]]
    logging.warning(f'{pixels.shape[0]} pixel(s) fell back to the nearest known sample ({metric})')
    return pixels.shape[0]


def clip_to_samples(output: np.ndarray, sparse: SparseField) -> np.ndarray:
    """
    Clip an interpolated raster channelwise to the range of the known samples.

    Every interpolator here is a convex combination of the samples, so this only
    removes floating point rounding excursions.
    """
    low, high = sparse.sample_range()
    return np.clip(output, low, high)
