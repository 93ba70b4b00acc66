import heapq
import logging
import math
import time
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from interpolation.geosparse_core import (
    FilterParams,
    ImageGrid,
    NoSamplesError,
    OracleScaleError,
    OutOfBoundsError,
    SparseField,
    check_same_shape,
    clip_to_samples,
    edge_costs,
)

"""
Exact geodesic-kernel filtering by explicit shortest paths.

Everything here is quadratic or worse and exists to check the fast filter on
small images. Pixels are addressed as (x, y) tuples.
"""

# all-pairs work beyond this many pixels is refused outright
MAX_ORACLE_PIXELS = 2 ** 16

# number of Dijkstra sources solved per scipy call in exact_filter
SOURCE_CHUNK = 256


@dataclass(frozen=True, eq=False)
class GeodesicDistanceMap:
    """Single-source geodesic distances d(source, q) for every pixel q."""
    source: Tuple[int, int]
    distances: ImageGrid

    def at(self, x: int, y: int) -> float:
        return float(self.distances.data[y, x, 0])


def _check_pixel(guidance: ImageGrid, pixel: Tuple[int, int]) -> None:
    x, y = pixel
    if not (0 <= x < guidance.width and 0 <= y < guidance.height):
        raise OutOfBoundsError(f'pixel ({x}, {y}) lies outside the {guidance.width}x{guidance.height} image')


def geodesic_distance_map(guidance: ImageGrid, source: Tuple[int, int], params: FilterParams) -> GeodesicDistanceMap:
    """
    Exact single-source shortest paths over the 4-connected pixel grid.

    A plain binary-heap label-setting search: edge cost ||I_k - I_l||_2 + delta.

    Args:
        guidance (ImageGrid): guidance image
        source (tuple): (x, y) source pixel
        params (FilterParams): supplies delta

    Returns:
        GeodesicDistanceMap
    """
    _check_pixel(guidance, source)
    horizontal, vertical = edge_costs(guidance, params.delta)
    height, width = guidance.shape

    dist = np.full((height, width), np.inf)
    sx, sy = source
    dist[sy, sx] = 0.0
    queue = [(0.0, sy, sx)]

    while queue:
        d, y, x = heapq.heappop(queue)
        if d > dist[y, x]:
            continue
        neighbours = []
        if x > 0:
            neighbours.append((y, x - 1, horizontal[y, x - 1]))
        if x < width - 1:
            neighbours.append((y, x + 1, horizontal[y, x]))
        if y > 0:
            neighbours.append((y - 1, x, vertical[y - 1, x]))
        if y < height - 1:
            neighbours.append((y + 1, x, vertical[y, x]))
        for ny, nx, cost in neighbours:
            nd = d + cost
            if nd < dist[ny, nx]:
                dist[ny, nx] = nd
                heapq.heappush(queue, (nd, ny, nx))

    return GeodesicDistanceMap(source, ImageGrid(dist))


def exact_weight(guidance: ImageGrid, p: Tuple[int, int], q: Tuple[int, int], params: FilterParams) -> float:
    """
    Exact geodesic affinity exp(-a * d(p, q)).

    Equivalently the largest product of per-edge factors exp(-a * u) over all paths from p to q.
    """
    _check_pixel(guidance, q)
    distances = geodesic_distance_map(guidance, p, params)
    return math.exp(-params.a * distances.at(*q))


def grid_graph(guidance: ImageGrid, params: FilterParams) -> coo_matrix:
    """
    Sparse adjacency matrix of the pixel grid with geodesic edge costs.

    Node index is y * width + x. Each undirected edge is stored once.
    """
    horizontal, vertical = edge_costs(guidance, params.delta)
    height, width = guidance.shape
    index = np.arange(height * width).reshape(height, width)

    rows = np.concatenate([index[:, :-1].ravel(), index[:-1, :].ravel()])
    cols = np.concatenate([index[:, 1:].ravel(), index[1:, :].ravel()])
    costs = np.concatenate([horizontal.ravel(), vertical.ravel()])
    return coo_matrix((costs, (rows, cols)), shape=(height * width, height * width))


def exact_filter(sparse: SparseField, guidance: ImageGrid, params: FilterParams) -> ImageGrid:
    """
    Interpolate with exact geodesic weights: x_p = sum_q w_pq y~_q / sum_q w_pq c_q.

    Distances are symmetric, so one shortest-path search per known sample gives that
    sample's weight at every pixel. Weights are accumulated relative to the nearest
    sample seen so far at each pixel (rescaling the running sums when a closer chunk
    of sources arrives), which keeps every denominator >= 1 and rules out underflow.

    Args:
        sparse (SparseField): known samples
        guidance (ImageGrid): guidance image of the same size
        params (FilterParams): kernel parameters

    Returns:
        dense ImageGrid
    """
    check_same_shape(sparse.values, guidance, 'sparse field vs guidance')
    if guidance.pixel_count > MAX_ORACLE_PIXELS:
        raise OracleScaleError(
            f'exact filter refuses {guidance.width}x{guidance.height} ({guidance.pixel_count} pixels), '
            f'limit is {MAX_ORACLE_PIXELS}')
    if sparse.count == 0:
        raise NoSamplesError('cannot interpolate: the sparse field has no confident pixels')

    start_time = time.time()
    graph = grid_graph(guidance, params).tocsr()
    n = guidance.pixel_count
    channels = sparse.channels

    sources = np.flatnonzero(sparse.mask.ravel())
    sample_values = sparse.values.data.reshape(n, channels)[sources]

    reference = np.full(n, np.inf)
    numerator = np.zeros((n, channels))
    denominator = np.zeros(n)

    for start in range(0, sources.size, SOURCE_CHUNK):
        chunk = sources[start:start + SOURCE_CHUNK]
        dist = np.atleast_2d(dijkstra(graph, directed=False, indices=chunk))

        new_reference = np.minimum(reference, dist.min(axis=0))
        rescale = np.exp(-params.a * (reference - new_reference))
        # first chunk: reference is inf and the (empty) sums stay zero
        rescale[~np.isfinite(reference)] = 0.0
        numerator *= rescale[:, None]
        denominator *= rescale

        w = np.exp(-params.a * (dist - new_reference[None, :]))
        numerator += w.T @ sample_values[start:start + chunk.size]
        denominator += w.sum(axis=0)
        reference = new_reference

    output = (numerator / denominator[:, None]).reshape(sparse.values.data.shape)
    logging.debug(f'exact filter on {guidance.width}x{guidance.height}, {sources.size} samples: '
                  f'{time.time() - start_time:.3f}s')
    return ImageGrid(clip_to_samples(output, sparse))
