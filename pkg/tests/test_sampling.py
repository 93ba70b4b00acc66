import math

import numpy as np
import pytest

from evaluation.geosparse_fixtures import make_piecewise_fixture
from evaluation.geosparse_sampling import (
    EDGE_THRESHOLD,
    PATCH_MAX,
    REGULAR_GRID,
    SamplingSpec,
    gradient_norm,
    grid_phases,
    sample,
    sample_edge_threshold,
    sample_patch_max,
    sample_regular,
    sampling_step,
)
from interpolation.geosparse_core import DimensionMismatchError, ImageGrid, ParameterDomainError


def _gradient_oracle(image):
    """Per-pixel central/one-sided differences, written out with scalar loops."""
    height, width, channels = image.shape
    out = np.zeros((height, width))
    for y in range(height):
        for x in range(width):
            total = 0.0
            for c in range(channels):
                if width > 1:
                    if x == 0:
                        dx = image[y, 1, c] - image[y, 0, c]
                    elif x == width - 1:
                        dx = image[y, x, c] - image[y, x - 1, c]
                    else:
                        dx = (image[y, x + 1, c] - image[y, x - 1, c]) / 2
                    total += dx * dx
                if height > 1:
                    if y == 0:
                        dy = image[1, x, c] - image[0, x, c]
                    elif y == height - 1:
                        dy = image[y, x, c] - image[y - 1, x, c]
                    else:
                        dy = (image[y + 1, x, c] - image[y - 1, x, c]) / 2
                    total += dy * dy
            out[y, x] = math.sqrt(total)
    return out


def test_gradient_norm_constant_and_ramp():
    assert np.all(gradient_norm(ImageGrid(np.full((4, 5, 3), 7.0))).data == 0)
    ramp = ImageGrid(np.tile(np.arange(7.0), (5, 1)))
    np.testing.assert_allclose(gradient_norm(ramp).data[:, :, 0], 1.0)


def test_gradient_norm_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    for shape in [(5, 5, 3), (5, 5, 1), (1, 6, 3), (6, 1, 1)]:
        image = rng.uniform(0, 255, size=shape)
        np.testing.assert_allclose(gradient_norm(ImageGrid(image)).data[:, :, 0], _gradient_oracle(image), rtol=1e-12)


def test_sampling_step():
    assert sampling_step(1.0) == 1
    assert sampling_step(0.25) == 2
    assert sampling_step(1 / 9) == 3
    assert sampling_step(0.01) == 10
    assert sampling_step(1 / 1000) == 32
    with pytest.raises(ParameterDomainError):
        sampling_step(0.0)
    with pytest.raises(ParameterDomainError):
        sampling_step(1.5)


def test_edge_threshold_full_density():
    rng = np.random.default_rng(1)
    gt = ImageGrid(rng.uniform(size=(6, 7)))
    guidance = ImageGrid(rng.uniform(0, 255, size=(6, 7, 3)))
    assert sample_edge_threshold(gt, guidance, 1.0).count == 42


def test_edge_threshold_all_ties_takes_raster_first():
    gt = ImageGrid(np.array([[1.0, 2.0], [3.0, 4.0]]))
    guidance = ImageGrid(np.zeros((2, 2, 3)))
    sparse = sample_edge_threshold(gt, guidance, 0.25)
    assert sparse.sites() == [(0, 0, (1.0,))]


def test_edge_threshold_matches_sorting_oracle():
    rng = np.random.default_rng(2)
    gt = ImageGrid(rng.uniform(size=(20, 20)))
    guidance = ImageGrid(rng.uniform(0, 255, size=(20, 20, 3)))
    sparse = sample_edge_threshold(gt, guidance, 0.04)

    norm = _gradient_oracle(guidance.data).ravel()
    ranked = sorted(range(norm.size), key=lambda i: (-norm[i], i))
    expected = np.zeros(norm.size, dtype=bool)
    expected[ranked[:16]] = True
    np.testing.assert_array_equal(sparse.mask.ravel(), expected)
    assert sparse.density == 16 / 400


def test_edge_threshold_skips_unknown_ground_truth():
    gt = np.arange(9.0).reshape(3, 3)
    gt[1, 1] = np.nan
    guidance = np.zeros((3, 3))
    guidance[1, 1] = 255.0
    sparse = sample_edge_threshold(ImageGrid(gt, allow_nonfinite=True), ImageGrid(guidance), 0.1)
    assert sparse.count == 1
    assert not sparse.mask[1, 1]
    assert np.all(np.isfinite(sparse.values.data))


def test_patch_max_counts():
    rng = np.random.default_rng(3)
    gt = ImageGrid(rng.uniform(size=(4, 4)))
    guidance = ImageGrid(rng.uniform(0, 255, size=(4, 4, 3)))
    assert sample_patch_max(gt, guidance, 1.0).count == 16

    sparse = sample_patch_max(gt, guidance, 0.25)
    assert sparse.count == 4
    for py in (0, 2):
        for px in (0, 2):
            assert sparse.mask[py:py + 2, px:px + 2].sum() == 1


def test_patch_max_matches_per_patch_oracle():
    rng = np.random.default_rng(4)
    gt = ImageGrid(rng.uniform(size=(16, 16)))
    guidance = ImageGrid(rng.uniform(0, 255, size=(16, 16, 3)))
    sparse = sample_patch_max(gt, guidance, 0.01)

    norm = _gradient_oracle(guidance.data)
    expected = np.zeros((16, 16), dtype=bool)
    for top in range(0, 16, 10):
        for left in range(0, 16, 10):
            best = None
            for y in range(top, min(top + 10, 16)):
                for x in range(left, min(left + 10, 16)):
                    if best is None or norm[y, x] > norm[best]:
                        best = (y, x)
            expected[best] = True
    np.testing.assert_array_equal(sparse.mask, expected)
    assert sparse.count == 4


def test_regular_grid():
    gt = ImageGrid(np.arange(81.0).reshape(9, 9))
    assert sample_regular(gt, 1.0).count == 81

    sparse = sample_regular(gt, 1 / 9)
    assert [(x, y) for x, y, _ in sparse.sites()] == [(x, y) for y in (0, 3, 6) for x in (0, 3, 6)]

    big = sample_regular(ImageGrid(np.zeros((100, 100))), 1 / 100)
    assert big.count == 100
    assert abs(big.density - 0.01) <= 0.001


@pytest.mark.parametrize('mode', [EDGE_THRESHOLD, PATCH_MAX, REGULAR_GRID])
def test_samplers_copy_values_and_are_deterministic(mode):
    guidance, gt = make_piecewise_fixture(64, 64, seed=5, block=16)
    spec = SamplingSpec(mode, 0.04)
    first = sample(spec, gt, guidance)
    second = sample(spec, gt, guidance)
    np.testing.assert_array_equal(first.mask, second.mask)
    np.testing.assert_array_equal(first.values.data[first.mask], gt.data[first.mask])
    assert abs(first.density - 0.04) <= 0.15 * 0.04


def test_sampling_spec_validation():
    assert SamplingSpec(REGULAR_GRID, 0.25).step == 2
    with pytest.raises(ParameterDomainError):
        SamplingSpec('random', 0.25)
    with pytest.raises(ParameterDomainError):
        SamplingSpec(PATCH_MAX, 0.0)


def test_samplers_check_dimensions():
    with pytest.raises(DimensionMismatchError):
        sample_edge_threshold(ImageGrid(np.zeros((3, 3))), ImageGrid(np.zeros((3, 4))), 0.5)
    with pytest.raises(DimensionMismatchError):
        sample_patch_max(ImageGrid(np.zeros((3, 3))), ImageGrid(np.zeros((4, 3))), 0.5)


def test_regular_grid_offsets():
    gt = ImageGrid(np.arange(36.0).reshape(6, 6))
    sparse = sample_regular(gt, 1 / 9, offset=(1, 2))
    assert [(x, y) for x, y, _ in sparse.sites()] == [(1, 2), (4, 2), (1, 5), (4, 5)]
    with pytest.raises(ParameterDomainError):
        sample_regular(gt, 1 / 9, offset=(3, 0))

    # each row and each column is sampled by exactly one of the diagonal phases
    phases = grid_phases(3)
    assert phases == [(0, 0), (1, 1), (2, 2)]
    union = sum(sample_regular(gt, 1 / 9, p).mask.astype(int) for p in phases)
    assert np.all(union.sum(axis=0) == 2)
    assert np.all(union.sum(axis=1) == 2)
