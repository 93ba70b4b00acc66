import math

import numpy as np
import pytest

from evaluation.geosparse_metrics import epe, evaluate, mean_abs_error, rmse, sample_masks
from interpolation.geosparse_core import (
    DimensionMismatchError,
    EmptyMaskError,
    ImageGrid,
    ParameterDomainError,
    extend_sparse,
)


def test_rmse_examples():
    gt = ImageGrid(np.array([[1.0, 2.0, 3.0]]))
    assert rmse(gt, gt) == 0.0
    assert rmse(ImageGrid(np.array([[1.0, 2.0, 5.0]])), gt) == pytest.approx(1.154700, abs=1e-6)


def test_rmse_matches_direct_summation():
    rng = np.random.default_rng(0)
    est, gt = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
    total = 0.0
    for y in range(8):
        for x in range(8):
            total += (est[y, x] - gt[y, x]) ** 2
    assert rmse(ImageGrid(est), ImageGrid(gt)) == pytest.approx(math.sqrt(total / 64), abs=1e-12)


def test_epe_examples():
    gt = ImageGrid(np.zeros((1, 1, 2)))
    assert epe(gt, gt) == 0.0
    assert epe(ImageGrid(np.array([[[3.0, 4.0]]])), gt) == pytest.approx(5.0)


def test_epe_matches_direct_summation():
    rng = np.random.default_rng(1)
    est, gt = rng.normal(size=(8, 8, 2)), rng.normal(size=(8, 8, 2))
    total = 0.0
    for y in range(8):
        for x in range(8):
            total += math.sqrt((est[y, x, 0] - gt[y, x, 0]) ** 2 + (est[y, x, 1] - gt[y, x, 1]) ** 2)
    assert epe(ImageGrid(est), ImageGrid(gt)) == pytest.approx(total / 64, abs=1e-12)


def test_mask_and_non_finite_ground_truth():
    gt = ImageGrid(np.array([[1.0, np.nan, 3.0, 4.0]]), allow_nonfinite=True)
    est = ImageGrid(np.array([[2.0, 100.0, 3.0, 4.0]]))
    # the NaN pixel is never scored
    assert rmse(est, gt) == pytest.approx(math.sqrt(1 / 3))
    assert rmse(est, gt, np.array([[0, 1, 1, 1]])) == 0.0
    with pytest.raises(EmptyMaskError):
        rmse(est, gt, np.array([[0, 1, 0, 0]]))
    with pytest.raises(EmptyMaskError):
        rmse(est, gt, np.zeros((1, 4)))


def test_metric_input_validation():
    one = ImageGrid(np.zeros((2, 2)))
    two = ImageGrid(np.zeros((2, 2, 2)))
    with pytest.raises(DimensionMismatchError):
        rmse(two, two)
    with pytest.raises(DimensionMismatchError):
        epe(one, one)
    with pytest.raises(DimensionMismatchError):
        rmse(one, ImageGrid(np.zeros((2, 3))))
    with pytest.raises(ParameterDomainError):
        rmse(one, one, np.full((2, 2), 0.5))


def test_permutation_invariance():
    rng = np.random.default_rng(2)
    est, gt = rng.normal(size=(6, 6, 2)), rng.normal(size=(6, 6, 2))
    mask = rng.random((6, 6)) < 0.5
    mask[0, 0] = True
    perm = rng.permutation(36)

    def shuffle(a):
        return a.reshape(36, -1)[perm].reshape(6, 6, -1)

    expected = epe(ImageGrid(est), ImageGrid(gt), mask)
    shuffled = epe(ImageGrid(shuffle(est)), ImageGrid(shuffle(gt)), shuffle(mask)[:, :, 0])
    assert shuffled == pytest.approx(expected, rel=1e-12)


def test_rmse_dominates_mean_abs_error():
    rng = np.random.default_rng(3)
    for _ in range(20):
        est, gt = ImageGrid(rng.normal(size=(5, 7))), ImageGrid(rng.normal(size=(5, 7)))
        assert rmse(est, gt) >= mean_abs_error(est, gt)


def test_evaluate_report():
    gt = ImageGrid(np.array([[1.0, 2.0, 3.0]]))
    est = ImageGrid(np.array([[1.0, 2.0, 5.0]]))
    sparse = extend_sparse([(0, 0, 1.0)], 3, 1, 1)
    known, unknown = sample_masks(sparse)

    report = evaluate(est, gt, 'rmse', unknown, 'unknown', sparse.density, 0.5)
    assert report.metric_name == 'rmse'
    assert report.mask == 'unknown'
    assert report.value == pytest.approx(math.sqrt(2.0))
    assert report.density == pytest.approx(1 / 3)
    assert evaluate(est, gt, 'rmse', known, 'known').value == 0.0

    with pytest.raises(ParameterDomainError):
        evaluate(est, gt, 'mae')
    with pytest.raises(ParameterDomainError):
        evaluate(est, gt, 'rmse', mask_name='known')
