import csv
import io

import numpy as np
import pytest

from evaluation.geosparse_fixtures import make_piecewise_fixture
from experiments.geosparse_cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from interpolation.geosparse_core import ImageGrid, extend_sparse
from misc.formats import read_field, read_pfm, read_sparse, write_field, write_image, write_pfm, write_sparse


def _csv_rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def scene(tmp_path):
    guidance, gt = make_piecewise_fixture(32, 32, seed=1, block=8)
    paths = {'guidance': str(tmp_path / 'guide.ppm'), 'gt': str(tmp_path / 'gt.pfm')}
    write_image(paths['guidance'], guidance)
    write_pfm(paths['gt'], gt)
    return paths


def test_interpolate_single_sample_gives_constant(tmp_path, capsys):
    guide = str(tmp_path / 'g.pgm')
    write_image(guide, ImageGrid(np.random.default_rng(0).integers(0, 256, size=(6, 9)).astype(float)))
    sparse = str(tmp_path / 's.sparse')
    write_sparse(sparse, extend_sparse([(4, 2, 12.5)], 9, 6, 1))
    out = str(tmp_path / 'dense.pfm')

    assert main(['interpolate', '--guidance', guide, '--sparse', sparse, '--out', out]) == EXIT_OK
    np.testing.assert_array_equal(read_pfm(out).data, np.full((6, 9, 1), 12.5))
    assert float(capsys.readouterr().out.strip()) >= 0.0


def test_interpolate_exact_matches_geodesic_on_constant_guidance(tmp_path):
    guide = str(tmp_path / 'flat.ppm')
    write_image(guide, ImageGrid(np.full((64, 64, 3), 128.0)))
    rng = np.random.default_rng(1)
    mask = rng.random((64, 64)) < 0.01
    mask[10, 20] = True
    sparse_path = str(tmp_path / 's.sparse')
    write_sparse(sparse_path, extend_sparse(
        [(int(x), int(y), float(rng.uniform(0, 50))) for y, x in np.argwhere(mask)], 64, 64, 1))

    outputs = {}
    for method in ('geodesic', 'exact'):
        outputs[method] = str(tmp_path / f'{method}.pfm')
        code = main(['interpolate', '-g', guide, '-s', sparse_path, '-m', method, '-S', '20', '-o', outputs[method]])
        assert code == EXIT_OK
    np.testing.assert_allclose(read_pfm(outputs['exact']).data, read_pfm(outputs['geodesic']).data, rtol=1e-6)


def test_interpolate_two_channel_writes_flo(tmp_path):
    guide = str(tmp_path / 'g.pgm')
    write_image(guide, ImageGrid(np.zeros((4, 4))))
    sparse_path = str(tmp_path / 's.sparse')
    write_sparse(sparse_path, extend_sparse([(0, 0, (1.0, -1.0)), (3, 3, (2.0, 0.5))], 4, 4, 2))
    assert main(['interpolate', '-g', guide, '-s', sparse_path, '-o', str(tmp_path / 'flow')]) == EXIT_OK
    assert read_field(str(tmp_path / 'flow.flo')).channels == 2


def test_usage_errors_exit_one(tmp_path):
    assert main(['interpolate', '--sparse', 'x.sparse', '--out', 'y.pfm']) == EXIT_USAGE
    assert main(['interpolate', '-g', 'a', '-s', 'b', '-o', 'c', '-m', 'spline']) == EXIT_USAGE
    assert main(['bench', '--densities', '']) == EXIT_USAGE
    assert main(['bench', '--densities', ',']) == EXIT_USAGE
    assert main(['sweep', '-g', 'a', '-t', 'b', '-d', '2']) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_io_and_domain_errors(tmp_path, scene):
    missing = str(tmp_path / 'missing.sparse')
    assert main(['interpolate', '-g', scene['guidance'], '-s', missing, '-o', str(tmp_path / 'o.pfm')]) == EXIT_IO

    broken = tmp_path / 'broken.sparse'
    broken.write_text('GEOSPARSE 32 32 1\n40 0 1.0\n')
    assert main(['interpolate', '-g', scene['guidance'], '-s', str(broken), '-o', str(tmp_path / 'o.pfm')]) == EXIT_IO

    binary = tmp_path / 'binary.sparse'
    binary.write_bytes(b'GEOSPARSE 32 32 1\n0 0 1.0\xff\n')
    assert main(['interpolate', '-g', scene['guidance'], '-s', str(binary), '-o', str(tmp_path / 'o.pfm')]) == EXIT_IO

    small = str(tmp_path / 'small.sparse')
    write_sparse(small, extend_sparse([(0, 0, 1.0)], 8, 8, 1))
    assert main(['interpolate', '-g', scene['guidance'], '-s', small, '-o', str(tmp_path / 'o.pfm')]) == EXIT_DOMAIN


def test_sample_command(tmp_path, scene):
    out = str(tmp_path / 'reg.sparse')
    assert main(['sample', '--gt', scene['gt'], '--guidance', scene['guidance'], '--mode', 'regular',
                 '--density', '1/16', '--out', out]) == EXIT_OK
    sparse = read_sparse(out)
    assert sparse.count == 64
    gt = read_pfm(scene['gt'])
    np.testing.assert_array_equal(sparse.values.data[sparse.mask], gt.data[sparse.mask])

    out = str(tmp_path / 'edges.sparse')
    assert main(['sample', '-t', scene['gt'], '-g', scene['guidance'], '-m', 'edges', '-d', '0.1', '-o', out]) == EXIT_OK
    assert read_sparse(out).count == 103


def test_evaluate_command(tmp_path, capsys):
    gt = str(tmp_path / 'gt.pfm')
    est = str(tmp_path / 'est.pfm')
    write_pfm(gt, ImageGrid(np.array([[1.0, 2.0, 3.0]])))
    write_pfm(est, ImageGrid(np.array([[1.0, 2.0, 5.0]])))

    assert main(['evaluate', '--estimate', est, '--gt', gt, '--metric', 'rmse']) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert rows[0] == ['metric', 'value', 'mask', 'elapsed']
    assert rows[1][:3] == ['rmse', '1.154701', 'all']

    sparse = str(tmp_path / 's.sparse')
    write_sparse(sparse, extend_sparse([(2, 0, 3.0)], 3, 1, 1))
    assert main(['evaluate', '-e', est, '-t', gt, '-M', 'rmse', '-s', sparse, '-K', 'known']) == EXIT_OK
    assert _csv_rows(capsys.readouterr().out)[1][:3] == ['rmse', '2.000000', 'known']

    mask = str(tmp_path / 'occ.pgm')
    write_image(mask, ImageGrid(np.array([[0.0, 0.0, 255.0]])))
    assert main(['evaluate', '-e', est, '-t', gt, '-M', 'rmse', '-k', mask, '--invert-mask']) == EXIT_OK
    assert _csv_rows(capsys.readouterr().out)[1][:3] == ['rmse', '0.000000', 'external-mask']

    assert main(['evaluate', '-e', est, '-t', gt, '-M', 'epe']) == EXIT_DOMAIN
    assert main(['evaluate', '-e', est, '-t', gt, '-M', 'rmse', '-K', 'unknown']) == EXIT_DOMAIN


def test_sweep_rows(tmp_path, scene):
    out = str(tmp_path / 'sweep.csv')
    assert main(['sweep', '-t', scene['gt'], '-g', scene['guidance'], '-M', 'geodesic',
                 '-d', '1/4,1/16', '-o', out]) == EXIT_OK
    with open(out) as f:
        rows = _csv_rows(f.read())
    assert rows[0] == ['method', 'inv_root_density', 'rmse', 'elapsed']
    assert len(rows) == 3
    assert [r[1] for r in rows[1:]] == ['2.000000', '4.000000']


def test_sweep_full_density_reproduces_ground_truth(tmp_path, scene, capsys):
    # with a tiny spatial bandwidth every pixel only sees itself
    assert main(['sweep', '-t', scene['gt'], '-g', scene['guidance'], '-d', '1', '-S', '0.05']) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert [r[0] for r in rows[1:]] == ['geodesic', 'bilateral', 'nw']
    for row in rows[1:]:
        assert float(row[2]) < 1e-6


def test_bench_rows(tmp_path, capsys):
    assert main(['bench', '-W', '40', '-H', '30', '-d', '1/9,1/100', '-n', '1', '-M', 'geodesic,nw']) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert rows[0] == ['method', 'density', 'width', 'height', 'elapsed']
    assert [(r[0], r[2], r[3]) for r in rows[1:]] == [('geodesic', '40', '30')] * 2 + [('nw', '40', '30')] * 2


def test_fixture_command(tmp_path):
    guide = str(tmp_path / 'fx.ppm')
    gt = str(tmp_path / 'fx')
    assert main(['fixture', '-g', guide, '-t', gt, '-k', 'flow', '-W', '24', '-H', '16', '--seed', '3']) == EXIT_OK
    flow = read_field(gt + '.flo')
    assert flow.channels == 2
    assert flow.shape == (16, 24)

    assert main(['fixture', '-g', str(tmp_path / 'r.ppm'), '-k', 'random', '-W', '8', '-H', '8']) == EXIT_OK
    assert main(['fixture', '-g', str(tmp_path / 'd.ppm'), '-k', 'disparity']) == EXIT_DOMAIN


def test_log_file(tmp_path, scene):
    log = str(tmp_path / 'run.log')
    out = str(tmp_path / 'reg.sparse')
    assert main(['--log-file', log, 'sample', '-t', scene['gt'], '-g', scene['guidance'], '-m', 'patchmax',
                 '-d', '1/16', '-o', out]) == EXIT_OK
    with open(log) as f:
        assert 'Wrote 64 samples' in f.read()


def test_sweep_phase_average(tmp_path, scene, capsys):
    assert main(['sweep', '-t', scene['gt'], '-g', scene['guidance'], '-M', 'nw', '-d', '1/4,1/16',
                 '--phase-average', '--sigma-s-per-step', '0.5']) == EXIT_OK
    rows = _csv_rows(capsys.readouterr().out)
    assert [r[:2] for r in rows[1:]] == [['nw', '2.000000'], ['nw', '4.000000']]
    assert all(float(r[2]) >= 0.0 for r in rows[1:])

    assert main(['sweep', '-t', scene['gt'], '-g', scene['guidance'], '-d', '1/4', '-m', 'edges', '-P']) == EXIT_DOMAIN
