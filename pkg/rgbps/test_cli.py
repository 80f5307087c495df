import json
import pathlib

import numpy as np
import pytest

from rgbps.common import EXIT_BAD_INPUT, EXIT_OK, EXIT_RUNTIME
from rgbps.formats import pfm, tables


@pytest.fixture
def workdir(tmp_path, monkeypatch) -> pathlib.Path:
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_missing_input_file(cli, workdir, capsys):
    assert cli.main(['integrate', 'missing.pfm']) == EXIT_BAD_INPUT
    err = _error(capsys)
    assert err['error'] == 'InvalidInputError'
    assert 'missing.pfm' in err['message']


def test_missing_rig(cli, workdir, capsys):
    assert cli.main(['synth', '--rig', 'nope.txt', '--size', '16', '--coarse', '4']) == EXIT_BAD_INPUT
    assert 'nope.txt' in _error(capsys)['message']


def test_synthesis_failure_is_a_runtime_error(cli, workdir, capsys):
    (workdir / 'eye.txt').write_text('1 0 0\n0 1 0\n0 0 1\n')
    code = cli.main(['synth', '--rig', 'eye.txt', '--size', '16', '--coarse', '4', '--tilt', '0'])
    assert code == EXIT_RUNTIME
    assert _error(capsys)['error'] == 'SynthesisError'


def test_config_set_and_show(cli, workdir, capsys):
    assert cli.main(['config', 'set', '--degree', '4', '--selection', 'literal']) == EXIT_OK
    assert (workdir / 'rgbps.ini').is_file()
    capsys.readouterr()

    assert cli.main(['config', 'show']) == EXIT_OK
    shown = dict(line.split(':', 1) for line in capsys.readouterr().out.splitlines())
    assert shown['degree'].strip() == '4'
    assert shown['selection'].strip() == 'literal'
    assert shown['patch_side'].strip() == '8'

    assert cli.main(['config', 'clear']) == EXIT_OK
    assert not (workdir / 'rgbps.ini').exists()


def test_config_set_without_options(cli, workdir, capsys):
    assert cli.main(['config', 'set']) == EXIT_OK
    assert 'nothing to do' in capsys.readouterr().out


def test_config_set_bad_value(cli, workdir, capsys):
    assert cli.main(['config', 'set', '--degree', 'five']) == EXIT_BAD_INPUT
    assert _error(capsys)['error'] == 'ConfigError'


def test_preprocess(cli, workdir):
    mosaic = np.zeros((12, 12), dtype=np.float32)
    mosaic[2:10, 2:10] = 0.4
    pfm.write_pfm(workdir / 'raw.pfm', mosaic)
    assert cli.main(['preprocess', 'raw.pfm', '-o', 'pre']) == EXIT_OK

    image = pfm.read_image(workdir / 'pre' / 'image.pfm')
    assert image.shape == (6, 6)
    assert image.mask.any() and not image.mask.all()
    gains = tables.read_rows(workdir / 'pre' / 'gains.csv')
    assert list(gains[0]) == ['gain_r', 'gain_g', 'gain_b']
    assert (workdir / 'pre' / 'mask.png').is_file()


def test_preprocess_rgb_needs_no_demosaic_flag(cli, workdir, capsys):
    pfm.write_pfm(workdir / 'rgb.pfm', np.full((4, 4, 3), 0.5, dtype=np.float32))
    assert cli.main(['preprocess', 'rgb.pfm', '--no-demosaic', '-o', 'pre']) == EXIT_OK
    np.testing.assert_allclose(pfm.read_image(workdir / 'pre' / 'image.pfm').data, 1.0)
    assert cli.main(['preprocess', 'rgb.pfm', '-o', 'pre2']) == EXIT_BAD_INPUT


SMALL_FLAGS = ['--n-chroma-elev', '16', '--n-chroma-azim', '16', '--n-lum', '30',
               '--albedo-set-size', '8', '--h-max', '0.01']


@pytest.mark.slow
def test_synth_reconstruct_eval(cli, workdir):
    assert cli.main(['synth', '--size', '24', '--coarse', '4', '--count', '2', '-o', 'synth', '--seed', '3']) == EXIT_OK
    index = tables.read_rows(workdir / 'synth' / 'index.csv')
    assert [r['directory'] for r in index] == ['0000', '0001']
    inst = workdir / 'synth' / '0000'
    for name in ('image.pfm', 'gt_normals.pfm', 'gt_albedo.pfm', 'gt_depth.pfm', 'rig.txt'):
        assert (inst / name).is_file()

    tables.write_rows(workdir / 'gains.csv', ['gain_r', 'gain_g', 'gain_b'], [(1.0, 2.0, 4.0)])
    assert cli.main(['reconstruct', str(inst / 'image.pfm'), '--rig', str(inst / 'rig.txt'), '--gains', 'gains.csv',
                     '-o', 'out', '-q', '--dump-trace', '--dump-coefficients', *SMALL_FLAGS]) == EXIT_OK
    assert len(tables.read_rows(workdir / 'out' / 'objective.csv')) > 0
    coeffs = tables.read_rows(workdir / 'out' / 'coefficients.csv')
    assert 0 < len(coeffs) <= 17 * 17
    assert len(coeffs[0]) == 1 + 20
    assert 'kappa_b' in tables.read_rows(workdir / 'out' / 'albedos.csv')[0]

    assert cli.main(['eval', 'out/normals.pfm', str(inst / 'gt_normals.pfm'), '-o', 'eval']) == EXIT_OK
    report = tables.read_rows(workdir / 'eval' / 'report.csv')
    assert float(report[0]['median_deg']) < 30.0

    assert cli.main(['baseline-ps', str(inst / 'image.pfm'), '--albedo', str(inst / 'gt_albedo.pfm'),
                     '--rig', str(inst / 'rig.txt'), '-o', 'baseline']) == EXIT_OK
    assert cli.main(['integrate', 'baseline/normals.pfm', '-o', 'depth.pfm']) == EXIT_OK
    assert pfm.read_pfm(workdir / 'depth.pfm').shape == (24, 24, 1)


@pytest.mark.slow
def test_bench_command(cli, workdir):
    assert cli.main(['bench', '--size', '24', '--coarse', '4', '--count', '2', '-q', '-o', 'bench', *SMALL_FLAGS]) == EXIT_OK
    summary = tables.read_rows(workdir / 'bench' / 'summary.csv')
    assert int(summary[0]['instances']) + int(summary[0]['failed']) == 2
