import csv
import io
import json

import pytest

import lis_crlb
from lis_crlb import lis
from lis_crlb.lis import BASE_COLUMNS, MODE_COLUMNS, SweepSpec, cmd, cpl_tau_grid, write_csv


def run(capsys, *argv):
    cmd(list(argv))
    out = capsys.readouterr().out
    return list(csv.DictReader(io.StringIO(out))), out


def exit_code(*argv):
    with pytest.raises(SystemExit) as info:
        cmd(list(argv))
    return info.value.code


def test_package_exports():
    assert lis_crlb.cpl_sweep is lis.cpl_sweep
    assert lis_crlb.crlb_from_fisher is lis.crlb_from_fisher


def test_tau_grid_inserts_reference_point():
    taus = cpl_tau_grid(SweepSpec('tau', 1e-3, 1e-1, 4))
    assert taus.count(0.01) == 1
    assert len(taus) == 5
    assert cpl_tau_grid(SweepSpec('tau', 1e-3, 1e-1, 3)).count(0.01) == 1
    assert 0.01 not in cpl_tau_grid(SweepSpec('tau', 1.0, 10.0, 3))


def test_sweep_spec_rejects():
    for args in (('w', 1.0, 2.0, 3), ('tau', 0.0, 1.0, 3), ('psi', 0.0, 1.0, 0),
                 ('R', 1.0, 2.0, 3, 'cubic')):
        with pytest.raises(ValueError):
            SweepSpec(*args)


def test_write_csv_formats_values(capsys):
    write_csv([{'a': None, 'b': True, 'c': 3, 'd': 0.1, 'e': 'quad'}], ['a', 'b', 'c', 'd', 'e'])
    assert capsys.readouterr().out == 'a,b,c,d,e\n,true,3,0.1,quad\n'


def test_cpl_sweep(capsys):
    rows, out = run(capsys, 'cpl-sweep', '--start', '1e-3', '--stop', '0.1', '--num', '3',
                    '--methods', 'closed,numeric')
    assert out.splitlines()[0] == ','.join(BASE_COLUMNS + MODE_COLUMNS['cpl-sweep'])
    assert len(rows) == 6
    assert {r['tau'] for r in rows} == {'0.001', '0.01', '0.1'}
    by_key = {(r['method'], r['tau']): r for r in rows}
    for tau in ('0.001', '0.01', '0.1'):
        closed, numeric = by_key['closed', tau], by_key['numeric', tau]
        for column in ('c_x_m2', 'c_z_m2'):
            assert float(numeric[column]) == pytest.approx(float(closed[column]), rel=1e-6)
    assert by_key['closed', '0.01']['c_phase_rad2'] == ''
    assert int(by_key['closed', '0.01']['n_elements']) == 201


def test_mode_flag_and_output_file(tmp_path, capsys):
    out = tmp_path / 'sweep.csv'
    cmd(['--mode', 'cpl-sweep', '--start', '1', '--stop', '10', '--num', '2',
         '--methods', 'closed', '--out', str(out)])
    assert 'Wrote 2 rows' in capsys.readouterr().err
    with open(out, newline='') as fp:
        rows = list(csv.DictReader(fp))
    assert [float(r['tau']) for r in rows] == [1.0, 10.0]


def test_phase_unknown_cpl_sweep(capsys):
    rows, _ = run(capsys, 'cpl-sweep', '--start', '1', '--stop', '1', '--num', '1',
                  '--methods', 'closed', '--phase_unknown', 'true')
    assert float(rows[0]['c_phase_rad2']) > 0


@pytest.mark.parametrize("argv", [
    ('bogus',),
    (),
    ('cpl-sweep', '--frobnicate', '1'),
    ('cpl-sweep', '--methods', 'magic'),
    ('offcpl-sweep', '--methods', 'closed', '--x0', '2', '--z0', '4',
     '--start', '1e-3', '--stop', '1e-3', '--num', '1'),
    ('deploy', '--stat', 'mean'),
    ('phase-sweep', '--methods', 'farfield'),
    ('cpl-sweep', '--z0', '4,6'),
])
def test_usage_errors_exit_1(argv):
    assert exit_code(*argv) == 1


def test_unknown_config_key_exits_1(tmp_path, capsys):
    config = tmp_path / 'bad.json'
    config.write_text(json.dumps({'wavelength': 0.1}))
    assert exit_code('cpl-sweep', '--config', str(config)) == 1
    assert 'wavelength' in capsys.readouterr().err


def test_numerical_failure_exits_2(capsys):
    # a 4 cm panel at lambda=0.1 holds too few elements for the oracle
    assert exit_code('cpl-sweep', '--methods', 'oracle', '--start', '1e-4', '--stop', '1e-4',
                     '--num', '1') == 2
    assert 'numerical failure' in capsys.readouterr().err


def test_config_overrides_defaults_and_flags_override_config(tmp_path, capsys):
    config = tmp_path / 'scenario.json'
    config.write_text(json.dumps({'lambda': 0.2, 'n0': 4, 'terminal': {'z': 6}}))
    rows, _ = run(capsys, 'cpl-sweep', '--config', str(config), '--start', '1', '--stop', '1',
                  '--num', '1', '--methods', 'closed')
    assert float(rows[0]['lambda_m']) == 0.2
    assert float(rows[0]['z0_m']) == 6.0

    rows, _ = run(capsys, 'cpl-sweep', '--config', str(config), '--lambda', '0.05',
                  '--start', '1', '--stop', '1', '--num', '1', '--methods', 'closed')
    assert float(rows[0]['lambda_m']) == 0.05


def test_preset_selects_mode(capsys):
    rows, out = run(capsys, '--preset', 'fig8', '--x0', '2')
    assert out.splitlines()[0].endswith('err_x,err_y,err_z')
    assert [r['method'] for r in rows] == ['numeric', 'approx']
    assert float(rows[1]['err_x']) < 0.005


def test_ring_sweep(capsys):
    rows, _ = run(capsys, 'ring-sweep', '--start', '0', '--stop', '3.141592653589793',
                  '--num', '3', '--radius', '0.5')
    assert len(rows) == 3
    assert float(rows[0]['norm_x']) == 1.0
    assert float(rows[2]['norm_z']) == pytest.approx(1.0, rel=1e-6)


def test_phase_sweep(capsys):
    rows, _ = run(capsys, 'phase-sweep', '--start', '1e-3', '--stop', '0.1', '--num', '2')
    assert len(rows) == 6
    assert {r['phase'] for r in rows} == {'known', 'unknown'}
    approx = [r for r in rows if r['method'] == 'approx']
    assert len(approx) == 2 and all(r['c_x_m2'] == '' for r in approx)
    known = [r for r in rows if r['method'] == 'closed' and r['phase'] == 'known']
    unknown = [r for r in rows if r['method'] == 'closed' and r['phase'] == 'unknown']
    for k, u in zip(known, unknown):
        assert float(u['c_z_m2']) >= float(k['c_z_m2'])


def test_deploy_cpl(capsys):
    rows, _ = run(capsys, 'deploy', '--start', '0.5', '--stop', '0.5', '--num', '1',
                  '--split', 'single,quad')
    assert [r['split'] for r in rows] == ['single', 'quad']
    assert all(r['stat'] == 'cpl' for r in rows)
    assert float(rows[1]['c_x_m2']) < float(rows[0]['c_x_m2'])


def test_deploy_cdf(capsys):
    rows, _ = run(capsys, 'deploy', '--stat', 'cdf', '--seed', '3', '--n_terminals', '3',
                  '--radius', '0.5', '--split', 'quad', '--workers', '2')
    assert [int(r['rank']) for r in rows] == [1, 2, 3]
    c_x = [float(r['c_x_m2']) for r in rows]
    assert c_x == sorted(c_x)
    assert all(r['n_used'] == '3' and r['n_excluded'] == '0' for r in rows)


def test_validate_subset_passes(capsys):
    cmd(['validate', '--checks', 'slope_laws,phase_ratio,noise_linearity'])
    report = json.loads(capsys.readouterr().out)
    assert report['passed']
    assert {r['check'] for r in report['checks']} == {'slope_xy', 'slope_z', 'phase_ratio',
                                                      'noise_linearity'}


def test_validate_failure_exits_2(monkeypatch, capsys):
    monkeypatch.setitem(lis.VALIDATION_CHECKS, 'always_fails',
                        lambda spec: [lis._record('always_fails', 1.0, 0.5)])
    assert exit_code('validate', '--checks', 'always_fails') == 2
    captured = capsys.readouterr()
    assert json.loads(captured.out)['passed'] is False
    assert 'always_fails' in captured.err


def test_unknown_validation_check_exits_1():
    assert exit_code('validate', '--checks', 'nonsense') == 1


def test_offcpl_sweep_local_slopes():
    rows = lis.offcpl_sweep([1e-5, 1e-4, 1e-3], x0s=(2.0,), z0s=(4.0,),
                            methods=('approx', 'farfield'))
    assert [r['method'] for r in rows] == ['approx', 'farfield'] * 3
    farfield = [r for r in rows if r['method'] == 'farfield']
    for r in farfield:
        assert r['slope_xy'] == pytest.approx(-2, abs=0.05)
        assert -2.05 <= r['slope_z'] <= -1.0
    assert all('slope_xy' in r for r in rows if r['method'] == 'approx')


def test_approx_error_grows_with_offset():
    rows = lis.approx_error((2, 5, 8))
    err_x = [r['err_x'] for r in rows if r['method'] == 'approx']
    assert err_x == sorted(err_x)
    assert 0.004 < err_x[-1] < 0.006
    assert all(r['err_y'] == pytest.approx(r['err_x'], rel=1e-4)
               for r in rows if r['method'] == 'approx')


@pytest.mark.parametrize("panels", [
    [{'r': 0.5, 'cx': 3}, {'r': 0.5, 'cx': -3}],
    [{'r': 0.5, 'cy': 1}],
])
def test_config_panels_must_be_one_centred_disk(tmp_path, capsys, panels):
    config = tmp_path / 'panels.json'
    config.write_text(json.dumps({'panels': panels}))
    assert exit_code('approx-error', '--config', str(config)) == 1
    assert 'one panel centred at the origin' in capsys.readouterr().err


def test_config_panel_radius_is_used(tmp_path, capsys):
    config = tmp_path / 'panel.json'
    config.write_text(json.dumps({'panels': [{'r': 0.5, 'cx': 0, 'cy': 0}]}))
    rows, _ = run(capsys, 'ring-sweep', '--config', str(config), '--start', '1', '--stop', '1',
                  '--num', '1')
    assert float(rows[0]['R_m']) == 0.5


def test_validate_symmetry(capsys):
    cmd(['validate', '--checks', 'symmetry'])
    report = json.loads(capsys.readouterr().out)
    assert report['passed']
    assert {r['check'] for r in report['checks']} == {'azimuthal_invariance',
                                                      'phase_independence', 'cpl_diagonal'}
