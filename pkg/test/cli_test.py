import json
import logging
import os
import sys

import numpy as np
import pandas as pd
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(os.path.dirname(__file__)))))

import ddspme.fixed_point.picard as picard_module
from ddspme.config import DEMO_CONFIG, REGULARIZATION_SWEEP_CONFIG, VISCOSITY_SWEEP_CONFIG
from ddspme.harness import require_config, run_config, validate
from ddspme.harness.runner import ERROR_NAME, MANIFEST_NAME, Runner
from ddspme.harness.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_PROBE, main

logging.basicConfig(level=logging.INFO)


def demo_payload():
    with open(DEMO_CONFIG, encoding='utf-8') as f:
        return json.load(f)


def small_payload():
    payload = demo_payload()
    payload['operator']['N'] = 8
    payload['model']['noise']['K'] = 4
    payload['run'].update({'T': 0.2, 'n_steps': 20, 'M': 8, 'seed': 3, 'probe_samples': 200})
    return payload


def measure_free_payload(**drift):
    payload = small_payload()
    payload['model']['drift'] = {'kind': 'tanh', **drift}
    payload['model']['noise']['coupling_alpha'] = 0.0
    return payload


def dump(tmp_path, payload, name='config.json'):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding='utf-8')
    return str(path)


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


# validate

def test_demo_config_is_valid(capsys):
    assert validate(DEMO_CONFIG) == []
    assert main(['validate', '--config', DEMO_CONFIG]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)['violations'] == []


def test_validate_reports_bad_alpha(tmp_path):
    payload = demo_payload()
    payload['operator']['alpha'] = 1.5
    violations = validate(dump(tmp_path, payload))
    assert any(v.startswith('operator: alpha outside (0,1]') for v in violations)
    assert main(['validate', '--config', dump(tmp_path, payload)]) == EXIT_CONFIG


def test_validate_reports_the_stability_bound(tmp_path):
    payload = demo_payload()
    payload['run']['n_steps'] = 4
    violations = validate(dump(tmp_path, payload))
    assert len(violations) == 1
    assert violations[0].startswith('run.dt:')
    assert 'exceeds the explicit stability bound' in violations[0]
    payload['run']['scheme'] = 'drift_implicit'
    assert validate(dump(tmp_path, payload)) == []


def test_validate_lists_every_violation(tmp_path):
    payload = demo_payload()
    payload['operator']['alpha'] = 1.5
    payload['run']['eps'] = 1.5
    payload['run']['lambdas'] = [0.2, 0.2, 0.1]
    violations = validate(dump(tmp_path, payload))
    assert len(violations) == 3
    assert any(v.startswith('run.eps') for v in violations)
    assert any(v.startswith('run.lambdas') for v in violations)


def test_unknown_key_is_a_config_error(tmp_path):
    payload = demo_payload()
    payload['run']['stepsize'] = 0.1
    path = dump(tmp_path, payload)
    assert any('stepsize' in v for v in validate(path))
    out = tmp_path / 'out'
    assert main(['solve', '--config', path, '--out', str(out)]) == EXIT_CONFIG
    assert read_json(out / ERROR_NAME)['type'] == 'ConfigError'
    with pytest.raises(ValueError):
        require_config(path)


# probe-assumptions

def test_probe_assumptions_on_identity_drift(tmp_path):
    payload = small_payload()
    payload['model']['drift'] = {'kind': 'identity'}
    out = tmp_path / 'probes'
    assert main(['probe-assumptions', '--config', dump(tmp_path, payload), '--out', str(out), '--strict']) == EXIT_OK
    reports = {r['hypothesis']: r for r in read_json(out / 'probes.json')['reports']}
    assert reports['A2']['estimated_constant'] == pytest.approx(1.0, abs=1e-9)
    assert 'A1-cross' not in reports
    assert all(reports[name]['passed'] for name in ('A1-diagonal', 'A2', 'A3', 'A4'))
    assert len(pd.read_csv(out / 'probes.csv')) == len(reports)


def test_probe_failure_exit_code(tmp_path):
    payload = small_payload()
    payload['model']['drift'] = {'kind': 'identity'}
    payload['model']['constants'] = {'alpha0': 0.5, 'alpha1': 1.0, 'c': 5.0, 'delta': 1.0}
    path = dump(tmp_path, payload)
    assert main(['probe-assumptions', '--config', path, '--out', str(tmp_path / 'strict'), '--strict']) == EXIT_PROBE
    manifest = read_json(tmp_path / 'strict' / MANIFEST_NAME)
    assert manifest['status'] == 'failed'
    assert 'A2' in read_json(tmp_path / 'strict' / ERROR_NAME)['diagnostics']['failed']
    assert main(['probe-assumptions', '--config', path, '--out', str(tmp_path / 'lenient')]) == EXIT_OK


# numerical failures

def test_integration_failure_exit_code(tmp_path):
    payload = small_payload()
    payload['operator'] = {'kind': 'explicit', 'lambdas': [0.0, 100.0]}
    payload['model'] = {'drift': {'kind': 'identity'}, 'noise': {'K': 1}}
    payload['run'].update({'T': 2.0, 'n_steps': 2, 'M': 2, 'scheme': 'drift_implicit'})
    out = tmp_path / 'out'
    assert main(['solve', '--config', dump(tmp_path, payload), '--out', str(out)]) == EXIT_NUMERICAL
    error = read_json(out / ERROR_NAME)
    assert error['type'] == 'PicardError'
    assert error['diagnostics']['window'] == 0
    manifest = read_json(out / MANIFEST_NAME)
    assert manifest['status'] == 'failed'
    assert ERROR_NAME in manifest['outputs']


# solve

def test_solve_outputs_are_listed_in_the_manifest(tmp_path):
    out = tmp_path / 'out'
    assert main(['solve', '--config', dump(tmp_path, small_payload()), '--out', str(out)]) == EXIT_OK
    manifest = read_json(out / MANIFEST_NAME)
    assert manifest['status'] == 'ok'
    assert manifest['task'] == 'solve'
    assert manifest['seed'] == 3
    written = set(os.listdir(out)) - {MANIFEST_NAME}
    assert written == set(manifest['outputs'])
    for name in ('trajectory.npz', 'trajectory.json', 'statistics.csv', 'picard.csv', 'picard.json', 'energy.csv',
                 'energy.json'):
        assert name in written
    statistics = pd.read_csv(out / 'statistics.csv')
    assert len(statistics) == 21
    energy = read_json(out / 'energy.json')
    assert energy['p_form_sign_ok']


def test_solve_is_reproducible(tmp_path):
    path = dump(tmp_path, small_payload())
    assert main(['solve', '--config', path, '--out', str(tmp_path / 'a')]) == EXIT_OK
    assert main(['solve', '--config', path, '--out', str(tmp_path / 'b'), '--threads', '2']) == EXIT_OK
    for name in ('statistics.csv', 'picard.csv', 'energy.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_zero_coupling_matches_the_measure_free_model(tmp_path):
    free = dump(tmp_path, measure_free_payload(), 'free.json')
    silent = dump(tmp_path, measure_free_payload(coupling='second_moment', kappa=0.0), 'silent.json')
    assert main(['solve', '--config', free, '--out', str(tmp_path / 'free')]) == EXIT_OK
    assert main(['solve', '--config', silent, '--out', str(tmp_path / 'silent')]) == EXIT_OK
    assert (tmp_path / 'free' / 'statistics.csv').read_bytes() == (tmp_path / 'silent' / 'statistics.csv').read_bytes()
    with np.load(tmp_path / 'free' / 'trajectory.npz') as a, np.load(tmp_path / 'silent' / 'trajectory.npz') as b:
        np.testing.assert_array_equal(a['paths'], b['paths'])


# unexpected failures

def test_unexpected_error_exit_code(tmp_path, monkeypatch):
    def broken_solve(self):
        raise RuntimeError('disk vanished')

    monkeypatch.setattr(Runner, '_solve', broken_solve)
    out = tmp_path / 'out'
    assert main(['solve', '--config', dump(tmp_path, small_payload()), '--out', str(out)]) == EXIT_PROBE
    error = read_json(out / ERROR_NAME)
    assert error['type'] == 'RuntimeError'
    assert error['message'] == 'disk vanished'
    manifest = read_json(out / MANIFEST_NAME)
    assert manifest['status'] == 'failed'
    assert ERROR_NAME in manifest['outputs']


# other tasks

def test_picard_diagnose(tmp_path):
    out = tmp_path / 'out'
    assert main(['picard-diagnose', '--config', dump(tmp_path, small_payload()), '--out', str(out)]) == EXIT_OK
    consistency = read_json(out / 'consistency.json')
    assert consistency['bitwise']
    assert consistency['residual'] <= consistency['tol']
    contraction = pd.read_csv(out / 'contraction.csv')
    assert list(contraction['fraction']) == [1.0, 0.5, 0.25]
    assert (contraction['ratio'] > 0).all()

    windows = read_json(out / 'picard.json')['windows']
    assert consistency['lambda_disc'] == windows[0]['lambda_disc']


def test_picard_diagnose_resolves_the_window_once(tmp_path, monkeypatch):
    payload = small_payload()
    payload['model']['constants'] = {'alpha0': 1.0, 'alpha1': 1.0, 'c': 1.0, 'delta': 1.0}
    calls = []
    estimate = picard_module.estimate_contraction

    def counting_estimate(*args, **kwargs):
        calls.append(1)
        return estimate(*args, **kwargs)

    monkeypatch.setattr(picard_module, 'estimate_contraction', counting_estimate)
    out = tmp_path / 'out'
    assert main(['picard-diagnose', '--config', dump(tmp_path, payload), '--out', str(out)]) == EXIT_OK
    assert len(calls) == 1
    windows = read_json(out / 'picard.json')['windows']
    assert windows[0]['c_hat'] > 0.0
    assert read_json(out / 'consistency.json')['lambda_disc'] == windows[0]['c_hat'] / 2.0


def test_apriori_task(tmp_path):
    payload = small_payload()
    payload['run']['lam'] = 0.1
    out = tmp_path / 'out'
    assert main(['apriori', '--config', dump(tmp_path, payload), '--out', str(out)]) == EXIT_OK
    bounds = read_json(out / 'bounds.json')
    assert bounds['passed']
    assert [c['name'] for c in bounds['checks']] == ['sup_l2', 'sup_l2_viscous', 'dual_energy', 'coercive_energy']


def test_oracle_ot(tmp_path):
    payload = small_payload()
    payload['run'].update({'oracle_instances': 10, 'oracle_max_particles': 4})
    out = tmp_path / 'out'
    assert main(['oracle-ot', '--config', dump(tmp_path, payload), '--out', str(out)]) == EXIT_OK
    summary = read_json(out / 'oracle.json')
    assert summary['instances'] == 10
    assert summary['max_abs_diff'] <= 1e-12
    assert summary['entropic_monotone'] == summary['entropic_instances'] == 10
    assert len(pd.read_csv(out / 'oracle_entropic.csv')) == 30


def test_run_config_library_entry(tmp_path):
    config = require_config(dump(tmp_path, measure_free_payload()))
    manifest = run_config(config, task='sweep-epsilon', out_dir=str(tmp_path / 'out'))
    assert manifest.status == 'ok'
    table = pd.read_csv(tmp_path / 'out' / 'sweep_epsilon.csv')
    assert len(table) == 4
    assert (table['gap'] > 0).all()


# acceptance runs

@pytest.mark.slow
def test_viscosity_sweep_config_meets_the_rate_window(tmp_path):
    out = tmp_path / 'out'
    assert main(['sweep-lambda', '--config', VISCOSITY_SWEEP_CONFIG, '--out', str(out)]) == EXIT_OK
    table = pd.read_csv(out / 'sweep_lambda.csv')
    assert len(table) == 3
    assert 0.7 <= table['slope'].iloc[0] <= 1.3
    assert table['within_window'].all()


@pytest.mark.slow
def test_regularization_sweep_config_meets_the_rate_window(tmp_path):
    out = tmp_path / 'out'
    assert main(['sweep-epsilon', '--config', REGULARIZATION_SWEEP_CONFIG, '--out', str(out)]) == EXIT_OK
    table = pd.read_csv(out / 'sweep_epsilon.csv')
    assert len(table) == 3
    assert 0.7 <= table['slope'].iloc[0] <= 1.3
    assert read_json(out / 'sweep_epsilon.json')['within_window']


@pytest.mark.slow
def test_demo_sweeps_converge_at_least_at_the_bound_rate(tmp_path):
    for task, name in (('sweep-lambda', 'sweep_lambda.csv'), ('sweep-epsilon', 'sweep_epsilon.csv')):
        out = tmp_path / task
        assert main([task, '--config', DEMO_CONFIG, '--out', str(out)]) == EXIT_OK
        table = pd.read_csv(out / name)
        assert len(table) == 4
        assert (table['gap'] > 0).all()
        assert table['slope'].iloc[0] >= 0.7


@pytest.mark.slow
def test_demo_picard_acceptance(tmp_path):
    payload = demo_payload()
    payload['run']['M'] = 256
    out = tmp_path / 'out'
    assert main(['picard-diagnose', '--config', dump(tmp_path, payload), '--out', str(out)]) == EXIT_OK
    consistency = read_json(out / 'consistency.json')
    assert consistency['bitwise']
    assert consistency['residual'] <= consistency['tol']
    windows = read_json(out / 'picard.json')['windows']
    ratio_bound = np.sqrt(payload['run']['picard']['theta']) + 0.1
    for window in windows:
        assert window['converged']
        assert window['iterations'] <= 15
        assert max(window['ratios']) < ratio_bound
