import logging
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(os.path.dirname(__file__)))))

from ddspme.approximation import (
    SweepTable, apriori_check, bootstrap_half_width, build_table, consecutive_pairs, epsilon_sweep, fit_slope,
    lambda_sweep, linear_factor, linear_oracle_gap, path_gap
)
from ddspme.coefficients import DriftSpec, ModelSpec, NoiseSpec
from ddspme.common import ProvenanceError
from ddspme.fixed_point import solve, PicardConfig
from ddspme.integrator import InitialLaw, NoisePlan, TimeGrid, integrate_interacting
from ddspme.measures import EmpiricalMeasure
from ddspme.spectral import NormSpace, make_fractional_laplacian, norm_squared

logging.basicConfig(level=logging.INFO)

LINEAR = ModelSpec(drift=DriftSpec(kind='identity'), noise=NoiseSpec(K=1))


def linear_problem():
    op = make_fractional_laplacian(4, 0.5)
    init = InitialLaw().sample(op, M=8, seed=7)
    return op, init, TimeGrid.span(0.0, 0.5, 50), NoisePlan(seed=7, K=1)


# helpers

def test_consecutive_pairs_and_slopes():
    assert consecutive_pairs([0.1, 0.4, 0.2, 0.4]) == [(0.4, 0.2), (0.2, 0.1)]
    slope, intercept = fit_slope([1.0, 2.0, 4.0], [3.0, 6.0, 12.0])
    assert slope == pytest.approx(1.0)
    assert intercept == pytest.approx(np.log(3.0))
    assert np.isnan(fit_slope([1.0, 2.0], [0.0, 1.0])[0])
    assert np.isnan(fit_slope([1.0], [1.0])[0])
    assert bootstrap_half_width(np.full(20, 3.0)) == 0.0
    assert bootstrap_half_width(np.arange(20.0), seed=1) > 0.0


def test_build_table():
    table = build_table('lambda', [(0.4, 0.2), (0.2, 0.1)], [1.2, 0.6], [0.0, 0.0])
    assert table.slope == pytest.approx(1.0)
    assert table.root_slope == pytest.approx(0.5)
    assert table.fitted_c == pytest.approx(2.0)
    assert table.within_window
    frame = table.to_frame()
    assert list(frame.columns) == ['lambda', 'lambda_tilde', 'gap', 'slope', 'ci', 'root_slope', 'fitted_c',
                                   'within_window']
    smooth = build_table('epsilon', [(0.4, 0.2), (0.2, 0.1)], [1.2, 0.3], [0.0, 0.0])
    assert smooth.slope == pytest.approx(2.0)
    assert smooth.root_slope == pytest.approx(1.0)
    assert not smooth.within_window


def test_path_gap():
    op, init, grid, plan = linear_problem()
    a = integrate_interacting(op, LINEAR, 0.0, 0.1, init, grid, plan)
    b = integrate_interacting(op, LINEAR, 0.0, 0.2, init, grid, plan)
    gap = path_gap(op, a, b)
    assert gap.shape == (init.M,)
    assert np.all(gap >= 0.0)
    np.testing.assert_array_equal(path_gap(op, a, a), 0.0)
    short = integrate_interacting(op, LINEAR, 0.0, 0.1, init, TimeGrid.span(0.0, 0.5, 10), plan)
    with pytest.raises(ValueError):
        path_gap(op, a, short)


# linear oracle

def test_linear_factor():
    op = make_fractional_laplacian(4, 0.5)
    np.testing.assert_allclose(linear_factor(op, 0.1, 0.0, 0.0), 1.0 - 0.1 * op.lam)
    assert linear_factor(op, 0.1, 0.0, 0.5)[0] == 1.0


def test_lambda_sweep_matches_the_linear_oracle():
    op, init, grid, plan = linear_problem()
    table = lambda_sweep(op, LINEAR, 0.0, [0.4, 0.2, 0.1, 0.05], init, grid, plan)
    assert table.pairs == [(0.4, 0.2), (0.2, 0.1), (0.1, 0.05)]
    for (p, q), gap in zip(table.pairs, table.gaps):
        assert gap == pytest.approx(linear_oracle_gap(op, init, grid, (0.0, p), (0.0, q)), rel=1e-6)
    assert table.slope > 0.7


def test_epsilon_sweep_matches_the_linear_oracle():
    op, init, grid, plan = linear_problem()
    table = epsilon_sweep(op, LINEAR, [0.3, 0.2, 0.1], init, grid, plan, config=PicardConfig(c_hat=1.0))
    for (p, q), gap in zip(table.pairs, table.gaps):
        assert gap == pytest.approx(linear_oracle_gap(op, init, grid, (p, 0.0), (q, 0.0)), rel=1e-6)


def test_oracle_gap_grows_with_the_parameter_distance():
    op, init, grid, _ = linear_problem()
    gaps = [linear_oracle_gap(op, init, grid, (0.0, 0.4), (0.0, other)) for other in (0.3, 0.2, 0.1)]
    assert gaps[0] < gaps[1] < gaps[2]
    assert linear_oracle_gap(op, init, grid, (0.0, 0.4), (0.0, 0.4)) == 0.0


def test_linear_oracle_tracks_the_continuum_flow_to_first_order():
    op, init, _, _ = linear_problem()
    errors = []
    for n_steps in (50, 100):
        grid = TimeGrid.span(0.0, 0.5, n_steps)
        t = grid.times[:, None]
        decay = np.exp(-op.lam * 1.4 * t) - np.exp(-op.lam * 1.2 * t)
        continuum = np.max(norm_squared(op, NormSpace.F12DUAL, decay[:, None, :] * init.particles[None]), axis=0)
        errors.append(abs(linear_oracle_gap(op, init, grid, (0.0, 0.4), (0.0, 0.2)) - float(continuum.mean())))
    assert errors[1] > 0.0
    assert 1.6 <= errors[0] / errors[1] <= 2.4


# rate windows

def test_viscosity_chain_rate_on_the_degenerate_model():
    op = make_fractional_laplacian(4096, 0.5)
    model = ModelSpec(drift=DriftSpec(kind='zero'), noise=NoiseSpec(K=1))
    init = InitialLaw().sample(op, M=16, seed=5)
    table = lambda_sweep(op, model, 0.0, [0.4, 0.2, 0.1, 0.05], init, TimeGrid.span(0.0, 0.02, 100),
                         NoisePlan(seed=5, K=1))
    assert 0.7 <= table.slope <= 1.3
    assert table.within_window
    assert table.root_slope < table.slope


@pytest.mark.slow
def test_regularization_chain_rate_on_a_long_torus():
    op = make_fractional_laplacian(1201, 0.5, length=400.0 * np.pi)
    init = InitialLaw(decay=0.0).sample(op, M=64, seed=5)
    grid = TimeGrid.span(0.0, 12.0, 600)
    table = epsilon_sweep(op, LINEAR, [0.4, 0.2, 0.1, 0.05], init, grid, NoisePlan(seed=5, K=1))
    for (p, q), gap in zip(table.pairs, table.gaps):
        assert gap == pytest.approx(linear_oracle_gap(op, init, grid, (p, 0.0), (q, 0.0)), rel=1e-6)
    assert 0.7 <= table.slope <= 1.3
    assert table.within_window


def test_sweep_table_csv(tmp_path):
    op, init, grid, plan = linear_problem()
    table = lambda_sweep(op, LINEAR, 0.0, [0.4, 0.2, 0.1], init, grid, plan, threads=2)
    path = table.to_csv(str(tmp_path / 'lambda_sweep.csv'))
    again = SweepTable.from_csv(path)
    assert again.parameter == 'lambda'
    assert again.pairs == table.pairs
    assert again.gaps == table.gaps
    assert again.ci == table.ci
    assert again.slope == table.slope
    assert again.fitted_c == table.fitted_c
    assert again.within_window == table.within_window


def test_sweep_rejects_bad_values():
    op, init, grid, plan = linear_problem()
    with pytest.raises(ValueError):
        lambda_sweep(op, LINEAR, 0.0, [0.4, 0.2, 0.4], init, grid, plan)
    with pytest.raises(ValueError):
        lambda_sweep(op, LINEAR, 0.0, [1.0, 0.2, 0.1], init, grid, plan)
    with pytest.raises(ValueError):
        epsilon_sweep(op, LINEAR, [0.0, 0.2, 0.1], init, grid, plan)


# a priori bounds

def test_zero_model_meets_every_bound():
    op, init, grid, plan = linear_problem()
    model = ModelSpec(drift=DriftSpec(kind='zero'), noise=NoiseSpec(K=1))
    traj = integrate_interacting(op, model, 0.0, 0.0, init, grid, plan)
    report = apriori_check(traj, None, op)
    assert report.passed
    assert [c.name for c in report.checks] == ['sup_l2', 'sup_l2_viscous', 'dual_energy']
    assert report.sup_at_start_fraction == 1.0
    with pytest.raises(KeyError):
        report.check('coercive_energy')


def test_viscous_linear_decay_meets_every_bound():
    op, init, grid, plan = linear_problem()
    traj = integrate_interacting(op, LINEAR, 0.0, 0.2, init, grid, plan)
    report = apriori_check(traj, None, op, lam=0.2)
    assert report.passed
    assert report.check('coercive_energy').passed
    assert report.sup_at_start_fraction == 1.0
    assert len(report.to_frame()) == 4


def test_bound_check_rejects_understated_constants():
    op = make_fractional_laplacian(3, 0.5)
    model = ModelSpec(drift=DriftSpec(kind='zero'), noise=NoiseSpec(K=1, sigma0=1.0))
    init = EmpiricalMeasure(np.zeros((256, 3)))
    traj = integrate_interacting(op, model, 0.0, 0.0, init, TimeGrid.span(0.0, 1.0, 100), NoisePlan(seed=9, K=1))
    constants = model.resolved_constants(op)
    declared = apriori_check(traj, model, op, constants=constants).check('sup_l2')
    assert declared.envelope == pytest.approx(4.0)
    assert declared.passed
    assert 1.0 < declared.measured < 2.5
    assert not apriori_check(traj, model, op, constants=constants.scaled(0.1)).check('sup_l2').passed
    assert apriori_check(traj, model, op, constants=constants.scaled(2.0)).check('sup_l2').passed


def test_coupled_run_meets_the_derived_bounds():
    op = make_fractional_laplacian(8, 0.5)
    model = ModelSpec(drift=DriftSpec(kind='tanh', coupling='second_moment', kappa=0.5),
                      noise=NoiseSpec(K=4, sigma0=0.5, sigma1=0.3, coupling_alpha=0.3))
    init = InitialLaw().sample(op, M=32, seed=3)
    grid = TimeGrid.span(0.0, 0.5, 50)
    traj, _, _ = solve(op, model, init, grid, PicardConfig(), NoisePlan(seed=3, K=4), lam=0.1)
    report = apriori_check(traj, None, op, lam=0.1)
    for name in ('sup_l2', 'sup_l2_viscous', 'dual_energy'):
        check = report.check(name)
        assert check.passed
        assert check.ci is not None
    assert report.passed


def test_bound_check_lam_provenance():
    op, init, grid, plan = linear_problem()
    traj = integrate_interacting(op, LINEAR, 0.0, 0.0, init, grid, plan)
    with pytest.raises(ProvenanceError):
        apriori_check(traj, None, op, lam=0.5)
