import logging
import os
import sys

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(os.path.dirname(__file__)))))

from ddspme.coefficients import DriftSpec, ModelConstants, ModelSpec, NoiseSpec
from ddspme.common import ContractionError, PicardError
from ddspme.fixed_point import (
    PicardConfig, chaos_study, estimate_contraction, init_law_stability, monte_carlo_envelope, picard_window,
    resolve_config, self_consistency, solve
)
from ddspme.integrator import InitialLaw, NoisePlan, TimeGrid, integrate_frozen
from ddspme.measures import EmpiricalMeasure, MeasureFlow, node_distances, w2_value
from ddspme.spectral import NormSpace, make_fractional_laplacian, norm_squared

logging.basicConfig(level=logging.INFO)


def coupled_model():
    return ModelSpec(drift=DriftSpec(kind='tanh', coupling='second_moment', kappa=0.5),
                     noise=NoiseSpec(K=4, sigma0=0.5, sigma1=0.3, coupling_alpha=0.3))


def free_model():
    return ModelSpec(drift=DriftSpec(kind='tanh'), noise=NoiseSpec(K=4, sigma0=0.5, sigma1=0.3))


def small_problem(M=16, n_steps=50, T=0.5):
    op = make_fractional_laplacian(8, 0.5)
    init = InitialLaw().sample(op, M=M, seed=11)
    return op, init, TimeGrid.span(0.0, T, n_steps), NoisePlan(seed=11, K=4)


# PicardConfig

def test_window_policy():
    grid = TimeGrid.span(0.0, 1.0, 100)
    config = PicardConfig(c_hat=2.0, theta=0.5)
    assert config.lambda_disc == 1.0
    assert config.window_length == 0.25
    assert config.steps_per_window(grid) == 25
    assert PicardConfig(c_hat=100.0, theta=0.5).steps_per_window(grid) == 1
    unbounded = PicardConfig()
    assert unbounded.lambda_disc == 0.0
    assert unbounded.steps_per_window(grid) == 100
    with pytest.raises(ValueError):
        PicardConfig(theta=1.0)


def test_resolve_config_order():
    op, init, grid, plan = small_problem()
    declared = PicardConfig(c_hat=3.0)
    assert resolve_config(op, coupled_model(), init, grid, declared, plan) is declared
    model = coupled_model()
    assert resolve_config(op, model, init, grid, PicardConfig(), plan).c_hat == pytest.approx(
        model.resolved_constants(op).c_contraction)
    constants = ModelConstants(alpha0=1.0, alpha1=1.0, c=1.0, delta=1.0, c_contraction=0.7)
    explicit = model.model_copy(update={'constants': constants})
    assert resolve_config(op, explicit, init, grid, PicardConfig(), plan).c_hat == 0.7
    probed = explicit.model_copy(update={'constants': constants.model_copy(update={'c_contraction': None})})
    assert resolve_config(op, probed, init, grid, PicardConfig(), plan).c_hat > 0.0


# picard_window / solve

def test_measure_free_window_converges_in_two_iterations():
    op, init, grid, plan = small_problem()
    flow, traj, diag = picard_window(op, free_model(), init, grid, PicardConfig(c_hat=1.0), plan)
    assert diag.converged
    assert diag.iterations == 2
    assert diag.distances[0] > 0.0
    assert diag.distances[1] == 0.0
    assert diag.ratios == [0.0]
    np.testing.assert_array_equal(flow.particles, traj.paths)
    assert len(diag.to_frame()) == 2


def test_measure_free_solve_matches_a_frozen_run():
    op, init, grid, plan = small_problem()
    model = free_model()
    traj, flow, diags = solve(op, model, init, grid, PicardConfig(c_hat=4.0), plan)
    assert len(diags) == 5
    assert flow.n_nodes == grid.n_steps + 1
    direct = integrate_frozen(op, model, 0.0, 0.0, MeasureFlow.constant(init, grid.times), init, grid, plan)
    np.testing.assert_array_equal(traj.paths, direct.paths)


def test_coupled_solve_is_self_consistent():
    op, init, grid, plan = small_problem()
    traj, flow, diags = solve(op, coupled_model(), init, grid, PicardConfig(), plan)
    assert all(d.converged for d in diags)
    assert diags[0].c_hat is not None
    assert sum(d.t_end - d.t_start for d in diags) == pytest.approx(grid.t_end)
    ratio_bound = np.sqrt(PicardConfig().theta) + 0.1
    for d in diags:
        assert d.distances[-1] <= d.tol
        assert d.iterations <= 15
        assert max(d.ratios) < ratio_bound
    bitwise, residual = self_consistency(op, traj, flow, diags[0].lambda_disc)
    assert bitwise
    assert residual <= diags[0].tol


def test_solve_gives_up_after_max_iter():
    op, init, grid, plan = small_problem()
    with pytest.raises(PicardError) as info:
        solve(op, coupled_model(), init, grid, PicardConfig(c_hat=1.0, max_iter=1), plan)
    assert info.value.window == 0
    assert info.value.iterations == 1
    assert len(info.value.diagnostics()['distances']) == 1


# contraction estimate

def test_contraction_estimate():
    op, init, grid, plan = small_problem()
    mu0 = MeasureFlow.constant(init, grid.times)
    shifted = np.array(init.particles, copy=True)
    shifted[:, 0] += 1.0
    nu0 = MeasureFlow.constant(EmpiricalMeasure(shifted), grid.times)
    free = estimate_contraction(op, free_model(), init, grid, mu0, nu0, plan)
    assert free.distance_in == pytest.approx(1.0)
    assert free.ratio == 0.0
    coupled = estimate_contraction(op, coupled_model(), init, grid, mu0, nu0, plan)
    assert coupled.ratio > 0.0
    assert coupled.implied_c == pytest.approx(coupled.ratio ** 2 / 0.5)
    with pytest.raises(ContractionError):
        estimate_contraction(op, coupled_model(), init, grid, mu0, mu0, plan)


def test_synchronous_coupling_estimate():
    op, init, grid, plan = small_problem()
    model = coupled_model()
    c_hat = model.resolved_constants(op).c_contraction
    shifted = np.array(init.particles, copy=True)
    shifted[:, 0] += 1.0
    mu = MeasureFlow.constant(init, grid.times)
    nu = MeasureFlow.constant(EmpiricalMeasure(shifted), grid.times)
    run_mu = integrate_frozen(op, model, 0.0, 0.0, mu, init, grid, plan)
    run_nu = integrate_frozen(op, model, 0.0, 0.0, nu, init, grid, plan)
    times = grid.times
    gap = norm_squared(op, NormSpace.F12DUAL, run_mu.paths - run_nu.paths).mean(axis=1)
    _, law_distances = node_distances(op, mu, nu)
    forcing = c_hat * cumulative_trapezoid(np.exp(-c_hat * times) * law_distances ** 2, times, initial=0.0)
    assert gap[0] == 0.0
    assert gap[-1] > 0.0
    assert np.all(np.exp(-c_hat * times) * gap <= forcing + grid.dt)


def test_implied_contraction_constant_is_window_independent():
    op = make_fractional_laplacian(8, 0.5)
    model = ModelSpec(drift=DriftSpec(kind='zero'),
                      noise=NoiseSpec(K=8, sigma0=0.5, sigma1=0.5, damped=False, coupling_alpha=0.5))
    init = InitialLaw().sample(op, M=128, seed=4)
    grid = TimeGrid.span(0.0, 0.2, 100)
    mu0 = MeasureFlow.constant(init, grid.times)
    nu0 = MeasureFlow.constant(EmpiricalMeasure(init.particles + 0.2), grid.times)
    estimates = [estimate_contraction(op, model, init, grid.window(0, steps), mu0, nu0, NoisePlan(seed=4, K=8))
                 for steps in (100, 50, 25)]
    assert [e.window_length for e in estimates] == pytest.approx([0.2, 0.1, 0.05])
    for estimate in estimates[1:]:
        assert estimate.implied_c == pytest.approx(estimates[0].implied_c, rel=0.3)


# studies

def test_monte_carlo_envelope():
    op = make_fractional_laplacian(8, 0.5)
    law = InitialLaw().sample(op, M=16, seed=1)
    value = monte_carlo_envelope(law, op, n_resamples=50, seed=3)
    assert value > 0.0
    assert monte_carlo_envelope(law, op, n_resamples=50, seed=3) == value
    with pytest.raises(ValueError):
        monte_carlo_envelope(EmpiricalMeasure(np.zeros((1, 8))), op)


def test_strong_uniqueness():
    op, init, grid, plan = small_problem(M=32)
    model = coupled_model()
    first, _, _ = solve(op, model, init, grid, PicardConfig(), plan)
    again, _, _ = solve(op, model, init, grid, PicardConfig(), plan)
    np.testing.assert_array_equal(first.paths, again.paths)
    other_init = InitialLaw().sample(op, M=32, seed=12)
    other, _, _ = solve(op, model, other_init, grid, PicardConfig(), NoisePlan(seed=12, K=4))
    pooled = EmpiricalMeasure(np.concatenate([first.terminal().particles, other.terminal().particles]))
    envelope = monte_carlo_envelope(pooled, op, n_resamples=200, seed=2, quantile=0.99)
    assert 0.0 < w2_value(op, first.terminal(), other.terminal()) <= envelope


@pytest.mark.slow
def test_moments_are_stable_in_the_particle_count():
    sup_moments = []
    for M in (128, 256):
        op, init, grid, plan = small_problem(M=M)
        traj, _, _ = solve(op, coupled_model(), init, grid, PicardConfig(), plan)
        sup_moments.append(float(np.max(np.sum(traj.paths ** 2, axis=2), axis=0).mean()))
    assert abs(sup_moments[1] - sup_moments[0]) <= 0.2 * sup_moments[0]


def test_init_law_stability_of_a_contraction():
    op = make_fractional_laplacian(8, 0.5)
    model = ModelSpec(drift=DriftSpec(kind='identity'), noise=NoiseSpec(K=1))
    init_a = InitialLaw().sample(op, M=8, seed=1)
    init_b = InitialLaw(mean=0.5).sample(op, M=8, seed=2)
    report = init_law_stability(op, model, init_a, init_b, TimeGrid.span(0.0, 0.5, 50), PicardConfig(),
                                NoisePlan(seed=1, K=1))
    assert report.initial_w2 > 0.0
    assert report.terminal_w2 <= report.initial_w2
    assert report.fitted_rate <= 0.0
    assert report.horizon == 0.5


def test_chaos_study_table():
    op = make_fractional_laplacian(4, 0.5)
    model = ModelSpec(drift=DriftSpec(kind='tanh', coupling='second_moment', kappa=0.5),
                      noise=NoiseSpec(K=2, sigma0=0.3, sigma1=0.2, coupling_alpha=0.3))
    report = chaos_study(op, model, InitialLaw(), TimeGrid.span(0.0, 0.2, 20), PicardConfig(),
                         particle_counts=(4, 8), n_pairs=2, seed=5)
    assert report.particle_counts == [4, 8]
    assert len(report.medians) == 2
    assert 0 <= report.decreasing_pairs <= 2
    frame = report.to_frame()
    assert len(frame) == 4
    assert set(frame.columns) == {'pair', 'M', 'w2'}


@pytest.mark.slow
def test_chaos_medians_decrease():
    op = make_fractional_laplacian(8, 0.5)
    report = chaos_study(op, coupled_model(), InitialLaw(), TimeGrid.span(0.0, 0.5, 50), PicardConfig())
    assert report.particle_counts == [64, 128, 256]
    assert report.pairs == 10
    assert report.decreasing_pairs >= 8
    assert report.medians[0] > report.medians[1] > report.medians[2]
