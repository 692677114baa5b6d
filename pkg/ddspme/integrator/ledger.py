import logging
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import computed_field

from ddspme.coefficients import ModelSpec, amplitudes, noise_modes, psi_coefficients
from ddspme.common import ProvenanceError, ReportModelBase
from ddspme.integrator.stepping import TrajectoryEnsemble
from ddspme.spectral import NormSpace, SpectralOperator, inner, norm_squared

LOGGER = logging.getLogger(__name__)

# sign check slack for the P-operator form
P_FORM_TOLERANCE = 1e-12


class EnergyReport(ReportModelBase):
    """
    Discrete Ito balance of ||X||^2 in F12dual, ensemble means per step:

        residual_j = dE_j - (2<A(X_j, mu_j), X_j>_H dt + 2<X_j, B dW_j>_H + sum_k ||B e_k||_H^2 dt)

    with A = (L - eps)(Psi + lam X). The other series are running sums of the bracketed terms.
    """
    times: List[float]
    residuals: List[float]
    cumulative_residual: List[float]
    drift_work: List[float]
    psi_work: List[float]
    martingale: List[float]
    quadratic_variation: List[float]
    max_residual: float
    max_step_residual: float
    delta: float
    p_form_max: float

    @computed_field
    @property
    def p_form_sign_ok(self) -> bool:
        return self.p_form_max <= P_FORM_TOLERANCE

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'time': self.times,
            'residual': self.residuals,
            'cumulative_residual': self.cumulative_residual,
            'drift_work': self.drift_work,
            'psi_work': self.psi_work,
            'martingale': self.martingale,
            'quadratic_variation': self.quadratic_variation,
        })


def p_operator_form(op: SpectralOperator, psi_diff: np.ndarray, state_diff: np.ndarray, eps: float,
                    delta: float) -> np.ndarray:
    """
    2 <psi_diff, P state_diff - state_diff>_2 with P = (delta - eps)(delta - L)^{-1}.

    Nonpositive whenever psi_diff is a monotone image of state_diff; one value per coefficient vector.
    """
    if delta <= eps:
        raise ValueError(F"delta {delta} must exceed eps {eps}")
    psi_diff = np.asarray(psi_diff, dtype=float)
    state_diff = np.asarray(state_diff, dtype=float)
    P = (delta - eps) / (delta + op.lam)
    return 2.0 * inner(op, NormSpace.L2, psi_diff, P * state_diff - state_diff)


def operator_pairing(op: SpectralOperator, X: np.ndarray, psi: np.ndarray, eps: float,
                     lam: float) -> np.ndarray:
    """<A(X, mu), X>_H from precomputed psi = Psi(X, mu)."""
    a = op.lam + eps
    return inner(op, NormSpace.F12DUAL, -a * (psi + lam * X), X)


def ito_ledger(traj: TrajectoryEnsemble, model: Optional[ModelSpec], op: SpectralOperator,
               delta: float = 2.0) -> EnergyReport:
    """
    Rebuild the discrete Ito identity of a run step by step from its noise plan.

    :param traj: run of this package, carrying its NoisePlan
    :param model: model the run used, traj.model when None
    :param op:
    :param delta: shift of the P operator
    :return: EnergyReport
    """
    if traj.noise is None:
        raise ProvenanceError('trajectory carries no noise plan; increments cannot be recovered')
    model = traj.model if model is None else model
    grid = traj.grid
    dt = grid.dt
    dW = traj.noise.increments(grid, traj.M, traj.particle_offset)
    K = noise_modes(model.noise, op)
    dual = op.weights(NormSpace.F12DUAL)
    energy = norm_squared(op, NormSpace.F12DUAL, traj.paths)

    n = grid.n_steps
    residuals = np.empty(n)
    drift = np.empty(n)
    psi_work = np.empty(n)
    mart = np.empty(n)
    qv = np.empty(n)
    p_max = -np.inf
    for j in range(n):
        X = traj.paths[j]
        mu = traj.driving_measure(j)
        psi = psi_coefficients(model.drift, op, X, mu)
        b = amplitudes(model.noise, op, X, mu)
        drift_j = 2.0 * operator_pairing(op, X, psi, traj.eps, traj.lam) * dt
        mart_j = 2.0 * np.sum(dual[:K] * X[:, :K] * b * dW[j], axis=-1)
        qv_j = np.sum(dual[:K] * b * b, axis=-1) * dt
        gain = energy[j + 1] - energy[j]
        residuals[j] = float(np.mean(gain - (drift_j + mart_j + qv_j)))
        drift[j] = float(np.mean(drift_j))
        psi_work[j] = float(np.mean(2.0 * inner(op, NormSpace.L2, psi, X) * dt))
        mart[j] = float(np.mean(mart_j))
        qv[j] = float(np.mean(qv_j))
        psi_zero = psi_coefficients(model.drift, op, np.zeros_like(X), mu)
        p_max = max(p_max, float(np.max(p_operator_form(op, psi - psi_zero, X, traj.eps, delta))))

    cumulative = np.cumsum(residuals)
    report = EnergyReport(
        times=grid.times[1:].tolist(),
        residuals=residuals.tolist(),
        cumulative_residual=cumulative.tolist(),
        drift_work=np.cumsum(drift).tolist(),
        psi_work=np.cumsum(psi_work).tolist(),
        martingale=np.cumsum(mart).tolist(),
        quadratic_variation=np.cumsum(qv).tolist(),
        max_residual=float(np.max(np.abs(cumulative))),
        max_step_residual=float(np.max(np.abs(residuals))),
        delta=delta,
        p_form_max=p_max,
    )
    LOGGER.info('Ito ledger over %s steps: max cumulative residual %.3e, P-form max %.3e',
                n, report.max_residual, p_max)
    return report
