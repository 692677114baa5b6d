import logging
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import computed_field

from ddspme.approximation.sweeps import bootstrap_half_width
from ddspme.coefficients import DELTA_FLOOR, ModelConstants, ModelSpec, psi_coefficients
from ddspme.common import ProvenanceError, ReportModelBase
from ddspme.integrator import TrajectoryEnsemble
from ddspme.spectral import NormSpace, SpectralOperator, norm_squared

LOGGER = logging.getLogger(__name__)


class BoundCheck(ReportModelBase):
    name: str
    measured: float
    envelope: float
    ci: Optional[float] = None

    @computed_field
    @property
    def ratio(self) -> float:
        return self.measured / self.envelope if self.envelope > 0 else float('inf')

    @computed_field
    @property
    def passed(self) -> bool:
        return self.measured <= self.envelope


class BoundReport(ReportModelBase):
    """
    Ensemble statistics of one run against Gronwall envelopes assembled from declared constants.

    sup_l2 and sup_l2_viscous: E sup |X|_2^2, alone and with 4 lam E int ||X||_F12^2, against
    (2 E|X0|_2^2 + 2 K2 T) e^{c T}.
    dual_energy: E ||X(T)||_H^2 + (alpha1 / 2) E int |Psi|_2^2 against (E ||X0||_H^2 + f_bound T) e^{C T},
    C = alpha2 + alpha3 + 2 / alpha1 + 4 K1 + 2 lam.
    coercive_energy: sup_t E ||X||_H^2 + delta E int |X|_2^alpha_coer against (E ||X0||_H^2 + f_bound T) e^{2 c T};
    only checked when delta is above the no-viscosity floor.
    """
    eps: float
    lam: float
    horizon: float
    constants: ModelConstants
    checks: List[BoundCheck]
    sup_at_start_fraction: float

    @computed_field
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> BoundCheck:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{'name': c.name, 'measured': c.measured, 'envelope': c.envelope, 'ratio': c.ratio,
                              'ci': c.ci, 'passed': c.passed} for c in self.checks])


def _time_integral(values: np.ndarray, dt: float) -> np.ndarray:
    """Left Riemann sum over the grid steps, per particle."""
    return dt * np.sum(values[:-1], axis=0)


def apriori_check(traj: TrajectoryEnsemble, model: Optional[ModelSpec], op: SpectralOperator,
                  lam: Optional[float] = None, constants: Optional[ModelConstants] = None,
                  seed: int = 0) -> BoundReport:
    """
    :param traj: run carrying its eps and lam
    :param model: model of the run, traj.model when None
    :param op:
    :param lam: expected viscosity; must agree with the run's record
    :param constants: overrides the model's declared or derived constants
    :param seed: bootstrap seed
    :return: BoundReport
    """
    if lam is not None and lam != traj.lam:
        raise ProvenanceError(F"trajectory was run at lam={traj.lam}, check requested lam={lam}")
    model = traj.model if model is None else model
    constants = constants or model.resolved_constants(op, traj.eps, traj.lam)
    lam = traj.lam
    dt = traj.grid.dt
    T = traj.grid.t_end - traj.grid.t_start
    paths = traj.paths

    l2 = norm_squared(op, NormSpace.L2, paths)
    f12 = norm_squared(op, NormSpace.F12, paths)
    dual = norm_squared(op, NormSpace.F12DUAL, paths)
    psi_sq = np.stack([norm_squared(op, NormSpace.L2, psi_coefficients(model.drift, op, paths[j],
                                                                       traj.driving_measure(j)))
                       for j in range(traj.grid.n_steps + 1)])

    sup_l2 = l2.max(axis=0)
    viscous = sup_l2 + 4.0 * lam * _time_integral(f12, dt)
    dual_energy = dual[-1] + 0.5 * constants.alpha1 * _time_integral(psi_sq, dt)
    coercive = float(dual.mean(axis=1).max()) + constants.delta * float(
        _time_integral(l2 ** (constants.alpha_coer / 2.0), dt).mean())

    start_l2 = float(l2[0].mean())
    start_dual = float(dual[0].mean())
    moment_envelope = (2.0 * start_l2 + 2.0 * constants.K2 * T) * np.exp(constants.c * T)
    rate = constants.alpha2 + constants.alpha3 + 2.0 / constants.alpha1 + 4.0 * constants.K1 + 2.0 * lam
    dual_envelope = (start_dual + constants.f_bound * T) * np.exp(rate * T)
    coercive_envelope = (start_dual + constants.f_bound * T) * np.exp(2.0 * constants.c * T)

    checks = [
        BoundCheck(name='sup_l2', measured=float(sup_l2.mean()), envelope=float(moment_envelope),
                   ci=bootstrap_half_width(sup_l2, seed=seed)),
        BoundCheck(name='sup_l2_viscous', measured=float(viscous.mean()), envelope=float(moment_envelope),
                   ci=bootstrap_half_width(viscous, seed=seed)),
        BoundCheck(name='dual_energy', measured=float(dual_energy.mean()), envelope=float(dual_envelope),
                   ci=bootstrap_half_width(dual_energy, seed=seed)),
    ]
    if constants.delta > DELTA_FLOOR:
        checks.append(BoundCheck(name='coercive_energy', measured=coercive, envelope=float(coercive_envelope)))
    report = BoundReport(eps=traj.eps, lam=lam, horizon=T, constants=constants, checks=checks,
                         sup_at_start_fraction=float(np.mean(np.argmax(l2, axis=0) == 0)))
    for check in checks:
        LOGGER.info('bound %s: measured %.4g, envelope %.4g, ratio %.3f', check.name, check.measured,
                    check.envelope, check.ratio)
    return report
