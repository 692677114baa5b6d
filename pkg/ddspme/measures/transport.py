import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ddspme.common import GridMismatchError, TransportError, run_jobs
from ddspme.config import (
    EXACT_OT_MAX_PARTICLES, SINKHORN_MAX_ITER, SINKHORN_REG_FACTOR, SINKHORN_STOP_THRESHOLD
)
from ddspme.measures.empirical import TIME_TOLERANCE, EmpiricalMeasure, MeasureFlow
from ddspme.spectral import NormSpace, SpectralOperator

LOGGER = logging.getLogger(__name__)

METHODS = ('auto', 'exact', 'entropic')


@dataclass(frozen=True)
class TransportPlan:
    """
    exact: assignment[i] is the target atom of source atom i.
    entropic: coupling is M times the Sinkhorn plan, doubly stochastic.
    """
    method: str
    cost: float
    assignment: Optional[np.ndarray] = None
    coupling: Optional[np.ndarray] = None
    iterations: int = 0
    reg: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def row_sums(self) -> np.ndarray:
        if self.coupling is None:
            return np.ones(len(self.assignment))
        return self.coupling.sum(axis=1)

    def column_sums(self) -> np.ndarray:
        if self.coupling is None:
            return np.bincount(self.assignment, minlength=len(self.assignment)).astype(float)
        return self.coupling.sum(axis=0)


def cost_matrix(op: SpectralOperator, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> np.ndarray:
    """C_ij = ||x_i - y_j||^2 in F12dual."""
    mu.check_dimension(op)
    nu.check_dimension(op)
    root = np.sqrt(op.weights(NormSpace.F12DUAL))
    return cdist(mu.particles * root, nu.particles * root, metric='sqeuclidean')


def synchronous_bound(op: SpectralOperator, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Transport cost of the index-matched coupling; never below w2."""
    if mu.M != nu.M:
        raise TransportError(F"synchronous coupling needs equal particle counts, got {mu.M} and {nu.M}")
    diff = mu.particles - nu.particles
    return float(np.sqrt(np.mean(np.sum(op.weights(NormSpace.F12DUAL) * diff * diff, axis=-1))))


def _exact(cost: np.ndarray) -> Tuple[float, TransportPlan]:
    if cost.shape[0] != cost.shape[1]:
        raise TransportError(F"exact transport needs equal particle counts, got {cost.shape[0]} and {cost.shape[1]}")
    rows, cols = linear_sum_assignment(cost)
    value = float(cost[rows, cols].sum() / cost.shape[0])
    return np.sqrt(max(value, 0.0)), TransportPlan(method='exact', cost=value, assignment=cols)


def _sinkhorn(cost: np.ndarray, reg: float, max_iter: int, stop_thr: float) -> Tuple[np.ndarray, int]:
    a = np.full(cost.shape[0], 1.0 / cost.shape[0])
    b = np.full(cost.shape[1], 1.0 / cost.shape[1])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        plan, log = ot.sinkhorn(a, b, cost, reg, method='sinkhorn_log', numItermax=max_iter,
                                stopThr=stop_thr, log=True)
    not_converged = [w for w in caught if 'converge' in str(w.message).lower()]
    errors = log.get('err') or []
    if not_converged or not np.all(np.isfinite(plan)) or (errors and errors[-1] > stop_thr):
        raise TransportError(F"Sinkhorn did not converge within {max_iter} iterations (reg={reg:.3e})")
    return plan, int(log.get('niter', max_iter))


def _entropic(cost: np.ndarray, reg: Optional[float], reg_factor: float, max_iter: int, stop_thr: float,
              debias: bool, cost_mu: Optional[np.ndarray], cost_nu: Optional[np.ndarray]) -> Tuple[float, TransportPlan]:
    if reg is None:
        scale = float(np.median(cost))
        reg = reg_factor * (scale if scale > 0 else 1.0)
    plan, iterations = _sinkhorn(cost, reg, max_iter, stop_thr)
    value = float(np.sum(plan * cost))
    extra = {'primal': value}
    if debias:
        plan_mu, it_mu = _sinkhorn(cost_mu, reg, max_iter, stop_thr)
        plan_nu, it_nu = _sinkhorn(cost_nu, reg, max_iter, stop_thr)
        self_mu = float(np.sum(plan_mu * cost_mu))
        self_nu = float(np.sum(plan_nu * cost_nu))
        value = value - 0.5 * self_mu - 0.5 * self_nu
        iterations = max(iterations, it_mu, it_nu)
        extra.update(self_mu=self_mu, self_nu=self_nu)
    coupling = plan * cost.shape[0]
    return np.sqrt(max(value, 0.0)), TransportPlan(method='entropic', cost=value, coupling=coupling,
                                                   iterations=iterations, reg=reg, extra=extra)


def w2(op: SpectralOperator, mu: EmpiricalMeasure, nu: EmpiricalMeasure, method: str = 'auto',
       reg: Optional[float] = None, reg_factor: float = SINKHORN_REG_FACTOR, max_iter: int = SINKHORN_MAX_ITER,
       stop_thr: float = SINKHORN_STOP_THRESHOLD, debias: bool = True) -> Tuple[float, TransportPlan]:
    """
    Wasserstein-2 distance in the F12dual norm between uniform empirical measures.

    :param op:
    :param mu:
    :param nu:
    :param method: exact (assignment), entropic (log-domain Sinkhorn) or auto (exact up to 64 particles)
    :param reg: absolute entropic regularization, default reg_factor times the median cost
    :param reg_factor:
    :param max_iter: maximum Sinkhorn iterations
    :param stop_thr: Sinkhorn marginal tolerance
    :param debias: subtract the self-transport terms of mu and nu
    :return: (distance, TransportPlan)
    """
    if method not in METHODS:
        raise ValueError(F"unknown transport method {method!r}")
    if method == 'auto':
        method = 'exact' if max(mu.M, nu.M) <= EXACT_OT_MAX_PARTICLES and mu.M == nu.M else 'entropic'
    cost = cost_matrix(op, mu, nu)
    if method == 'exact':
        return _exact(cost)
    cost_mu = cost_matrix(op, mu, mu) if debias else None
    cost_nu = cost_matrix(op, nu, nu) if debias else None
    return _entropic(cost, reg, reg_factor, max_iter, stop_thr, debias, cost_mu, cost_nu)


def w2_value(op: SpectralOperator, mu: EmpiricalMeasure, nu: EmpiricalMeasure, method: str = 'exact', **kwargs) -> float:
    if method == 'exact' and np.array_equal(mu.particles, nu.particles):
        return 0.0
    return w2(op, mu, nu, method=method, **kwargs)[0]


def node_distances(op: SpectralOperator, A: MeasureFlow, B: MeasureFlow, window: Optional[Tuple[float, float]] = None,
                   method: str = 'exact', threads: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-node w2 between two flows on a common grid.

    :return: (times, distances) restricted to the window
    """
    if window is not None:
        A = A.restrict(*window)
        B = B.restrict(*window)
    if A.n_nodes != B.n_nodes or np.any(np.abs(A.times - B.times) > TIME_TOLERANCE * np.maximum(1.0, np.abs(A.times))):
        raise GridMismatchError(F"flow grids differ: {A.n_nodes} vs {B.n_nodes} nodes")

    def _one(i):
        return w2_value(op, A.measure(i), B.measure(i), method=method)

    distances = np.asarray(run_jobs(_one, range(A.n_nodes), threads=threads), dtype=float)
    return np.asarray(A.times), distances


def flow_distance(op: SpectralOperator, A: MeasureFlow, B: MeasureFlow, lambda_disc: float,
                  window: Optional[Tuple[float, float]] = None, method: str = 'exact',
                  threads: Optional[int] = None) -> float:
    """
    d_t(A, B) = max over grid nodes r in [s, t] of e^{-lambda r} w2(A(r), B(r)).

    :param op:
    :param A:
    :param B:
    :param lambda_disc: discount rate, nonnegative
    :param window: (s, t), whole grid when None
    :param method: transport method per node
    :param threads:
    :return:
    """
    if lambda_disc < 0:
        raise ValueError(F"discount must be nonnegative, got {lambda_disc}")
    times, distances = node_distances(op, A, B, window=window, method=method, threads=threads)
    return float(np.max(np.exp(-lambda_disc * times) * distances))


def brute_force_w2(op: SpectralOperator, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """w2 by enumerating every permutation; reference for small equal-size measures only."""
    if mu.M != nu.M:
        raise TransportError(F"brute force needs equal particle counts, got {mu.M} and {nu.M}")
    if mu.M > 8:
        raise ValueError(F"{mu.M} particles is too many to enumerate")
    cost = cost_matrix(op, mu, nu)
    rows = np.arange(mu.M)
    best = min(float(cost[rows, list(perm)].sum()) for perm in itertools.permutations(range(mu.M)))
    return float(np.sqrt(max(best / mu.M, 0.0)))
