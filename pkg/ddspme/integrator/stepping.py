import logging
from dataclasses import dataclass
from typing import Callable, Dict, Literal, Optional, Union

import numpy as np
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt
from tqdm import tqdm

from ddspme.coefficients import ModelSpec, lipschitz, noise_increment, noise_modes, psi_coefficients
from ddspme.common import DimensionMismatchError, GridMismatchError, IntegrationError
from ddspme.config import INNER_ATTEMPTS, INNER_DAMPING, INNER_MAX_ITER, INNER_TOLERANCE, progress_enabled
from ddspme.integrator.grid import TimeGrid
from ddspme.integrator.noise_plan import NoisePlan
from ddspme.measures import EmpiricalMeasure, MeasureFlow
from ddspme.spectral import SpectralOperator

LOGGER = logging.getLogger(__name__)

StepScheme = Literal['semi_implicit', 'drift_implicit']
SCHEMES = ('semi_implicit', 'drift_implicit')

MeasureLookup = Callable[[int, np.ndarray], Optional[EmpiricalMeasure]]


class _InnerSolveError(Exception):
    pass


@dataclass
class TrajectoryEnsemble:
    """
    M particle paths on a time grid, paths[j, i] being particle i at grid node j.

    flow is the frozen law the paths were driven by; None marks an interacting run, where each step
    read the ensemble's own empirical law.
    """
    paths: np.ndarray
    grid: TimeGrid
    model: ModelSpec
    noise: Optional[NoisePlan]
    eps: float
    lam: float
    scheme: str = 'semi_implicit'
    flow: Optional[MeasureFlow] = None
    particle_offset: int = 0

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim != 3:
            raise DimensionMismatchError(F"paths must be (nodes, M, N), got shape {paths.shape}")
        if paths.shape[0] != self.grid.n_steps + 1:
            raise GridMismatchError(F"{paths.shape[0]} path nodes for a grid of {self.grid.n_steps} steps")
        if not np.all(np.isfinite(paths)):
            raise IntegrationError('trajectory holds non-finite entries')
        paths.setflags(write=False)
        self.paths = paths

    @property
    def M(self) -> int:
        return self.paths.shape[1]

    @property
    def N(self) -> int:
        return self.paths.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def interacting(self) -> bool:
        return self.flow is None

    def initial(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.paths[0])

    def terminal(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.paths[-1])

    def law_flow(self) -> MeasureFlow:
        return MeasureFlow(self.grid.times, self.paths)

    def driving_measure(self, j: int) -> Optional[EmpiricalMeasure]:
        """The law the step leaving node j read; None for measure-free models."""
        if self.model.measure_free:
            return None
        if self.flow is None:
            return EmpiricalMeasure(self.paths[j])
        return self.flow.at(float(self.grid.times[j]))


def explicit_step_bound(op: SpectralOperator, model: ModelSpec, eps: float = 0.0) -> float:
    """Largest dt of the explicit drift treatment, 1 / (Lip(psi) max_k(lambda_k + eps)); inf when unrestricted."""
    rate = lipschitz(model.drift) * (op.max_lambda + eps)
    return 1.0 / rate if rate > 0 else float('inf')


def _check_regularization(eps: float, lam: float):
    if not 0.0 <= eps < 1.0:
        raise ValueError(F"eps must lie in [0, 1), got {eps}")
    if not 0.0 <= lam < 1.0:
        raise ValueError(F"lam must lie in [0, 1), got {lam}")


def _initial_state(op: SpectralOperator, init: Union[EmpiricalMeasure, np.ndarray]) -> np.ndarray:
    X0 = init.particles if isinstance(init, EmpiricalMeasure) else np.asarray(init, dtype=float)
    if X0.ndim != 2 or X0.shape[1] != op.N:
        raise DimensionMismatchError(F"initial ensemble must be (M, {op.N}), got shape {X0.shape}")
    if X0.shape[0] < 1:
        raise ValueError('initial ensemble is empty')
    return np.array(X0, dtype=float, copy=True)


def _check_plan(noise: NoisePlan, model: ModelSpec, op: SpectralOperator):
    K = noise_modes(model.noise, op)
    if noise.K != K:
        raise DimensionMismatchError(F"noise plan draws {noise.K} modes, model uses {K}")


def _resolve_increments(noise: NoisePlan, grid: TimeGrid, M: int, particle_offset: int,
                        increments: Optional[np.ndarray]) -> np.ndarray:
    if increments is None:
        return noise.increments(grid, M, particle_offset)
    if increments.shape != (grid.n_steps, M, noise.K):
        raise DimensionMismatchError(
            F"increments of shape {increments.shape}, expected {(grid.n_steps, M, noise.K)}")
    return increments


def _damped_fixed_point(G: Callable[[np.ndarray], np.ndarray], start: np.ndarray, damping: float) -> np.ndarray:
    Y = start
    for _ in range(INNER_MAX_ITER):
        Y_next = (1.0 - damping) * Y + damping * G(Y)
        if not np.all(np.isfinite(Y_next)):
            raise _InnerSolveError('inner iterate left the finite range')
        change = float(np.max(np.abs(Y_next - Y)))
        Y = Y_next
        if change <= INNER_TOLERANCE * max(1.0, float(np.max(np.abs(Y)))):
            return Y
    raise _InnerSolveError(F"no convergence in {INNER_MAX_ITER} iterations (damping {damping})")


def _implicit_step(G: Callable[[np.ndarray], np.ndarray], start: np.ndarray, step: int) -> np.ndarray:
    try:
        for attempt in Retrying(
                stop=stop_after_attempt(INNER_ATTEMPTS),
                retry=retry_if_exception_type(_InnerSolveError),
                before_sleep=before_sleep_log(LOGGER, logging.INFO),
                reraise=True):
            with attempt:
                damping = INNER_DAMPING * 0.5 ** (attempt.retry_state.attempt_number - 1)
                return _damped_fixed_point(G, start, damping)
    except _InnerSolveError as e:
        raise IntegrationError(F"inner fixed point failed: {e}", step=step) from e


def _integrate(op: SpectralOperator, model: ModelSpec, eps: float, lam: float, X0: np.ndarray, grid: TimeGrid,
               dW: np.ndarray, scheme: str, measure_at: MeasureLookup, desc: str) -> np.ndarray:
    if scheme not in SCHEMES:
        raise ValueError(F"unknown step scheme {scheme!r}")
    dt = grid.dt
    a = op.lam + eps
    denom = 1.0 + dt * lam * a
    paths = np.empty((grid.n_steps + 1,) + X0.shape)
    paths[0] = X0
    X = paths[0]
    for j in tqdm(range(grid.n_steps), desc=desc, total=grid.n_steps, dynamic_ncols=True, miniters=0,
                  disable=not progress_enabled()):
        mu = measure_at(j, X)
        noise = noise_increment(model.noise, op, X, mu, dW[j])
        if scheme == 'semi_implicit':
            X_next = (X - dt * a * psi_coefficients(model.drift, op, X, mu) + noise) / denom
        else:
            rhs = X + noise

            def G(Y, rhs=rhs, mu=mu):
                return (rhs - dt * a * psi_coefficients(model.drift, op, Y, mu)) / denom

            X_next = _implicit_step(G, G(X), grid.global_step(j + 1))
        if not np.all(np.isfinite(X_next)):
            raise IntegrationError('non-finite state', step=grid.global_step(j + 1))
        paths[j + 1] = X_next
        X = paths[j + 1]
    return paths


def _frozen_lookup(model: ModelSpec, flow: MeasureFlow, grid: TimeGrid, op: SpectralOperator) -> MeasureLookup:
    if model.measure_free:
        return lambda j, X: None
    if flow.N != op.N:
        raise DimensionMismatchError(F"flow dimension {flow.N} does not match operator dimension {op.N}")
    times = grid.times
    indices = [flow.index_at(float(t)) for t in times[:-1]]
    cache: Dict[int, EmpiricalMeasure] = {}

    def lookup(j, X):
        i = indices[j]
        if i not in cache:
            cache[i] = flow.measure(i)
        return cache[i]

    return lookup


def integrate_frozen(op: SpectralOperator, model: ModelSpec, eps: float, lam: float, flow: MeasureFlow,
                     init: Union[EmpiricalMeasure, np.ndarray], grid: TimeGrid, noise: NoisePlan,
                     scheme: StepScheme = 'semi_implicit', increments: Optional[np.ndarray] = None,
                     particle_offset: int = 0) -> TrajectoryEnsemble:
    """
    Advance every particle of init through dX = (L - eps)(Psi(X, mu(t)) + lam X) dt + B(X, mu(t)) dW with the law
    mu frozen to the given flow, read piecewise constant from the left.

    :param op:
    :param model:
    :param eps: regularization of L, in [0, 1)
    :param lam: viscosity, in [0, 1)
    :param flow: frozen law; unused by measure-free models
    :param init: initial ensemble, measure or (M, N) array
    :param grid:
    :param noise: counter-based increments shared by every run on this plan
    :param scheme: semi_implicit (explicit psi) or drift_implicit (damped inner fixed point)
    :param increments: precomputed plan increments for this grid, shape (n_steps, M, K)
    :param particle_offset: stream index of the first particle
    :return: TrajectoryEnsemble
    """
    _check_regularization(eps, lam)
    _check_plan(noise, model, op)
    X0 = _initial_state(op, init)
    dW = _resolve_increments(noise, grid, X0.shape[0], particle_offset, increments)
    lookup = _frozen_lookup(model, flow, grid, op)
    paths = _integrate(op, model, eps, lam, X0, grid, dW, scheme, lookup, desc='Frozen-law steps')
    return TrajectoryEnsemble(paths=paths, grid=grid, model=model, noise=noise, eps=eps, lam=lam, scheme=scheme,
                              flow=flow, particle_offset=particle_offset)


def integrate_interacting(op: SpectralOperator, model: ModelSpec, eps: float, lam: float,
                          init: Union[EmpiricalMeasure, np.ndarray], grid: TimeGrid, noise: NoisePlan,
                          scheme: StepScheme = 'semi_implicit', increments: Optional[np.ndarray] = None,
                          particle_offset: int = 0) -> TrajectoryEnsemble:
    """Same stepping as integrate_frozen, each step reading the current empirical law of the ensemble."""
    _check_regularization(eps, lam)
    _check_plan(noise, model, op)
    X0 = _initial_state(op, init)
    dW = _resolve_increments(noise, grid, X0.shape[0], particle_offset, increments)
    if model.measure_free:
        def lookup(j, X):
            return None
    else:
        def lookup(j, X):
            return EmpiricalMeasure(X)
    paths = _integrate(op, model, eps, lam, X0, grid, dW, scheme, lookup, desc='Interacting steps')
    return TrajectoryEnsemble(paths=paths, grid=grid, model=model, noise=noise, eps=eps, lam=lam, scheme=scheme,
                              flow=None, particle_offset=particle_offset)
