import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import Field as PydanticField
from tqdm import tqdm

from ddspme.coefficients import ModelSpec, noise_modes
from ddspme.common import (
    ContractionError, IntegrationError, PicardError, ReportModelBase, SpecModelBase, run_jobs
)
from ddspme.config import (
    BOOTSTRAP_RESAMPLES, CHAOS_PARTICLE_COUNTS, CHAOS_SEED_PAIRS, PICARD_MAX_ITER, PICARD_PROBE_WINDOW, PICARD_THETA,
    PICARD_TOLERANCE
)
from ddspme.integrator import (
    InitialLaw, NoisePlan, StepScheme, TimeGrid, TrajectoryEnsemble, integrate_frozen, integrate_interacting
)
from ddspme.measures import EmpiricalMeasure, MeasureFlow, flow_distance, w2_value
from ddspme.spectral import SpectralOperator

LOGGER = logging.getLogger(__name__)

# slack on t0 / dt before flooring to whole steps
_STEP_SLACK = 1e-9


class PicardConfig(SpecModelBase):
    """
    Window policy t0 = theta / c_hat with stopping rule d(mu_k, mu_{k+1}) <= tol, the distance discounted at
    c_hat / 2. c_hat None means: take it from the model constants, else estimate it on a probe window.
    """
    c_hat: Optional[float] = PydanticField(default=None, gt=0.0)
    theta: float = PydanticField(default=PICARD_THETA, gt=0.0, lt=1.0)
    tol: float = PydanticField(default=PICARD_TOLERANCE, gt=0.0)
    max_iter: int = PydanticField(default=PICARD_MAX_ITER, ge=1)
    probe_window: float = PydanticField(default=PICARD_PROBE_WINDOW, gt=0.0)

    @property
    def lambda_disc(self) -> float:
        return 0.0 if self.c_hat is None else self.c_hat / 2.0

    @property
    def window_length(self) -> float:
        return float('inf') if self.c_hat is None else self.theta / self.c_hat

    def steps_per_window(self, grid: TimeGrid) -> int:
        if self.c_hat is None:
            return grid.n_steps
        return max(1, int(np.floor(self.window_length / grid.dt + _STEP_SLACK)))


class PicardDiagnostics(ReportModelBase):
    window: int
    t_start: float
    t_end: float
    c_hat: Optional[float]
    lambda_disc: float
    tol: float
    distances: List[float]
    ratios: List[float]
    iterations: int
    converged: bool

    def to_frame(self) -> pd.DataFrame:
        ratios = [np.nan] + list(self.ratios)
        return pd.DataFrame({
            'window': self.window,
            'iteration': np.arange(len(self.distances)),
            'distance': self.distances,
            'ratio': ratios[:len(self.distances)],
        })


class ContractionEstimate(ReportModelBase):
    ratio: float
    implied_c: float
    distance_in: float
    distance_out: float
    window_length: float


def _ratios(distances: Sequence[float]) -> List[float]:
    return [distances[k + 1] / distances[k] if distances[k] > 0 else 0.0 for k in range(len(distances) - 1)]


def picard_window(op: SpectralOperator, model: ModelSpec, init: Union[EmpiricalMeasure, np.ndarray], grid: TimeGrid,
                  config: PicardConfig, noise: NoisePlan, eps: float = 0.0, lam: float = 0.0,
                  scheme: StepScheme = 'semi_implicit', window: int = 0,
                  threads: Optional[int] = None) -> Tuple[MeasureFlow, TrajectoryEnsemble, PicardDiagnostics]:
    """
    Iterate mu_{k+1} = law flow of the frozen run against mu_k on one window, all iterates driven by the same noise.

    :param op:
    :param model:
    :param init: ensemble at the window start
    :param grid: window grid
    :param config: resolved config (c_hat set, or None for a single unbounded window)
    :param noise:
    :param eps:
    :param lam:
    :param scheme:
    :param window: window index, for diagnostics
    :param threads: workers for the per-node distances
    :return: (mu_k, run against mu_k, diagnostics); the run is the fixed point to tol
    """
    init = init if isinstance(init, EmpiricalMeasure) else EmpiricalMeasure(init)
    increments = noise.increments(grid, init.M)
    flow = MeasureFlow.constant(init, grid.times)
    distances: List[float] = []
    with tqdm(desc=F"Picard window {window}", total=config.max_iter, dynamic_ncols=True, miniters=0) as progress_bar:
        for k in range(config.max_iter):
            traj = integrate_frozen(op, model, eps, lam, flow, init, grid, noise, scheme=scheme,
                                    increments=increments)
            image = traj.law_flow()
            distance = flow_distance(op, flow, image, config.lambda_disc, method='exact', threads=threads)
            distances.append(distance)
            progress_bar.update(1)
            LOGGER.debug('window %s iteration %s: distance %.3e', window, k, distance)
            if distance <= config.tol:
                diagnostics = PicardDiagnostics(
                    window=window, t_start=grid.t_start, t_end=grid.t_end, c_hat=config.c_hat,
                    lambda_disc=config.lambda_disc, tol=config.tol, distances=distances,
                    ratios=_ratios(distances), iterations=k + 1, converged=True)
                LOGGER.info('Picard window %s [%.4g, %.4g] converged after %s iterations',
                            window, grid.t_start, grid.t_end, k + 1)
                return flow, traj, diagnostics
            flow = image
    ratios = _ratios(distances)
    raise PicardError(F"Picard iteration on window {window} did not reach tol {config.tol} in {config.max_iter} "
                      F"iterations", window=window, iterations=config.max_iter,
                      last_ratio=ratios[-1] if ratios else None, distances=distances)


def estimate_contraction(op: SpectralOperator, model: ModelSpec, init: Union[EmpiricalMeasure, np.ndarray],
                         grid: TimeGrid, mu0: MeasureFlow, nu0: MeasureFlow, noise: NoisePlan, eps: float = 0.0,
                         lam: float = 0.0, scheme: StepScheme = 'semi_implicit', lambda_disc: float = 0.0,
                         threads: Optional[int] = None) -> ContractionEstimate:
    """
    One application of the law map to two seed flows under common noise.

    :return: ratio d(Phi(mu0), Phi(nu0)) / d(mu0, nu0) and the implied c = ratio^2 / window length
    """
    d_in = flow_distance(op, mu0.restrict(grid.t_start, grid.t_end), nu0.restrict(grid.t_start, grid.t_end),
                         lambda_disc, method='exact', threads=threads)
    if d_in <= 0.0:
        raise ContractionError('seed flows are at zero distance; the contraction ratio is undefined')
    increments = noise.increments(grid, init.M if isinstance(init, EmpiricalMeasure) else len(init))
    image_mu = integrate_frozen(op, model, eps, lam, mu0, init, grid, noise, scheme=scheme, increments=increments)
    image_nu = integrate_frozen(op, model, eps, lam, nu0, init, grid, noise, scheme=scheme, increments=increments)
    d_out = flow_distance(op, image_mu.law_flow(), image_nu.law_flow(), lambda_disc, method='exact', threads=threads)
    length = grid.t_end - grid.t_start
    ratio = d_out / d_in
    estimate = ContractionEstimate(ratio=ratio, implied_c=ratio ** 2 / length, distance_in=d_in, distance_out=d_out,
                                   window_length=length)
    LOGGER.info('Contraction over %.4g: ratio %.4g, implied c %.4g', length, ratio, estimate.implied_c)
    return estimate


def _probe_flows(init: EmpiricalMeasure, grid: TimeGrid) -> Tuple[MeasureFlow, MeasureFlow]:
    shifted = np.array(init.particles, copy=True)
    shifted[:, 0] += 1.0
    return MeasureFlow.constant(init, grid.times), MeasureFlow.constant(EmpiricalMeasure(shifted), grid.times)


def resolve_config(op: SpectralOperator, model: ModelSpec, init: EmpiricalMeasure, grid: TimeGrid,
                   config: PicardConfig, noise: NoisePlan, eps: float = 0.0, lam: float = 0.0,
                   scheme: StepScheme = 'semi_implicit', threads: Optional[int] = None) -> PicardConfig:
    """Fill c_hat: declared config value, then the model's contraction constant, then a probe-window estimate."""
    if config.c_hat is not None:
        return config
    declared = model.resolved_constants(op, eps, lam).c_contraction
    if declared is not None:
        LOGGER.info('Using declared contraction constant %.4g', declared)
        return config.model_copy(update={'c_hat': declared})
    if model.measure_free:
        return config
    steps = max(1, min(grid.n_steps, int(round(config.probe_window / grid.dt))))
    probe = grid.window(0, steps)
    mu0, nu0 = _probe_flows(init, probe)
    estimate = estimate_contraction(op, model, init, probe, mu0, nu0, noise, eps, lam, scheme, threads=threads)
    if estimate.implied_c <= 0.0:
        return config
    return config.model_copy(update={'c_hat': estimate.implied_c})


def solve(op: SpectralOperator, model: ModelSpec, init: Union[EmpiricalMeasure, np.ndarray], grid: TimeGrid,
          config: PicardConfig, noise: NoisePlan, eps: float = 0.0, lam: float = 0.0,
          scheme: StepScheme = 'semi_implicit',
          threads: Optional[int] = None) -> Tuple[TrajectoryEnsemble, MeasureFlow, List[PicardDiagnostics]]:
    """
    Fixed point over the whole grid: consecutive Picard windows of length theta / c_hat (last one shorter), each
    seeded with the previous window's terminal ensemble.

    :return: (trajectory, the glued flow it was integrated against, per-window diagnostics)
    """
    init = init if isinstance(init, EmpiricalMeasure) else EmpiricalMeasure(init)
    config = resolve_config(op, model, init, grid, config, noise, eps, lam, scheme, threads)
    windows = grid.split(config.steps_per_window(grid))
    LOGGER.info('Solving over [%.4g, %.4g] in %s windows (c_hat=%s)', grid.t_start, grid.t_end, len(windows),
                config.c_hat)
    flows, paths, diagnostics = [], [], []
    state = init
    for w, window_grid in enumerate(windows):
        try:
            flow, traj, diag = picard_window(op, model, state, window_grid, config, noise, eps, lam, scheme,
                                             window=w, threads=threads)
        except IntegrationError as e:
            raise PicardError(F"integration failed in window {w}: {e}", window=w) from e
        flows.append(flow)
        paths.append(traj.paths if w == len(windows) - 1 else traj.paths[:-1])
        diagnostics.append(diag)
        state = traj.terminal()
    flow = MeasureFlow.glue(flows)
    traj = TrajectoryEnsemble(paths=np.concatenate(paths, axis=0), grid=grid, model=model, noise=noise, eps=eps,
                              lam=lam, scheme=scheme, flow=flow)
    return traj, flow, diagnostics


def self_consistency(op: SpectralOperator, traj: TrajectoryEnsemble, flow: MeasureFlow, lambda_disc: float = 0.0,
                     threads: Optional[int] = None) -> Tuple[bool, float]:
    """
    Re-run against the returned flow with the same plan.

    :param lambda_disc: discount of the residual metric, c_hat / 2 to compare against the Picard tol
    :return: (bitwise reproduction, distance between the flow and the re-run's law)
    """
    rerun = integrate_frozen(op, traj.model, traj.eps, traj.lam, flow, traj.initial(), traj.grid, traj.noise,
                             scheme=traj.scheme)
    residual = flow_distance(op, flow, rerun.law_flow(), lambda_disc, method='exact', threads=threads)
    return bool(np.array_equal(rerun.paths, traj.paths)), residual


def monte_carlo_envelope(measure: EmpiricalMeasure, op: SpectralOperator, n_resamples: int = BOOTSTRAP_RESAMPLES,
                         seed: int = 0, quantile: float = 0.95, threads: Optional[int] = None) -> float:
    """Quantile of w2 between random disjoint halves of the ensemble; the sampling noise floor of a terminal law."""
    if measure.M < 2:
        raise ValueError('envelope needs at least two particles')
    rng = np.random.default_rng(seed)
    half = measure.M // 2
    orders = [rng.permutation(measure.M) for _ in range(n_resamples)]

    def _one(order):
        left = EmpiricalMeasure(measure.particles[order[:half]])
        right = EmpiricalMeasure(measure.particles[order[half:2 * half]])
        return w2_value(op, left, right, method='exact')

    values = run_jobs(_one, orders, threads=threads)
    return float(np.quantile(values, quantile))


class ChaosReport(ReportModelBase):
    particle_counts: List[int]
    medians: List[float]
    decreasing_pairs: int
    pairs: int
    table: pd.DataFrame = PydanticField(exclude=True)

    def to_frame(self) -> pd.DataFrame:
        return self.table


def chaos_study(op: SpectralOperator, model: ModelSpec, init_law: InitialLaw, grid: TimeGrid, config: PicardConfig,
                particle_counts: Sequence[int] = CHAOS_PARTICLE_COUNTS, n_pairs: int = CHAOS_SEED_PAIRS,
                seed: int = 0, K: Optional[int] = None, eps: float = 0.0, lam: float = 0.0,
                threads: Optional[int] = None) -> ChaosReport:
    """
    Terminal-law w2 between the Picard solution and the interacting particle system, independent seeds, for each
    particle count; a pair counts as decreasing when its w2 falls strictly with every doubling.
    """
    K = noise_modes(model.noise, op) if K is None else K
    rows = []
    for pair in tqdm(range(n_pairs), desc='Chaos seed pairs', total=n_pairs, dynamic_ncols=True, miniters=0):
        seed_a, seed_b = seed + 2 * pair, seed + 2 * pair + 1
        for M in particle_counts:
            init_a = init_law.sample(op, M, seed_a)
            init_b = init_law.sample(op, M, seed_b)
            traj, _, _ = solve(op, model, init_a, grid, config, NoisePlan(seed=seed_a, K=K), eps, lam,
                               threads=threads)
            particles = integrate_interacting(op, model, eps, lam, init_b, grid, NoisePlan(seed=seed_b, K=K))
            distance = w2_value(op, traj.terminal(), particles.terminal(), method='exact')
            rows.append({'pair': pair, 'M': M, 'w2': distance})
    table = pd.DataFrame(rows)
    wide = table.pivot(index='pair', columns='M', values='w2')[list(particle_counts)]
    decreasing = int(np.sum(np.all(np.diff(wide.to_numpy(), axis=1) < 0, axis=1)))
    medians = [float(wide[M].median()) for M in particle_counts]
    LOGGER.info('Chaos study medians %s, strictly decreasing in %s of %s pairs', medians, decreasing, n_pairs)
    return ChaosReport(particle_counts=list(particle_counts), medians=medians, decreasing_pairs=decreasing,
                       pairs=n_pairs, table=table)


class StabilityReport(ReportModelBase):
    initial_w2: float
    terminal_w2: float
    horizon: float
    fitted_rate: float


def init_law_stability(op: SpectralOperator, model: ModelSpec, init_a: EmpiricalMeasure, init_b: EmpiricalMeasure,
                       grid: TimeGrid, config: PicardConfig, noise: NoisePlan, eps: float = 0.0, lam: float = 0.0,
                       threads: Optional[int] = None) -> StabilityReport:
    """Terminal-law w2 of two solves from different initial laws under common noise, with the rate it implies."""
    traj_a, _, _ = solve(op, model, init_a, grid, config, noise, eps, lam, threads=threads)
    traj_b, _, _ = solve(op, model, init_b, grid, config, noise, eps, lam, threads=threads)
    initial = w2_value(op, init_a, init_b, method='exact')
    terminal = w2_value(op, traj_a.terminal(), traj_b.terminal(), method='exact')
    horizon = grid.t_end - grid.t_start
    if initial > 0 and terminal > 0:
        rate = float(np.log(terminal / initial) / horizon)
    else:
        rate = 0.0
    return StabilityReport(initial_w2=initial, terminal_w2=terminal, horizon=horizon, fitted_rate=rate)
