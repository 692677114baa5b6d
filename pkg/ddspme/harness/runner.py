import logging
import os
import time
from datetime import datetime, timezone
from typing import Callable, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from ddspme import __version__
from ddspme.approximation import apriori_check, epsilon_sweep, lambda_sweep
from ddspme.coefficients import AssumptionReport, ProbeSampler, probe_A1, probe_A2_A4, probe_A3, probe_H2_H3
from ddspme.common import DdspmeError, ProbeFailure, ReportModelBase, dump_json, set_threads
from ddspme.config import CSV_FLOAT_FORMAT
from ddspme.fixed_point import PicardConfig, estimate_contraction, resolve_config, self_consistency, solve
from ddspme.harness.config import ExperimentConfig
from ddspme.integrator import ensemble_statistics, ito_ledger, save_trajectory, write_statistics
from ddspme.measures import EmpiricalMeasure, MeasureFlow, brute_force_w2, w2

LOGGER = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
ERROR_NAME = 'error.json'

# probes that --strict enforces; the cross-mode monotonicity probe is informative only
STRICT_PROBES = ('A1-diagonal', 'A2', 'A3', 'A4')
CONTRACTION_FRACTIONS = (1.0, 0.5, 0.25)
ENTROPIC_REG_FACTORS = (1.0, 0.1, 0.01)
ENTROPIC_INSTANCES = 50
ORACLE_SINKHORN_MAX_ITER = 20000
ORACLE_SLACK = 1e-8


class RunManifest(ReportModelBase):
    config_hash: str
    version: str
    task: str
    status: Literal['running', 'ok', 'failed'] = 'running'
    started: str
    finished: Optional[str] = None
    wall_clock: Optional[float] = None
    seed: int
    noise_seed: int
    outputs: List[str] = []


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_error(out_dir: str, error: BaseException) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, ERROR_NAME)
    diagnostics = error.diagnostics() if isinstance(error, DdspmeError) else {}
    dump_json(path, {'type': type(error).__name__, 'message': str(error), 'diagnostics': diagnostics})
    return path


class Runner:
    """
    Executes one task of an ExperimentConfig into an output directory, keeping a manifest of every file written.
    """

    def __init__(self, config: ExperimentConfig, out_dir: Optional[str] = None, strict: bool = False,
                 threads: Optional[int] = None):
        self.config = config
        self.out_dir = out_dir or config.output_dir
        self.strict = strict
        self.threads = threads
        self.op = config.build_operator()
        self.model = config.resolved_model()
        self.grid = config.grid()
        self.noise = config.noise_plan(self.op)
        self.manifest: Optional[RunManifest] = None

    @property
    def tasks(self) -> Dict[str, Callable[[], None]]:
        return {
            'solve': self._solve,
            'picard-diagnose': self._picard_diagnose,
            'sweep-lambda': self._sweep_lambda,
            'sweep-epsilon': self._sweep_epsilon,
            'probe-assumptions': self._probe_assumptions,
            'apriori': self._apriori,
            'oracle-ot': self._oracle_ot,
        }

    def path(self, name: str) -> str:
        """Output path, registered in the manifest."""
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def _write_manifest(self):
        dump_json(os.path.join(self.out_dir, MANIFEST_NAME), self.manifest.model_dump(mode='json'))

    def run(self, task: Optional[str] = None) -> RunManifest:
        task = task or self.config.task
        if task not in self.tasks:
            raise ValueError(F"unknown task {task!r}")
        if self.threads is not None:
            set_threads(self.threads)
        os.makedirs(self.out_dir, exist_ok=True)
        self.manifest = RunManifest(config_hash=self.config.digest(), version=__version__, task=task,
                                    started=_now(), seed=self.config.run.seed, noise_seed=self.noise.seed)
        self._write_manifest()
        LOGGER.info('Running %s into %s (config %s)', task, self.out_dir, self.manifest.config_hash[:12])
        start = time.perf_counter()
        try:
            self.tasks[task]()
        except Exception as e:
            write_error(self.out_dir, e)
            self.path(ERROR_NAME)
            self._finish('failed', start)
            raise
        self._finish('ok', start)
        return self.manifest

    def _finish(self, status: str, start: float):
        self.manifest.status = status
        self.manifest.finished = _now()
        self.manifest.wall_clock = time.perf_counter() - start
        self._write_manifest()
        LOGGER.info('Task %s finished with status %s in %.1fs', self.manifest.task, status, self.manifest.wall_clock)

    # -- helpers ---------------------------------------------------------------------------------------------------

    def _init(self) -> EmpiricalMeasure:
        return self.config.run.init.sample(self.op, self.config.run.M, self.config.run.seed)

    def _solve_run(self, init: Optional[EmpiricalMeasure] = None, picard: Optional[PicardConfig] = None):
        run = self.config.run
        init = self._init() if init is None else init
        return solve(self.op, self.model, init, self.grid, picard or run.picard, self.noise, run.eps, run.lam,
                     run.scheme, threads=self.threads)

    def _csv(self, frame: pd.DataFrame, name: str):
        frame.to_csv(self.path(name), index=False, float_format=CSV_FLOAT_FORMAT)

    def _write_picard(self, diagnostics):
        self._csv(pd.concat([d.to_frame() for d in diagnostics], ignore_index=True), 'picard.csv')
        dump_json(self.path('picard.json'), {'windows': [d.model_dump(mode='json') for d in diagnostics]})

    # -- tasks -----------------------------------------------------------------------------------------------------

    def _solve(self):
        traj, _, diagnostics = self._solve_run()
        for name in save_trajectory(traj, os.path.join(self.out_dir, 'trajectory')):
            self.path(os.path.basename(name))
        write_statistics(ensemble_statistics(traj, self.op), self.path('statistics.csv'))
        self._write_picard(diagnostics)
        ledger = ito_ledger(traj, self.model, self.op, delta=self.config.run.delta)
        self._csv(ledger.to_frame(), 'energy.csv')
        dump_json(self.path('energy.json'), ledger.model_dump(
            mode='json', include={'max_residual', 'max_step_residual', 'delta', 'p_form_max', 'p_form_sign_ok'}))

    def _picard_diagnose(self):
        run = self.config.run
        init = self._init()
        config = resolve_config(self.op, self.model, init, self.grid, run.picard, self.noise, run.eps, run.lam,
                                run.scheme, self.threads)
        traj, flow, diagnostics = self._solve_run(init, config)
        self._write_picard(diagnostics)
        bitwise, residual = self_consistency(self.op, traj, flow, config.lambda_disc, threads=self.threads)
        dump_json(self.path('consistency.json'), {'bitwise': bitwise, 'residual': residual, 'tol': config.tol,
                                                  'lambda_disc': config.lambda_disc})
        rows = []
        shifted = np.array(init.particles, copy=True)
        shifted[:, 0] += 1.0
        for fraction in CONTRACTION_FRACTIONS:
            steps = config.steps_per_window(self.grid) * fraction
            window = self.grid.window(0, max(1, min(self.grid.n_steps, int(np.floor(steps + 1e-9)))))
            mu0 = MeasureFlow.constant(init, window.times)
            nu0 = MeasureFlow.constant(EmpiricalMeasure(shifted), window.times)
            estimate = estimate_contraction(self.op, self.model, init, window, mu0, nu0, self.noise, run.eps,
                                            run.lam, run.scheme, threads=self.threads)
            rows.append({'fraction': fraction, **estimate.model_dump()})
        self._csv(pd.DataFrame(rows), 'contraction.csv')

    def _sweep(self, parameter: str):
        run = self.config.run
        if parameter == 'lambda':
            table = lambda_sweep(self.op, self.model, run.eps, run.lambdas, self._init(), self.grid, self.noise,
                                 run.picard, run.scheme, threads=self.threads, seed=run.seed)
        else:
            table = epsilon_sweep(self.op, self.model, run.epsilons, self._init(), self.grid, self.noise,
                                  run.picard, run.scheme, threads=self.threads, seed=run.seed)
        table.to_csv(self.path(F"sweep_{parameter}.csv"))
        dump_json(self.path(F"sweep_{parameter}.json"), table.model_dump(mode='json'))

    def _sweep_lambda(self):
        self._sweep('lambda')

    def _sweep_epsilon(self):
        self._sweep('epsilon')

    def _probe_assumptions(self):
        run = self.config.run
        sampler = ProbeSampler(seed=run.seed)
        n = run.probe_samples
        constants = self.model.resolved_constants(self.op, run.eps, run.lam)
        reports: List[AssumptionReport] = [probe_A1(self.model.drift, self.op, sampler, n, threads=self.threads)]
        if not self.model.drift.measure_free:
            reports.append(probe_A1(self.model.drift, self.op, sampler, n, mode='cross', threads=self.threads))
        reports.append(probe_A2_A4(self.model.drift, self.op, sampler, n, constants, threads=self.threads))
        reports.append(probe_A2_A4(self.model.noise, self.op, sampler, n, constants, threads=self.threads))
        reports.append(probe_A3(self.model.drift, self.op, constants, sampler, n, threads=self.threads))
        reports.extend(probe_H2_H3(self.model, self.op, constants, run.eps, run.lam, sampler, n,
                                   threads=self.threads))
        dump_json(self.path('probes.json'), {'constants': constants.model_dump(mode='json'),
                                             'reports': [r.model_dump(mode='json') for r in reports]})
        self._csv(pd.DataFrame([{
            'hypothesis': r.hypothesis, 'samples': r.samples, 'worst_violation': r.worst_violation,
            'estimated_constant': r.estimated_constant, 'declared_constant': r.declared_constant, 'passed': r.passed,
        } for r in reports]), 'probes.csv')
        failed = [r.hypothesis for r in reports if r.hypothesis in STRICT_PROBES and not r.passed]
        if failed:
            LOGGER.warning('assumption probes failed: %s', failed)
            if self.strict:
                raise ProbeFailure(failed)

    def _apriori(self):
        traj, _, diagnostics = self._solve_run()
        self._write_picard(diagnostics)
        report = apriori_check(traj, self.model, self.op, seed=self.config.run.seed)
        dump_json(self.path('bounds.json'), report.model_dump(mode='json'))
        self._csv(report.to_frame(), 'bounds.csv')

    def _oracle_ot(self):
        run = self.config.run
        rng = np.random.default_rng(run.seed)
        scale = (1.0 + self.op.lam) ** -0.5
        exact_rows, entropic_rows = [], []
        for i in tqdm(range(run.oracle_instances), desc='OT oracle instances', total=run.oracle_instances,
                      dynamic_ncols=True, miniters=0):
            M = int(rng.integers(1, run.oracle_max_particles + 1))
            mu = EmpiricalMeasure(scale * rng.standard_normal((M, self.op.N)))
            nu = EmpiricalMeasure(scale * rng.standard_normal((M, self.op.N)))
            exact, _ = w2(self.op, mu, nu, method='exact')
            brute = brute_force_w2(self.op, mu, nu)
            exact_rows.append({'instance': i, 'M': M, 'exact': exact, 'brute_force': brute,
                               'abs_diff': abs(exact - brute)})
            if i < ENTROPIC_INSTANCES:
                for factor in ENTROPIC_REG_FACTORS:
                    value, plan = w2(self.op, mu, nu, method='entropic', reg_factor=factor, debias=False,
                                     max_iter=ORACLE_SINKHORN_MAX_ITER)
                    entropic_rows.append({'instance': i, 'reg_factor': factor, 'entropic': value, 'exact': exact,
                                          'iterations': plan.iterations})
        exact_frame = pd.DataFrame(exact_rows)
        entropic_frame = pd.DataFrame(entropic_rows)
        self._csv(exact_frame, 'oracle_exact.csv')
        self._csv(entropic_frame, 'oracle_entropic.csv')
        monotone = entropic_frame.groupby('instance').apply(_entropic_monotone)
        dump_json(self.path('oracle.json'), {
            'instances': run.oracle_instances,
            'max_abs_diff': float(exact_frame['abs_diff'].max()),
            'entropic_instances': int(len(monotone)),
            'entropic_monotone': int(monotone.sum()),
        })


def run_config(config: ExperimentConfig, task: Optional[str] = None, out_dir: Optional[str] = None,
               strict: bool = False, threads: Optional[int] = None) -> RunManifest:
    return Runner(config, out_dir=out_dir, strict=strict, threads=threads).run(task)


def _entropic_monotone(group: pd.DataFrame) -> bool:
    """Entropic values fall as the regularization shrinks and stay above the exact value."""
    values = group.sort_values('reg_factor', ascending=False)['entropic'].to_numpy()
    exact = float(group['exact'].iloc[0])
    slack = ORACLE_SLACK * max(1.0, float(values.max()))
    return bool(np.all(np.diff(values) <= slack) and values.min() >= exact - slack)
