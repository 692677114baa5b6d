import json
import logging
from typing import List, Literal, Optional, Tuple

from pydantic import Field as PydanticField, ValidationError

from ddspme.coefficients import ModelSpec, lipschitz, noise_modes
from ddspme.common import ConfigError, SpecModelBase
from ddspme.fixed_point import PicardConfig
from ddspme.integrator import InitialLaw, NoisePlan, StepScheme, TimeGrid
from ddspme.spectral import SpectralOperator, make_explicit_operator, make_fractional_laplacian

LOGGER = logging.getLogger(__name__)

Task = Literal['solve', 'picard-diagnose', 'sweep-lambda', 'sweep-epsilon', 'probe-assumptions', 'apriori',
               'oracle-ot']
TASKS = ('solve', 'picard-diagnose', 'sweep-lambda', 'sweep-epsilon', 'probe-assumptions', 'apriori', 'oracle-ot')


class OperatorBlock(SpecModelBase):
    kind: Literal['fractional_laplacian', 'explicit'] = 'fractional_laplacian'
    N: Optional[int] = None
    alpha: Optional[float] = None
    lambdas: Optional[List[float]] = None
    length: Optional[float] = PydanticField(default=None, gt=0.0)

    def build(self) -> SpectralOperator:
        if self.kind == 'fractional_laplacian':
            if self.N is None or self.alpha is None:
                raise ValueError('fractional_laplacian needs N and alpha')
            if self.length is None:
                return make_fractional_laplacian(self.N, self.alpha)
            return make_fractional_laplacian(self.N, self.alpha, length=self.length)
        if self.length is not None:
            raise ValueError('length applies to the fractional_laplacian operator only')
        if not self.lambdas:
            raise ValueError('explicit operator needs a nonempty lambdas list')
        if self.N is not None and self.N != len(self.lambdas):
            raise ValueError(F"N={self.N} does not match {len(self.lambdas)} lambdas")
        return make_explicit_operator(self.lambdas)


class RunBlock(SpecModelBase):
    T: float = PydanticField(gt=0.0)
    n_steps: int = PydanticField(ge=1)
    M: int = PydanticField(ge=1)
    K: Optional[int] = PydanticField(default=None, ge=1)
    seed: int = PydanticField(default=0, ge=0)
    eps: float = 0.0
    lam: float = 0.0
    scheme: StepScheme = 'semi_implicit'
    init: InitialLaw = InitialLaw()
    picard: PicardConfig = PicardConfig()
    lambdas: List[float] = [0.4, 0.2, 0.1, 0.05, 0.025]
    epsilons: List[float] = [0.4, 0.2, 0.1, 0.05, 0.025]
    probe_samples: int = PydanticField(default=10000, ge=2)
    delta: float = PydanticField(default=2.0, gt=0.0)
    oracle_instances: int = PydanticField(default=500, ge=1)
    oracle_max_particles: int = PydanticField(default=6, ge=1, le=8)

    @property
    def dt(self) -> float:
        return self.T / self.n_steps


class ExperimentConfig(SpecModelBase):
    operator: OperatorBlock
    model: ModelSpec = ModelSpec()
    run: RunBlock
    task: Task = 'solve'
    output_dir: str = 'out'

    def build_operator(self) -> SpectralOperator:
        return self.operator.build()

    def resolved_model(self) -> ModelSpec:
        """Model with run.K pushed into the noise block."""
        if self.run.K is None:
            return self.model
        noise = self.model.noise.model_copy(update={'K': self.run.K})
        return self.model.model_copy(update={'noise': noise})

    def grid(self) -> TimeGrid:
        return TimeGrid.span(0.0, self.run.T, self.run.n_steps)

    def noise_plan(self, op: SpectralOperator) -> NoisePlan:
        return NoisePlan(seed=self.run.seed, K=noise_modes(self.resolved_model().noise, op))


def _format_errors(error: ValidationError) -> List[str]:
    return [F"{'.'.join(str(p) for p in item['loc']) or '<root>'}: {item['msg']}" for item in error.errors()]


def invariant_violations(config: ExperimentConfig) -> List[str]:
    """Cross-field checks that the schema alone cannot express."""
    violations = []
    run = config.run
    try:
        op = config.build_operator()
    except ValueError as e:
        violations.append(F"operator: {e}")
        op = None
    for name, value in (('eps', run.eps), ('lam', run.lam)):
        if not 0.0 <= value < 1.0:
            violations.append(F"run.{name}: {value} outside [0,1)")
    for name, values in (('lambdas', run.lambdas), ('epsilons', run.epsilons)):
        distinct = set(values)
        if len(distinct) < 3:
            violations.append(F"run.{name}: need at least 3 distinct values")
        if any(not 0.0 < v < 1.0 for v in distinct):
            violations.append(F"run.{name}: values outside (0,1)")
    if run.delta <= run.eps:
        violations.append(F"run.delta: {run.delta} must exceed eps {run.eps}")
    if op is None:
        return violations
    model = config.resolved_model()
    if model.noise.K is not None and model.noise.K > op.N:
        violations.append(F"noise.K: {model.noise.K} modes exceed N={op.N}")
    if run.scheme == 'semi_implicit':
        rate = lipschitz(model.drift) * (op.max_lambda + run.eps)
        if rate > 0 and run.dt > 1.0 / rate:
            violations.append(F"run.dt: {run.dt:.6g} exceeds the explicit stability bound {1.0 / rate:.6g}")
    return violations


def load_config(path: str) -> Tuple[Optional[ExperimentConfig], List[str]]:
    """Parse and check a config file; returns the config (None on schema failure) and every violation found."""
    try:
        with open(path, encoding='utf-8') as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        return None, [F"{path}: {e}"]
    try:
        config = ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        return None, _format_errors(e)
    return config, invariant_violations(config)


def validate(path: str) -> List[str]:
    _, violations = load_config(path)
    for violation in violations:
        LOGGER.warning('config violation: %s', violation)
    return violations


def require_config(path: str) -> ExperimentConfig:
    config, violations = load_config(path)
    if violations:
        raise ConfigError(violations)
    return config
