"""
Sampling-based falsifiers for the structural hypotheses on Psi and B.

Every probe draws sample i from its own Philox stream keyed by (seed, i), evaluates a violation
(positive means the inequality fails on that sample) and keeps the first worst sample as witness.
"""
import logging
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import Field as PydanticField, computed_field

from ddspme.coefficients.constants import ModelConstants, ModelSpec
from ddspme.coefficients.drift import DriftSpec, eval_psi_scalar, psi_coefficients
from ddspme.coefficients.noise import NoiseSpec, amplitudes, hs_norm_squared, noise_modes
from ddspme.common import ReportModelBase, SpecModelBase, run_jobs
from ddspme.measures import EmpiricalMeasure, second_moment, w2_value
from ddspme.spectral import NormSpace, SpectralOperator, inner, norm, norm_squared

LOGGER = logging.getLogger(__name__)

PROBE_TOLERANCE = 1e-10
CHUNK = 1000
NEAR_DIAGONAL_GAP = 1e-6


class ProbeSampler(SpecModelBase):
    """
    Random fields have independent N(0, scale^2 (1 + lambda_k)^{-decay}) coefficients; measures are
    uniform on measure_size such fields. Even sample indices reuse the first measure as the second
    one (nu = mu); odd indices draw nu independently.
    """
    seed: int = PydanticField(default=0, ge=0)
    scale: float = PydanticField(default=1.0, gt=0.0)
    decay: float = PydanticField(default=1.0, ge=0.0)
    measure_size: int = PydanticField(default=4, ge=1)
    scalar_scale: float = PydanticField(default=1.0, gt=0.0)

    def generator(self, index: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=np.array([self.seed, index], dtype=np.uint64)))

    def field(self, rng: np.random.Generator, op: SpectralOperator) -> np.ndarray:
        sd = self.scale * (1.0 + op.lam) ** (-self.decay / 2.0)
        return sd * rng.standard_normal(op.N)

    def measure(self, rng: np.random.Generator, op: SpectralOperator) -> EmpiricalMeasure:
        sd = self.scale * (1.0 + op.lam) ** (-self.decay / 2.0)
        return EmpiricalMeasure(sd * rng.standard_normal((self.measure_size, op.N)))

    def pair(self, index: int, op: SpectralOperator) -> Dict[str, Any]:
        rng = self.generator(index)
        u = self.field(rng, op)
        v = self.field(rng, op)
        mu = self.measure(rng, op)
        nu = mu if index % 2 == 0 else self.measure(rng, op)
        return {'u': u, 'v': v, 'mu': mu, 'nu': nu}

    def scalars(self, index: int, op: SpectralOperator, cross: bool) -> Dict[str, Any]:
        rng = self.generator(index)
        r = self.scalar_scale * rng.standard_normal()
        s = self.scalar_scale * rng.standard_normal()
        mu = self.measure(rng, op)
        nu = self.measure(rng, op) if cross else mu
        if cross and index % 2 == 1:
            s = r + NEAR_DIAGONAL_GAP
        return {'s': s, 'r': r, 'mu': mu, 'nu': nu}


class AssumptionReport(ReportModelBase):
    hypothesis: str
    samples: int
    worst_violation: float
    estimated_constant: float
    declared_constant: Optional[float] = None
    witness: Optional[Dict[str, Any]] = None
    extra: Dict[str, float] = {}

    @computed_field
    @property
    def passed(self) -> bool:
        return self.worst_violation <= PROBE_TOLERANCE and self.extra.get('K2_violation', 0.0) <= PROBE_TOLERANCE


def _encode(sample: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in sample.items():
        if isinstance(value, EmpiricalMeasure):
            out[key] = value.particles.tolist()
        elif isinstance(value, np.ndarray):
            out[key] = value.tolist()
        else:
            out[key] = float(value)
    return out


def _decode(witness: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in witness.items():
        if key in ('mu', 'nu'):
            out[key] = EmpiricalMeasure(np.asarray(value, dtype=float))
        elif isinstance(value, list):
            out[key] = np.asarray(value, dtype=float)
        else:
            out[key] = value
    return out


def _sweep(n: int, evaluate: Callable[[int], Tuple[float, float]], threads: Optional[int],
           desc: str) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate samples 0..n-1 in chunks; returns (violations, constants) in sample order."""
    chunks = [range(start, min(start + CHUNK, n)) for start in range(0, n, CHUNK)]

    def _chunk(indices):
        return [evaluate(i) for i in indices]

    results = [pair for chunk in run_jobs(_chunk, chunks, threads=threads, desc=desc) for pair in chunk]
    violations = np.array([r[0] for r in results], dtype=float)
    constants = np.array([r[1] for r in results], dtype=float)
    return violations, constants


def _report(hypothesis: str, violations: np.ndarray, witness_of: Callable[[int], Dict[str, Any]],
            estimated: float, declared: Optional[float], extra: Optional[Dict[str, float]] = None) -> AssumptionReport:
    finite = np.where(np.isnan(violations), -np.inf, violations)
    worst = int(np.argmax(finite))
    worst_violation = float(finite[worst])
    witness = _encode(witness_of(worst)) if worst_violation > PROBE_TOLERANCE else None
    report = AssumptionReport(hypothesis=hypothesis, samples=int(violations.size), worst_violation=worst_violation,
                              estimated_constant=float(estimated), declared_constant=declared, witness=witness,
                              extra=extra or {})
    LOGGER.info('%s probe: worst violation %.3e over %s samples, estimate %.6g', hypothesis, worst_violation,
                violations.size, estimated)
    return report


# -- (A1) ---------------------------------------------------------------------------------------------------------

def a1_violation(spec: DriftSpec, op: SpectralOperator, sample: Dict[str, Any]) -> float:
    s, r = sample['s'], sample['r']
    diff = float(eval_psi_scalar(spec, op, s, sample['mu']) - eval_psi_scalar(spec, op, r, sample['nu']))
    return -diff * (s - r)


def probe_A1(spec: DriftSpec, op: SpectralOperator, sampler: ProbeSampler, n: int,
             mode: Literal['diagonal', 'cross'] = 'diagonal', threads: Optional[int] = None) -> AssumptionReport:
    """
    Sign of (Psi(s, mu) - Psi(r, nu))(s - r): diagonal mode uses nu = mu, cross mode independent
    measures with every other pair pushed next to the diagonal.
    """
    if n < 1:
        raise ValueError('probe needs at least one sample')
    cross = mode == 'cross'

    def _evaluate(i):
        sample = sampler.scalars(i, op, cross)
        violation = a1_violation(spec, op, sample)
        gap = sample['s'] - sample['r']
        slope = -violation / gap ** 2 if gap != 0 else np.inf
        return violation, slope

    violations, slopes = _sweep(n, _evaluate, threads, F"probe A1 ({mode})")
    return _report(F"A1-{mode}", violations, lambda i: sampler.scalars(i, op, cross), float(np.min(slopes)), None)


# -- (A2) / (A4) ---------------------------------------------------------------------------------------------------

def a2_terms(spec: DriftSpec, op: SpectralOperator, sample: Dict[str, Any]) -> Tuple[float, float]:
    """(|Psi(u,mu) - Psi(v,nu)|_2, |u - v|_2 + W2(mu, nu))."""
    du = psi_coefficients(spec, op, sample['u'], sample['mu']) - psi_coefficients(spec, op, sample['v'], sample['nu'])
    distance = float(norm(op, NormSpace.L2, sample['u'] - sample['v'])) + w2_value(op, sample['mu'], sample['nu'])
    return float(norm(op, NormSpace.L2, du)), distance


def a4_terms(spec: NoiseSpec, op: SpectralOperator, sample: Dict[str, Any]) -> Tuple[float, float]:
    """(||B(u,mu) - B(v,nu)||^2 into H, ||u - v||_H^2 + W2(mu, nu)^2)."""
    K = noise_modes(spec, op)
    db = amplitudes(spec, op, sample['u'][None, :], sample['mu'])[0] \
        - amplitudes(spec, op, sample['v'][None, :], sample['nu'])[0]
    lhs = float(np.sum(op.weights(NormSpace.F12DUAL)[:K] * db * db))
    rhs = float(norm_squared(op, NormSpace.F12DUAL, sample['u'] - sample['v'])) \
        + w2_value(op, sample['mu'], sample['nu']) ** 2
    return lhs, rhs


def growth_terms(spec: NoiseSpec, op: SpectralOperator, sample: Dict[str, Any]) -> Tuple[float, float]:
    """(||B(u,mu)||^2 Hilbert-Schmidt into V, 1 + |u|_2^2 + mu(||.||_H^2))."""
    lhs = float(hs_norm_squared(spec, op, sample['u'][None, :], sample['mu'], NormSpace.L2)[0])
    rhs = 1.0 + float(norm_squared(op, NormSpace.L2, sample['u'])) + second_moment(sample['mu'], op)
    return lhs, rhs


def _ratio_probe(hypothesis: str, terms: Callable[[Dict[str, Any]], Tuple[float, float]], op: SpectralOperator,
                 sampler: ProbeSampler, n: int, declared: Optional[float], threads: Optional[int]) -> AssumptionReport:
    def _evaluate(i):
        lhs, rhs = terms(sampler.pair(i, op))
        return lhs, rhs

    lhs, rhs = _sweep(n, _evaluate, threads, F"probe {hypothesis}")
    valid = rhs > 0
    ratios = np.where(valid, lhs / np.where(valid, rhs, 1.0), 0.0)
    estimate = float(np.max(ratios)) if valid.any() else 0.0
    constant = estimate if declared is None else declared
    violations = np.where(valid, lhs - constant * rhs, np.nan)
    return _report(hypothesis, violations, lambda i: sampler.pair(i, op), estimate, declared)


def probe_growth(spec: NoiseSpec, op: SpectralOperator, sampler: ProbeSampler, n: int,
                 constants: Optional[ModelConstants] = None, threads: Optional[int] = None) -> AssumptionReport:
    declared = None if constants is None else constants.K2
    return _ratio_probe('A4-growth', lambda s: growth_terms(spec, op, s), op, sampler, n, declared, threads)


def probe_A2_A4(spec: Union[DriftSpec, NoiseSpec], op: SpectralOperator, sampler: ProbeSampler, n: int,
                constants: Optional[ModelConstants] = None, threads: Optional[int] = None) -> AssumptionReport:
    """
    Lipschitz estimate of Psi in |.|_2 + W2 (A2) or of B in ||.||_H + W2 (A4).

    Degenerate pairs (u = v and mu = nu) are skipped. For a noise spec the growth estimate
    is attached under extra['K2_estimate'] and extra['K2_violation'].

    :param spec: DriftSpec or NoiseSpec
    :param op:
    :param sampler:
    :param n: sample count, at least 2
    :param constants: declared constants; without them the estimate itself is the reference
    :param threads:
    :return: AssumptionReport
    """
    if n < 2:
        raise ValueError('Lipschitz probe needs at least two samples')
    if isinstance(spec, DriftSpec):
        declared = None if constants is None else constants.alpha0
        return _ratio_probe('A2', lambda s: a2_terms(spec, op, s), op, sampler, n, declared, threads)
    declared = None if constants is None else constants.K1
    report = _ratio_probe('A4', lambda s: a4_terms(spec, op, s), op, sampler, n, declared, threads)
    growth = probe_growth(spec, op, sampler, n, constants, threads)
    return report.model_copy(update={'extra': {'K2_estimate': growth.estimated_constant,
                                                'K2_violation': growth.worst_violation}})


# -- (A3) ---------------------------------------------------------------------------------------------------------

def a3_violation(spec: DriftSpec, op: SpectralOperator, constants: ModelConstants,
                 sample: Dict[str, Any]) -> Tuple[float, float]:
    """(violation, largest alpha1 this sample allows)."""
    dpsi = psi_coefficients(spec, op, sample['u'], sample['mu']) - psi_coefficients(spec, op, sample['v'], sample['nu'])
    du = sample['u'] - sample['v']
    w_sq = w2_value(op, sample['mu'], sample['nu']) ** 2
    pairing = 2.0 * float(inner(op, NormSpace.L2, dpsi, du))
    psi_sq = float(norm_squared(op, NormSpace.L2, dpsi))
    slack = pairing + constants.alpha2 * w_sq + constants.alpha3 * float(norm_squared(op, NormSpace.F12DUAL, du))
    allowed = slack / psi_sq if psi_sq > 0 else np.inf
    return constants.alpha1 * psi_sq - slack, allowed


def probe_A3(spec: DriftSpec, op: SpectralOperator, constants: ModelConstants, sampler: ProbeSampler, n: int,
             threads: Optional[int] = None) -> AssumptionReport:
    """2<dPsi, du>_2 >= alpha1 |dPsi|_2^2 - alpha2 W2^2 - alpha3 ||du||_H^2 over the samples."""
    if constants.alpha1 <= 0:
        raise ValueError('alpha1 must be positive')
    violations, allowed = _sweep(n, lambda i: a3_violation(spec, op, constants, sampler.pair(i, op)), threads,
                                 'probe A3')
    return _report('A3', violations, lambda i: sampler.pair(i, op), float(np.min(allowed)), constants.alpha1)


# -- energy inequalities of the regularized operator -----------------------------------------------------------------

def _operator_pairing(op: SpectralOperator, eps: float, w: np.ndarray, u: np.ndarray) -> float:
    """<(L - eps) w, u> between V* and V."""
    return float(np.sum(-(op.lam + eps) / (1.0 + op.lam) * w * u))


def h2_violation(model: ModelSpec, op: SpectralOperator, constants: ModelConstants, eps: float, lam: float,
                 sample: Dict[str, Any]) -> float:
    u, mu = sample['u'], sample['mu']
    w = psi_coefficients(model.drift, op, u, mu) + lam * u
    lhs = 2.0 * _operator_pairing(op, eps, w, u) + float(hs_norm_squared(model.noise, op, u[None, :], mu)[0])
    u_l2 = float(norm(op, NormSpace.L2, u))
    rhs = constants.c * float(norm_squared(op, NormSpace.F12DUAL, u)) + constants.c * second_moment(mu, op) \
        - constants.delta * u_l2 ** constants.alpha_coer + constants.f_bound
    return lhs - rhs


def h3_violation(model: ModelSpec, op: SpectralOperator, constants: ModelConstants, eps: float, lam: float,
                 sample: Dict[str, Any]) -> float:
    u, v, mu, nu = sample['u'], sample['v'], sample['mu'], sample['nu']
    dw = psi_coefficients(model.drift, op, u, mu) - psi_coefficients(model.drift, op, v, nu) + lam * (u - v)
    K = noise_modes(model.noise, op)
    db = amplitudes(model.noise, op, u[None, :], mu)[0] - amplitudes(model.noise, op, v[None, :], nu)[0]
    lhs = 2.0 * _operator_pairing(op, eps, dw, u - v) + float(np.sum(op.weights(NormSpace.F12DUAL)[:K] * db * db))
    rhs = constants.c * (float(norm_squared(op, NormSpace.F12DUAL, u - v)) + w2_value(op, mu, nu) ** 2)
    return lhs - rhs


def probe_H2_H3(model: ModelSpec, op: SpectralOperator, constants: ModelConstants, eps: float, lam: float,
                sampler: ProbeSampler, n: int, threads: Optional[int] = None) -> List[AssumptionReport]:
    """
    Coercivity and monotonicity of A = (L - eps)(Psi + lam u) with B in the triple
    V = L^2, H = F12dual, against the declared c, delta, alpha_coer and f_bound.
    """
    reports = []
    for name, fn in (('H2', h2_violation), ('H3', h3_violation)):
        violations, _ = _sweep(n, lambda i: (fn(model, op, constants, eps, lam, sampler.pair(i, op)), 0.0), threads,
                               F"probe {name}")
        reports.append(_report(name, violations, lambda i: sampler.pair(i, op),
                               float(np.max(violations)), constants.c))
    return reports


def replay_witness(report: AssumptionReport, op: SpectralOperator, spec: Union[DriftSpec, NoiseSpec, ModelSpec],
                   constants: Optional[ModelConstants] = None, eps: float = 0.0, lam: float = 0.0) -> float:
    """Re-evaluate the violation of a report's witness."""
    if report.witness is None:
        raise ValueError(F"{report.hypothesis} report has no witness")
    sample = _decode(report.witness)
    hypothesis = report.hypothesis
    if hypothesis.startswith('A1'):
        return a1_violation(spec, op, sample)
    if hypothesis == 'A3':
        return a3_violation(spec, op, constants, sample)[0]
    if hypothesis == 'H2':
        return h2_violation(spec, op, constants, eps, lam, sample)
    if hypothesis == 'H3':
        return h3_violation(spec, op, constants, eps, lam, sample)
    terms = {'A2': a2_terms, 'A4': a4_terms, 'A4-growth': growth_terms}[hypothesis]
    lhs, rhs = terms(spec, op, sample)
    reference = report.declared_constant if report.declared_constant is not None else report.estimated_constant
    return lhs - reference * rhs
