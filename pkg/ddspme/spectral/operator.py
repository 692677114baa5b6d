import logging
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import Field as PydanticField, PrivateAttr, field_validator, model_validator
from scipy import fft
from scipy.special import roots_genlaguerre

from ddspme.common import DimensionMismatchError, QuadratureError, SpecModelBase

LOGGER = logging.getLogger(__name__)


class NormSpace(str, Enum):
    L2 = 'L2'
    F12 = 'F12'
    F12DUAL = 'F12dual'


class SpectralOperator(SpecModelBase):
    """
    Diagonal model of L: L e_k = -lambdas[k] e_k in the real Fourier basis of the 1-D torus,
    ordered 0, cos 1, sin 1, cos 2, sin 2, ... (Nyquist cosine last for even N).
    """
    label: str = 'custom'
    N: int = PydanticField(ge=1)
    lambdas: List[float]

    _lam: np.ndarray = PrivateAttr()

    @field_validator('lambdas')
    @classmethod
    def _nonnegative(cls, value):
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError('lambdas must be finite')
        if np.any(arr < 0):
            raise ValueError('lambdas must be nonnegative (L negative definite)')
        return value

    @model_validator(mode='after')
    def _length(self):
        if len(self.lambdas) != self.N:
            raise ValueError(F"expected {self.N} lambdas, got {len(self.lambdas)}")
        return self

    def model_post_init(self, __context):
        lam = np.asarray(self.lambdas, dtype=float)
        lam.setflags(write=False)
        self._lam = lam

    @property
    def lam(self) -> np.ndarray:
        return self._lam

    def weights(self, space: Union[NormSpace, str]) -> np.ndarray:
        """Per-mode weight w_k with ||u||^2 = sum w_k u_k^2."""
        space = NormSpace(space)
        if space is NormSpace.L2:
            return np.ones(self.N)
        if space is NormSpace.F12:
            return 1.0 + self._lam
        return 1.0 / (1.0 + self._lam)

    @property
    def max_lambda(self) -> float:
        return float(self._lam.max())


class SobolevScale(SpecModelBase):
    s: float = PydanticField(ge=-1.0, le=1.0)


class QuadraturePolicy(SpecModelBase):
    """
    Generalized Gauss-Laguerre rule for the gamma transform.

    Each mode is integrated after the substitution s = sigma / (1 + stretch * lambda_k), which keeps
    the remaining integrand e^{-gamma sigma} with gamma < 1. stretch = 0 is the plain rule.
    """
    nodes: int = PydanticField(default=64, ge=2)
    stretch: float = PydanticField(default=0.5, ge=0.0, le=1.0)
    tol: float = PydanticField(default=1e-10, gt=0.0)


class Field:
    """A state u in V given by its coefficients in the eigenbasis of L."""
    __slots__ = ('_coeffs',)

    def __init__(self, coeffs):
        arr = np.array(coeffs, dtype=float)
        if arr.ndim != 1:
            raise DimensionMismatchError(F"field coefficients must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError('field coefficients must be finite')
        arr.setflags(write=False)
        self._coeffs = arr

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def N(self) -> int:
        return self._coeffs.shape[0]

    @classmethod
    def zeros(cls, N: int) -> 'Field':
        return cls(np.zeros(N))

    @classmethod
    def basis(cls, N: int, k: int) -> 'Field':
        arr = np.zeros(N)
        arr[k] = 1.0
        return cls(arr)

    def __add__(self, other: 'Field') -> 'Field':
        return Field(self._coeffs + other.coeffs)

    def __sub__(self, other: 'Field') -> 'Field':
        return Field(self._coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> 'Field':
        return Field(self._coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> 'Field':
        return Field(-self._coeffs)

    def __eq__(self, other):
        return isinstance(other, Field) and np.array_equal(self._coeffs, other.coeffs)

    def __repr__(self):
        return F"Field(N={self.N}, coeffs={self._coeffs!r})"


FieldLike = Union[Field, np.ndarray]


def _unwrap(op: SpectralOperator, u: FieldLike) -> Tuple[np.ndarray, bool]:
    is_field = isinstance(u, Field)
    arr = u.coeffs if is_field else np.asarray(u, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != op.N:
        raise DimensionMismatchError(F"expected trailing dimension {op.N}, got shape {arr.shape}")
    return arr, is_field


def _wrap(arr: np.ndarray, is_field: bool) -> FieldLike:
    return Field(arr) if is_field else arr


def mode_frequencies(N: int) -> np.ndarray:
    """Torus frequency of each basis mode: 0, 1, 1, 2, 2, ..."""
    k = np.arange(N)
    return (k + 1) // 2


def make_fractional_laplacian(N: int, alpha: float,
                              base_frequencies: Optional[Callable[[int], float]] = None,
                              label: Optional[str] = None, length: float = 2.0 * np.pi) -> SpectralOperator:
    """
    L = -(-Laplacian)^alpha on the torus of the given length: lambda_k = |2 pi omega_k / length|^(2 alpha).

    :param N: number of retained modes
    :param alpha: fractional order in (0, 1]
    :param base_frequencies: optional mode-index -> frequency map, defaults to mode_frequencies
    :param label:
    :param length: torus length; longer tori crowd the spectrum towards 0
    :return: SpectralOperator
    """
    if N < 1:
        raise ValueError('N must be at least 1')
    if not 0.0 < alpha <= 1.0:
        raise ValueError('alpha outside (0,1]')
    if length <= 0:
        raise ValueError(F"torus length {length} must be positive")
    if base_frequencies is None:
        omega = mode_frequencies(N).astype(float)
    else:
        omega = np.array([float(base_frequencies(k)) for k in range(N)])
    lambdas = np.abs(omega * (2.0 * np.pi / length)) ** (2.0 * alpha)
    if label is None:
        label = F"fractional_laplacian(alpha={alpha})" if length == 2.0 * np.pi else \
            F"fractional_laplacian(alpha={alpha}, length={length:.6g})"
    return SpectralOperator(label=label, N=N, lambdas=lambdas.tolist())


def make_explicit_operator(lambdas: Sequence[float], label: str = 'explicit') -> SpectralOperator:
    lambdas = [float(x) for x in lambdas]
    return SpectralOperator(label=label, N=len(lambdas), lambdas=lambdas)


def to_grid(op: SpectralOperator, u: FieldLike) -> np.ndarray:
    """
    Point values on the N equispaced torus nodes; |u|_2^2 = mean of squared grid values.

    Works on any array whose trailing axis holds coefficients.
    """
    coeffs, _ = _unwrap(op, u)
    N = op.N
    half = N // 2
    spec = np.zeros(coeffs.shape[:-1] + (half + 1,), dtype=complex)
    spec[..., 0] = coeffs[..., 0] * np.sqrt(N)
    n_pairs = (N - 1) // 2
    if n_pairs:
        scale = np.sqrt(N / 2.0)
        spec[..., 1:n_pairs + 1] = scale * (coeffs[..., 1:2 * n_pairs:2] - 1j * coeffs[..., 2:2 * n_pairs + 1:2])
    if N % 2 == 0 and N > 1:
        spec[..., half] = coeffs[..., N - 1] * np.sqrt(N)
    return fft.irfft(spec, n=N, axis=-1, norm='ortho')


def from_grid(op: SpectralOperator, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    N = op.N
    if values.shape[-1] != N:
        raise DimensionMismatchError(F"expected {N} grid values, got shape {values.shape}")
    spec = fft.rfft(values, axis=-1, norm='ortho')
    coeffs = np.empty(values.shape, dtype=float)
    coeffs[..., 0] = spec[..., 0].real / np.sqrt(N)
    n_pairs = (N - 1) // 2
    if n_pairs:
        scale = np.sqrt(N / 2.0)
        coeffs[..., 1:2 * n_pairs:2] = spec[..., 1:n_pairs + 1].real / scale
        coeffs[..., 2:2 * n_pairs + 1:2] = -spec[..., 1:n_pairs + 1].imag / scale
    if N % 2 == 0 and N > 1:
        coeffs[..., N - 1] = spec[..., N // 2].real / np.sqrt(N)
    return coeffs


def scale_apply(op: SpectralOperator, s: Union[SobolevScale, float], u: FieldLike) -> FieldLike:
    """(1-L)^s u, mode by mode."""
    s = s.s if isinstance(s, SobolevScale) else float(s)
    coeffs, is_field = _unwrap(op, u)
    return _wrap((1.0 + op.lam) ** s * coeffs, is_field)


def shifted_scale_apply(op: SpectralOperator, shift: float, s: float, u: FieldLike) -> FieldLike:
    """(shift-L)^s u; shift must be positive when s < 0."""
    if shift < 0 or (shift == 0 and s < 0):
        raise ValueError(F"shift {shift} invalid for exponent {s}")
    coeffs, is_field = _unwrap(op, u)
    return _wrap((shift + op.lam) ** s * coeffs, is_field)


def norm_squared(op: SpectralOperator, space: Union[NormSpace, str], u: FieldLike) -> Union[float, np.ndarray]:
    coeffs, _ = _unwrap(op, u)
    return np.sum(op.weights(space) * coeffs * coeffs, axis=-1)


def norm(op: SpectralOperator, space: Union[NormSpace, str], u: FieldLike) -> Union[float, np.ndarray]:
    """
    :param op:
    :param space: L2, F12 or F12dual
    :param u: field or array of coefficient vectors
    :return: the norm, one value per coefficient vector
    """
    return np.sqrt(norm_squared(op, space, u))


def inner(op: SpectralOperator, space: Union[NormSpace, str], u: FieldLike, v: FieldLike) -> Union[float, np.ndarray]:
    cu, _ = _unwrap(op, u)
    cv, _ = _unwrap(op, v)
    return np.sum(op.weights(space) * cu * cv, axis=-1)


def semigroup(op: SpectralOperator, t: float, u: FieldLike) -> FieldLike:
    """T_t u = e^{tL} u."""
    if t < 0:
        raise ValueError(F"semigroup time must be nonnegative, got {t}")
    coeffs, is_field = _unwrap(op, u)
    return _wrap(np.exp(-t * op.lam) * coeffs, is_field)


@lru_cache(maxsize=64)
def _laguerre_rule(nodes: int, a: float) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_genlaguerre(nodes, a)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gamma_multipliers(lam: np.ndarray, r: float, nodes: int, stretch: float) -> np.ndarray:
    a = r / 2.0 - 1.0
    x, w = _laguerre_rule(nodes, a)
    beta = 1.0 + stretch * lam
    rate = (1.0 + lam) / beta - 1.0
    # quadrature mass sum(w) is Gamma(r/2)
    integral = np.exp(-np.outer(rate, x)) @ w / w.sum()
    return beta ** (-r / 2.0) * integral


def gamma_transform(op: SpectralOperator, r: float, u: FieldLike,
                    quad: Optional[QuadraturePolicy] = None) -> FieldLike:
    """
    V_r u = Gamma(r/2)^{-1} int_0^inf s^{r/2-1} e^{-s} T_s u ds by Gauss-Laguerre quadrature.

    The rule is checked against one with half again as many nodes; a disagreement above
    quad.tol raises QuadratureError.

    :param op:
    :param r: positive order
    :param u:
    :param quad: QuadraturePolicy
    :return: V_r u, approximately (1-L)^{-r/2} u
    """
    if r <= 0:
        raise ValueError(F"gamma transform order must be positive, got {r}")
    quad = quad or QuadraturePolicy()
    coeffs, is_field = _unwrap(op, u)
    mult = _gamma_multipliers(op.lam, r, quad.nodes, quad.stretch)
    check = _gamma_multipliers(op.lam, r, quad.nodes + quad.nodes // 2, quad.stretch)
    scale = np.maximum(np.abs(check), np.finfo(float).tiny)
    error = float(np.max(np.abs(mult - check) / scale))
    if not np.isfinite(error) or error > quad.tol:
        raise QuadratureError(F"gamma transform with {quad.nodes} nodes missed tolerance {quad.tol}: "
                              F"estimated relative error {error:.3e}")
    LOGGER.debug('gamma transform r=%s nodes=%s error estimate %.3e', r, quad.nodes, error)
    return _wrap(mult * coeffs, is_field)
