import logging
from typing import Literal, Optional, Union

import numpy as np
from pydantic import Field as PydanticField

from ddspme.common import DimensionMismatchError, SpecModelBase
from ddspme.config import DEFAULT_NOISE_MODES
from ddspme.measures import EmpiricalMeasure
from ddspme.spectral import Field, FieldLike, NormSpace, SpectralOperator

LOGGER = logging.getLogger(__name__)


class NoiseSpec(SpecModelBase):
    """
    B(u, mu) e_k = (1/M) sum_{z in mu} g_k(u - alpha z), with base maps
    g_k(u) = d_k (sigma0 + sigma1 phi(u_k)) e_k, d_k = (1 + lambda_k)^{-1} when damped, else 1.

    phi is linear or sine; both are 1-Lipschitz and vanish at 0.
    """
    K: Optional[int] = PydanticField(default=None, ge=1)
    sigma0: float = PydanticField(default=0.0, ge=0.0)
    sigma1: float = PydanticField(default=0.0, ge=0.0)
    phi: Literal['linear', 'sine'] = 'sine'
    damped: bool = True
    coupling_alpha: float = 0.0
    mixture_size: Optional[int] = PydanticField(default=None, ge=1)

    @property
    def measure_free(self) -> bool:
        return self.coupling_alpha == 0.0 or self.sigma1 == 0.0

    @property
    def silent(self) -> bool:
        return self.sigma0 == 0.0 and self.sigma1 == 0.0


def noise_modes(spec: NoiseSpec, op: SpectralOperator) -> int:
    if spec.K is None:
        return min(op.N, DEFAULT_NOISE_MODES)
    if spec.K > op.N:
        raise DimensionMismatchError(F"{spec.K} noise modes exceed the {op.N} retained modes")
    return spec.K


def damping(spec: NoiseSpec, op: SpectralOperator) -> np.ndarray:
    K = noise_modes(spec, op)
    if spec.damped:
        return 1.0 / (1.0 + op.lam[:K])
    return np.ones(K)


def _atoms(spec: NoiseSpec, mu: EmpiricalMeasure, K: int) -> np.ndarray:
    z = mu.particles
    if spec.mixture_size is not None and spec.mixture_size < mu.M:
        stride = mu.M // spec.mixture_size
        z = z[::stride][:spec.mixture_size]
    return z[:, :K]


def amplitudes(spec: NoiseSpec, op: SpectralOperator, X: np.ndarray, mu: Optional[EmpiricalMeasure]) -> np.ndarray:
    """
    Mode amplitudes b_k(x, mu) with B(x, mu) e_k = b_k e_k, for every coefficient vector x on the
    trailing axis of X; shape X.shape[:-1] + (K,).

    The atom average is exact: linear phi averages the atoms, sine phi uses the angle-addition
    identity. The measure is not touched when alpha is 0.
    """
    K = noise_modes(spec, op)
    d = damping(spec, op)
    x = X[..., :K]
    if spec.sigma1 == 0.0:
        return np.broadcast_to(d * spec.sigma0, x.shape).copy()
    if spec.coupling_alpha == 0.0:
        phi = x if spec.phi == 'linear' else np.sin(x)
        return d * (spec.sigma0 + spec.sigma1 * phi)
    if mu is None or mu.M < 1:
        raise ValueError('noise coupling needs a nonempty measure')
    mu.check_dimension(op)
    z = spec.coupling_alpha * _atoms(spec, mu, K)
    if spec.phi == 'linear':
        phi = x - z.mean(axis=0)
    else:
        phi = np.sin(x) * np.cos(z).mean(axis=0) - np.cos(x) * np.sin(z).mean(axis=0)
    return d * (spec.sigma0 + spec.sigma1 * phi)


def noise_increment(spec: NoiseSpec, op: SpectralOperator, X: np.ndarray, mu: Optional[EmpiricalMeasure],
                    dW: np.ndarray) -> np.ndarray:
    """sum_k B(x, mu) e_k dW_k for each particle; dW has shape (..., K)."""
    out = np.zeros_like(X)
    if spec.silent:
        return out
    K = noise_modes(spec, op)
    out[..., :K] = amplitudes(spec, op, X, mu) * dW
    return out


def base_map(spec: NoiseSpec, op: SpectralOperator, u: FieldLike, k: int) -> Field:
    """g_k(u)."""
    K = noise_modes(spec, op)
    if not 0 <= k < K:
        raise IndexError(F"noise mode {k} out of range [0, {K})")
    coeffs = u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)
    phi = coeffs[k] if spec.phi == 'linear' else np.sin(coeffs[k])
    out = np.zeros(op.N)
    out[k] = damping(spec, op)[k] * (spec.sigma0 + spec.sigma1 * phi)
    return Field(out)


def eval_noise(spec: NoiseSpec, t: float, u: FieldLike, mu: EmpiricalMeasure, k: int,
               op: SpectralOperator) -> Field:
    """
    B(t, u, mu) e_k as a field.

    :param spec:
    :param t: time, unused
    :param u:
    :param mu: nonempty empirical law
    :param k: noise mode, 0 <= k < K
    :param op:
    :return:
    """
    K = noise_modes(spec, op)
    if not 0 <= k < K:
        raise IndexError(F"noise mode {k} out of range [0, {K})")
    if mu is None or mu.M < 1:
        raise ValueError('eval_noise needs a nonempty measure')
    coeffs = u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)
    if coeffs.shape[-1] != op.N:
        raise DimensionMismatchError(F"expected {op.N} coefficients, got shape {coeffs.shape}")
    out = np.zeros(op.N)
    out[k] = amplitudes(spec, op, coeffs[None, :], mu)[0, k]
    return Field(out)


def hs_norm_squared(spec: NoiseSpec, op: SpectralOperator, X: np.ndarray, mu: Optional[EmpiricalMeasure],
                    space: Union[NormSpace, str] = NormSpace.F12DUAL) -> np.ndarray:
    """sum_k ||B(x, mu) e_k||^2 in the given space, per coefficient vector."""
    K = noise_modes(spec, op)
    b = amplitudes(spec, op, X, mu)
    return np.sum(op.weights(space)[:K] * b * b, axis=-1)


def forcing_norm_squared(spec: NoiseSpec, op: SpectralOperator) -> float:
    """||B(0, delta_0)||^2 into H."""
    zero = np.zeros((1, op.N))
    return float(hs_norm_squared(spec, op, zero, EmpiricalMeasure(zero), NormSpace.F12DUAL)[0])
