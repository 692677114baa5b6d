import logging
from typing import Callable, Dict, Literal, Optional, Union

import numpy as np
from pydantic import PrivateAttr, model_validator

from ddspme.common import DimensionMismatchError, SpecModelBase
from ddspme.measures import EmpiricalMeasure, second_moment
from ddspme.spectral import Field, FieldLike, NormSpace, SpectralOperator, from_grid, to_grid

LOGGER = logging.getLogger(__name__)

DriftKind = Literal['zero', 'identity', 'tanh', 'stefan', 'power_regularized', 'custom']
CouplingKind = Literal['none', 'second_moment', 'mean_shift']

_DEFAULT_PARAMS = {
    'zero': {},
    'identity': {},
    'tanh': {},
    'stefan': {'k1': 1.0, 'k2': 1.0, 'rho': 1.0, 'delta_reg': 0.01},
    'power_regularized': {'m': 2.0, 'r_clip': 1.0},
    'custom': {},
}


class DriftSpec(SpecModelBase):
    """
    Psi(u, mu) = psi0(u + kappa * stat(mu)) applied pointwise on the grid.

    stat is 0 (none), sqrt(mu(||.||_H^2)) (second_moment) or the mean zero-mode coefficient scaled
    by (1 + lambda_0)^{-1/2} (mean_shift); both are 1-Lipschitz in W2.
    """
    kind: DriftKind = 'identity'
    params: Dict[str, float] = {}
    coupling: CouplingKind = 'none'
    kappa: float = 0.0

    _fn: Optional[Callable[[np.ndarray], np.ndarray]] = PrivateAttr(default=None)

    @model_validator(mode='after')
    def _check_params(self):
        allowed = set(_DEFAULT_PARAMS[self.kind])
        if self.kind == 'custom':
            allowed = {'lipschitz'}
            if 'lipschitz' not in self.params:
                raise ValueError('custom drift needs a declared lipschitz constant')
        unknown = set(self.params) - allowed
        if unknown:
            raise ValueError(F"unknown {self.kind} drift params: {sorted(unknown)}")
        p = self.resolved_params
        if self.kind == 'stefan':
            if p['k1'] < 0 or p['k2'] < 0 or p['rho'] < 0:
                raise ValueError('stefan slopes and plateau width must be nonnegative')
            if p['delta_reg'] < 0:
                raise ValueError('stefan plateau slope delta_reg must be nonnegative')
        if self.kind == 'power_regularized':
            if p['m'] <= 1:
                raise ValueError('power exponent m must exceed 1')
            if p['r_clip'] <= 0:
                raise ValueError('clipping radius r_clip must be positive')
        if self.kind == 'custom' and p['lipschitz'] < 0:
            raise ValueError('lipschitz constant must be nonnegative')
        return self

    @property
    def resolved_params(self) -> Dict[str, float]:
        merged = dict(_DEFAULT_PARAMS[self.kind])
        merged.update(self.params)
        return merged

    @property
    def measure_free(self) -> bool:
        return self.coupling == 'none' or self.kappa == 0.0

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray], np.ndarray], lipschitz: float, coupling: CouplingKind = 'none',
               kappa: float = 0.0) -> 'DriftSpec':
        """A user map psi0; it must be nondecreasing, vanish at 0 and be lipschitz-Lipschitz."""
        spec = cls(kind='custom', params={'lipschitz': lipschitz}, coupling=coupling, kappa=kappa)
        spec._fn = fn
        return spec


def lipschitz(spec: DriftSpec) -> float:
    p = spec.resolved_params
    if spec.kind == 'zero':
        return 0.0
    if spec.kind in ('identity', 'tanh'):
        return 1.0
    if spec.kind == 'stefan':
        return max(p['k1'], p['k2'], p['delta_reg'])
    if spec.kind == 'power_regularized':
        return p['m'] * p['r_clip'] ** (p['m'] - 1.0)
    return p['lipschitz']


def _stefan(r: np.ndarray, k1: float, k2: float, rho: float, delta_reg: float) -> np.ndarray:
    return np.where(r < 0, k1 * r, np.where(r <= rho, delta_reg * r, delta_reg * rho + k2 * (r - rho)))


def _power(r: np.ndarray, m: float, r_clip: float) -> np.ndarray:
    a = np.abs(r)
    inside = a ** (m - 1.0) * r
    outside = np.sign(r) * (r_clip ** m + m * r_clip ** (m - 1.0) * (a - r_clip))
    return np.where(a <= r_clip, inside, outside)


def scalar_map(spec: DriftSpec) -> Callable[[np.ndarray], np.ndarray]:
    """psi0 as a vectorized real map."""
    p = spec.resolved_params
    if spec.kind == 'zero':
        return np.zeros_like
    if spec.kind == 'identity':
        return lambda r: np.array(r, dtype=float, copy=True)
    if spec.kind == 'tanh':
        return np.tanh
    if spec.kind == 'stefan':
        return lambda r: _stefan(np.asarray(r, dtype=float), p['k1'], p['k2'], p['rho'], p['delta_reg'])
    if spec.kind == 'power_regularized':
        return lambda r: _power(np.asarray(r, dtype=float), p['m'], p['r_clip'])
    if spec._fn is None:
        raise ValueError('custom drift has no callable attached; build it with DriftSpec.custom')
    fn = spec._fn
    return lambda r: np.asarray(fn(np.asarray(r, dtype=float)), dtype=float)


def coupling_statistic(spec: DriftSpec, op: SpectralOperator, mu: Optional[EmpiricalMeasure]) -> float:
    if spec.coupling == 'none':
        return 0.0
    if mu is None:
        raise ValueError(F"drift coupling {spec.coupling} needs a measure")
    if spec.coupling == 'second_moment':
        return float(np.sqrt(second_moment(mu, op, NormSpace.F12DUAL)))
    mu.check_dimension(op)
    return float(np.mean(mu.particles[:, 0]) / np.sqrt(1.0 + op.lam[0]))


def eval_psi_scalar(spec: DriftSpec, op: SpectralOperator, s: Union[float, np.ndarray],
                    mu: Optional[EmpiricalMeasure]) -> Union[float, np.ndarray]:
    """Psi(s, mu) for scalar state values s."""
    shift = 0.0 if spec.measure_free else spec.kappa * coupling_statistic(spec, op, mu)
    return scalar_map(spec)(np.asarray(s, dtype=float) + shift)


def psi_coefficients(spec: DriftSpec, op: SpectralOperator, X: np.ndarray,
                     mu: Optional[EmpiricalMeasure]) -> np.ndarray:
    """
    Psi applied to every coefficient vector on the trailing axis of X.

    The measure is read only when the drift is coupled.
    """
    if spec.kind == 'zero':
        return np.zeros_like(X)
    if spec.measure_free and spec.kind == 'identity':
        return np.array(X, dtype=float, copy=True)
    values = to_grid(op, X)
    if not spec.measure_free:
        values = values + spec.kappa * coupling_statistic(spec, op, mu)
    return from_grid(op, scalar_map(spec)(values))


def eval_psi(spec: DriftSpec, t: float, u: FieldLike, mu: Optional[EmpiricalMeasure],
             op: SpectralOperator) -> FieldLike:
    """
    Psi(t, u, mu) as a field: pointwise nonlinearity in grid space, back to coefficients.

    :param spec:
    :param t: time, unused by the time-homogeneous kinds
    :param u: field or coefficient array
    :param mu: empirical law entering the coupling
    :param op:
    :return: same type as u
    """
    is_field = isinstance(u, Field)
    X = u.coeffs if is_field else np.asarray(u, dtype=float)
    if X.shape[-1] != op.N:
        raise DimensionMismatchError(F"expected {op.N} coefficients, got shape {X.shape}")
    if mu is not None:
        mu.check_dimension(op)
    out = psi_coefficients(spec, op, X, mu)
    return Field(out) if is_field else out
