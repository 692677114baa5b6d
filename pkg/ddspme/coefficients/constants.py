import logging
from typing import Optional

import numpy as np
from pydantic import Field as PydanticField

from ddspme.coefficients.drift import DriftSpec, lipschitz
from ddspme.coefficients.noise import NoiseSpec, damping, forcing_norm_squared, noise_modes
from ddspme.common import SpecModelBase
from ddspme.spectral import SpectralOperator

LOGGER = logging.getLogger(__name__)

# coercivity floor when no viscosity is present
DELTA_FLOOR = 1e-12


class ModelConstants(SpecModelBase):
    alpha0: float = PydanticField(ge=0.0)
    alpha1: float = PydanticField(gt=0.0)
    alpha2: float = PydanticField(default=0.0, ge=0.0)
    alpha3: float = PydanticField(default=0.0, ge=0.0)
    K1: float = PydanticField(default=0.0, ge=0.0)
    K2: float = PydanticField(default=0.0, ge=0.0)
    c: float
    delta: float = PydanticField(gt=0.0)
    alpha_coer: float = PydanticField(default=2.0, gt=1.0)
    f_bound: float = PydanticField(default=0.0, ge=0.0)
    # contraction constant of the Picard map; bootstrapped when absent
    c_contraction: Optional[float] = PydanticField(default=None, gt=0.0)

    def scaled(self, factor: float) -> 'ModelConstants':
        """
        Weaken (factor > 1) or strengthen (factor < 1) every declared claim: upper bounds are
        multiplied by factor, the lower bounds alpha1 and delta divided by it.
        """
        if factor <= 0:
            raise ValueError('scale factor must be positive')
        return self.model_copy(update={
            'alpha0': self.alpha0 * factor,
            'alpha1': self.alpha1 / factor,
            'alpha2': self.alpha2 * factor,
            'alpha3': self.alpha3 * factor,
            'K1': self.K1 * factor,
            'K2': self.K2 * factor,
            'c': self.c * factor,
            'delta': self.delta / factor,
            'f_bound': self.f_bound * factor,
            'c_contraction': None if self.c_contraction is None else self.c_contraction * factor,
        })


class ModelSpec(SpecModelBase):
    drift: DriftSpec = DriftSpec()
    noise: NoiseSpec = NoiseSpec()
    constants: Optional[ModelConstants] = None

    @property
    def measure_free(self) -> bool:
        return self.drift.measure_free and self.noise.measure_free

    def resolved_constants(self, op: SpectralOperator, eps: float = 0.0, lam: float = 0.0) -> ModelConstants:
        if self.constants is not None:
            return self.constants
        return derive_constants(self.drift, self.noise, op, eps, lam)


def drift_constants(drift: DriftSpec):
    """(alpha0, alpha1, alpha2, alpha3) for psi0(u + kappa stat(mu)) with psi0 monotone Lipschitz."""
    lip = lipschitz(drift)
    kappa = 0.0 if drift.measure_free else abs(drift.kappa)
    alpha0 = lip * max(1.0, kappa)
    alpha1 = 1.0 / lip if lip > 0 else 1.0
    alpha2 = kappa ** 2 * lip
    return alpha0, alpha1, alpha2, 0.0


def noise_constants(noise: NoiseSpec, op: SpectralOperator):
    """(K1, K2) for the averaged base maps; C0 = sigma1^2 is the squared Lipschitz constant of g."""
    K = noise_modes(noise, op)
    d = damping(noise, op)
    alpha_sq = noise.coupling_alpha ** 2
    c0 = noise.sigma1 ** 2
    K1 = 2.0 * c0 * max(1.0, alpha_sq)
    spread = 1.0 if noise.damped else 1.0 + float(np.max(op.lam[:K]))
    K2 = max(2.0 * noise.sigma0 ** 2 * float(np.sum(d * d)), 4.0 * c0, 4.0 * c0 * alpha_sq * spread)
    return K1, K2


def derive_constants(drift: DriftSpec, noise: NoiseSpec, op: SpectralOperator, eps: float = 0.0,
                     lam: float = 0.0) -> ModelConstants:
    """
    Constants that the built-in kinds satisfy by construction.

    c covers both the energy (coercivity) and the one-sided Lipschitz (monotonicity) inequalities of
    A = (L - eps)(Psi + lam u); c_contraction is the monotonicity constant alone.

    :param drift:
    :param noise:
    :param op:
    :param eps: regularization of L
    :param lam: viscosity
    :return: ModelConstants
    """
    alpha0, alpha1, alpha2, alpha3 = drift_constants(drift)
    K1, K2 = noise_constants(noise, op)
    psi_term = (1.0 - eps) ** 2 / alpha1 if lipschitz(drift) > 0 else 0.0
    viscous = 2.0 * lam * (1.0 - eps)
    c_energy = max(alpha3 + psi_term + viscous + 2.0 * K1, alpha2 + 2.0 * K1)
    c_monotone = max(alpha3 + psi_term + viscous + K1, alpha2 + K1)
    constants = ModelConstants(
        alpha0=alpha0, alpha1=alpha1, alpha2=alpha2, alpha3=alpha3, K1=K1, K2=K2,
        c=c_energy,
        delta=2.0 * lam if lam > 0 else DELTA_FLOOR,
        alpha_coer=2.0,
        f_bound=2.0 * forcing_norm_squared(noise, op),
        c_contraction=c_monotone if c_monotone > 0 else None,
    )
    LOGGER.debug('derived constants %s', constants)
    return constants
