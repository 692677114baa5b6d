import logging
from typing import Literal

import numpy as np
from pydantic import Field as PydanticField

from ddspme.common import SpecModelBase
from ddspme.measures import EmpiricalMeasure
from ddspme.spectral import SpectralOperator

LOGGER = logging.getLogger(__name__)

# key word that separates initial-law streams from noise streams of the same seed
_INIT_STREAM = 0x1A17


class InitialLaw(SpecModelBase):
    """
    Law of X(0): gaussian draws coefficients x_k = mean [k == 0] + scale (1 + lambda_k)^{-decay/2} z_k,
    dirac puts every particle at the constant field of the given mean.
    """
    kind: Literal['gaussian', 'dirac'] = 'gaussian'
    mean: float = 0.0
    scale: float = PydanticField(default=1.0, ge=0.0)
    decay: float = PydanticField(default=1.0, ge=0.0)

    def sample(self, op: SpectralOperator, M: int, seed: int) -> EmpiricalMeasure:
        if M < 1:
            raise ValueError('initial law needs at least one particle')
        X = np.zeros((M, op.N))
        if self.kind == 'gaussian':
            key = np.array([seed, _INIT_STREAM], dtype=np.uint64)
            rng = np.random.Generator(np.random.Philox(key=key))
            X = self.scale * (1.0 + op.lam) ** (-0.5 * self.decay) * rng.standard_normal((M, op.N))
        X[:, 0] += self.mean
        LOGGER.debug('sampled %s initial particles (%s, seed %s)', M, self.kind, seed)
        return EmpiricalMeasure(X)
