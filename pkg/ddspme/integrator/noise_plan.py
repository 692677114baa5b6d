import logging

import numpy as np
from pydantic import Field as PydanticField
from scipy.special import ndtri

from ddspme.common import SpecModelBase
from ddspme.integrator.grid import TimeGrid

LOGGER = logging.getLogger(__name__)

_WORDS_PER_BLOCK = 4
_TWO_POW_MINUS_53 = 2.0 ** -53


class NoisePlan(SpecModelBase):
    """
    Counter-based Brownian increments: the draw for (particle p, global step g, mode k) is word
    g * K + k of the Philox stream keyed by (seed, p). Any window of any grid reproduces the
    increments of the full run bitwise.
    """
    seed: int = PydanticField(ge=0, lt=2 ** 64)
    K: int = PydanticField(ge=1)
    scheme: str = 'philox'

    def _uniforms(self, particle: int, first_word: int, count: int) -> np.ndarray:
        block, skip = divmod(first_word, _WORDS_PER_BLOCK)
        key = np.array([self.seed, particle], dtype=np.uint64)
        counter = np.array([block, 0, 0, 0], dtype=np.uint64)
        raw = np.random.Philox(key=key, counter=counter).random_raw(skip + count)[skip:]
        return ((raw >> np.uint64(11)).astype(float) + 0.5) * _TWO_POW_MINUS_53

    def normals(self, grid: TimeGrid, M: int, particle_offset: int = 0) -> np.ndarray:
        """Standard normals of shape (n_steps, M, K)."""
        first_word = grid.step_offset * self.K
        count = grid.n_steps * self.K
        out = np.empty((grid.n_steps, M, self.K))
        for p in range(M):
            u = self._uniforms(particle_offset + p, first_word, count)
            out[:, p, :] = ndtri(u).reshape(grid.n_steps, self.K)
        return out

    def increments(self, grid: TimeGrid, M: int, particle_offset: int = 0) -> np.ndarray:
        """Brownian increments dW ~ N(0, dt) of shape (n_steps, M, K)."""
        return np.sqrt(grid.dt) * self.normals(grid, M, particle_offset)
