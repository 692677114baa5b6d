import logging
from typing import List

import numpy as np
from pydantic import Field as PydanticField

from ddspme.common import SpecModelBase

LOGGER = logging.getLogger(__name__)


class TimeGrid(SpecModelBase):
    """
    Uniform grid t_j = origin + dt * (step_offset + j), j = 0..n_steps.

    Windows of a grid share origin and dt, so their nodes are bitwise equal to the parent's nodes.
    """
    origin: float = 0.0
    dt: float = PydanticField(gt=0.0)
    n_steps: int = PydanticField(ge=1)
    step_offset: int = PydanticField(default=0, ge=0)

    @classmethod
    def span(cls, t_start: float, t_end: float, n_steps: int) -> 'TimeGrid':
        if not t_end > t_start:
            raise ValueError(F"empty time span [{t_start}, {t_end}]")
        return cls(origin=t_start, dt=(t_end - t_start) / n_steps, n_steps=n_steps)

    @property
    def times(self) -> np.ndarray:
        return self.origin + self.dt * np.arange(self.step_offset, self.step_offset + self.n_steps + 1)

    @property
    def t_start(self) -> float:
        return float(self.origin + self.dt * self.step_offset)

    @property
    def t_end(self) -> float:
        return float(self.origin + self.dt * (self.step_offset + self.n_steps))

    def global_step(self, j: int) -> int:
        return self.step_offset + j

    def window(self, i0: int, i1: int) -> 'TimeGrid':
        """Sub-grid over local steps [i0, i1)."""
        if not 0 <= i0 < i1 <= self.n_steps:
            raise ValueError(F"window [{i0}, {i1}) outside 0..{self.n_steps}")
        return TimeGrid(origin=self.origin, dt=self.dt, n_steps=i1 - i0, step_offset=self.step_offset + i0)

    def split(self, steps_per_window: int) -> List['TimeGrid']:
        steps_per_window = max(1, int(steps_per_window))
        return [self.window(i0, min(i0 + steps_per_window, self.n_steps))
                for i0 in range(0, self.n_steps, steps_per_window)]
