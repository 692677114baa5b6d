import json
import logging
from typing import List, Sequence, Union

import numpy as np

from ddspme.common import DimensionMismatchError, GridMismatchError
from ddspme.spectral import Field, NormSpace, SpectralOperator, norm_squared

LOGGER = logging.getLogger(__name__)

# nodes closer than this (relative) are the same time
TIME_TOLERANCE = 1e-9


def _readonly(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.setflags(write=False)
    return view


class EmpiricalMeasure:
    """Uniform empirical law (1/M) sum_i delta_{x_i} of M particles in H."""

    def __init__(self, particles: Union[np.ndarray, Sequence[Field]]):
        if len(particles) and isinstance(particles[0], Field):
            dims = {p.N for p in particles}
            if len(dims) != 1:
                raise DimensionMismatchError(F"particles have mixed dimensions {sorted(dims)}")
            particles = np.stack([p.coeffs for p in particles])
        arr = np.asarray(particles, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatchError(F"particles must be an (M, N) array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError('empirical measure needs at least one particle')
        self._particles = _readonly(arr)

    @property
    def particles(self) -> np.ndarray:
        return self._particles

    @property
    def M(self) -> int:
        return self._particles.shape[0]

    @property
    def N(self) -> int:
        return self._particles.shape[1]

    def atom(self, i: int) -> Field:
        return Field(self._particles[i])

    def check_dimension(self, op: SpectralOperator):
        if self.N != op.N:
            raise DimensionMismatchError(F"measure dimension {self.N} does not match operator dimension {op.N}")

    @classmethod
    def dirac(cls, x: Union[Field, np.ndarray]) -> 'EmpiricalMeasure':
        coeffs = x.coeffs if isinstance(x, Field) else np.asarray(x, dtype=float)
        return cls(coeffs[None, :])

    def to_json(self) -> str:
        return json.dumps({'M': self.M, 'N': self.N, 'particles': self._particles.tolist()})

    @classmethod
    def from_json(cls, text: str) -> 'EmpiricalMeasure':
        payload = json.loads(text)
        return cls(np.asarray(payload['particles'], dtype=float).reshape(payload['M'], payload['N']))

    def __eq__(self, other):
        return isinstance(other, EmpiricalMeasure) and np.array_equal(self._particles, other.particles)

    def __repr__(self):
        return F"EmpiricalMeasure(M={self.M}, N={self.N})"


def second_moment(mu: EmpiricalMeasure, op: SpectralOperator,
                  space: Union[NormSpace, str] = NormSpace.F12DUAL) -> float:
    """mu(||.||^2) = (1/M) sum_i ||x_i||^2 in the given space."""
    mu.check_dimension(op)
    return float(np.mean(norm_squared(op, space, mu.particles)))


class MeasureFlow:
    """
    A time-indexed family of empirical measures on strictly increasing nodes.

    particles has shape (n_nodes, M, N); node i carries the law at times[i].
    """

    def __init__(self, times: Sequence[float], particles: np.ndarray):
        times = np.asarray(times, dtype=float)
        particles = np.asarray(particles, dtype=float)
        if times.ndim != 1 or times.shape[0] < 1:
            raise ValueError('flow needs at least one time node')
        if np.any(np.diff(times) <= 0):
            raise ValueError('flow times must be strictly increasing')
        if particles.ndim != 3 or particles.shape[0] != times.shape[0]:
            raise DimensionMismatchError(
                F"flow particles shape {particles.shape} does not match {times.shape[0]} nodes")
        self._times = _readonly(times)
        self._particles = _readonly(particles)

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def particles(self) -> np.ndarray:
        return self._particles

    @property
    def n_nodes(self) -> int:
        return self._times.shape[0]

    @property
    def M(self) -> int:
        return self._particles.shape[1]

    @property
    def N(self) -> int:
        return self._particles.shape[2]

    @property
    def measures(self) -> List[EmpiricalMeasure]:
        return [EmpiricalMeasure(self._particles[i]) for i in range(self.n_nodes)]

    def measure(self, i: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self._particles[i])

    def index_at(self, t: float) -> int:
        """Node index of the piecewise-constant-from-the-left interpolation at time t."""
        slack = TIME_TOLERANCE * max(1.0, abs(t))
        idx = int(np.searchsorted(self._times, t + slack, side='right')) - 1
        if idx < 0:
            raise GridMismatchError(F"time {t} precedes the flow's first node {self._times[0]}")
        return idx

    def at(self, t: float) -> EmpiricalMeasure:
        return self.measure(self.index_at(t))

    def window_indices(self, s: float, t: float) -> np.ndarray:
        slack_s = TIME_TOLERANCE * max(1.0, abs(s))
        slack_t = TIME_TOLERANCE * max(1.0, abs(t))
        mask = (self._times >= s - slack_s) & (self._times <= t + slack_t)
        return np.nonzero(mask)[0]

    def restrict(self, s: float, t: float) -> 'MeasureFlow':
        idx = self.window_indices(s, t)
        if idx.size == 0:
            raise GridMismatchError(F"flow has no nodes in [{s}, {t}]")
        return MeasureFlow(self._times[idx], self._particles[idx])

    @classmethod
    def constant(cls, law: EmpiricalMeasure, times: Sequence[float]) -> 'MeasureFlow':
        times = np.asarray(times, dtype=float)
        particles = np.broadcast_to(law.particles[None, :, :], (times.shape[0],) + law.particles.shape)
        return cls(times, particles)

    @classmethod
    def glue(cls, flows: Sequence['MeasureFlow']) -> 'MeasureFlow':
        """
        Concatenate consecutive window flows. A shared boundary node is taken from the later window,
        the one a step starting at that node reads.
        """
        if not flows:
            raise ValueError('nothing to glue')
        times, particles = [], []
        for i, flow in enumerate(flows):
            last = i == len(flows) - 1
            stop = flow.n_nodes if last else flow.n_nodes - 1
            if not last:
                boundary = flows[i + 1].times[0]
                if abs(flow.times[-1] - boundary) > TIME_TOLERANCE * max(1.0, abs(boundary)):
                    raise GridMismatchError(F"window {i} ends at {flow.times[-1]}, next starts at {boundary}")
            times.append(flow.times[:stop])
            particles.append(flow.particles[:stop])
        return cls(np.concatenate(times), np.concatenate(particles, axis=0))

    def __repr__(self):
        return F"MeasureFlow(nodes={self.n_nodes}, M={self.M}, N={self.N}, " \
               F"span=[{self._times[0]}, {self._times[-1]}])"
