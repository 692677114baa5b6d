from typing import Any, Dict, List, Optional


class DdspmeError(Exception):
    """Base class of every error raised by the lab."""

    def diagnostics(self) -> Dict[str, Any]:
        return {}


class DimensionMismatchError(DdspmeError, ValueError):
    pass


class QuadratureError(DdspmeError):
    pass


class TransportError(DdspmeError):
    pass


class GridMismatchError(DdspmeError, ValueError):
    pass


class IntegrationError(DdspmeError):

    def __init__(self, reason: str, step: Optional[int] = None):
        self.reason = reason
        self.step = step
        message = reason if step is None else F"{reason} at step {step}"
        super().__init__(message)

    def diagnostics(self):
        return {'step': self.step, 'reason': self.reason}


class PicardError(DdspmeError):

    def __init__(self, message: str, window: Optional[int] = None, iterations: Optional[int] = None,
                 last_ratio: Optional[float] = None, distances: Optional[List[float]] = None):
        self.window = window
        self.iterations = iterations
        self.last_ratio = last_ratio
        self.distances = list(distances or [])
        super().__init__(message)

    def diagnostics(self):
        return {
            'window': self.window,
            'iterations': self.iterations,
            'last_ratio': self.last_ratio,
            'distances': self.distances,
        }


class ContractionError(DdspmeError, ValueError):
    pass


class ConfigError(DdspmeError, ValueError):

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__('; '.join(self.violations))

    def diagnostics(self):
        return {'violations': self.violations}


class ProbeFailure(DdspmeError):

    def __init__(self, failed: List[str]):
        self.failed = list(failed)
        super().__init__('assumption probes failed: ' + ', '.join(self.failed))

    def diagnostics(self):
        return {'failed': self.failed}


class ProvenanceError(DdspmeError, ValueError):
    """A trajectory lacks the noise plan or regularization record a check needs."""
