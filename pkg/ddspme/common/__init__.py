from .exceptions import (
    DdspmeError, DimensionMismatchError, QuadratureError, TransportError, GridMismatchError, IntegrationError,
    PicardError, ContractionError, ConfigError, ProbeFailure, ProvenanceError
)
from .model import SpecModelBase, ReportModelBase, dump_json, jsonable
from .parallel import run_jobs, set_threads, get_threads
