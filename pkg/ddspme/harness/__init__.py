from .config import (
    ExperimentConfig, OperatorBlock, RunBlock, TASKS, load_config, invariant_violations, validate, require_config
)
from .runner import RunManifest, Runner, run_config, write_error
