import os
from pathlib import Path

PROJECT_DIR = Path(__file__).parent.parent.parent.absolute()
DATA_FOLDER = os.path.join(PROJECT_DIR, 'DATA')
DEMO_CONFIG = os.path.join(DATA_FOLDER, 'demo_config.json')
# sweep models whose squared gaps scale linearly in the parameter sum
VISCOSITY_SWEEP_CONFIG = os.path.join(DATA_FOLDER, 'viscosity_sweep.json')
REGULARIZATION_SWEEP_CONFIG = os.path.join(DATA_FOLDER, 'regularization_sweep.json')

THREADS_ENV = 'DDSPME_THREADS'
PROGRESS_ENV = 'DDSPME_PROGRESS'

# measure_metrics
EXACT_OT_MAX_PARTICLES = 64
SINKHORN_REG_FACTOR = 0.01
SINKHORN_MAX_ITER = 500
SINKHORN_STOP_THRESHOLD = 1e-9

# spde_integrator
DEFAULT_NOISE_MODES = 16
INNER_TOLERANCE = 1e-10
INNER_MAX_ITER = 50
INNER_DAMPING = 0.8
INNER_ATTEMPTS = 3

# mckean_fixed_point
PICARD_THETA = 0.5
PICARD_TOLERANCE = 1e-6
PICARD_MAX_ITER = 50
PICARD_PROBE_WINDOW = 0.1
CHAOS_PARTICLE_COUNTS = (64, 128, 256)
CHAOS_SEED_PAIRS = 10

# approximation_lab
BOOTSTRAP_RESAMPLES = 1000
# acceptance window of the log-log slope of the squared sweep gap
SWEEP_SLOPE_WINDOW = (0.7, 1.3)

CSV_FLOAT_FORMAT = '%.17g'


def env_threads():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    return max(1, int(value))


def progress_enabled():
    return os.environ.get(PROGRESS_ENV, '0').lower() in ('1', 'true', 'yes')
