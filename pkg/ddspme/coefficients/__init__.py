from .drift import (
    DriftSpec, lipschitz, scalar_map, coupling_statistic, eval_psi, eval_psi_scalar, psi_coefficients
)
from .noise import (
    NoiseSpec, noise_modes, damping, amplitudes, noise_increment, base_map, eval_noise, hs_norm_squared,
    forcing_norm_squared
)
from .constants import DELTA_FLOOR, ModelConstants, ModelSpec, derive_constants, drift_constants, noise_constants
from .probes import (
    ProbeSampler, AssumptionReport, PROBE_TOLERANCE, probe_A1, probe_A2_A4, probe_growth, probe_A3, probe_H2_H3,
    replay_witness
)
