from .picard import (
    PicardConfig, PicardDiagnostics, ContractionEstimate, ChaosReport, StabilityReport, picard_window, solve,
    estimate_contraction, resolve_config, self_consistency, monte_carlo_envelope, chaos_study, init_law_stability
)
