from .grid import TimeGrid
from .noise_plan import NoisePlan
from .initial import InitialLaw
from .stepping import (
    StepScheme, SCHEMES, TrajectoryEnsemble, explicit_step_bound, integrate_frozen, integrate_interacting
)
from .ledger import EnergyReport, ito_ledger, p_operator_form, operator_pairing
from .storage import save_trajectory, load_trajectory, ensemble_statistics, write_statistics
