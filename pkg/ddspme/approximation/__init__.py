from .sweeps import (
    SweepTable, path_gap, bootstrap_half_width, fit_slope, consecutive_pairs, build_table, lambda_sweep,
    epsilon_sweep, linear_factor, linear_oracle_gap
)
from .bounds import BoundCheck, BoundReport, apriori_check
