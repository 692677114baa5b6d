from .empirical import EmpiricalMeasure, MeasureFlow, second_moment, TIME_TOLERANCE
from .transport import (
    TransportPlan, cost_matrix, synchronous_bound, w2, w2_value, node_distances, flow_distance, brute_force_w2
)
