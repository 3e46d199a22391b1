"""Job shop scheduling surrogates trained on Standard vs optimal-design data."""

from .instance import (
    InstanceFormatError,
    JssInstance,
    PerturbationSpec,
    Schedule,
    ViolationReport,
    format_instance,
    is_feasible,
    makespan,
    parse_instance,
    perturb_family,
    random_instance,
    violation_degrees,
)
from .lpkernel import CyclicOrderingError, InfeasibleError, Ordering, earliest_start_schedule, l1_proximal_schedule
from .solver import SolveBudget, SolveResult, brute_force_optimal, solve_makespan, solve_proximal
from .datagen import Dataset, Entry, generate_od, generate_standard, lipschitz_constant, total_variation
from .projection import project_feasible
from .learner import Multipliers, TrainConfig, build_model, evaluate, lagrangian_loss, train

__version__ = "0.1.0"
