"""Randomized, risk-averse network interdiction under distributional ambiguity."""

from .baseline import DeterministicResult, solve_deterministic_enumerate, solve_deterministic_milp
from .bnb import BnbConfig, SolverResult, coordinate_descent, spatial_bnb
from .graph import Network, generate_grid, max_flow, reference_grid, river_crossing, zeta_bar
from .master import ColumnPool, FlowTable, IntervalBox, column_generation, price, price_enumerate
from .risk import (
    BudgetedAmbiguitySet,
    Dominance,
    RandomizedStrategy,
    cvar_discrete,
    dominance_check,
    loizou_objective,
    worst_case_cvar,
)

__version__ = "0.1.0"
