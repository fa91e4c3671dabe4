"""Optimal periodic control of quantum heat machines in the fast-driving regime."""

__version__ = "0.1.0"

from .dynamics import (
    LimitCycleSolution,
    PeriodSweep,
    PiecewiseProtocol,
    average_gap_finite,
    forward_integrate,
    limit_cycle,
    sweep_period,
    time_averaged_populations,
)
from .errors import (
    DegenerateCycleError,
    InvalidInputError,
    NoFeasibleCycleError,
    NoLimitCycleError,
    NotApplicableError,
    OptimizationFailedError,
)
from .fast import (
    GeneralizedOttoCycle,
    Leg,
    caratheodory_reduce,
    fast_gap,
    fast_steady_state,
    fixed_rate_gap,
    leg_heat_rates,
    reduce_cycle,
    relaxation_rate_eta,
)
from .lambertw import lambert_w, lambert_w_ln
from .model import (
    BathModel,
    GapWeights,
    MachineModel,
    PauliGenerator,
    RateMatrix,
    Spectrum,
    build_generator,
    build_rate_matrix,
    gibbs_populations,
    validate_model,
)
from .optimize import OptimizationProblem, OptimizationResult, OptimizerSettings, optimize_cycle, prune_legs
from .qutrit import PeakedScenario, build_qutrit_model, contour_xy, reproduce_fig4
from .simple import (
    SimpleRelaxModel,
    efficiency_at_max_power,
    many_qubit_compare,
    optimize_engine_spectrum,
    optimize_fridge_spectrum,
    optimize_machine,
)
