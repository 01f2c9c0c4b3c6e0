"""Adaptive internal-model output regulation for normal-form plants.

Hybrid closed-loop simulation (clock-triggered jumps, fixed-step RK4 flows),
a saturated stabilizer with an extended high-gain observer, an adaptive
internal-model unit, and pluggable discrete-time identifiers.
"""

from .errors import (
    AdregError,
    BranchPointError,
    IntegrationBlowupError,
    InvalidConfigError,
    InvalidInputError,
)
from .hybrid import ClockConfig, HybridArc, HybridTime, next_jump_time, simulate, validate_arc
from .identifier import (
    IdentifierModel,
    LsIdentifier,
    LsIdentifierState,
    MiniBatchIdentifier,
    MiniBatchState,
    PolyRegressor,
    batch_solver_ls,
    build_poly_regressor,
    linear_model,
    ls_jump,
    mb_jump,
    pe_check,
    prediction_error,
    theta_map_ls,
)
from .numerics import (
    is_controllable,
    is_hurwitz,
    min_nonzero_singular_value,
    place_poles,
    pseudoinverse,
    rk4_step,
)
from .plant import (
    ExoSpec,
    ExoState,
    PlantSpec,
    build_chain_matrices,
    build_vdp_scenario,
    lie_derivatives_p1star,
    triangular_output,
)
from .regulator import (
    InternalModelConfig,
    ObserverConfig,
    RegulatorState,
    StabilizerConfig,
    build_observer_gains,
    compute_sat_level,
    control_output,
    default_internal_model,
    internal_model_flow,
    observer_flow,
    psi_consistency,
    saturate,
)
from .harness import (
    CoreProcessRun,
    brute_force_cost_minimizer,
    run_core_process,
    verify_identifier_requirement,
)
from .scenario import (
    ScenarioConfig,
    ScenarioResult,
    build_synthetic_linear_plant,
    run_scenario,
    run_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
