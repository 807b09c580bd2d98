"""Near-field ISAC simulation and optimization with rotatable movable antennas.

The package is organized bottom-up:

- ``geometry``: plane rotations, element placement, feasibility checks
- ``channel``: spherical-wave channels with effective aperture loss
- ``estimation``: Fisher information and position CRBs
- ``comm_metrics``: SINR, rates, fractional-programming surrogates
- ``conic``: the two beamforming SDPs and rank-one recovery
- ``swarm``: penalty-based particle swarm over positions and rotations
- ``ao``: the two alternating-optimization loops
- ``harness``: configuration, scenario generation, sweeps, persistence
- ``cli``: command-line entry point
"""

__version__ = "0.1.0"

from .ao import AoConfig, AoTrace, InfeasibleProblemError, algorithm1, algorithm2
from .channel import (
    DegenerateGeometryError,
    EntityPosition,
    ChannelSet,
    aperture_gain,
    build_channels,
    channel_coefficient,
    path_loss,
)
from .comm_metrics import (
    BeamSolution,
    sinr,
    sinr_all,
    sum_rate,
    surrogate_f1,
    surrogate_f2,
    update_nu,
    update_rho,
)
from .conic import (
    CommSdpSpec,
    FeasibilityReport,
    RecoveryError,
    SdpSolveReport,
    SensingSdpSpec,
    audit_solution,
    hermitian_real_embedding,
    rank_one_recovery,
    solve_comm_sdp,
    solve_sensing_sdp,
)
from .estimation import (
    ChannelDerivatives,
    FimBlocks,
    NonHermitianCovarianceError,
    SensingParams,
    UnobservableTargetError,
    crb_matrix,
    fim_blocks,
    rcrb_per_param,
    target_channel_derivatives,
    trace_crb,
)
from .geometry import (
    ArrayState,
    GeometryConfig,
    LocalPlacement,
    PlaneRotation,
    global_position,
    plane_normal,
    quantize_rotation,
    reflection_violations,
    rotation_matrix,
    spacing_violations,
)
from .harness import (
    RunResult,
    ScenarioConfig,
    emit_results,
    generate_scenario,
    load_config,
    run_single,
    run_sweep,
)
from .scenario import Scenario
from .swarm import PsoConfig, PsoContext, PsoResult, run_pso
