"""Constrained particle swarm over element positions and plane rotations.

A particle concatenates, in order: the transmit (y, z) pairs, the three
transmit rotation angles, the receive (y, z) pairs and the three receive
rotation angles. Position coordinates are clamped to the moving region after
every update; rotation coordinates wrap modulo 2*pi (and snap to a uniform
grid when discrete rotations are enabled). Constraints that the projection
cannot express enter the fitness as penalties: counts of spacing and
reflection violations, a squared-hinge SINR shortfall and, in the
communication mode, a squared-hinge CRB excess with an adaptive weight.

An optional free-coordinate mask freezes subsets of the vector (velocity
zeroed, value pinned), which is how the reduced antenna setups are realized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import DegenerateGeometryError
from .comm_metrics import BeamSolution, sinr_all, surrogate_f2
from .estimation import UnobservableTargetError, trace_crb
from .geometry import (
    ArrayState,
    PlaneRotation,
    quantize_angles,
    violation_counts,
    wrap_angle,
)
from .scenario import Scenario


@dataclass
class PsoConfig:
    """Hyperparameters of the swarm step.

    Attributes:
        swarm_size: number of particles M
        max_iterations: swarm iterations per invocation
        cognitive_weight / social_weight: pull toward the local / global best
        inertia_max / inertia_min: linearly decayed velocity memory
        penalty_spacing / penalty_reflection / penalty_sinr: constraint
            penalty weights
        penalty_standard: base weight of the adaptive CRB-excess penalty
        rotation_bits: when set, rotation angles snap to 2**bits levels
        seed: RNG seed used when no generator is supplied
    """

    swarm_size: int = 200
    max_iterations: int = 100
    cognitive_weight: float = 1.4
    social_weight: float = 1.4
    inertia_min: float = 0.4
    inertia_max: float = 0.9
    penalty_spacing: float = 1000.0
    penalty_reflection: float = 1000.0
    penalty_sinr: float = 1000.0
    penalty_standard: float = 1000.0
    rotation_bits: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.swarm_size < 1:
            raise ValueError("swarm_size must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.inertia_min > self.inertia_max:
            raise ValueError("inertia_min must not exceed inertia_max")


@dataclass
class Particle:
    """One candidate geometry in encoded form."""

    coordinates: np.ndarray
    velocity: np.ndarray


@dataclass
class ParticleLayout:
    """Index bookkeeping for the encoded coordinate vector."""

    n_tx: int
    n_rx: int

    @property
    def length(self) -> int:
        return 2 * self.n_tx + 2 * self.n_rx + 6

    @property
    def tx_position_slice(self) -> slice:
        return slice(0, 2 * self.n_tx)

    @property
    def tx_rotation_slice(self) -> slice:
        return slice(2 * self.n_tx, 2 * self.n_tx + 3)

    @property
    def rx_position_slice(self) -> slice:
        return slice(2 * self.n_tx + 3, 2 * self.n_tx + 3 + 2 * self.n_rx)

    @property
    def rx_rotation_slice(self) -> slice:
        return slice(2 * self.n_tx + 3 + 2 * self.n_rx, self.length)

    def position_mask(self) -> np.ndarray:
        mask = np.zeros(self.length, dtype=bool)
        mask[self.tx_position_slice] = True
        mask[self.rx_position_slice] = True
        return mask

    def rotation_mask(self) -> np.ndarray:
        mask = np.zeros(self.length, dtype=bool)
        mask[self.tx_rotation_slice] = True
        mask[self.rx_rotation_slice] = True
        return mask


def encode_state(state: ArrayState) -> np.ndarray:
    """Flatten an ArrayState into a particle coordinate vector."""
    return np.concatenate(
        [
            state.tx_placements.ravel(),
            state.tx_rotation.as_array(),
            state.rx_placements.ravel(),
            state.rx_rotation.as_array(),
        ]
    )


def decode_state(coords: np.ndarray, layout: ParticleLayout, tx_center, rx_center) -> ArrayState:
    """Rebuild an ArrayState from a coordinate vector."""
    return ArrayState(
        tx_placements=coords[layout.tx_position_slice].reshape(layout.n_tx, 2).copy(),
        rx_placements=coords[layout.rx_position_slice].reshape(layout.n_rx, 2).copy(),
        tx_rotation=PlaneRotation.from_array(coords[layout.tx_rotation_slice]),
        rx_rotation=PlaneRotation.from_array(coords[layout.rx_rotation_slice]),
        tx_center=tx_center,
        rx_center=rx_center,
    )


@dataclass
class PsoContext:
    """Everything held fixed while the swarm explores geometries."""

    scenario: Scenario
    beam: BeamSolution
    mode: str  # "sensing" or "comm"
    rho: np.ndarray | None = None
    nu: np.ndarray | None = None
    mu4: float | None = None
    free_mask: np.ndarray | None = None


@dataclass
class Swarm:
    layout: ParticleLayout
    positions: np.ndarray
    velocities: np.ndarray
    local_best: np.ndarray
    local_best_fitness: np.ndarray
    global_best: np.ndarray
    global_best_fitness: float

    def particle(self, index: int) -> Particle:
        return Particle(self.positions[index].copy(), self.velocities[index].copy())


def _is_better(candidate: float, incumbent: float, mode: str) -> bool:
    if mode == "sensing":
        return candidate < incumbent
    return candidate > incumbent


def penalty_terms(state: ArrayState, context: PsoContext) -> dict:
    """Raw constraint residuals of one geometry under the fixed beams.

    Returns spacing/reflection violation counts, the squared-hinge SINR
    shortfall, and (communication mode) the squared-hinge CRB excess.
    """
    scenario = context.scenario
    spacing, reflection = violation_counts(state, scenario.geometry.min_spacing)
    channels = scenario.channels(state)
    gammas = sinr_all(channels, context.beam, scenario.user_noise_powers)
    shortfall = np.maximum(0.0, scenario.sinr_floor - gammas)
    terms = {
        "spacing": float(spacing),
        "reflection": float(reflection),
        "sinr_hinge": float(np.sum(shortfall**2)),
    }
    if context.mode == "comm" and np.isfinite(scenario.crb_budget):
        derivs = scenario.derivatives(state)
        tcrb = trace_crb(scenario.fim(channels, derivs, context.beam.total_covariance))
        terms["crb_hinge"] = float(max(0.0, tcrb - scenario.crb_budget) ** 2)
    return terms


def fitness_sensing(coords: np.ndarray, context: PsoContext, config: PsoConfig) -> float:
    """CRB trace plus constraint penalties; lower is better.

    Geometries that break the channel or information computation get an
    infinite fitness so comparisons stay total.
    """
    scenario = context.scenario
    layout = ParticleLayout(scenario.geometry.n_tx, scenario.geometry.n_rx)
    state = decode_state(
        coords, layout, scenario.geometry.tx_center, scenario.geometry.rx_center
    )
    spacing, reflection = violation_counts(state, scenario.geometry.min_spacing)
    try:
        channels = scenario.channels(state)
        derivs = scenario.derivatives(state)
        tcrb = trace_crb(scenario.fim(channels, derivs, context.beam.total_covariance))
    except (DegenerateGeometryError, UnobservableTargetError):
        return np.inf
    gammas = sinr_all(channels, context.beam, scenario.user_noise_powers)
    hinge = float(np.sum(np.maximum(0.0, scenario.sinr_floor - gammas) ** 2))
    return (
        tcrb
        + config.penalty_spacing * spacing
        + config.penalty_reflection * reflection
        + config.penalty_sinr * hinge
    )


def fitness_comm(coords: np.ndarray, context: PsoContext, config: PsoConfig) -> float:
    """Rate surrogate minus constraint penalties; higher is better."""
    scenario = context.scenario
    layout = ParticleLayout(scenario.geometry.n_tx, scenario.geometry.n_rx)
    state = decode_state(
        coords, layout, scenario.geometry.tx_center, scenario.geometry.rx_center
    )
    spacing, reflection = violation_counts(state, scenario.geometry.min_spacing)
    try:
        channels = scenario.channels(state)
        value = surrogate_f2(
            channels, context.beam, context.rho, context.nu, scenario.user_noise_powers
        )
        crb_hinge = 0.0
        if np.isfinite(scenario.crb_budget):
            derivs = scenario.derivatives(state)
            tcrb = trace_crb(
                scenario.fim(channels, derivs, context.beam.total_covariance)
            )
            crb_hinge = max(0.0, tcrb - scenario.crb_budget) ** 2
    except (DegenerateGeometryError, UnobservableTargetError):
        return -np.inf
    gammas = sinr_all(channels, context.beam, scenario.user_noise_powers)
    hinge = float(np.sum(np.maximum(0.0, scenario.sinr_floor - gammas) ** 2))
    return (
        value
        - config.penalty_spacing * spacing
        - config.penalty_reflection * reflection
        - config.penalty_sinr * hinge
        - (context.mu4 or 0.0) * crb_hinge
    )


def _fitness_fn(mode: str):
    return fitness_sensing if mode == "sensing" else fitness_comm


def init_swarm(
    current: ArrayState,
    config: PsoConfig,
    rng: np.random.Generator,
    context: PsoContext,
) -> Swarm:
    """Seed the swarm: particle 0 encodes the incumbent geometry exactly.

    Remaining particles draw free position coordinates uniformly on
    [-D/2, D/2] and free rotations uniformly on [0, 2*pi). Velocities are
    uniform on [-D/2, D/2] per position slot and [-pi, pi] per rotation
    slot. Frozen coordinates keep the incumbent value with zero velocity.
    """
    scenario = context.scenario
    layout = ParticleLayout(scenario.geometry.n_tx, scenario.geometry.n_rx)
    half = scenario.geometry.region_side / 2.0
    m = config.swarm_size
    length = layout.length
    free = (
        np.ones(length, dtype=bool)
        if context.free_mask is None
        else np.asarray(context.free_mask, dtype=bool)
    )
    pos_mask = layout.position_mask()
    rot_mask = layout.rotation_mask()

    seed_coords = encode_state(current)
    positions = np.tile(seed_coords, (m, 1))
    for i in range(1, m):
        draw_pos = rng.uniform(-half, half, size=length)
        draw_rot = rng.uniform(0.0, 2.0 * np.pi, size=length)
        positions[i, free & pos_mask] = draw_pos[free & pos_mask]
        positions[i, free & rot_mask] = draw_rot[free & rot_mask]
    velocities = np.zeros((m, length))
    for i in range(m):
        vel_pos = rng.uniform(-half, half, size=length)
        vel_rot = rng.uniform(-np.pi, np.pi, size=length)
        velocities[i, free & pos_mask] = vel_pos[free & pos_mask]
        velocities[i, free & rot_mask] = vel_rot[free & rot_mask]
    if config.rotation_bits is not None:
        positions[:, rot_mask] = quantize_angles(positions[:, rot_mask], config.rotation_bits)
        positions[0, rot_mask] = seed_coords[rot_mask]  # incumbent stays exact

    fitness = _fitness_fn(context.mode)
    values = np.array([fitness(p, context, config) for p in positions])
    best = int(np.argmin(values) if context.mode == "sensing" else np.argmax(values))
    return Swarm(
        layout=layout,
        positions=positions,
        velocities=velocities,
        local_best=positions.copy(),
        local_best_fitness=values.copy(),
        global_best=positions[best].copy(),
        global_best_fitness=float(values[best]),
    )


def step(
    swarm: Swarm,
    iteration: int,
    config: PsoConfig,
    context: PsoContext,
    rng: np.random.Generator,
) -> Swarm:
    """One swarm iteration: velocity/position updates, projection, bests.

    The inertia decays linearly from inertia_max to inertia_min over
    max_iterations; the cognitive and social pulls use one fresh U(0, 1)
    scalar each per particle.
    """
    layout = swarm.layout
    half = context.scenario.geometry.region_side / 2.0
    free = (
        np.ones(layout.length, dtype=bool)
        if context.free_mask is None
        else np.asarray(context.free_mask, dtype=bool)
    )
    pos_mask = layout.position_mask()
    rot_mask = layout.rotation_mask()
    tau_max = max(config.max_iterations, 1)
    inertia = config.inertia_max - (config.inertia_max - config.inertia_min) * iteration / tau_max
    fitness = _fitness_fn(context.mode)

    for i in range(swarm.positions.shape[0]):
        b1 = rng.uniform()
        b2 = rng.uniform()
        velocity = (
            inertia * swarm.velocities[i]
            + config.cognitive_weight * b1 * (swarm.local_best[i] - swarm.positions[i])
            + config.social_weight * b2 * (swarm.global_best - swarm.positions[i])
        )
        velocity[~free] = 0.0
        position = swarm.positions[i] + velocity
        position[pos_mask] = np.clip(position[pos_mask], -half, half)
        position[rot_mask] = wrap_angle(position[rot_mask])
        if config.rotation_bits is not None:
            position[rot_mask] = quantize_angles(position[rot_mask], config.rotation_bits)
        position[~free] = swarm.positions[i][~free]
        swarm.velocities[i] = velocity
        swarm.positions[i] = position

        value = fitness(position, context, config)
        if _is_better(value, swarm.local_best_fitness[i], context.mode):
            swarm.local_best[i] = position.copy()
            swarm.local_best_fitness[i] = value
        if _is_better(value, swarm.global_best_fitness, context.mode):
            swarm.global_best = position.copy()
            swarm.global_best_fitness = float(value)
    return swarm


@dataclass
class PsoResult:
    """Outcome of one swarm run."""

    state: ArrayState
    fitness: float
    fitness_trace: np.ndarray
    penalties: dict
    feasible: bool


def run_pso(
    initial: ArrayState,
    mode: str,
    context: PsoContext,
    config: PsoConfig,
    rng: np.random.Generator | None = None,
) -> PsoResult:
    """Run the full swarm loop and decode the global best.

    Parameters
    ----------
    initial : ArrayState
        Incumbent geometry; always encoded as particle 0.
    mode : str
        "sensing" (minimize) or "comm" (maximize).
    context : PsoContext
        Fixed beams, auxiliaries and the free-coordinate mask.
    config : PsoConfig
        Swarm hyperparameters.
    rng : numpy Generator, optional
        Falls back to a generator seeded from config.seed.

    Returns
    -------
    PsoResult
        Decoded best geometry, its fitness, the per-iteration global-best
        trace (including the initial swarm), the penalty residuals of the
        best geometry and a feasibility flag (all penalties at zero).
    """
    if mode not in ("sensing", "comm"):
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    context = PsoContext(
        scenario=context.scenario,
        beam=context.beam,
        mode=mode,
        rho=context.rho,
        nu=context.nu,
        mu4=context.mu4,
        free_mask=context.free_mask,
    )
    free = context.free_mask
    if free is not None and not np.any(free):
        # nothing to optimize: every particle would equal the incumbent
        value = _fitness_fn(mode)(encode_state(initial), context, config)
        pens = _safe_penalties(initial, context)
        return PsoResult(
            state=initial.copy(),
            fitness=float(value),
            fitness_trace=np.array([value]),
            penalties=pens,
            feasible=all(np.isfinite(v) and v == 0.0 for v in pens.values()),
        )

    swarm = init_swarm(initial, config, rng, context)
    trace = [swarm.global_best_fitness]
    for tau in range(1, config.max_iterations + 1):
        swarm = step(swarm, tau, config, context, rng)
        trace.append(swarm.global_best_fitness)
    best_state = decode_state(
        swarm.global_best,
        swarm.layout,
        context.scenario.geometry.tx_center,
        context.scenario.geometry.rx_center,
    )
    pens = _safe_penalties(best_state, context)
    return PsoResult(
        state=best_state,
        fitness=float(swarm.global_best_fitness),
        fitness_trace=np.array(trace),
        penalties=pens,
        feasible=all(np.isfinite(v) and v == 0.0 for v in pens.values()),
    )


def _safe_penalties(state: ArrayState, context: PsoContext) -> dict:
    try:
        return penalty_terms(state, context)
    except (DegenerateGeometryError, UnobservableTargetError):
        return {"degenerate": np.inf}
