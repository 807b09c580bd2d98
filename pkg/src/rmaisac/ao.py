"""Alternating optimization between transmit beamforming and array geometry.

Both loops interleave a convex beamforming step (at the current geometry)
with a particle-swarm geometry step (under the resulting fixed beams):

- the sensing loop minimizes the CRB trace under SINR floors,
- the communication loop maximizes the sum rate under SINR floors and a
  CRB budget, refreshing the fractional-programming auxiliaries each pass.

Two retention guards keep the recorded objective monotone: a geometry step
whose recomputed objective is worse than the incumbent geometry is discarded
(the swarm seeds with the incumbent, so this costs nothing), and an entire
iteration that fails to improve the previous objective is replaced by the
incumbent iterate, which then trips the convergence test.

After the loop one extra beamforming solve at the final geometry aligns the
returned beams with the returned geometry, so the solution certifies every
constraint of its problem at audit tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .comm_metrics import BeamSolution, sinr_all, sum_rate, update_nu, update_rho
from .conic import (
    CommSdpSpec,
    FeasibilityReport,
    SensingSdpSpec,
    audit_solution,
    rank_one_recovery,
    solve_comm_sdp,
    solve_sensing_sdp,
)
from .estimation import crb_matrix, rcrb_per_param, trace_crb
from .geometry import ArrayState
from .scenario import Scenario
from .swarm import PsoConfig, PsoContext, encode_state, penalty_terms, run_pso

_TINY = 1e-30


class InfeasibleProblemError(RuntimeError):
    """The very first beamforming solve failed; the instance is unusable."""


@dataclass
class AoConfig:
    """Outer-loop settings shared by both designs."""

    mode: str  # "sensing" or "comm"
    pso: PsoConfig
    max_outer_iterations: int = 20
    tolerance: float = 1e-3
    free_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("sensing", "comm"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class IterationRecord:
    """Observability row emitted after every outer iteration."""

    index: int
    objective: float
    rcrb: np.ndarray
    sinrs: np.ndarray
    power: float
    penalties: dict
    wall_ms: float


@dataclass
class AoTrace:
    """Per-iteration records plus run-level flags."""

    records: list = field(default_factory=list)
    converged: bool = False
    infeasible_stop: bool = False
    polished: bool = False
    final_audit: FeasibilityReport | None = None

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])


def _initial_beams(scenario: Scenario, channels) -> BeamSolution:
    """Power-feasible start: matched filters on half power, isotropic rest."""
    n_tx = scenario.geometry.n_tx
    k = scenario.n_users
    beams = np.zeros((k, n_tx), dtype=complex)
    for i, h in enumerate(channels.user_channels):
        beams[i] = np.sqrt(scenario.power_budget / (2.0 * k)) * h.conj() / np.linalg.norm(h)
    r0 = (scenario.power_budget / 2.0 / n_tx) * np.eye(n_tx)
    rx = sum(np.outer(w, w.conj()) for w in beams) + r0
    return BeamSolution(beamformers=beams, sensing_covariance=r0, total_covariance=rx)


def _sensing_spec(scenario: Scenario, channels, derivs) -> SensingSdpSpec:
    return SensingSdpSpec(
        channels=channels,
        derivatives=derivs,
        target_params=scenario.target_params,
        coherence_length=scenario.coherence_length,
        sensing_noise_power=scenario.sensing_noise_power,
        power_budget=scenario.power_budget,
        sinr_floor=scenario.sinr_floor,
        user_noise_powers=scenario.user_noise_powers,
    )


def _comm_spec(scenario: Scenario, channels, derivs, rho, nu) -> CommSdpSpec:
    return CommSdpSpec(
        channels=channels,
        derivatives=derivs,
        target_params=scenario.target_params,
        coherence_length=scenario.coherence_length,
        sensing_noise_power=scenario.sensing_noise_power,
        power_budget=scenario.power_budget,
        sinr_floor=scenario.sinr_floor,
        user_noise_powers=scenario.user_noise_powers,
        crb_budget=scenario.crb_budget,
        rho=rho,
        nu=nu,
    )


def _objective(mode: str, scenario: Scenario, channels, derivs, beam: BeamSolution) -> float:
    if mode == "sensing":
        return trace_crb(scenario.fim(channels, derivs, beam.total_covariance))
    return sum_rate(channels, beam, scenario.user_noise_powers)


def _worse(mode: str, candidate: float, reference: float) -> bool:
    return candidate > reference if mode == "sensing" else candidate < reference


def _solve_beams(mode, scenario, channels, derivs, incumbent_beam):
    """One beamforming step; returns (beam, rho, nu, report status)."""
    if mode == "sensing":
        report = solve_sensing_sdp(_sensing_spec(scenario, channels, derivs))
        rho = nu = None
    else:
        base = incumbent_beam if incumbent_beam is not None else _initial_beams(scenario, channels)
        rho = update_rho(channels, base, scenario.user_noise_powers)
        nu = update_nu(channels, base, scenario.user_noise_powers)
        report = solve_comm_sdp(_comm_spec(scenario, channels, derivs, rho, nu))
    if report.status != "optimal":
        return None, rho, nu, report.status
    return rank_one_recovery(report, channels), rho, nu, report.status


def _first_solve_diagnostics(mode, scenario, channels, derivs, status) -> str:
    """Explain a failed first solve; for the rate problem, bound the budget."""
    parts = [
        f"first {mode} beamforming solve returned status {status!r}",
        f"power budget {scenario.power_budget:.3g} W",
        f"SINR floor {scenario.sinr_floor:.3g}",
    ]
    if mode == "comm" and np.isfinite(scenario.crb_budget):
        parts.append(f"CRB budget {scenario.crb_budget:.3g}")
        probe = solve_sensing_sdp(_sensing_spec(scenario, channels, derivs))
        if probe.status == "optimal":
            blocks = scenario.fim(channels, derivs, probe.total_covariance)
            lam_max = float(np.linalg.eigvalsh(crb_matrix(blocks))[-1])
            parts.append(
                "the initial geometry supports the budget constraint only for "
                f"budgets above roughly {3.0 * lam_max:.3g}"
            )
    return "; ".join(parts)


def _run(scenario: Scenario, initial: ArrayState, config: AoConfig,
         rng: np.random.Generator, on_iteration=None):
    mode = config.mode
    state = initial.copy()
    beam = None
    prev_obj = None
    trace = AoTrace()
    aligned = False  # does `beam` correspond to channels at `state`?

    for outer in range(1, config.max_outer_iterations + 1):
        started = time.perf_counter()
        channels = scenario.channels(state)
        derivs = scenario.derivatives(state)

        beam_cand, rho, nu, status = _solve_beams(mode, scenario, channels, derivs, beam)
        if beam_cand is None:
            if outer == 1:
                raise InfeasibleProblemError(
                    _first_solve_diagnostics(mode, scenario, channels, derivs, status)
                )
            trace.infeasible_stop = True
            break

        obj_incumbent_state = _objective(mode, scenario, channels, derivs, beam_cand)

        mu4 = None
        if mode == "comm" and np.isfinite(scenario.crb_budget):
            tcrb = trace_crb(scenario.fim(channels, derivs, beam_cand.total_covariance))
            mu4 = config.pso.penalty_standard / tcrb**2

        context = PsoContext(
            scenario=scenario, beam=beam_cand, mode=mode,
            rho=rho, nu=nu, mu4=mu4, free_mask=config.free_mask,
        )
        pso = run_pso(state, mode, context, config.pso, rng)
        state_cand = pso.state
        if np.array_equal(encode_state(state_cand), encode_state(state)):
            state_cand = state  # geometry unchanged, reuse cached channels

        if state_cand is state:
            ch_cand, dv_cand, obj_cand = channels, derivs, obj_incumbent_state
        else:
            ch_cand = scenario.channels(state_cand)
            dv_cand = scenario.derivatives(state_cand)
            obj_cand = _objective(mode, scenario, ch_cand, dv_cand, beam_cand)
            if _worse(mode, obj_cand, obj_incumbent_state):
                # geometry step did not help the recomputed objective
                state_cand, ch_cand, dv_cand = state, channels, derivs
                obj_cand = obj_incumbent_state

        if prev_obj is not None and _worse(mode, obj_cand, prev_obj):
            # beam/geometry coupling regressed the outer objective: keep the
            # whole incumbent iterate, which freezes the trace and converges
            state_cand, beam_cand, obj_cand = state, beam, prev_obj
            ch_cand, dv_cand = channels, derivs
        else:
            aligned = state_cand is state

        record = IterationRecord(
            index=outer,
            objective=float(obj_cand),
            rcrb=rcrb_per_param(scenario.fim(ch_cand, dv_cand, beam_cand.total_covariance)),
            sinrs=sinr_all(ch_cand, beam_cand, scenario.user_noise_powers),
            power=beam_cand.power(),
            penalties=penalty_terms(
                state_cand,
                PsoContext(scenario=scenario, beam=beam_cand, mode=mode,
                           rho=rho, nu=nu, mu4=mu4, free_mask=config.free_mask),
            ),
            wall_ms=(time.perf_counter() - started) * 1e3,
        )
        trace.records.append(record)
        if on_iteration is not None:
            on_iteration(record)

        converged = prev_obj is not None and abs(obj_cand - prev_obj) <= (
            config.tolerance * max(abs(prev_obj), _TINY)
        )
        state, beam, prev_obj = state_cand, beam_cand, obj_cand
        if converged:
            trace.converged = True
            break

    if beam is None:
        raise InfeasibleProblemError("no feasible beamforming step completed")

    if not aligned:
        channels = scenario.channels(state)
        derivs = scenario.derivatives(state)
        polished, _, _, status = _solve_beams(mode, scenario, channels, derivs, beam)
        if polished is not None:
            beam = polished
            trace.polished = True
    else:
        channels = scenario.channels(state)
        derivs = scenario.derivatives(state)

    audit_spec = (
        _sensing_spec(scenario, channels, derivs)
        if mode == "sensing"
        else _comm_spec(scenario, channels, derivs, np.zeros(scenario.n_users),
                        np.zeros(scenario.n_users))
    )
    trace.final_audit = audit_solution(beam, channels, audit_spec)
    return beam, state, trace


def algorithm1(scenario: Scenario, initial: ArrayState, config: AoConfig,
               rng: np.random.Generator | None = None, on_iteration=None):
    """Sensing-centric loop: CRB-trace minimization with SINR floors.

    Returns (BeamSolution, ArrayState, AoTrace). Raises
    InfeasibleProblemError when the first beamforming solve fails; a later
    failure terminates the loop with the last feasible iterate and sets the
    infeasible_stop flag on the trace.
    """
    if config.mode != "sensing":
        raise ValueError("algorithm1 requires a sensing-mode config")
    if rng is None:
        rng = np.random.default_rng(config.pso.seed)
    return _run(scenario, initial, config, rng, on_iteration)


def algorithm2(scenario: Scenario, initial: ArrayState, config: AoConfig,
               rng: np.random.Generator | None = None, on_iteration=None):
    """Communication-centric loop: sum-rate maximization with a CRB budget."""
    if config.mode != "comm":
        raise ValueError("algorithm2 requires a comm-mode config")
    if rng is None:
        rng = np.random.default_rng(config.pso.seed)
    return _run(scenario, initial, config, rng, on_iteration)
