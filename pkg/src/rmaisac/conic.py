"""Semidefinite programs for the two transmit-beamforming steps.

Two problems are built and solved here:

- the sensing-centric step: minimize the trace of the position CRB subject
  to a power budget, per-user SINR floors and the semidefinite-relaxation
  covariance ordering;
- the communication-centric step: maximize the quadratic-transform surrogate
  of the sum rate subject to the same constraints plus a sufficient
  linear-matrix-inequality bound on the CRB trace.

The CRB objective is convexified through an auxiliary matrix bounded by the
information-matrix Schur block, with tr(U^{-1}) realized by the epigraph
[[V, I], [I, U]] >> 0. The concave square roots in the rate surrogate are
realized through 2x2 PSD epigraph blocks. Because the information entries,
channels and noise powers span ~15 orders of magnitude, the information
inequality is congruence-whitened by a constant block-triangular factor and
the remaining rows rescaled to O(1) before the solve; both maps are exact,
and reported quantities are always in physical units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .channel import ChannelSet
from .comm_metrics import BeamSolution, sinr_all
from .estimation import (
    ChannelDerivatives,
    SensingParams,
    fim_blocks_from_coefficients,
    fim_trace_coefficients,
    trace_crb,
)

SOLVER_TOLERANCE = 1e-8
AUDIT_TOLERANCE = 1e-6
_DEGENERATE_BEAM_POWER = 1e-12


class RecoveryError(RuntimeError):
    """Rank-one recovery failed for a degenerate user beam."""


@dataclass
class SensingSdpSpec:
    """Data for the sensing-centric beamforming problem."""

    channels: ChannelSet
    derivatives: ChannelDerivatives
    target_params: SensingParams
    coherence_length: float
    sensing_noise_power: float
    power_budget: float
    sinr_floor: float
    user_noise_powers: np.ndarray

    def __post_init__(self):
        if self.power_budget <= 0:
            raise ValueError("power_budget must be positive")
        if self.sinr_floor < 0:
            raise ValueError("sinr_floor must be non-negative")
        self.user_noise_powers = np.asarray(self.user_noise_powers, dtype=float)


@dataclass
class CommSdpSpec(SensingSdpSpec):
    """Data for the communication-centric beamforming problem."""

    crb_budget: float = np.inf
    rho: np.ndarray = field(default_factory=lambda: np.array([]))
    nu: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        super().__post_init__()
        if not self.crb_budget > 0:
            raise ValueError("crb_budget must be positive")
        self.rho = np.asarray(self.rho, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)


@dataclass
class SdpSolveReport:
    """Outcome of one conic solve.

    status is one of "optimal", "infeasible", "numerical-failure". All
    matrices are in physical units. ``auxiliary`` carries the CRB-bounding
    matrix of the sensing problem and is None for the communication problem.
    """

    status: str
    objective: float | None
    omegas: np.ndarray | None
    total_covariance: np.ndarray | None
    auxiliary: np.ndarray | None
    solver_tolerance: float = SOLVER_TOLERANCE


@dataclass
class FeasibilityReport:
    """Worst violation per constraint family, in physical units.

    ``worst_relative`` normalizes each family by its natural scale so a
    single number can be compared against the audit tolerance.
    """

    power_excess: float
    total_cov_min_eig: float
    sensing_cov_min_eig: float
    covariance_identity_error: float
    sinr_shortfall: float
    crb_excess: float | None
    worst_relative: float
    feasible: bool


def hermitian_real_embedding(matrix: np.ndarray) -> np.ndarray:
    """Real 2Nx2N embedding [[Re, -Im], [Im, Re]] of a complex matrix.

    A Hermitian matrix is PSD exactly when its embedding is PSD; the
    embedding carries each complex eigenvalue twice.
    """
    re = matrix.real
    im = matrix.imag
    return np.block([[re, -im], [im, re]])


def _hermitize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.conj().T)


class _FimWhitening:
    """Exact congruence that conditions the information LMI for the solver.

    The information entries are kept as trace-form operators
    J_ab(R) = Re tr(R @ phi[a][b]). A constant block-upper-triangular S,
    built from the FIM at the full-power isotropic covariance, maps the
    physical inequality onto S J S^T where the reference information equals
    the identity; because S is block upper, the CRB-bounding variable stays
    confined to the top-left 3x3 block. The transform is exact for any
    invertible S, so a near-singular reference only degrades conditioning,
    never correctness.
    """

    def __init__(self, coeffs, power_budget: float, n_tx: int,
                 coherence_length: float, noise_power: float):
        phi = self._phi_matrices(coeffs)
        iso = (power_budget / n_tx) * np.eye(n_tx)
        ref = fim_blocks_from_coefficients(
            coeffs, iso, coherence_length, noise_power
        ).full()
        j22 = ref[3:, 3:]
        j_eta = float(j22[0, 0])
        if not np.isfinite(j_eta) or j_eta <= 0:
            raise FloatingPointError("reference echo-gain information is not positive")
        schur = ref[:3, :3] - ref[:3, 3:] @ (ref[3:, :3] / np.diag(j22)[:, None])
        schur = 0.5 * (schur + schur.T)
        eigs = np.linalg.eigvalsh(schur)
        if not np.isfinite(eigs).all() or eigs[-1] <= 0:
            raise FloatingPointError("reference information matrix is degenerate")
        ridge = max(0.0, 1e-12 * eigs[-1] - eigs[0])
        l_pos = np.linalg.cholesky(schur + ridge * np.eye(3))
        a = np.linalg.inv(l_pos)
        b = -a @ ref[:3, 3:] / np.diag(j22)[None, :]
        c = np.diag(1.0 / np.sqrt(np.diag(j22)))
        s = np.zeros((5, 5))
        s[:3, :3] = a
        s[:3, 3:] = b
        s[3:, 3:] = c
        self.s = s
        # tr(U^{-1}) = tr(W @ U_hat^{-1}) with U_hat = A U A^T
        self.w = a @ a.T
        self.phi_t = self._transform(phi, s)

    @staticmethod
    def _phi_matrices(coeffs):
        n = coeffs.e_gain.shape[0]
        zero = np.zeros((n, n), dtype=complex)
        phi = [[zero for _ in range(5)] for _ in range(5)]
        for p in range(3):
            for q in range(3):
                phi[p][q] = coeffs.kappa1 * coeffs.c_pos[p, q]
            re_part = coeffs.kappa2 * np.conj(coeffs.eta) * coeffs.d_pos[p]
            im_part = coeffs.kappa2 * 1j * np.conj(coeffs.eta) * coeffs.d_pos[p]
            phi[p][3] = re_part
            phi[3][p] = re_part
            phi[p][4] = im_part
            phi[4][p] = im_part
        phi[3][3] = coeffs.kappa2 * coeffs.e_gain
        phi[4][4] = coeffs.kappa2 * coeffs.e_gain
        return phi

    @staticmethod
    def _transform(phi, s):
        out = [[None] * 5 for _ in range(5)]
        for i in range(5):
            for j in range(i, 5):
                acc = 0
                for a in range(5):
                    sia = s[i, a]
                    if sia == 0.0:
                        continue
                    for b in range(5):
                        sjb = s[j, b]
                        if sjb == 0.0:
                            continue
                        acc = acc + sia * sjb * phi[a][b]
                out[i][j] = acc
        return out

    def entry_exprs(self, rx):
        """Upper-triangle scalar expressions of the transformed information."""
        entries = [[None] * 5 for _ in range(5)]
        for i in range(5):
            for j in range(i, 5):
                expr = cp.real(cp.trace(rx @ self.phi_t[i][j]))
                entries[i][j] = expr
                entries[j][i] = expr
        return entries


def _sinr_floor_constraints(spec, rx, omegas):
    """Linearized per-user SINR floors; a zero floor disables them."""
    constraints = []
    if spec.sinr_floor <= 0:
        return constraints
    factor = (1.0 + spec.sinr_floor) / spec.sinr_floor
    for k, h in enumerate(spec.channels.user_channels):
        # normalize each row so the solver sees O(1) coefficients
        norm = (np.linalg.norm(h) ** 2) * spec.power_budget + spec.user_noise_powers[k]
        lhs = factor * cp.real(h @ omegas[k] @ h.conj())
        rhs = cp.real(h @ rx @ h.conj()) + spec.user_noise_powers[k]
        constraints.append(lhs / norm >= rhs / norm)
    return constraints


def _map_status(status) -> str:
    if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return "optimal"
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return "infeasible"
    return "numerical-failure"


def _solve(problem: cp.Problem) -> str:
    """Interior-point solve with a first-order fallback.

    The fallback catches instances where the interior-point method stalls
    without producing an optimality or infeasibility certificate.
    """
    try:
        with warnings.catch_warnings():
            # reduced-accuracy terminations are conveyed through the mapped
            # status and checked by the downstream feasibility audits
            warnings.simplefilter("ignore", UserWarning)
            problem.solve(
                solver=cp.CLARABEL,
                tol_gap_abs=SOLVER_TOLERANCE,
                tol_gap_rel=SOLVER_TOLERANCE,
                tol_feas=SOLVER_TOLERANCE,
            )
        mapped = _map_status(problem.status)
    except cp.error.SolverError:
        mapped = "numerical-failure"
    if mapped != "numerical-failure":
        return mapped
    try:
        with warnings.catch_warnings():
            # inaccurate-solution warnings are expected on the fallback path;
            # the mapped status carries the same information
            warnings.simplefilter("ignore", UserWarning)
            problem.solve(solver=cp.SCS, eps=1e-9, max_iters=200_000)
    except cp.error.SolverError:
        return "numerical-failure"
    return _map_status(problem.status)


def _dump_program(problem: cp.Problem, path: str) -> None:
    """Write the canonicalized program as sparse triplets.

    One line per nonzero: constraint-id, variable-id, value. The objective
    row uses the id "obj" and the constant column the id "rhs", so the full
    conic program (A, b, c) is recoverable from the file.
    """
    data, _, _ = problem.get_problem_data(cp.CLARABEL)
    lines = []
    a = data["A"].tocoo()
    for i, j, v in zip(a.row, a.col, a.data):
        lines.append(f"{int(i)} {int(j)} {float(v)!r}")
    for i, v in enumerate(np.asarray(data["b"]).ravel()):
        if v != 0.0:
            lines.append(f"{int(i)} rhs {float(v)!r}")
    for j, v in enumerate(np.asarray(data["c"]).ravel()):
        if v != 0.0:
            lines.append(f"obj {int(j)} {float(v)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# constraint-id variable-id value\n")
        fh.write("\n".join(lines) + "\n")


def solve_sensing_sdp(spec: SensingSdpSpec, dump_path: str | None = None) -> SdpSolveReport:
    """Minimize the CRB trace over the relaxed covariance variables.

    Returns a report whose objective is tr(U^{-1}) in physical units; at the
    optimum the information block is tight, so this equals the CRB trace at
    the returned covariance.
    """
    n_tx = spec.channels.target_tx.shape[0]
    n_users = spec.channels.user_channels.shape[0]
    coeffs = fim_trace_coefficients(
        spec.channels, spec.derivatives, spec.target_params,
        spec.coherence_length, spec.sensing_noise_power,
    )
    try:
        whitening = _FimWhitening(coeffs, spec.power_budget, n_tx,
                                  spec.coherence_length, spec.sensing_noise_power)
    except (FloatingPointError, np.linalg.LinAlgError):
        return SdpSolveReport("numerical-failure", None, None, None, None)

    rx = cp.Variable((n_tx, n_tx), hermitian=True)
    omegas = [cp.Variable((n_tx, n_tx), hermitian=True) for _ in range(n_users)]
    u_hat = cp.Variable((3, 3), PSD=True)
    v_hat = cp.Variable((3, 3), symmetric=True)

    entries = whitening.entry_exprs(rx)
    for p in range(3):
        for q in range(3):
            entries[p][q] = entries[p][q] - u_hat[p, q]
    block = cp.bmat(entries)

    constraints = [
        cp.real(cp.trace(rx)) <= spec.power_budget,
        rx >> 0,
        rx >> cp.sum(omegas),
        block >> 0,
        cp.bmat([[v_hat, np.eye(3)], [np.eye(3), u_hat]]) >> 0,
    ]
    constraints += [om >> 0 for om in omegas]
    constraints += _sinr_floor_constraints(spec, rx, omegas)

    # tr(U_phys^{-1}) = tr(W @ U_hat^{-1}) <= tr(W @ V_hat); normalize so the
    # solver's absolute gap tolerance acts at O(1)
    obj_scale = float(np.trace(whitening.w))
    objective = cp.Minimize(cp.sum(cp.multiply(whitening.w / obj_scale, v_hat)))
    problem = cp.Problem(objective, constraints)
    if dump_path is not None:
        _dump_program(problem, dump_path)
    status = _solve(problem)
    if status != "optimal":
        return SdpSolveReport(status, None, None, None, None)

    a_inv = np.linalg.inv(whitening.s[:3, :3])
    u_phys = a_inv @ u_hat.value @ a_inv.T
    return SdpSolveReport(
        status="optimal",
        objective=float(problem.value * obj_scale),
        omegas=np.array([_hermitize(om.value) for om in omegas]),
        total_covariance=_hermitize(rx.value),
        auxiliary=0.5 * (u_phys + u_phys.T),
    )


def solve_comm_sdp(spec: CommSdpSpec, dump_path: str | None = None) -> SdpSolveReport:
    """Maximize the rate surrogate subject to the CRB-trace LMI bound.

    An infinite crb_budget drops the information block entirely.
    """
    n_tx = spec.channels.target_tx.shape[0]
    n_users = spec.channels.user_channels.shape[0]
    rx = cp.Variable((n_tx, n_tx), hermitian=True)
    omegas = [cp.Variable((n_tx, n_tx), hermitian=True) for _ in range(n_users)]
    beam_gain = cp.Variable(n_users, nonneg=True)

    constraints = [
        cp.real(cp.trace(rx)) <= spec.power_budget,
        rx >> 0,
        rx >> cp.sum(omegas),
    ]
    constraints += [om >> 0 for om in omegas]
    constraints += _sinr_floor_constraints(spec, rx, omegas)

    if np.isfinite(spec.crb_budget):
        coeffs = fim_trace_coefficients(
            spec.channels, spec.derivatives, spec.target_params,
            spec.coherence_length, spec.sensing_noise_power,
        )
        try:
            whitening = _FimWhitening(coeffs, spec.power_budget, n_tx,
                                      spec.coherence_length, spec.sensing_noise_power)
        except (FloatingPointError, np.linalg.LinAlgError):
            return SdpSolveReport("numerical-failure", None, None, None, None)
        entries = whitening.entry_exprs(rx)
        shift = (3.0 / spec.crb_budget) * whitening.w
        for p in range(3):
            for q in range(3):
                entries[p][q] = entries[p][q] - shift[p, q]
        constraints.append(cp.bmat(entries) >> 0)

    # sqrt(h^T Omega h^*) via t_k^2 <= h^T Omega h^*, scaled per user
    gain_scale = np.array(
        [np.linalg.norm(h) * np.sqrt(spec.power_budget) for h in spec.channels.user_channels]
    )
    terms = []
    for k, h in enumerate(spec.channels.user_channels):
        quad = cp.real(h @ omegas[k] @ h.conj())
        constraints.append(
            cp.bmat([[quad / gain_scale[k] ** 2, beam_gain[k]],
                     [beam_gain[k], cp.Constant(1.0)]]) >> 0
        )
        weight = 1.0 + spec.rho[k]
        leak = cp.real(h @ rx @ h.conj()) + spec.user_noise_powers[k]
        terms.append(
            2.0 * weight * spec.nu[k] * gain_scale[k] * beam_gain[k]
            - weight * spec.nu[k] ** 2 * leak
        )
    raw_objective = cp.sum(cp.hstack(terms))
    obj_scale = max(
        1.0, float(np.max(2.0 * (1.0 + spec.rho) * spec.nu * gain_scale, initial=1.0))
    )
    problem = cp.Problem(cp.Maximize(raw_objective / obj_scale), constraints)
    if dump_path is not None:
        _dump_program(problem, dump_path)
    status = _solve(problem)
    if status != "optimal":
        return SdpSolveReport(status, None, None, None, None)
    return SdpSolveReport(
        status="optimal",
        objective=float(problem.value * obj_scale),
        omegas=np.array([_hermitize(om.value) for om in omegas]),
        total_covariance=_hermitize(rx.value),
        auxiliary=None,
    )


def rank_one_recovery(report: SdpSolveReport, channels: ChannelSet) -> BeamSolution:
    """Construct rank-one beams from the relaxed covariances.

    w_k = Omega_k h_k^* / sqrt(h_k^T Omega_k h_k^*), which preserves both the
    own-beam received power of every user and the total covariance.
    """
    if report.status != "optimal":
        raise ValueError(f"cannot recover from a report with status {report.status!r}")
    beams = []
    for k, h in enumerate(channels.user_channels):
        quad = float((h @ report.omegas[k] @ h.conj()).real)
        if quad <= _DEGENERATE_BEAM_POWER:
            raise RecoveryError(
                f"user {k} has no beam power toward its own channel (h^T Omega h^* = {quad:.3e})"
            )
        beams.append(report.omegas[k] @ h.conj() / np.sqrt(quad))
    beams = np.array(beams)
    rx = _hermitize(report.total_covariance)
    r0 = _hermitize(rx - sum(np.outer(w, w.conj()) for w in beams))
    return BeamSolution(beamformers=beams, sensing_covariance=r0, total_covariance=rx)


def audit_solution(
    solution: BeamSolution,
    channels: ChannelSet,
    spec: SensingSdpSpec,
    tolerance: float = AUDIT_TOLERANCE,
) -> FeasibilityReport:
    """Re-check every constraint of the originating problem.

    All violations are reported in physical units; ``worst_relative`` divides
    each family by its natural scale (power budget, covariance trace, SINR
    floor, CRB budget) before taking the maximum.
    """
    rx = solution.total_covariance
    r0 = solution.sensing_covariance
    power = float(np.trace(rx).real)
    power_excess = max(0.0, power - spec.power_budget)
    rx_min = float(np.linalg.eigvalsh(_hermitize(rx))[0])
    r0_min = float(np.linalg.eigvalsh(_hermitize(r0))[0])
    rebuilt = rx - sum(np.outer(w, w.conj()) for w in solution.beamformers)
    identity_err = float(np.max(np.abs(rebuilt - r0)))

    sinr_shortfall = 0.0
    if spec.sinr_floor > 0 and len(channels.user_channels):
        gammas = sinr_all(channels, solution, spec.user_noise_powers)
        sinr_shortfall = max(0.0, float(np.max(spec.sinr_floor - gammas)))

    crb_excess = None
    budget = getattr(spec, "crb_budget", None)
    if budget is not None and np.isfinite(budget):
        coeffs = fim_trace_coefficients(
            spec.channels, spec.derivatives, spec.target_params,
            spec.coherence_length, spec.sensing_noise_power,
        )
        blocks = fim_blocks_from_coefficients(
            coeffs, rx, spec.coherence_length, spec.sensing_noise_power
        )
        crb_excess = max(0.0, trace_crb(blocks) - budget)

    scale_p = max(1.0, spec.power_budget)
    scale_e = max(1.0, power)
    scale_s = max(1.0, spec.sinr_floor)
    worst = max(
        power_excess / scale_p,
        max(0.0, -rx_min) / scale_e,
        max(0.0, -r0_min) / scale_e,
        identity_err / scale_e,
        sinr_shortfall / scale_s,
        (crb_excess / budget) if crb_excess is not None else 0.0,
    )
    return FeasibilityReport(
        power_excess=power_excess,
        total_cov_min_eig=rx_min,
        sensing_cov_min_eig=r0_min,
        covariance_identity_error=identity_err,
        sinr_shortfall=sinr_shortfall,
        crb_excess=crb_excess,
        worst_relative=worst,
        feasible=bool(worst <= tolerance),
    )
