import os

import numpy as np
import pytest

from rmaisac.channel import ChannelSet
from rmaisac.comm_metrics import BeamSolution, sinr_all, surrogate_f2
from rmaisac.conic import (
    CommSdpSpec,
    RecoveryError,
    SdpSolveReport,
    SensingSdpSpec,
    audit_solution,
    hermitian_real_embedding,
    rank_one_recovery,
    solve_comm_sdp,
    solve_sensing_sdp,
)
from rmaisac.estimation import fim_blocks, trace_crb

from conftest import random_hermitian_psd, random_instance

T = 1000.0
NOISE = 1e-14


def sensing_spec(inst, power=10.0, floor=10 ** 0.6, n_users=None):
    channels = inst["channels"]
    k = channels.user_channels.shape[0] if n_users is None else n_users
    return SensingSdpSpec(
        channels=channels,
        derivatives=inst["derivatives"],
        target_params=inst["params"],
        coherence_length=T,
        sensing_noise_power=NOISE,
        power_budget=power,
        sinr_floor=floor,
        user_noise_powers=np.full(k, NOISE),
    )


def comm_spec(inst, rho, nu, power=10.0, floor=10 ** 0.6, crb_budget=np.inf):
    channels = inst["channels"]
    k = channels.user_channels.shape[0]
    return CommSdpSpec(
        channels=channels,
        derivatives=inst["derivatives"],
        target_params=inst["params"],
        coherence_length=T,
        sensing_noise_power=NOISE,
        power_budget=power,
        sinr_floor=floor,
        user_noise_powers=np.full(k, NOISE),
        crb_budget=crb_budget,
        rho=np.asarray(rho, dtype=float),
        nu=np.asarray(nu, dtype=float),
    )


def crb_at(inst, covariance):
    blocks = fim_blocks(
        inst["channels"], inst["derivatives"], covariance, inst["params"], T, NOISE
    )
    return trace_crb(blocks)


def test_hermitian_embedding_psd_equivalence(rng):
    for _ in range(20):
        n = rng.integers(2, 6)
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        psd = a @ a.conj().T
        emb = hermitian_real_embedding(psd)
        assert np.linalg.eigvalsh(emb)[0] >= -1e-10 * max(1, np.trace(psd).real)
        # subtract enough to make it indefinite, embedding must follow
        shifted = psd - 2 * np.linalg.eigvalsh(psd)[-1] * np.eye(n)
        emb_bad = hermitian_real_embedding(shifted)
        assert np.linalg.eigvalsh(shifted)[0] < 0
        assert np.linalg.eigvalsh(emb_bad)[0] < 0
        # eigenvalues appear in duplicated pairs
        np.testing.assert_allclose(
            np.sort(np.linalg.eigvalsh(emb))[::2],
            np.sort(np.linalg.eigvalsh(psd)),
            atol=1e-9 * max(1, np.trace(psd).real),
        )


def test_sensing_sdp_uses_full_power(rng):
    inst = random_instance(rng, n_tx=2, n_rx=2, n_users=1)
    spec = sensing_spec(inst, power=10.0, floor=1.0)  # 0 dB floor
    report = solve_sensing_sdp(spec)
    assert report.status == "optimal"
    np.testing.assert_allclose(
        np.trace(report.total_covariance).real, 10.0, rtol=1e-5
    )
    # more power must strictly help
    richer = solve_sensing_sdp(sensing_spec(inst, power=10.0 * 1.0001, floor=1.0))
    assert richer.objective < report.objective


def test_sensing_sdp_unreachable_floor_infeasible(rng):
    inst = random_instance(rng, n_tx=2, n_rx=2, n_users=1)
    report = solve_sensing_sdp(sensing_spec(inst, power=1e-6, floor=1e6))
    assert report.status == "infeasible"


def test_sensing_sdp_block_tight_at_optimum(rng):
    for _ in range(3):
        inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
        report = solve_sensing_sdp(sensing_spec(inst))
        assert report.status == "optimal"
        achieved = crb_at(inst, report.total_covariance)
        assert abs(report.objective - achieved) / achieved < 1e-4
        # the bounding matrix agrees with the achieved CRB inverse
        np.testing.assert_allclose(
            np.trace(np.linalg.inv(report.auxiliary)), achieved, rtol=1e-3
        )


def test_comm_sdp_matched_filter_when_unconstrained(rng):
    inst = random_instance(rng, n_tx=3, n_rx=3, n_users=1)
    h = inst["channels"].user_channels[0]
    rho = np.array([10.0])
    nu = np.array([1.0 / np.linalg.norm(h)])
    report = solve_comm_sdp(comm_spec(inst, rho, nu, floor=0.0, crb_budget=np.inf))
    assert report.status == "optimal"
    solution = rank_one_recovery(report, inst["channels"])
    w = solution.beamformers[0]
    cosine = abs(h @ w) / (np.linalg.norm(h) * np.linalg.norm(w))
    assert np.arccos(min(1.0, cosine)) < 1e-3


def test_comm_sdp_budget_sweep_monotone(rng):
    inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
    k = 2
    rho = np.full(k, 5.0)
    h_norms = np.linalg.norm(inst["channels"].user_channels, axis=1)
    nu = 1.0 / h_norms
    # find a reachable budget scale first
    probe = solve_comm_sdp(comm_spec(inst, rho, nu, floor=0.0, crb_budget=np.inf))
    base_crb = crb_at(inst, probe.total_covariance)
    budgets = [base_crb * f for f in (30.0, 10.0, 3.0)]
    objectives = []
    for budget in budgets:
        report = solve_comm_sdp(comm_spec(inst, rho, nu, floor=0.0, crb_budget=budget))
        assert report.status == "optimal"
        achieved = crb_at(inst, report.total_covariance)
        assert achieved <= budget * (1 + 1e-6)
        objectives.append(report.objective)
    assert objectives[0] >= objectives[1] - 1e-6 * abs(objectives[0])
    assert objectives[1] >= objectives[2] - 1e-6 * abs(objectives[1])


def test_comm_sdp_impossible_budget_infeasible(rng):
    inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
    rho = np.full(2, 5.0)
    nu = 1.0 / np.linalg.norm(inst["channels"].user_channels, axis=1)
    report = solve_comm_sdp(comm_spec(inst, rho, nu, floor=0.0, crb_budget=1e-30))
    assert report.status == "infeasible"


def synthetic_report(rng, channels, n_t, k, power=10.0):
    omegas = np.array([random_hermitian_psd(rng, n_t, scale=power / (2 * k)) for _ in range(k)])
    slack = random_hermitian_psd(rng, n_t, scale=power / 4)
    rx = omegas.sum(axis=0) + slack
    return SdpSolveReport(
        status="optimal",
        objective=0.0,
        omegas=omegas,
        total_covariance=rx,
        auxiliary=None,
    )


def test_recovery_identities_on_random_reports(rng):
    """Own-channel power and covariance slack survive the rank-one rebuild."""
    n_t, k = 4, 3
    for _ in range(100):
        h = rng.normal(size=(k, n_t)) + 1j * rng.normal(size=(k, n_t))
        channels = ChannelSet(
            user_channels=h,
            target_tx=np.ones(n_t, dtype=complex),
            target_rx=np.ones(2, dtype=complex),
            echo_gain=1.0,
            echo_matrix=np.ones((2, n_t), dtype=complex),
        )
        report = synthetic_report(rng, channels, n_t, k)
        solution = rank_one_recovery(report, channels)
        for idx in range(k):
            before = (h[idx] @ report.omegas[idx] @ h[idx].conj()).real
            after = abs(h[idx] @ solution.beamformers[idx]) ** 2
            assert abs(after - before) / before < 1e-10
        r0_min = np.linalg.eigvalsh(solution.sensing_covariance)[0]
        assert r0_min >= -1e-8
        np.testing.assert_allclose(
            solution.total_covariance, report.total_covariance, rtol=1e-12
        )


def test_recovery_idempotent_on_rank_one(rng):
    n_t = 3
    h = rng.normal(size=(1, n_t)) + 1j * rng.normal(size=(1, n_t))
    w = rng.normal(size=n_t) + 1j * rng.normal(size=n_t)
    omega = np.outer(w, w.conj())
    channels = ChannelSet(h, np.ones(n_t, dtype=complex), np.ones(2, dtype=complex),
                          1.0, np.ones((2, n_t), dtype=complex))
    report = SdpSolveReport("optimal", 0.0, omega[None], omega + np.eye(n_t), None)
    solution = rank_one_recovery(report, channels)
    got = solution.beamformers[0]
    # equal up to a unit-modulus phase
    phase = (h[0] @ w) / abs(h[0] @ w)
    np.testing.assert_allclose(got, w * phase.conj() * np.sign(1), rtol=1e-9)
    np.testing.assert_allclose(abs(h[0] @ got), abs(h[0] @ w), rtol=1e-12)


def test_recovery_rejects_degenerate_beam(rng):
    n_t = 3
    h = np.array([[1.0 + 0j, 0.0, 0.0]])
    omega = np.zeros((n_t, n_t), dtype=complex)
    omega[2, 2] = 1.0  # no power toward the user channel
    channels = ChannelSet(h, np.ones(n_t, dtype=complex), np.ones(2, dtype=complex),
                          1.0, np.ones((2, n_t), dtype=complex))
    report = SdpSolveReport("optimal", 0.0, omega[None], omega, None)
    with pytest.raises(RecoveryError, match="user 0"):
        rank_one_recovery(report, channels)


def test_recovery_requires_optimal_status(rng):
    report = SdpSolveReport("infeasible", None, None, None, None)
    with pytest.raises(ValueError):
        rank_one_recovery(report, None)


def test_recovery_preserves_sinr_floor_and_objective(rng):
    """End to end: solve, recover, and re-audit the recovered solution."""
    for _ in range(3):
        inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
        spec = sensing_spec(inst)
        report = solve_sensing_sdp(spec)
        assert report.status == "optimal"
        solution = rank_one_recovery(report, inst["channels"])
        gammas = sinr_all(inst["channels"], solution, spec.user_noise_powers)
        assert np.all(gammas >= spec.sinr_floor - 1e-6)
        # objective depends only on the total covariance, which is unchanged
        np.testing.assert_allclose(
            crb_at(inst, solution.total_covariance), report.objective, rtol=1e-4
        )
        audit = audit_solution(solution, inst["channels"], spec)
        assert audit.feasible, audit


def test_comm_objective_preserved_under_recovery(rng):
    inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
    rho = np.full(2, 4.0)
    nu = 1.0 / np.linalg.norm(inst["channels"].user_channels, axis=1)
    spec = comm_spec(inst, rho, nu, floor=10 ** 0.6)
    report = solve_comm_sdp(spec)
    assert report.status == "optimal"
    solution = rank_one_recovery(report, inst["channels"])
    value = surrogate_f2(inst["channels"], solution, rho, nu, spec.user_noise_powers)
    assert abs(value - report.objective) / abs(report.objective) < 1e-6


def test_audit_reports_power_violation(rng):
    inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
    spec = sensing_spec(inst, power=10.0)
    n_t = 3
    beams = np.zeros((2, n_t), dtype=complex)
    rx = (11.0 / n_t) * np.eye(n_t, dtype=complex)  # 10% over budget
    solution = BeamSolution(beams, rx, rx)
    audit = audit_solution(solution, inst["channels"], spec)
    assert not audit.feasible
    np.testing.assert_allclose(audit.power_excess, 1.0, rtol=1e-12)


def test_audit_reports_sinr_shortfall_for_zero_solution(rng):
    inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
    spec = sensing_spec(inst)
    n_t = 3
    solution = BeamSolution(
        np.zeros((2, n_t), dtype=complex),
        np.zeros((n_t, n_t), dtype=complex),
        np.zeros((n_t, n_t), dtype=complex),
    )
    audit = audit_solution(solution, inst["channels"], spec)
    assert not audit.feasible
    np.testing.assert_allclose(audit.sinr_shortfall, spec.sinr_floor, rtol=1e-12)


def test_program_dump_format(rng, tmp_path):
    inst = random_instance(rng, n_tx=2, n_rx=2, n_users=1)
    path = os.path.join(tmp_path, "program.txt")
    solve_sensing_sdp(sensing_spec(inst, floor=1.0), dump_path=path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert lines
    for line in lines:
        row, col, value = line.split()
        assert row == "obj" or row.isdigit()
        assert col == "rhs" or col.isdigit()
        float(value)


def test_f2_never_decreases_across_one_beam_update(rng):
    """One auxiliary refresh plus one beam solve never lowers the surrogate."""
    from rmaisac.comm_metrics import BeamSolution, update_nu, update_rho

    for _ in range(3):
        inst = random_instance(rng, n_tx=3, n_rx=3, n_users=2)
        channels = inst["channels"]
        k, n_t = 2, 3
        beams = np.stack([
            np.sqrt(10.0 / (2 * k)) * h.conj() / np.linalg.norm(h)
            for h in channels.user_channels
        ])
        r0 = (10.0 / 2 / n_t) * np.eye(n_t)
        rx = sum(np.outer(w, w.conj()) for w in beams) + r0
        incumbent = BeamSolution(beams, r0, rx)
        noise = np.full(k, NOISE)
        rho = update_rho(channels, incumbent, noise)
        nu = update_nu(channels, incumbent, noise)
        before = surrogate_f2(channels, incumbent, rho, nu, noise)
        report = solve_comm_sdp(comm_spec(inst, rho, nu, floor=10 ** 0.6))
        assert report.status == "optimal"
        updated = rank_one_recovery(report, channels)
        after = surrogate_f2(channels, updated, rho, nu, noise)
        assert after >= before * (1 - 1e-6)
