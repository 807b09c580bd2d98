import numpy as np
import pytest

from rmaisac.channel import EntityPosition, build_channels
from rmaisac.estimation import (
    FimBlocks,
    NonHermitianCovarianceError,
    SensingParams,
    UnobservableTargetError,
    crb_matrix,
    fim_blocks,
    fim_blocks_from_coefficients,
    fim_trace_coefficients,
    rcrb_per_param,
    target_channel_derivatives,
    trace_crb,
)
from rmaisac.geometry import ArrayState, PlaneRotation

from conftest import make_geometry, random_hermitian_psd, random_instance

WAVELENGTH = 299792458.0 / 24e9


def fd_derivatives(state, target, wavelength, config):
    """Central-difference oracle for the target channel derivatives.

    The range step is 1e-6 * d0: the phase factor oscillates at 2*pi/lambda
    per meter, so a coarser step leaves quadratic truncation error above the
    1e-5 comparison tolerance.
    """
    steps = [1e-6 * target.distance, 1e-6, 1e-6]

    def vectors(entity):
        ch = build_channels(state, [], entity, 1.0, config, wavelength)
        return ch.target_tx, ch.target_rx

    d_tx, d_rx = [], []
    base = [target.distance, target.elevation, target.azimuth]
    for p in range(3):
        hi = base.copy()
        lo = base.copy()
        hi[p] += steps[p]
        lo[p] -= steps[p]
        tx_hi, rx_hi = vectors(EntityPosition(*hi))
        tx_lo, rx_lo = vectors(EntityPosition(*lo))
        d_tx.append((tx_hi - tx_lo) / (2 * steps[p]))
        d_rx.append((rx_hi - rx_lo) / (2 * steps[p]))
    return np.array(d_tx), np.array(d_rx)


def rel_err(got, want):
    scale = np.max(np.abs(want))
    return np.max(np.abs(got - want)) / scale


def test_derivatives_single_element_boresight():
    """Element at the global origin with its normal toward the target.

    There the element-to-target distance equals the range exactly: the
    angular derivatives vanish and the range derivative has the closed form
    -(1/d + j*2*pi/lambda) * h.
    """
    base = make_geometry(n_tx=1, n_rx=1)
    config = type(base)(
        n_tx=1, n_rx=1, region_side=base.region_side, min_spacing=base.min_spacing,
        tx_center=np.zeros(3), rx_center=np.zeros(3), element_area=base.element_area,
    )
    target = EntityPosition(10.0, np.pi / 2, 0.0)  # on the unrotated normal (+x)
    state = ArrayState(
        tx_placements=np.zeros((1, 2)),
        rx_placements=np.zeros((1, 2)),
        tx_rotation=PlaneRotation(),
        rx_rotation=PlaneRotation(),
        tx_center=np.zeros(3),
        rx_center=np.zeros(3),
    )
    derivs = target_channel_derivatives(state, target, WAVELENGTH, config)
    ch = build_channels(state, [], target, 1.0, config, WAVELENGTH)
    h = ch.target_tx[0]
    expected_dd = -(1.0 / 10.0 + 2j * np.pi / WAVELENGTH) * h
    np.testing.assert_allclose(derivs.d_target_tx[0, 0], expected_dd, rtol=1e-12)
    # angular derivatives vanish: distance and projection are stationary
    assert abs(derivs.d_target_tx[1, 0]) <= abs(h) * 1e-9
    assert abs(derivs.d_target_tx[2, 0]) <= abs(h) * 1e-9
    # magnitude derivative along range is negative
    d_mag = (derivs.d_target_tx[0, 0] * np.conj(h / abs(h))).real
    assert d_mag < 0


def test_derivatives_match_central_differences(rng):
    for _ in range(10):
        inst = random_instance(rng)
        got = inst["derivatives"]
        want_tx, want_rx = fd_derivatives(
            inst["state"], inst["target"], inst["wavelength"], inst["config"]
        )
        assert rel_err(got.d_target_tx, want_tx) < 1e-5
        assert rel_err(got.d_target_rx, want_rx) < 1e-5


def fisher_fd_oracle(state, params, config, wavelength, covariance, coherence, noise):
    """Finite-difference Fisher information from the Gaussian mean vector.

    The mean is vec(eta * g0 h0^T X) with X chosen so that X X^H / T equals
    the transmit covariance exactly; the information matrix follows from
    (2/sigma^2) Re{dmu^H/dzeta_i dmu/dzeta_j} with central differences.
    """
    evals, evecs = np.linalg.eigh(covariance)
    root = evecs @ np.diag(np.sqrt(np.maximum(evals, 0))) @ evecs.conj().T
    x = np.sqrt(coherence) * root  # N_t columns carry everything, rest zero

    def mean(zeta):
        d0, th, ph, er, ei = zeta
        entity = EntityPosition(d0, th, ph)
        ch = build_channels(state, [], entity, complex(er, ei), config, wavelength)
        return ((er + 1j * ei) * np.outer(ch.target_rx, ch.target_tx) @ x).ravel()

    base = np.array([params.d0, params.theta0, params.phi0, params.eta_re, params.eta_im])
    steps = [1e-6 * params.d0, 1e-6, 1e-6, 1e-6, 1e-6]
    grads = []
    for i in range(5):
        hi = base.copy()
        lo = base.copy()
        hi[i] += steps[i]
        lo[i] -= steps[i]
        grads.append((mean(hi) - mean(lo)) / (2 * steps[i]))
    grads = np.array(grads)
    fim = np.empty((5, 5))
    for i in range(5):
        for j in range(5):
            fim[i, j] = (2.0 / noise) * np.real(grads[i].conj() @ grads[j])
    return fim


def test_fim_matches_fd_fisher_oracle(rng):
    for _ in range(5):
        inst = random_instance(rng)
        cov = random_hermitian_psd(rng, 3, scale=5.0)
        coherence, noise = 1000.0, 1e-14
        got = fim_blocks(
            inst["channels"], inst["derivatives"], cov, inst["params"], coherence, noise
        ).full()
        want = fisher_fd_oracle(
            inst["state"], inst["params"], inst["config"], inst["wavelength"],
            cov, coherence, noise,
        )
        assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-4


def test_fim_linear_in_coherence_length(rng):
    inst = random_instance(rng)
    cov = random_hermitian_psd(rng, 3)
    one = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 500, 1e-14)
    two = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1000, 1e-14)
    np.testing.assert_allclose(two.full(), 2 * one.full(), rtol=1e-10)


def test_fim_position_block_scales_with_echo_gain_power(rng):
    inst = random_instance(rng)
    cov = random_hermitian_psd(rng, 3)
    small = SensingParams(10.0, np.pi / 3, np.pi / 4, 1.0, 0.0)
    big = SensingParams(10.0, np.pi / 3, np.pi / 4, 2.0, 0.0)
    # same channel data; the eta prefactor is what changes
    j_small = fim_blocks(inst["channels"], inst["derivatives"], cov, small, 1000, 1e-14)
    j_big = fim_blocks(inst["channels"], inst["derivatives"], cov, big, 1000, 1e-14)
    np.testing.assert_allclose(j_big.j11, 4 * j_small.j11, rtol=1e-10)


def test_fim_rank_one_path_matches_dense(rng):
    """The Gram-matrix evaluation equals the dense trace formula."""
    inst = random_instance(rng)
    cov = random_hermitian_psd(rng, 3)
    blocks = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1000.0, 1e-14)
    h0 = inst["channels"].target_tx
    g0 = inst["channels"].target_rx
    dh = inst["derivatives"].d_target_tx
    dg = inst["derivatives"].d_target_rx
    eta = inst["params"].eta
    kappa1 = 2 * abs(eta) ** 2 * 1000.0 / 1e-14
    kappa2 = 2 * 1000.0 / 1e-14
    a_mats = [np.outer(dg[p], h0) + np.outer(g0, dh[p]) for p in range(3)]
    gh = np.outer(g0, h0)
    dense11 = np.empty((3, 3))
    dense12 = np.empty((3, 2))
    for p in range(3):
        for q in range(3):
            dense11[p, q] = kappa1 * np.trace(a_mats[q] @ cov @ a_mats[p].conj().T).real
        t = np.trace(gh @ cov @ a_mats[p].conj().T)
        dense12[p, 0] = kappa2 * (np.conj(eta) * t).real
        dense12[p, 1] = kappa2 * (1j * np.conj(eta) * t).real
    dense_eta = kappa2 * np.trace(gh @ cov @ gh.conj().T).real
    np.testing.assert_allclose(blocks.j11, dense11, rtol=1e-10)
    np.testing.assert_allclose(blocks.j12, dense12, rtol=1e-10)
    np.testing.assert_allclose(blocks.j22, np.diag([dense_eta, dense_eta]), rtol=1e-10)
    # symmetry: the two Re-trace orders agree
    np.testing.assert_allclose(dense11, dense11.T, rtol=1e-10)


def test_trace_coefficients_agree_with_fast_path(rng):
    inst = random_instance(rng)
    cov = random_hermitian_psd(rng, 3)
    coeffs = fim_trace_coefficients(
        inst["channels"], inst["derivatives"], inst["params"], 1000.0, 1e-14
    )
    via_coeffs = fim_blocks_from_coefficients(coeffs, cov, 1000.0, 1e-14)
    direct = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1000.0, 1e-14)
    np.testing.assert_allclose(via_coeffs.full(), direct.full(), rtol=1e-10)


def test_fim_rejects_non_hermitian_covariance(rng):
    inst = random_instance(rng)
    cov = random_hermitian_psd(rng, 3)
    cov[0, 1] += 1e-6
    with pytest.raises(NonHermitianCovarianceError):
        fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1000, 1e-14)


def _blocks(j11, j12, j22, coherence=1000.0, noise=1e-14):
    return FimBlocks(j11=j11, j12=j12, j22=j22, coherence_length=coherence, noise_power=noise)


def test_crb_reduces_to_inverse_when_uncoupled():
    j11 = np.diag([4.0, 9.0, 16.0])
    blocks = _blocks(j11, np.zeros((3, 2)), np.eye(2))
    np.testing.assert_allclose(crb_matrix(blocks), np.diag([0.25, 1 / 9, 1 / 16]), rtol=1e-12)
    np.testing.assert_allclose(trace_crb(blocks), 0.25 + 1 / 9 + 1 / 16, rtol=1e-12)
    np.testing.assert_allclose(rcrb_per_param(blocks), [0.5, 1 / 3, 0.25], rtol=1e-12)


def test_crb_halves_when_coherence_doubles(rng):
    inst = random_instance(rng)
    cov = random_hermitian_psd(rng, 3, scale=5.0)
    one = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 700, 1e-14)
    two = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1400, 1e-14)
    np.testing.assert_allclose(crb_matrix(two), crb_matrix(one) / 2, rtol=1e-9)


def test_crb_matches_full_inverse_oracle(rng):
    for _ in range(10):
        inst = random_instance(rng)
        cov = random_hermitian_psd(rng, 3, scale=5.0)
        blocks = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1000, 1e-14)
        full_inverse = np.linalg.inv(blocks.full())
        np.testing.assert_allclose(crb_matrix(blocks), full_inverse[:3, :3], rtol=1e-8)


def test_crb_power_monotonicity(rng):
    inst = random_instance(rng)
    cov = random_hermitian_psd(rng, 3, scale=2.0)
    base = fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1000, 1e-14)
    scaled = fim_blocks(inst["channels"], inst["derivatives"], 3.0 * cov, inst["params"], 1000, 1e-14)
    np.testing.assert_allclose(scaled.full(), 3.0 * base.full(), rtol=1e-9)
    np.testing.assert_allclose(crb_matrix(scaled), crb_matrix(base) / 3.0, rtol=1e-9)


def test_crb_symmetric_psd(rng):
    for _ in range(10):
        inst = random_instance(rng)
        cov = random_hermitian_psd(rng, 3)
        crb = crb_matrix(
            fim_blocks(inst["channels"], inst["derivatives"], cov, inst["params"], 1000, 1e-14)
        )
        np.testing.assert_allclose(crb, crb.T, rtol=1e-10)
        assert np.linalg.eigvalsh(crb)[0] > 0


def test_unobservable_target_detected():
    j11 = np.diag([1.0, 1.0, 1e-20])
    blocks = _blocks(j11, np.zeros((3, 2)), np.eye(2))
    with pytest.raises(UnobservableTargetError):
        crb_matrix(blocks)
    with pytest.raises(UnobservableTargetError):
        crb_matrix(_blocks(np.eye(3), np.zeros((3, 2)), np.zeros((2, 2))))
