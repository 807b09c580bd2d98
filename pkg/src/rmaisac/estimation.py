"""Fisher information and Cramér-Rao bounds for target position estimation.

The unknown parameter vector is (d0, theta0, phi0, eta_re, eta_im): target
range, elevation, azimuth and the real/imaginary parts of the echo gain.
The information matrix is assembled from analytic channel derivatives; the
position CRB is the inverse of the Schur complement that eliminates the
echo-gain block.

The echo channel is rank one, so every information entry reduces to products
of a handful of inner products and quadratic forms. ``fim_blocks`` uses that
fast path; ``fim_trace_coefficients`` exposes the same entries as trace-form
linear operators on the transmit covariance for use inside convex programs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelSet, DegenerateGeometryError, EntityPosition, _MIN_DISTANCE
from .geometry import ArrayState, GeometryConfig

_HERMITIAN_TOL = 1e-8
_CONDITION_LIMIT = 1e14


class UnobservableTargetError(RuntimeError):
    """The information matrix is too ill-conditioned to bound the estimate."""


class NonHermitianCovarianceError(ValueError):
    """The supplied transmit covariance is not Hermitian."""


@dataclass(frozen=True)
class SensingParams:
    """Ground-truth values of the unknown parameters."""

    d0: float
    theta0: float
    phi0: float
    eta_re: float = 1.0
    eta_im: float = 0.0

    def __post_init__(self):
        if not self.d0 > 0:
            raise ValueError("d0 must be positive")

    @property
    def eta(self) -> complex:
        return complex(self.eta_re, self.eta_im)

    def position(self) -> EntityPosition:
        return EntityPosition(self.d0, self.theta0, self.phi0)


@dataclass
class ChannelDerivatives:
    """Partial derivatives of the target channel vectors.

    Rows are ordered (d0, theta0, phi0).

    Attributes:
        d_target_tx: (3, N_t) derivatives of the transmit-side target vector
        d_target_rx: (3, N_r) derivatives of the receive-side target vector
    """

    d_target_tx: np.ndarray
    d_target_rx: np.ndarray


@dataclass
class FimBlocks:
    """Partitioned 5x5 Fisher information matrix.

    j11 is the 3x3 position block, j22 the 2x2 echo-gain block and j12 their
    3x2 coupling.
    """

    j11: np.ndarray
    j12: np.ndarray
    j22: np.ndarray
    coherence_length: float
    noise_power: float

    def full(self) -> np.ndarray:
        top = np.hstack([self.j11, self.j12])
        bottom = np.hstack([self.j12.T, self.j22])
        return np.vstack([top, bottom])


def _position_jacobian(target: EntityPosition) -> np.ndarray:
    """Rows are d(cartesian)/d(d0), d/d(theta0), d/d(phi0); shape (3, 3)."""
    st, ct = np.sin(target.elevation), np.cos(target.elevation)
    cp, sp = np.cos(target.azimuth), np.sin(target.azimuth)
    d = target.distance
    return np.array(
        [
            [st * cp, st * sp, ct],
            [d * ct * cp, d * ct * sp, -d * st],
            [-d * st * sp, d * st * cp, 0.0],
        ]
    )


def _side_derivatives(p0, dp0, element_positions, normal, element_area, wavelength):
    """Analytic derivative vectors for one plane, shape (3, N)."""
    diff = p0[None, :] - element_positions
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist < _MIN_DISTANCE):
        raise DegenerateGeometryError("target coincides with an antenna element")
    proj = diff @ normal
    abs_proj = np.abs(proj)
    sign = np.sign(proj)
    c = np.sqrt(element_area / (4.0 * np.pi))
    mag = c * np.sqrt(abs_proj) * dist**-1.5
    wavenumber = 2.0 * np.pi / wavelength
    phase = np.exp(-1j * wavenumber * dist)
    out = np.empty((3, element_positions.shape[0]), dtype=complex)
    for p in range(3):
        d_dist = diff @ dp0[p] / dist
        d_proj = float(normal @ dp0[p])
        d_mag = c * (
            0.5 * sign * d_proj * abs_proj**-0.5 * dist**-1.5
            - 1.5 * np.sqrt(abs_proj) * dist**-2.5 * d_dist
        )
        out[p] = (d_mag - 1j * wavenumber * mag * d_dist) * phase
    return out


def target_channel_derivatives(
    state: ArrayState,
    target: EntityPosition,
    wavelength: float,
    config: GeometryConfig,
) -> ChannelDerivatives:
    """Analytic partials of the target channel vectors w.r.t. (d0, theta0, phi0).

    Differentiates both the phase (through the exact distance) and the
    magnitude (through path loss and aperture projection) by the chain rule.
    Not differentiable where the line of sight is tangent to a plane
    (zero projection); such geometries carry zero channel gain anyway.
    """
    p0 = target.cartesian()
    dp0 = _position_jacobian(target)
    d_tx = _side_derivatives(
        p0, dp0, state.tx_positions(), state.tx_normal(), config.element_area, wavelength
    )
    d_rx = _side_derivatives(
        p0, dp0, state.rx_positions(), state.rx_normal(), config.element_area, wavelength
    )
    return ChannelDerivatives(d_target_tx=d_tx, d_target_rx=d_rx)


def _check_hermitian(covariance: np.ndarray) -> np.ndarray:
    covariance = np.asarray(covariance)
    asym = np.max(np.abs(covariance - covariance.conj().T))
    if asym > _HERMITIAN_TOL:
        raise NonHermitianCovarianceError(
            f"covariance asymmetry {asym:.3e} exceeds {_HERMITIAN_TOL:.0e}"
        )
    return covariance


def fim_blocks(
    channels: ChannelSet,
    derivatives: ChannelDerivatives,
    covariance: np.ndarray,
    params: SensingParams,
    coherence_length: float,
    noise_power: float,
) -> FimBlocks:
    """Assemble the 5x5 information matrix for a given transmit covariance.

    Exploits the rank-one echo structure: with H = [h0; dh] and
    G = [g0; dg], only the 4x4 Gram matrices H R H^H (conjugated quadratic
    forms) and G^H G are needed, keeping the cost O((N_t + N_r)^2).
    """
    if coherence_length < 1:
        raise ValueError("coherence_length must be at least 1")
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    covariance = _check_hermitian(covariance)

    eta = params.eta
    kappa1 = 2.0 * abs(eta) ** 2 * coherence_length / noise_power
    kappa2 = 2.0 * coherence_length / noise_power

    h_stack = np.vstack([channels.target_tx[None, :], derivatives.d_target_tx])
    g_stack = np.vstack([channels.target_rx[None, :], derivatives.d_target_rx])
    # quad[a, b] = h_a^T R h_b^*  and  gram[a, b] = g_a^H g_b
    quad = h_stack @ covariance @ h_stack.conj().T
    gram = g_stack.conj() @ g_stack.T

    j11 = np.empty((3, 3))
    for p in range(3):
        for q in range(3):
            t = (
                gram[0, q + 1] * quad[0, p + 1]
                + gram[p + 1, q + 1] * quad[0, 0]
                + gram[0, 0] * quad[q + 1, p + 1]
                + gram[p + 1, 0] * quad[q + 1, 0]
            )
            j11[p, q] = kappa1 * t.real

    j12 = np.empty((3, 2))
    for p in range(3):
        t = gram[0, 0] * quad[0, p + 1] + gram[p + 1, 0] * quad[0, 0]
        j12[p, 0] = kappa2 * (np.conj(eta) * t).real
        j12[p, 1] = kappa2 * (1j * np.conj(eta) * t).real

    j_eta = kappa2 * (gram[0, 0] * quad[0, 0]).real
    j22 = np.diag([j_eta, j_eta])
    return FimBlocks(
        j11=j11,
        j12=j12,
        j22=j22,
        coherence_length=coherence_length,
        noise_power=noise_power,
    )


@dataclass
class FimTraceCoefficients:
    """Information entries as linear operators on the transmit covariance.

    For the position block, J_pq(R) = kappa1 * Re tr(R @ c_pos[p, q]).
    For the coupling block, with t_p = tr(R @ d_pos[p]),
    J_{p,eta_re} = kappa2 * Re(conj(eta) * t_p) and
    J_{p,eta_im} = kappa2 * Re(1j * conj(eta) * t_p).
    The echo-gain diagonal is J_eta(R) = kappa2 * Re tr(R @ e_gain).
    """

    c_pos: np.ndarray
    d_pos: np.ndarray
    e_gain: np.ndarray
    kappa1: float
    kappa2: float
    eta: complex


def fim_trace_coefficients(
    channels: ChannelSet,
    derivatives: ChannelDerivatives,
    params: SensingParams,
    coherence_length: float,
    noise_power: float,
) -> FimTraceCoefficients:
    """Precompute the constant coefficient matrices of the affine FIM map."""
    h0 = channels.target_tx
    g0 = channels.target_rx
    dh = derivatives.d_target_tx
    dg = derivatives.d_target_rx
    n_t = h0.shape[0]
    eta = params.eta
    kappa1 = 2.0 * abs(eta) ** 2 * coherence_length / noise_power
    kappa2 = 2.0 * coherence_length / noise_power

    g_norm = g0.conj() @ g0
    c_pos = np.empty((3, 3, n_t, n_t), dtype=complex)
    d_pos = np.empty((3, n_t, n_t), dtype=complex)
    for p in range(3):
        for q in range(3):
            c_pos[p, q] = (
                (g0.conj() @ dg[q]) * np.outer(dh[p].conj(), h0)
                + (dg[p].conj() @ dg[q]) * np.outer(h0.conj(), h0)
                + g_norm * np.outer(dh[p].conj(), dh[q])
                + (dg[p].conj() @ g0) * np.outer(h0.conj(), dh[q])
            )
        d_pos[p] = g_norm * np.outer(dh[p].conj(), h0) + (dg[p].conj() @ g0) * np.outer(
            h0.conj(), h0
        )
    e_gain = g_norm * np.outer(h0.conj(), h0)
    return FimTraceCoefficients(
        c_pos=c_pos, d_pos=d_pos, e_gain=e_gain, kappa1=kappa1, kappa2=kappa2, eta=eta
    )


def fim_blocks_from_coefficients(
    coeffs: FimTraceCoefficients,
    covariance: np.ndarray,
    coherence_length: float,
    noise_power: float,
) -> FimBlocks:
    """Evaluate the trace-form operators at a concrete covariance."""
    j11 = np.empty((3, 3))
    j12 = np.empty((3, 2))
    for p in range(3):
        for q in range(3):
            j11[p, q] = coeffs.kappa1 * np.trace(covariance @ coeffs.c_pos[p, q]).real
        t = np.trace(covariance @ coeffs.d_pos[p])
        j12[p, 0] = coeffs.kappa2 * (np.conj(coeffs.eta) * t).real
        j12[p, 1] = coeffs.kappa2 * (1j * np.conj(coeffs.eta) * t).real
    j_eta = coeffs.kappa2 * np.trace(covariance @ coeffs.e_gain).real
    return FimBlocks(
        j11=j11,
        j12=j12,
        j22=np.diag([j_eta, j_eta]),
        coherence_length=coherence_length,
        noise_power=noise_power,
    )


def _schur_complement(blocks: FimBlocks) -> np.ndarray:
    j22_diag = np.diag(blocks.j22)
    if np.any(j22_diag <= 0):
        raise UnobservableTargetError("echo-gain information block is singular")
    schur = blocks.j11 - blocks.j12 @ (blocks.j12.T / j22_diag[:, None])
    return 0.5 * (schur + schur.T)


def crb_matrix(blocks: FimBlocks) -> np.ndarray:
    """Position CRB: inverse of the Schur complement of the echo-gain block.

    Solved through a Cholesky factorization; raises UnobservableTargetError
    when the complement is indefinite or its conditioning exceeds 1e14.
    """
    schur = _schur_complement(blocks)
    eigs = np.linalg.eigvalsh(schur)
    if eigs[0] <= 0 or eigs[0] < 1e-14 * eigs[-1] or eigs[-1] / eigs[0] > _CONDITION_LIMIT:
        raise UnobservableTargetError(
            f"Schur complement conditioning {eigs[-1]:.3e}/{eigs[0]:.3e} is unusable"
        )
    factor = scipy.linalg.cho_factor(schur, lower=True)
    crb = scipy.linalg.cho_solve(factor, np.eye(3))
    return 0.5 * (crb + crb.T)


def trace_crb(blocks: FimBlocks) -> float:
    """Trace of the position CRB matrix."""
    return float(np.trace(crb_matrix(blocks)))


def rcrb_per_param(blocks: FimBlocks) -> np.ndarray:
    """Root CRB of (d0, theta0, phi0): square roots of the CRB diagonal."""
    return np.sqrt(np.diag(crb_matrix(blocks)))
