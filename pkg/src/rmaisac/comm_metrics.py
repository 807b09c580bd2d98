"""Downlink SINR, rates, and fractional-programming surrogates.

Channels enter through transposed products h^T w (no conjugation on the
channel side); the auxiliary updates follow the closed-form first-order
optima of the two fractional-programming transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet


@dataclass
class BeamSolution:
    """Transmit-side solution: per-user beams plus the sensing covariance.

    Attributes:
        beamformers: (K, N_t) complex matrix, row k is beam w_k
        sensing_covariance: (N_t, N_t) Hermitian PSD covariance of the
            dedicated sensing signal
        total_covariance: (N_t, N_t) Hermitian PSD transmit covariance,
            equal to sum_k w_k w_k^H plus the sensing covariance
    """

    beamformers: np.ndarray
    sensing_covariance: np.ndarray
    total_covariance: np.ndarray

    def power(self) -> float:
        return float(np.trace(self.total_covariance).real)


def _signal_matrix(channels: ChannelSet, solution: BeamSolution) -> np.ndarray:
    """(K, K) matrix of |h_k^T w_i|^2 terms."""
    cross = channels.user_channels @ solution.beamformers.T
    return np.abs(cross) ** 2


def _sensing_leakage(channels: ChannelSet, solution: BeamSolution) -> np.ndarray:
    """Per-user real quadratic forms h_k^T R0 h_k^*."""
    h = channels.user_channels
    return np.einsum("ki,ij,kj->k", h, solution.sensing_covariance, h.conj()).real


def _total_forms(channels: ChannelSet, solution: BeamSolution) -> np.ndarray:
    """Per-user real quadratic forms h_k^T Rx h_k^*."""
    h = channels.user_channels
    return np.einsum("ki,ij,kj->k", h, solution.total_covariance, h.conj()).real


def sinr_all(channels: ChannelSet, solution: BeamSolution, noise_powers) -> np.ndarray:
    """SINR of every user under the given solution."""
    noise = np.asarray(noise_powers, dtype=float)
    sig = _signal_matrix(channels, solution)
    own = np.diag(sig)
    interference = sig.sum(axis=1) - own
    denom = interference + _sensing_leakage(channels, solution) + noise
    return own / denom


def sinr(
    channels: ChannelSet, solution: BeamSolution, user_index: int, noise_power: float
) -> float:
    """SINR of one user: own-beam power over interference, sensing leakage and noise."""
    h = channels.user_channels[user_index]
    cross = np.abs(h @ solution.beamformers.T) ** 2
    own = cross[user_index]
    leak = float((h @ solution.sensing_covariance @ h.conj()).real)
    return float(own / (cross.sum() - own + leak + noise_power))


def sum_rate(channels: ChannelSet, solution: BeamSolution, noise_powers) -> float:
    """Downlink sum rate in bits/s/Hz."""
    return float(np.sum(np.log2(1.0 + sinr_all(channels, solution, noise_powers))))


def update_rho(channels: ChannelSet, solution: BeamSolution, noise_powers) -> np.ndarray:
    """Optimal Lagrangian-transform auxiliaries: rho_k equals the current SINR."""
    return sinr_all(channels, solution, noise_powers)


def update_nu(channels: ChannelSet, solution: BeamSolution, noise_powers) -> np.ndarray:
    """Optimal quadratic-transform auxiliaries.

    nu_k = |h_k^T w_k| / (h_k^T Rx h_k^* + sigma_k^2).
    """
    noise = np.asarray(noise_powers, dtype=float)
    own = np.abs(
        np.einsum("ki,ki->k", channels.user_channels, solution.beamformers)
    )
    return own / (_total_forms(channels, solution) + noise)


def surrogate_f1(
    channels: ChannelSet, solution: BeamSolution, rho, noise_powers
) -> float:
    """Lagrangian-transform surrogate of the sum rate.

    The ratio denominator is the total received power (own beam included)
    plus noise; at rho_k equal to the SINR the surrogate collapses to the
    sum rate.
    """
    rho = np.asarray(rho, dtype=float)
    noise = np.asarray(noise_powers, dtype=float)
    own = np.diag(_signal_matrix(channels, solution))
    total = _total_forms(channels, solution) + noise
    return float(
        np.sum(np.log2(1.0 + rho) - rho + (1.0 + rho) * own / total)
    )


def surrogate_f2(
    channels: ChannelSet, solution: BeamSolution, rho, nu, noise_powers
) -> float:
    """Quadratic-transform surrogate: the objective the beamforming step maximizes."""
    rho = np.asarray(rho, dtype=float)
    nu = np.asarray(nu, dtype=float)
    noise = np.asarray(noise_powers, dtype=float)
    own = np.abs(
        np.einsum("ki,ki->k", channels.user_channels, solution.beamformers)
    )
    total = _total_forms(channels, solution) + noise
    return float(np.sum(2.0 * (1.0 + rho) * nu * own - (1.0 + rho) * nu**2 * total))
