"""Near-field spherical-wave channels with effective aperture loss.

The channel between a point entity (user terminal or sensing target) and one
antenna element combines free-space path loss, the projection of the element
normal onto the line of sight (effective aperture loss), and a phase that
depends on the exact element-to-entity distance rather than on angle alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ArrayState, GeometryConfig

SPEED_OF_LIGHT = 299_792_458.0

# distances below this are treated as coincident points
_MIN_DISTANCE = 1e-9


class DegenerateGeometryError(ValueError):
    """An entity coincides with an antenna element (or nearly so)."""


@dataclass(frozen=True)
class EntityPosition:
    """Spherical position of a user or target relative to the global origin.

    Attributes:
        distance: range from the origin (m), strictly positive
        elevation: polar angle theta in [0, pi]
        azimuth: angle phi in [-pi/2, pi/2]
    """

    distance: float
    elevation: float
    azimuth: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if not 0.0 <= self.elevation <= np.pi:
            raise ValueError("elevation must lie in [0, pi]")
        if not -np.pi / 2 <= self.azimuth <= np.pi / 2:
            raise ValueError("azimuth must lie in [-pi/2, pi/2]")

    def cartesian(self) -> np.ndarray:
        st, ct = np.sin(self.elevation), np.cos(self.elevation)
        cp, sp = np.cos(self.azimuth), np.sin(self.azimuth)
        return self.distance * np.array([st * cp, st * sp, ct])


@dataclass
class ChannelSet:
    """Channels derived from one array state.

    Attributes:
        user_channels: (K, N_t) complex matrix, row k is the channel of user k
        target_tx: (N_t,) complex vector from the transmit elements to the target
        target_rx: (N_r,) complex vector from the receive elements to the target
        echo_gain: complex reflection gain of the target
        echo_matrix: (N_r, N_t) rank-one echo channel, echo_gain * outer(target_rx, target_tx)
    """

    user_channels: np.ndarray
    target_tx: np.ndarray
    target_rx: np.ndarray
    echo_gain: complex
    echo_matrix: np.ndarray


def path_loss(source, point) -> float:
    """Free-space power density 1 / (4*pi*r^2) between two points."""
    diff = np.asarray(source, dtype=float) - np.asarray(point, dtype=float)
    r_sq = float(diff @ diff)
    if r_sq < _MIN_DISTANCE**2:
        raise DegenerateGeometryError("source and point coincide")
    return 1.0 / (4.0 * np.pi * r_sq)


def aperture_gain(source, point, normal) -> float:
    """Absolute projection of the line of sight onto the element normal.

    Returns a value in [0, 1]: 1 for boresight incidence, 0 for grazing.
    The sign function in the projection makes the gain non-negative even for
    entities behind the plane.
    """
    diff = np.asarray(source, dtype=float) - np.asarray(point, dtype=float)
    r = float(np.linalg.norm(diff))
    if r < _MIN_DISTANCE:
        raise DegenerateGeometryError("source and point coincide")
    return abs(float(diff @ np.asarray(normal, dtype=float))) / r


def channel_coefficient(
    entity: EntityPosition,
    antenna_global,
    normal,
    element_area: float,
    wavelength: float,
) -> complex:
    """Complex channel between one entity and one antenna element.

    The magnitude is sqrt(A * path_loss * aperture_gain); the phase advances
    by -2*pi/lambda times the exact Euclidean distance.
    """
    source = entity.cartesian()
    point = np.asarray(antenna_global, dtype=float)
    mag = np.sqrt(
        element_area * path_loss(source, point) * aperture_gain(source, point, normal)
    )
    dist = float(np.linalg.norm(source - point))
    return mag * np.exp(-2j * np.pi * dist / wavelength)


def _coefficients(points, element_positions, normal, element_area, wavelength):
    """Vectorized channel coefficients, shape (n_entities, n_elements)."""
    diff = points[:, None, :] - element_positions[None, :, :]
    dist = np.sqrt(np.einsum("enk,enk->en", diff, diff))
    if np.any(dist < _MIN_DISTANCE):
        e, n = np.nonzero(dist < _MIN_DISTANCE)
        raise DegenerateGeometryError(
            f"entity {int(e[0])} coincides with element {int(n[0])}"
        )
    projection = np.abs(diff @ normal)
    # sqrt(A/(4*pi)) * sqrt(|proj|) / dist^(3/2)
    mag = np.sqrt(element_area / (4.0 * np.pi) * projection / dist**3)
    return mag * np.exp(-2j * np.pi * dist / wavelength)


def build_channels(
    state: ArrayState,
    users,
    target: EntityPosition,
    eta: complex,
    config: GeometryConfig,
    wavelength: float,
) -> ChannelSet:
    """Assemble all channels for one array state.

    Args:
        state: current element placements and plane rotations
        users: sequence of K EntityPosition objects
        target: sensing target position
        eta: complex echo gain of the target
        config: geometry configuration (element area)
        wavelength: carrier wavelength (m)

    Returns:
        ChannelSet with per-user vectors, the two target vectors and the
        rank-one echo matrix.
    """
    tx_pos = state.tx_positions()
    rx_pos = state.rx_positions()
    u_t = state.tx_normal()
    u_r = state.rx_normal()

    points = np.array([u.cartesian() for u in users] + [target.cartesian()])
    tx_side = _coefficients(points, tx_pos, u_t, config.element_area, wavelength)
    user_channels = tx_side[:-1]
    target_tx = tx_side[-1]
    target_rx = _coefficients(
        target.cartesian()[None, :], rx_pos, u_r, config.element_area, wavelength
    )[0]
    eta = complex(eta)
    echo_matrix = eta * np.outer(target_rx, target_tx)
    return ChannelSet(
        user_channels=user_channels,
        target_tx=target_tx,
        target_rx=target_rx,
        echo_gain=eta,
        echo_matrix=echo_matrix,
    )
