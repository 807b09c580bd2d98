"""Geometry of rotatable movable-antenna (RMA) planes.

This module provides the geometric layer of the toolkit:

- plane rotations about the x/y/z axes and the associated rotation matrix
- local-to-global element positioning for the transmit plane (TP) and
  receive plane (RP)
- feasibility checks: mutual-reflection constraints between the two planes,
  minimum inter-element spacing, and region bounds
- uniform quantization of rotation angles for stepper-motor style hardware

All operations are pure functions of their inputs and are safe to call
concurrently on shared read-only data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(angle):
    """Wrap an angle (scalar or array, radians) to the interval [0, 2*pi)."""
    wrapped = np.mod(angle, TWO_PI)
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    if np.ndim(wrapped) == 0:
        return 0.0 if wrapped >= TWO_PI else float(wrapped)
    wrapped = np.asarray(wrapped, dtype=float)
    wrapped[wrapped >= TWO_PI] = 0.0
    return wrapped


@dataclass(frozen=True)
class PlaneRotation:
    """Rotation angles of one antenna plane about the x, y and z axes.

    Angles are in radians and are normalized to [0, 2*pi) on construction.
    """

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", wrap_angle(self.alpha))
        object.__setattr__(self, "beta", wrap_angle(self.beta))
        object.__setattr__(self, "gamma", wrap_angle(self.gamma))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])

    @classmethod
    def from_array(cls, angles) -> "PlaneRotation":
        a, b, g = np.asarray(angles, dtype=float)
        return cls(a, b, g)


@dataclass(frozen=True)
class LocalPlacement:
    """In-plane element coordinates (meters); the local x axis is the normal."""

    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y, self.z])


@dataclass(frozen=True)
class GeometryConfig:
    """Static geometry of the two-plane array.

    Attributes:
        n_tx: number of transmit elements on the TP
        n_rx: number of receive elements on the RP
        region_side: side length D of the square moving region (m)
        min_spacing: minimum distance between same-plane elements (m)
        tx_center: TP center position in global coordinates (3,)
        rx_center: RP center position in global coordinates (3,)
        element_area: physical aperture of a single element (m^2)
    """

    n_tx: int
    n_rx: int
    region_side: float
    min_spacing: float
    tx_center: np.ndarray
    rx_center: np.ndarray
    element_area: float

    def __post_init__(self):
        if self.region_side <= 0:
            raise ValueError("region_side must be positive")
        if self.min_spacing <= 0:
            raise ValueError("min_spacing must be positive")
        if self.element_area <= 0:
            raise ValueError("element_area must be positive")
        object.__setattr__(self, "tx_center", np.asarray(self.tx_center, dtype=float))
        object.__setattr__(self, "rx_center", np.asarray(self.rx_center, dtype=float))


@dataclass
class ArrayState:
    """Positions and rotations of both planes; the geometry decision variables.

    ``tx_placements`` and ``rx_placements`` are (N, 2) arrays of local (y, z)
    coordinates, one row per element.
    """

    tx_placements: np.ndarray
    rx_placements: np.ndarray
    tx_rotation: PlaneRotation
    rx_rotation: PlaneRotation
    tx_center: np.ndarray
    rx_center: np.ndarray

    def __post_init__(self):
        self.tx_placements = np.atleast_2d(np.asarray(self.tx_placements, dtype=float))
        self.rx_placements = np.atleast_2d(np.asarray(self.rx_placements, dtype=float))
        self.tx_center = np.asarray(self.tx_center, dtype=float)
        self.rx_center = np.asarray(self.rx_center, dtype=float)

    def tx_positions(self) -> np.ndarray:
        """Global (N_t, 3) positions of the transmit elements."""
        return global_positions(self.tx_placements, self.tx_rotation, self.tx_center)

    def rx_positions(self) -> np.ndarray:
        """Global (N_r, 3) positions of the receive elements."""
        return global_positions(self.rx_placements, self.rx_rotation, self.rx_center)

    def tx_normal(self) -> np.ndarray:
        return plane_normal(self.tx_rotation)

    def rx_normal(self) -> np.ndarray:
        return plane_normal(self.rx_rotation)

    def copy(self) -> "ArrayState":
        return ArrayState(
            self.tx_placements.copy(),
            self.rx_placements.copy(),
            self.tx_rotation,
            self.rx_rotation,
            self.tx_center.copy(),
            self.rx_center.copy(),
        )


def rotation_matrix(rot) -> np.ndarray:
    """3x3 rotation matrix of a plane for angles (alpha, beta, gamma).

    Accepts a PlaneRotation or any length-3 sequence of radians. The result
    is orthogonal with determinant +1.
    """
    if isinstance(rot, PlaneRotation):
        a, b, g = rot.alpha, rot.beta, rot.gamma
    else:
        a, b, g = np.asarray(rot, dtype=float)
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cg, sg = np.cos(g), np.sin(g)
    return np.array(
        [
            [ca * cg, ca * sg, -sa],
            [sb * sa * cg - cb * sg, sb * sa * sg + cb * cg, ca * sb],
            [cb * sa * cg + sb * sg, cb * sa * sg - sb * cg, ca * cb],
        ]
    )


def global_position(local, rot, center) -> np.ndarray:
    """Map one local (y, z) placement to global coordinates."""
    if isinstance(local, LocalPlacement):
        local = local.as_array()
    y, z = np.asarray(local, dtype=float)
    f = rotation_matrix(rot)
    return f[:, 1] * y + f[:, 2] * z + np.asarray(center, dtype=float)


def global_positions(locals_yz: np.ndarray, rot, center) -> np.ndarray:
    """Map an (N, 2) array of local placements to global (N, 3) positions."""
    f = rotation_matrix(rot)
    locals_yz = np.atleast_2d(np.asarray(locals_yz, dtype=float))
    return locals_yz @ f[:, 1:3].T + np.asarray(center, dtype=float)


def plane_normal(rot) -> np.ndarray:
    """Outward unit normal of a plane: the rotated local x axis."""
    return rotation_matrix(rot)[:, 0]


def reflection_violations(state: ArrayState) -> set:
    """Elements sitting on the wrong side of the other plane.

    Returns a set of ("tx", n) and ("rx", n) pairs. A receive element n is
    flagged when the TP normal has a positive projection onto the vector from
    the TP center to that element, and symmetrically for transmit elements
    against the RP. An empty set means the mutual-reflection constraints hold
    (zero projection is feasible).
    """
    u_t = state.tx_normal()
    u_r = state.rx_normal()
    rx_glob = state.rx_positions()
    tx_glob = state.tx_positions()
    bad = set()
    rx_proj = (rx_glob - state.tx_center) @ u_t
    for n in np.nonzero(rx_proj > 0.0)[0]:
        bad.add(("rx", int(n)))
    tx_proj = (tx_glob - state.rx_center) @ u_r
    for n in np.nonzero(tx_proj > 0.0)[0]:
        bad.add(("tx", int(n)))
    return bad


def spacing_violations(state: ArrayState, min_spacing: float) -> set:
    """Unordered same-plane element pairs closer than ``min_spacing``.

    Returns a set of ("tx", i, j) and ("rx", i, j) tuples with i < j. A pair
    at exactly ``min_spacing`` is feasible. Distances between same-plane
    elements are evaluated in local coordinates; the plane rotation is an
    isometry, so these equal the global 3-D distances.
    """
    if min_spacing <= 0:
        raise ValueError("min_spacing must be positive")
    bad = set()
    limit_sq = min_spacing * min_spacing
    for label, placements in (("tx", state.tx_placements), ("rx", state.rx_placements)):
        n = placements.shape[0]
        if n < 2:
            continue
        diff = placements[:, None, :] - placements[None, :, :]
        dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
        ii, jj = np.triu_indices(n, k=1)
        close = dist_sq[ii, jj] < limit_sq
        for i, j in zip(ii[close], jj[close]):
            bad.add((label, int(i), int(j)))
    return bad


def violation_counts(state: ArrayState, min_spacing: float) -> tuple:
    """(spacing pair count, reflection count) without building the index sets."""
    spacing = 0
    limit_sq = min_spacing * min_spacing
    for placements in (state.tx_placements, state.rx_placements):
        n = placements.shape[0]
        if n < 2:
            continue
        diff = placements[:, None, :] - placements[None, :, :]
        dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
        ii, jj = np.triu_indices(n, k=1)
        spacing += int(np.count_nonzero(dist_sq[ii, jj] < limit_sq))
    reflection = int(
        np.count_nonzero((state.rx_positions() - state.tx_center) @ state.tx_normal() > 0.0)
    ) + int(
        np.count_nonzero((state.tx_positions() - state.rx_center) @ state.rx_normal() > 0.0)
    )
    return spacing, reflection


def quantize_angles(angles, bits: int):
    """Snap angles to the nearest of 2**bits uniform levels on [0, 2*pi).

    Ties are broken toward the lower level; the nearest level is taken on the
    circle, so an angle just below 2*pi snaps to 0.
    """
    if bits < 1:
        raise ValueError("bits must be at least 1")
    levels = 2**bits
    delta = TWO_PI / levels
    idx = np.ceil(np.asarray(angles, dtype=float) / delta - 0.5)
    snapped = np.mod(idx, levels) * delta
    return wrap_angle(snapped)


def quantize_rotation(rot: PlaneRotation, bits: int) -> PlaneRotation:
    """Quantize each rotation angle of a plane to a uniform grid."""
    snapped = quantize_angles(rot.as_array(), bits)
    return PlaneRotation.from_array(np.atleast_1d(snapped))


def region_bound_ok(state: ArrayState, region_side: float) -> bool:
    """True when every local placement lies inside [-D/2, D/2]^2."""
    half = region_side / 2.0
    return bool(
        np.all(np.abs(state.tx_placements) <= half)
        and np.all(np.abs(state.rx_placements) <= half)
    )


def validate_state(state: ArrayState, config: GeometryConfig) -> None:
    """Raise ValueError when list lengths or region bounds are violated."""
    if state.tx_placements.shape != (config.n_tx, 2):
        raise ValueError(
            f"expected {config.n_tx} transmit placements, got {state.tx_placements.shape}"
        )
    if state.rx_placements.shape != (config.n_rx, 2):
        raise ValueError(
            f"expected {config.n_rx} receive placements, got {state.rx_placements.shape}"
        )
    if not region_bound_ok(state, config.region_side):
        raise ValueError("placement outside the moving region")
