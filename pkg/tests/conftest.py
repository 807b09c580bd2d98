"""Shared builders for the test suite."""

import numpy as np
import pytest

from rmaisac.channel import EntityPosition, build_channels
from rmaisac.estimation import SensingParams, target_channel_derivatives
from rmaisac.geometry import ArrayState, GeometryConfig, PlaneRotation


def make_geometry(n_tx=3, n_rx=3, region_side=1.0, min_spacing=0.00625,
                  element_area=None, height=5.0):
    wavelength = 299792458.0 / 24e9
    if element_area is None:
        element_area = wavelength**2 / (4 * np.pi)
    return GeometryConfig(
        n_tx=n_tx,
        n_rx=n_rx,
        region_side=region_side,
        min_spacing=min_spacing,
        tx_center=np.array([0.0, 0.0, height + region_side / 2]),
        rx_center=np.array([0.0, 0.0, height - region_side / 2]),
        element_area=element_area,
    )


def random_state(config: GeometryConfig, rng, rotate=True) -> ArrayState:
    """Placement draw with generous spread; small random rotations."""
    half = config.region_side / 2
    scale = 0.2 if rotate else 0.0
    return ArrayState(
        tx_placements=rng.uniform(-half, half, size=(config.n_tx, 2)),
        rx_placements=rng.uniform(-half, half, size=(config.n_rx, 2)),
        tx_rotation=PlaneRotation(*(scale * rng.uniform(-1, 1, 3))),
        rx_rotation=PlaneRotation(*(scale * rng.uniform(-1, 1, 3))),
        tx_center=config.tx_center,
        rx_center=config.rx_center,
    )


def random_instance(rng, n_tx=3, n_rx=3, n_users=2):
    """Geometry, channels and derivatives for one random feasible layout."""
    config = make_geometry(n_tx=n_tx, n_rx=n_rx)
    state = random_state(config, rng)
    users = [
        EntityPosition(rng.uniform(15, 25), np.pi / 2, rng.uniform(-np.pi / 2, np.pi / 2))
        for _ in range(n_users)
    ]
    target = EntityPosition(10.0, np.pi / 3, np.pi / 4)
    params = SensingParams(10.0, np.pi / 3, np.pi / 4, 1.0, 0.0)
    wavelength = 299792458.0 / 24e9
    channels = build_channels(state, users, target, params.eta, config, wavelength)
    derivs = target_channel_derivatives(state, target, wavelength, config)
    return {
        "config": config,
        "state": state,
        "users": users,
        "target": target,
        "params": params,
        "wavelength": wavelength,
        "channels": channels,
        "derivatives": derivs,
    }


def random_hermitian_psd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a @ a.conj().T) / n


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
