"""Runtime description of one optimization instance.

A Scenario bundles everything the alternating loops need to evaluate a
candidate geometry: the static geometry limits, the user and target
positions, powers, noise levels and the design targets (SINR floor, CRB
budget). It deliberately carries linear-unit quantities only; dB conversion
happens at configuration time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, EntityPosition, build_channels
from .estimation import (
    ChannelDerivatives,
    SensingParams,
    fim_blocks,
    target_channel_derivatives,
)
from .geometry import ArrayState, GeometryConfig


@dataclass
class Scenario:
    """One ISAC problem instance in linear units."""

    geometry: GeometryConfig
    users: list
    target: EntityPosition
    target_params: SensingParams
    wavelength: float
    coherence_length: float
    power_budget: float
    user_noise_powers: np.ndarray
    sensing_noise_power: float
    sinr_floor: float
    crb_budget: float = np.inf

    def __post_init__(self):
        self.user_noise_powers = np.asarray(self.user_noise_powers, dtype=float)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def channels(self, state: ArrayState) -> ChannelSet:
        return build_channels(
            state,
            self.users,
            self.target,
            self.target_params.eta,
            self.geometry,
            self.wavelength,
        )

    def derivatives(self, state: ArrayState) -> ChannelDerivatives:
        return target_channel_derivatives(
            state, self.target, self.wavelength, self.geometry
        )

    def fim(self, channels: ChannelSet, derivatives: ChannelDerivatives, covariance):
        return fim_blocks(
            channels,
            derivatives,
            covariance,
            self.target_params,
            self.coherence_length,
            self.sensing_noise_power,
        )
