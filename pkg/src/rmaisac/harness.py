"""Experiment harness: configuration, scenario generation, runs and sweeps.

Configuration lives in a flat dataclass whose defaults are the reference
simulation parameters (24 GHz carrier, 9+9 elements, four users, 40 dBm
budget, -110 dBm noise). Values are given in the units practitioners use
(dB, dBm, wavelength multiples) and converted to linear SI units when a
runtime Scenario is materialized.

Outputs of a run or sweep are three files: a YAML manifest with the fully
resolved configuration and per-point seeds, a CSV trace table with one row
per outer iteration, and a CSV summary table with one row per run point.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import time
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .ao import AoConfig, algorithm1, algorithm2
from .channel import SPEED_OF_LIGHT, EntityPosition
from .comm_metrics import sinr_all, sum_rate
from .estimation import SensingParams, rcrb_per_param, trace_crb
from .geometry import (
    ArrayState,
    GeometryConfig,
    PlaneRotation,
    quantize_angles,
    reflection_violations,
)
from .scenario import Scenario
from .swarm import ParticleLayout, PsoConfig

SETUPS = (
    "full_rma",
    "tx_rma_rx_fpa",
    "tx_rotation_only_rx_fpa",
    "tx_ma_rx_fpa",
    "tx_1d_rma_rx_fpa",
    "fpa_fpa",
)

SWEEPABLE = ("gamma_min_db", "c_max", "rotation_bits", "setup")

SUMMARY_COLUMNS = (
    "sweep_value",
    "trace_crb",
    "rcrb_d",
    "rcrb_theta",
    "rcrb_phi",
    "sum_rate",
    "min_sinr",
    "power_used",
    "feasible",
    "outer_iters",
    "wall_ms",
)

TRACE_COLUMNS = (
    "sweep_value",
    "iteration",
    "objective",
    "rcrb_d",
    "rcrb_theta",
    "rcrb_phi",
    "min_sinr",
    "power",
    "spacing_violations",
    "reflection_violations",
    "sinr_hinge",
    "crb_hinge",
    "wall_ms",
)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one experiment, in practitioner units."""

    users: int = 4
    n_tx: int = 9
    n_rx: int = 9
    carrier_hz: float = 24e9
    min_spacing_wavelengths: float = 0.5
    region_wavelengths: float = 80.0
    element_area: float | None = None  # default: wavelength^2 / (4*pi)
    power_dbm: float = 40.0
    user_noise_dbm: float = -110.0
    sensing_noise_dbm: float = -110.0
    gamma_min_db: float | None = 6.0  # None disables the SINR floors
    c_max: float | None = None  # CRB-trace budget; None leaves it unconstrained
    coherence_length: float = 1000.0
    echo_gain_re: float = 1.0
    echo_gain_im: float = 0.0
    target_distance: float = 10.0
    target_elevation: float = float(np.pi / 3)
    target_azimuth: float = float(np.pi / 4)
    user_distance_min: float = 15.0
    user_distance_max: float = 25.0
    user_elevation: float = float(np.pi / 2)
    user_azimuth_min: float = float(-np.pi / 2)
    user_azimuth_max: float = float(np.pi / 2)
    plane_height: float = 5.0
    max_outer_iterations: int = 20
    convergence_tolerance: float = 1e-3
    swarm_size: int = 200
    pso_iterations: int = 100
    cognitive_weight: float = 1.4
    social_weight: float = 1.4
    inertia_min: float = 0.4
    inertia_max: float = 0.9
    penalty_standard: float = 1000.0
    penalty_spacing: float = 1000.0
    penalty_reflection: float = 1000.0
    penalty_sinr: float = 1000.0
    rotation_bits: int | None = None
    setup: str = "full_rma"
    init_geometry: str = "random"  # "random" (default) or "fpa"
    seed: int = 0

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ValueError(f"setup must be one of {SETUPS}, got {self.setup!r}")
        if self.init_geometry not in ("fpa", "random"):
            raise ValueError("init_geometry must be 'fpa' or 'random'")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def resolved(self) -> dict:
        """All fields plus derived linear-unit quantities."""
        out = dataclasses.asdict(self)
        out["wavelength"] = self.wavelength
        out["region_side"] = self.region_wavelengths * self.wavelength
        out["min_spacing"] = self.min_spacing_wavelengths * self.wavelength
        if out["element_area"] is None:
            out["element_area"] = self.wavelength**2 / (4.0 * np.pi)
        out["power_budget_watts"] = dbm_to_watts(self.power_dbm)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str) -> ScenarioConfig:
    """Read a YAML configuration file (missing keys take the defaults)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return ScenarioConfig.from_dict(data)


def fpa_layout(n: int, pitch: float) -> np.ndarray:
    """Centered square grid at the given pitch, row-major, first n points."""
    side = int(np.ceil(np.sqrt(n)))
    offsets = (np.arange(side) - (side - 1) / 2.0) * pitch
    grid = [(y, z) for z in offsets for y in offsets]
    return np.array(grid[:n])


def free_coordinate_mask(setup: str, n_tx: int, n_rx: int) -> np.ndarray:
    """Which particle coordinates the chosen antenna setup may move."""
    layout = ParticleLayout(n_tx, n_rx)
    mask = np.zeros(layout.length, dtype=bool)
    if setup == "full_rma":
        mask[:] = True
    elif setup == "tx_rma_rx_fpa":
        mask[layout.tx_position_slice] = True
        mask[layout.tx_rotation_slice] = True
    elif setup == "tx_rotation_only_rx_fpa":
        mask[layout.tx_rotation_slice] = True
    elif setup == "tx_ma_rx_fpa":
        mask[layout.tx_position_slice] = True
    elif setup == "tx_1d_rma_rx_fpa":
        mask[layout.tx_position_slice] = True
        mask[layout.tx_rotation_slice.start] = True  # rotation about x only
    elif setup == "fpa_fpa":
        pass
    else:
        raise ValueError(f"unknown setup {setup!r}")
    return mask


def _random_placements(n, half, min_spacing, rng, attempts=200):
    for _ in range(attempts):
        pts = rng.uniform(-half, half, size=(n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
        ii, jj = np.triu_indices(n, k=1)
        if n < 2 or np.all(dist_sq[ii, jj] >= min_spacing**2):
            return pts
    return None


def initial_state(config: ScenarioConfig, geometry: GeometryConfig,
                  rng: np.random.Generator, free_mask: np.ndarray) -> ArrayState:
    """Initial geometry: the baseline grid, or a feasible random draw.

    The fixed-position baseline is a half-wavelength square grid centered in
    each plane with zero rotations. Random initialization only randomizes
    the coordinates the setup leaves free, rejection-sampling until the
    spacing and reflection constraints hold.
    """
    pitch = config.wavelength / 2.0
    base_tx = fpa_layout(geometry.n_tx, pitch)
    base_rx = fpa_layout(geometry.n_rx, pitch)
    state = ArrayState(
        tx_placements=base_tx,
        rx_placements=base_rx,
        tx_rotation=PlaneRotation(),
        rx_rotation=PlaneRotation(),
        tx_center=geometry.tx_center,
        rx_center=geometry.rx_center,
    )
    if config.init_geometry == "fpa":
        return state

    layout = ParticleLayout(geometry.n_tx, geometry.n_rx)
    half = geometry.region_side / 2.0
    if free_mask[layout.tx_position_slice].any():
        pts = _random_placements(geometry.n_tx, half, geometry.min_spacing, rng)
        if pts is not None:
            state.tx_placements = pts
    if free_mask[layout.rx_position_slice].any():
        pts = _random_placements(geometry.n_rx, half, geometry.min_spacing, rng)
        if pts is not None:
            state.rx_placements = pts
    tx_rot_free = free_mask[layout.tx_rotation_slice]
    rx_rot_free = free_mask[layout.rx_rotation_slice]
    if tx_rot_free.any() or rx_rot_free.any():
        for _ in range(100):
            tx_draw = np.where(tx_rot_free, rng.uniform(0.0, 2 * np.pi, 3), 0.0)
            rx_draw = np.where(rx_rot_free, rng.uniform(0.0, 2 * np.pi, 3), 0.0)
            if config.rotation_bits is not None:
                # discrete hardware cannot hold off-grid angles at rest
                tx_draw = quantize_angles(tx_draw, config.rotation_bits)
                rx_draw = quantize_angles(rx_draw, config.rotation_bits)
            candidate = ArrayState(
                tx_placements=state.tx_placements,
                rx_placements=state.rx_placements,
                tx_rotation=PlaneRotation.from_array(tx_draw),
                rx_rotation=PlaneRotation.from_array(rx_draw),
                tx_center=geometry.tx_center,
                rx_center=geometry.rx_center,
            )
            if not reflection_violations(candidate):
                return candidate
    return state


def generate_scenario(config: ScenarioConfig, rng: np.random.Generator):
    """Materialize one scenario instance.

    Users are drawn with distance ~ U(min, max), fixed elevation and azimuth
    ~ U(min, max), in that order per user. The target position and all
    physical parameters come straight from the configuration.

    Returns (Scenario, initial ArrayState, free coordinate mask).
    """
    res = config.resolved()
    wavelength = res["wavelength"]
    region = res["region_side"]
    geometry = GeometryConfig(
        n_tx=config.n_tx,
        n_rx=config.n_rx,
        region_side=region,
        min_spacing=res["min_spacing"],
        tx_center=np.array([0.0, 0.0, config.plane_height + region / 2.0]),
        rx_center=np.array([0.0, 0.0, config.plane_height - region / 2.0]),
        element_area=res["element_area"],
    )
    users = []
    for _ in range(config.users):
        d = rng.uniform(config.user_distance_min, config.user_distance_max)
        phi = rng.uniform(config.user_azimuth_min, config.user_azimuth_max)
        users.append(EntityPosition(d, config.user_elevation, phi))
    target = EntityPosition(
        config.target_distance, config.target_elevation, config.target_azimuth
    )
    scenario = Scenario(
        geometry=geometry,
        users=users,
        target=target,
        target_params=SensingParams(
            d0=config.target_distance,
            theta0=config.target_elevation,
            phi0=config.target_azimuth,
            eta_re=config.echo_gain_re,
            eta_im=config.echo_gain_im,
        ),
        wavelength=wavelength,
        coherence_length=config.coherence_length,
        power_budget=res["power_budget_watts"],
        user_noise_powers=np.full(config.users, dbm_to_watts(config.user_noise_dbm)),
        sensing_noise_power=dbm_to_watts(config.sensing_noise_dbm),
        sinr_floor=0.0 if config.gamma_min_db is None else db_to_linear(config.gamma_min_db),
        crb_budget=np.inf if config.c_max is None else config.c_max,
    )
    free_mask = free_coordinate_mask(config.setup, config.n_tx, config.n_rx)
    state = initial_state(config, geometry, rng, free_mask)
    return scenario, state, free_mask


@dataclass
class RunResult:
    """Flattened outcome of one run point."""

    sweep_value: str
    mode: str
    seed: int
    trace_crb: float
    rcrb: np.ndarray
    sum_rate: float
    min_sinr: float
    power_used: float
    feasible: bool
    outer_iters: int
    wall_ms: float
    trace_rows: list
    error: str | None = None

    def summary_row(self) -> dict:
        return {
            "sweep_value": self.sweep_value,
            "trace_crb": repr(float(self.trace_crb)),
            "rcrb_d": repr(float(self.rcrb[0])),
            "rcrb_theta": repr(float(self.rcrb[1])),
            "rcrb_phi": repr(float(self.rcrb[2])),
            "sum_rate": repr(float(self.sum_rate)),
            "min_sinr": repr(float(self.min_sinr)),
            "power_used": repr(float(self.power_used)),
            "feasible": str(bool(self.feasible)),
            "outer_iters": str(int(self.outer_iters)),
            "wall_ms": repr(float(self.wall_ms)),
        }


def _ao_config(config: ScenarioConfig, mode: str, free_mask) -> AoConfig:
    pso = PsoConfig(
        swarm_size=config.swarm_size,
        max_iterations=config.pso_iterations,
        cognitive_weight=config.cognitive_weight,
        social_weight=config.social_weight,
        inertia_min=config.inertia_min,
        inertia_max=config.inertia_max,
        penalty_spacing=config.penalty_spacing,
        penalty_reflection=config.penalty_reflection,
        penalty_sinr=config.penalty_sinr,
        penalty_standard=config.penalty_standard,
        rotation_bits=config.rotation_bits,
        seed=config.seed,
    )
    return AoConfig(
        mode=mode,
        pso=pso,
        max_outer_iterations=config.max_outer_iterations,
        tolerance=config.convergence_tolerance,
        free_mask=free_mask,
    )


def _trace_row(record, sweep_value: str) -> dict:
    pens = record.penalties
    return {
        "sweep_value": sweep_value,
        "iteration": str(record.index),
        "objective": repr(float(record.objective)),
        "rcrb_d": repr(float(record.rcrb[0])),
        "rcrb_theta": repr(float(record.rcrb[1])),
        "rcrb_phi": repr(float(record.rcrb[2])),
        "min_sinr": repr(float(np.min(record.sinrs))),
        "power": repr(float(record.power)),
        "spacing_violations": repr(float(pens.get("spacing", np.nan))),
        "reflection_violations": repr(float(pens.get("reflection", np.nan))),
        "sinr_hinge": repr(float(pens.get("sinr_hinge", np.nan))),
        "crb_hinge": repr(float(pens["crb_hinge"])) if "crb_hinge" in pens else "",
        "wall_ms": repr(float(record.wall_ms)),
    }


def run_single(
    config: ScenarioConfig,
    mode: str,
    sweep_value: str = "",
    iteration_sink=None,
) -> RunResult:
    """Run one algorithm end to end and flatten the outcome.

    The per-iteration sink, when given, receives trace-row dicts as the
    outer loop progresses. Raises InfeasibleProblemError when the very first
    beamforming solve fails.
    """
    if mode not in ("sensing", "comm"):
        raise ValueError(f"mode must be 'sensing' or 'comm', got {mode!r}")
    rng = np.random.default_rng(config.seed)
    scenario, state0, free_mask = generate_scenario(config, rng)
    ao_config = _ao_config(config, mode, free_mask)

    trace_rows = []

    def _sink(record):
        row = _trace_row(record, sweep_value)
        trace_rows.append(row)
        if iteration_sink is not None:
            iteration_sink(row)

    started = time.perf_counter()
    algorithm = algorithm1 if mode == "sensing" else algorithm2
    beam, state, trace = algorithm(scenario, state0, ao_config, rng, on_iteration=_sink)
    wall_ms = (time.perf_counter() - started) * 1e3

    channels = scenario.channels(state)
    derivs = scenario.derivatives(state)
    blocks = scenario.fim(channels, derivs, beam.total_covariance)
    gammas = sinr_all(channels, beam, scenario.user_noise_powers)
    feasible = bool(trace.final_audit.feasible and not trace.infeasible_stop)
    return RunResult(
        sweep_value=sweep_value,
        mode=mode,
        seed=config.seed,
        trace_crb=trace_crb(blocks),
        rcrb=rcrb_per_param(blocks),
        sum_rate=sum_rate(channels, beam, scenario.user_noise_powers),
        min_sinr=float(np.min(gammas)) if len(gammas) else float("nan"),
        power_used=beam.power(),
        feasible=feasible,
        outer_iters=len(trace.records),
        wall_ms=wall_ms,
        trace_rows=trace_rows,
    )


def _point_config(
    config: ScenarioConfig, parameter: str, value, index: int, seed_step: int
) -> ScenarioConfig:
    updates = {parameter: value, "seed": config.seed + index * seed_step}
    return replace(config, **updates)


def _failed_result(sweep_value: str, mode: str, seed: int, error: Exception) -> RunResult:
    nan = float("nan")
    return RunResult(
        sweep_value=sweep_value,
        mode=mode,
        seed=seed,
        trace_crb=nan,
        rcrb=np.array([nan, nan, nan]),
        sum_rate=nan,
        min_sinr=nan,
        power_used=nan,
        feasible=False,
        outer_iters=0,
        wall_ms=nan,
        trace_rows=[],
        error=f"{type(error).__name__}: {error}",
    )


def _sweep_point(payload) -> RunResult:
    config_dict, mode, parameter, value, index, seed_step = payload
    base = ScenarioConfig.from_dict(config_dict)
    point = _point_config(base, parameter, value, index, seed_step)
    label = str(value)
    try:
        return run_single(point, mode, sweep_value=label)
    except Exception as err:  # per-point failures must not kill the sweep
        return _failed_result(label, mode, point.seed, err)


def run_sweep(
    config: ScenarioConfig,
    parameter: str,
    values,
    mode: str,
    workers: int = 1,
    seed_step: int = 0,
) -> list:
    """Run one algorithm across a list of values of one parameter.

    By default every point runs with the same seed, so points differ only in
    the swept parameter; ``seed_step`` decorrelates them (point i uses
    seed + i * seed_step). Per-point seeds land in the manifest either way.
    Failures are recorded in the returned results and do not stop the
    remaining points.
    """
    if parameter not in SWEEPABLE:
        raise ValueError(f"parameter must be one of {SWEEPABLE}, got {parameter!r}")
    payloads = [
        (dataclasses.asdict(config), mode, parameter, value, i, seed_step)
        for i, value in enumerate(values)
    ]
    if workers <= 1:
        return [_sweep_point(p) for p in payloads]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, payloads))


def _versions() -> dict:
    import cvxpy
    import scipy

    from . import __version__

    return {
        "rmaisac": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "cvxpy": cvxpy.__version__,
    }


def emit_results(
    results: list,
    out_dir: str,
    config: ScenarioConfig,
    mode: str,
    sweep: dict | None = None,
) -> dict:
    """Write manifest.yaml, trace.csv and summary.csv under ``out_dir``.

    The manifest records the fully resolved configuration, run mode, sweep
    description, per-point seeds and dependency versions; parsing it back
    reproduces the resolved configuration exactly. Returns the paths.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "manifest": os.path.join(out_dir, "manifest.yaml"),
        "trace": os.path.join(out_dir, "trace.csv"),
        "summary": os.path.join(out_dir, "summary.csv"),
    }
    manifest = {
        "config": dataclasses.asdict(config),
        "resolved": config.resolved(),
        "mode": mode,
        "sweep": sweep,
        "points": [
            {
                "sweep_value": r.sweep_value,
                "seed": int(r.seed),
                "error": r.error,
            }
            for r in results
        ],
        "versions": _versions(),
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=True)
    with open(paths["summary"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(SUMMARY_COLUMNS))
        writer.writeheader()
        for r in results:
            writer.writerow(r.summary_row())
    with open(paths["trace"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(TRACE_COLUMNS))
        writer.writeheader()
        for r in results:
            for row in r.trace_rows:
                writer.writerow(row)
    return paths
