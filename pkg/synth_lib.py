"""
Synth Library

Physics-based generator of labeled cellular traces. A jittered grid of
towers, random-waypoint mobility per transportation mode, log-distance
path loss with distance-correlated shadowing, and strongest-server
handoff with hysteresis.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError
from trace_model import MODE_ORDER, Mode, Sample, Segment, Trace

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]

# GSM RXLEV reporting range
RSS_FLOOR_DBM = -113
RSS_CEILING_DBM = -51

SAMPLE_PERIOD_S = 1


@dataclass(frozen=True)
class PathLossParams:
    """
    Log-distance path loss with shadowing

    Args:
        p0_dbm: Power at the reference distance
        d0_m: Reference distance
        alpha: Path loss exponent
        shadow_sigma_db: Standard deviation of the shadowing term
        decorrelation_m: Distance over which shadowing correlation drops to 1/e
    """

    p0_dbm: float = -40.0
    d0_m: float = 1.0
    alpha: float = 3.0
    shadow_sigma_db: float = 6.0
    decorrelation_m: float = 50.0

    def __post_init__(self):
        if not self.d0_m > 0:
            raise DomainError("d0_m must be > 0")
        if not self.alpha > 0:
            raise DomainError("alpha must be > 0")
        if not self.shadow_sigma_db >= 0:
            raise DomainError("shadow_sigma_db must be >= 0")
        if not self.decorrelation_m > 0:
            raise DomainError("decorrelation_m must be > 0")


@dataclass(frozen=True)
class Tower:
    cell_id: int
    x_m: float
    y_m: float


@dataclass(frozen=True)
class TowerField:
    towers: Tuple[Tower, ...]

    def __post_init__(self):
        object.__setattr__(self, "towers", tuple(self.towers))
        if not self.towers:
            raise DomainError("a tower field needs at least one tower")
        ids = [t.cell_id for t in self.towers]
        if len(set(ids)) != len(ids):
            raise DomainError("tower cell IDs must be unique")

    def __len__(self) -> int:
        return len(self.towers)

    @property
    def positions(self) -> np.ndarray:
        return np.array([(t.x_m, t.y_m) for t in self.towers], dtype=float)

    @property
    def cell_ids(self) -> List[int]:
        return [t.cell_id for t in self.towers]


@dataclass(frozen=True)
class MobilityProfile:
    mode: Mode
    speed_range_kmh: Tuple[float, float]

    def __post_init__(self):
        low, high = self.speed_range_kmh
        if not 0 <= low <= high:
            raise DomainError(f"speed range must satisfy 0 <= min <= max, got {self.speed_range_kmh}")

    @property
    def speed_range_ms(self) -> Tuple[float, float]:
        low, high = self.speed_range_kmh
        return low / 3.6, high / 3.6


PROFILES: Dict[Mode, MobilityProfile] = {
    Mode.STATIONARY: MobilityProfile(Mode.STATIONARY, (0.0, 0.0)),
    Mode.WALKING: MobilityProfile(Mode.WALKING, (3.0, 6.0)),
    Mode.DRIVING: MobilityProfile(Mode.DRIVING, (40.0, 100.0)),
}


@dataclass(frozen=True)
class MobilityPath:
    """Positions sampled at 1 Hz; points has columns t_s, x_m, y_m"""

    mode: Mode
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, 1:3]

    @property
    def step_lengths(self) -> np.ndarray:
        return np.hypot(*np.diff(self.xy, axis=0).T)


@dataclass(frozen=True)
class SynthParams:
    """Everything needed to generate a suite of traces"""

    duration_s: int = 600
    extent_m: float = 3000.0
    spacing_m: float = 500.0
    jitter_frac: float = 0.2
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    hysteresis_db: float = 4.0
    seed: int = 42
    suite: int = 30

    def __post_init__(self):
        if self.duration_s < 1:
            raise DomainError("duration_s must be >= 1")
        if self.hysteresis_db < 0:
            raise DomainError("hysteresis_db must be >= 0")
        if self.suite < 1:
            raise DomainError("suite must be >= 1")


def generate_towers(extent_m: float, spacing_m: float, jitter_frac: float, seed: SeedLike) -> TowerField:
    """
    Square grid of towers at pitch spacing_m covering [0, extent_m]^2

    Each tower is moved by up to jitter_frac * spacing_m along each axis.
    Cell IDs count from 1 in row-major order.
    """
    if not extent_m > spacing_m > 0:
        raise DomainError("tower geometry needs extent_m > spacing_m > 0")
    if not 0 <= jitter_frac < 0.5:
        raise DomainError("jitter_frac must be in [0, 0.5)")

    rng = np.random.default_rng(seed)
    per_axis = int(np.floor(extent_m / spacing_m)) + 1
    grid = np.arange(per_axis) * spacing_m
    gx, gy = np.meshgrid(grid, grid, indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel()])
    max_jitter = jitter_frac * spacing_m
    points = points + rng.uniform(-max_jitter, max_jitter, size=points.shape)

    towers = [Tower(i + 1, float(x), float(y)) for i, (x, y) in enumerate(points)]
    logger.debug("Generated %d towers over %.0f m", len(towers), extent_m)
    return TowerField(tuple(towers))


def generate_path(profile: MobilityProfile, duration_s: int, extent_m: float, seed: SeedLike) -> MobilityPath:
    """
    Random-waypoint path at 1 Hz

    Moving profiles walk toward a uniformly drawn waypoint at a per-leg
    speed drawn from the profile's range; reaching a waypoint ends that
    step early and starts a new leg. A zero speed range keeps the start
    point for the whole duration.

    Args:
        profile: Mode and speed range
        duration_s: Number of positions
        extent_m: Side of the square area
        seed: RNG seed

    Returns:
        The path, duration_s positions
    """
    if duration_s < 1:
        raise DomainError("duration_s must be >= 1")
    rng = np.random.default_rng(seed)
    low, high = profile.speed_range_ms

    xy = np.empty((duration_s, 2))
    position = rng.uniform(0.0, extent_m, size=2)
    xy[0] = position

    if high > 0:
        waypoint = rng.uniform(0.0, extent_m, size=2)
        speed = rng.uniform(low, high)
        for t in range(1, duration_s):
            step = speed * SAMPLE_PERIOD_S
            heading = waypoint - position
            distance = float(np.hypot(*heading))
            if distance <= step:
                position = waypoint
                waypoint = rng.uniform(0.0, extent_m, size=2)
                speed = rng.uniform(low, high)
            else:
                position = position + heading / distance * step
            position = np.clip(position, 0.0, extent_m)
            xy[t] = position
    else:
        xy[1:] = position

    t_s = np.arange(duration_s, dtype=float) * SAMPLE_PERIOD_S
    return MobilityPath(profile.mode, np.column_stack([t_s, xy]))


def path_loss_dbm(distance_m, params: PathLossParams = PathLossParams()):
    """p0 - 10 * alpha * log10(d / d0), distances below d0 clamped to d0"""
    d = np.maximum(np.asarray(distance_m, dtype=float), params.d0_m)
    loss = params.p0_dbm - 10.0 * params.alpha * np.log10(d / params.d0_m)
    if np.ndim(loss) == 0:
        return float(loss)
    return loss


def shadowing(path: MobilityPath, n_towers: int, params: PathLossParams, rng: np.random.Generator) -> np.ndarray:
    """
    Per-tower AR(1) shadowing, shape (len(path), n_towers)

    Correlation between consecutive samples is exp(-step / decorrelation_m)
    and the stationary variance is shadow_sigma_db^2.
    """
    sigma = params.shadow_sigma_db
    rho = np.exp(-path.step_lengths / params.decorrelation_m)
    innovation = sigma * np.sqrt(1.0 - rho ** 2)

    noise = rng.standard_normal((len(path), n_towers))
    shadow = np.empty_like(noise)
    shadow[0] = sigma * noise[0]
    for i in range(1, len(path)):
        shadow[i] = rho[i - 1] * shadow[i - 1] + innovation[i - 1] * noise[i]
    return shadow


def serving_cells(rss: np.ndarray, hysteresis_db: float) -> np.ndarray:
    """
    Serving tower index per sample

    Starts on the strongest tower. A handoff happens when another tower is
    strictly stronger than the server and at least hysteresis_db above it.
    """
    serving = np.empty(len(rss), dtype=np.int64)
    current = int(np.argmax(rss[0]))
    for i, row in enumerate(rss):
        best = int(np.argmax(row))
        margin = row[best] - row[current]
        if best != current and margin > 0 and margin >= hysteresis_db:
            current = best
        serving[i] = current
    return serving


def simulate_trace(
    path: MobilityPath,
    towers: TowerField,
    params: PathLossParams = PathLossParams(),
    hysteresis_db: float = 4.0,
    seed: SeedLike = 0,
    start_ms: int = 0,
) -> Trace:
    """
    Emulate the serving-cell trace a phone on this path would record

    Args:
        path: 1 Hz positions
        towers: Tower field
        params: Path loss and shadowing
        hysteresis_db: Handoff margin
        seed: Shadowing RNG seed
        start_ms: Timestamp of the first sample

    Returns:
        Trace with integer dBm RSS in [-113, -51] and one ground-truth
        segment carrying the path's mode
    """
    if len(path) == 0:
        raise DomainError("path is empty")
    rng = np.random.default_rng(seed)

    offsets = path.xy[:, None, :] - towers.positions[None, :, :]
    distances = np.hypot(offsets[..., 0], offsets[..., 1])
    rss = path_loss_dbm(distances, params) + shadowing(path, len(towers), params, rng)

    serving = serving_cells(rss, hysteresis_db)
    emitted = np.clip(np.rint(rss[np.arange(len(path)), serving]), RSS_FLOOR_DBM, RSS_CEILING_DBM)

    ids = towers.cell_ids
    timestamps = start_ms + np.rint(path.points[:, 0] * 1000).astype(np.int64)
    samples = [
        Sample(int(ts), ids[s], float(v)) for ts, s, v in zip(timestamps, serving, emitted)
    ]
    segment = Segment(int(timestamps[0]), int(timestamps[-1]) + 1, path.mode)
    return Trace(samples, (segment,))


def simulate_mode(mode: Mode, params: SynthParams = SynthParams(), seed: Optional[int] = None) -> Trace:
    """One trace of a mode in its own tower field"""
    seq = np.random.SeedSequence(params.seed if seed is None else seed)
    tower_seq, path_seq, shadow_seq = seq.spawn(3)
    towers = generate_towers(params.extent_m, params.spacing_m, params.jitter_frac, tower_seq)
    path = generate_path(PROFILES[mode], params.duration_s, params.extent_m, path_seq)
    return simulate_trace(path, towers, params.path_loss, params.hysteresis_db, shadow_seq)


def generate_suite(
    params: SynthParams = SynthParams(),
    modes: Sequence[Mode] = MODE_ORDER,
    jobs: int = 1,
) -> List[Tuple[str, Trace]]:
    """
    params.suite traces per mode over one shared tower field

    Per-trace seeds are spawned from params.seed, so the suite is
    reproducible regardless of jobs.

    Returns:
        (name, trace) pairs named <mode>_<NNN>, modes in the given order
    """
    tower_seq, *trace_seqs = np.random.SeedSequence(params.seed).spawn(1 + len(modes) * params.suite)
    towers = generate_towers(params.extent_m, params.spacing_m, params.jitter_frac, tower_seq)

    jobs_list = [
        (f"{mode.value}_{i:03d}", mode, trace_seqs[m * params.suite + i])
        for m, mode in enumerate(modes)
        for i in range(params.suite)
    ]

    def make(job) -> Tuple[str, Trace]:
        name, mode, seq = job
        path_seq, shadow_seq = seq.spawn(2)
        path = generate_path(PROFILES[mode], params.duration_s, params.extent_m, path_seq)
        return name, simulate_trace(path, towers, params.path_loss, params.hysteresis_db, shadow_seq)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            suite = list(pool.map(make, jobs_list))
    else:
        suite = [make(job) for job in jobs_list]
    logger.info("Generated %d traces over %d towers", len(suite), len(towers))
    return suite
