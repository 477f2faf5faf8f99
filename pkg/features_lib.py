"""
Features Library

Tumbling-window segmentation of a trace and the six per-window features
(unique cells, residence time, RSS variance, consecutive RSS difference,
dominant frequency, signal energy), each on the logarithmic and linear RSS
scale and for three window sizes, assembled into 36-feature instances.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from errors import DomainError
from preprocess_lib import cell_runs, dbm_to_milliwatts
from trace_model import FEATURE_COUNT, FeatureVector, Mode, Sample, Trace

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZES: Tuple[int, ...] = (10, 30, 60)
SAMPLE_PERIOD_MS = 1000
LABEL_AGREEMENT = 0.8
# Residual energy below this counts as a flat signal
FLAT_ENERGY = 1e-12

FEATURE_KINDS: Tuple[str, ...] = (
    "unique_cells",
    "residence_time",
    "rss_variance",
    "consecutive_diff",
    "dominant_frequency",
    "signal_energy",
)


class Scale(Enum):
    """RSS scale a feature is computed on"""

    LOGARITHMIC = "log"
    LINEAR = "linear"


SCALE_ORDER: Tuple[Scale, ...] = (Scale.LOGARITHMIC, Scale.LINEAR)


@dataclass(frozen=True)
class Window:
    """A tumbling window [start_ms, end_ms) over a contiguous slice of samples"""

    start_ms: int
    end_ms: int
    samples: Tuple[Sample, ...]
    nominal_len_s: int
    first_index: int = 0

    @property
    def valid(self) -> bool:
        return len(self.samples) >= min_samples(self.nominal_len_s)

    def values(self, scale: Scale) -> np.ndarray:
        """RSS series in the requested scale"""
        rss = np.array([s.rss_dbm for s in self.samples], dtype=float)
        if scale is Scale.LINEAR:
            return dbm_to_milliwatts(rss)
        return rss


@dataclass(frozen=True)
class Spectrum:
    """DFT magnitudes, bin k at frequency k * bin_width_hz"""

    bin_magnitudes: np.ndarray
    bin_width_hz: float


def min_samples(nominal_len_s: int) -> int:
    """ceil(0.9 * nominal_len_s) samples at the 1 Hz nominal rate"""
    return (9 * nominal_len_s + 9) // 10


def _window(trace: Trace, timestamps: np.ndarray, start_ms: int, window_s: int) -> Window:
    end_ms = start_ms + window_s * 1000
    lo = int(np.searchsorted(timestamps, start_ms, side="left"))
    hi = int(np.searchsorted(timestamps, end_ms, side="left"))
    return Window(start_ms, end_ms, trace.samples[lo:hi], window_s, lo)


def segment_windows(trace: Trace, window_s: int) -> List[Window]:
    """
    Split a trace into back-to-back windows aligned to its first timestamp

    Args:
        trace: A valid trace
        window_s: Window length in seconds

    Returns:
        Complete windows in time order, invalid ones included (see Window.valid);
        the trailing partial window is dropped
    """
    if window_s < 1:
        raise DomainError("window_s must be >= 1")
    if not trace.samples:
        return []

    timestamps = trace.timestamps
    t0 = int(timestamps[0])
    length_ms = window_s * 1000
    count = (int(timestamps[-1]) + SAMPLE_PERIOD_MS - t0) // length_ms
    return [_window(trace, timestamps, t0 + i * length_ms, window_s) for i in range(count)]


def sub_windows(trace: Trace, macro: Window, window_s: int) -> List[Window]:
    """The window_s windows tiling a larger window"""
    if (macro.nominal_len_s % window_s) != 0:
        raise DomainError(f"{window_s} s does not divide {macro.nominal_len_s} s")
    timestamps = trace.timestamps
    return [
        _window(trace, timestamps, macro.start_ms + i * window_s * 1000, window_s)
        for i in range(macro.nominal_len_s // window_s)
    ]


# ---- Time domain ----

def unique_cell_count(window: Window) -> int:
    """Number of distinct serving cells in the window"""
    return len({s.cell_id for s in window.samples})


def avg_residence_time(window: Window, period_s: float = SAMPLE_PERIOD_MS / 1000) -> float:
    """Mean duration (s) of the window's same-cell runs, each padded by one sample period"""
    runs = cell_runs([s.cell_id for s in window.samples])
    if not runs:
        return 0.0
    durations = [
        (window.samples[start + length - 1].timestamp - window.samples[start].timestamp) / 1000 + period_s
        for _, start, length in runs
    ]
    return float(np.mean(durations))


def rss_variance(window: Window, scale: Scale) -> float:
    """Population variance of the RSS in the given scale"""
    values = window.values(scale)
    if values.size == 0:
        return 0.0
    return float(np.var(values))


def avg_consecutive_diff(window: Window, scale: Scale) -> float:
    """Mean absolute difference between consecutive RSS readings"""
    values = window.values(scale)
    if values.size < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(values))))


# ---- Frequency domain ----

def _fft_radix2(x: np.ndarray) -> np.ndarray:
    """Recursive decimation-in-time FFT, len(x) a power of two"""
    n = len(x)
    if n == 1:
        return x.astype(complex)
    even = _fft_radix2(x[0::2])
    odd = _fft_radix2(x[1::2])
    twiddled = np.exp(-2j * np.pi * np.arange(n // 2) / n) * odd
    return np.concatenate([even + twiddled, even - twiddled])


def _dft_direct(x: np.ndarray) -> np.ndarray:
    """O(n^2) DFT as a matrix product"""
    n = len(x)
    k = np.arange(n)
    # Reduce k*m mod n before scaling so large products keep phase precision
    phase = np.outer(k, k) % n
    return np.exp(-2j * np.pi * phase / n) @ x.astype(complex)


def dft(signal: Sequence[float], sample_rate_hz: float = 1.0) -> Spectrum:
    """
    Magnitude spectrum of a real signal

    Args:
        signal: Non-empty sequence of reals
        sample_rate_hz: Sampling rate, sets the bin width rate / n

    Returns:
        Spectrum with bins 0..n-1
    """
    x = np.asarray(signal, dtype=float)
    n = x.size
    if n == 0:
        raise DomainError("dft of an empty signal")
    if n & (n - 1) == 0:
        coefficients = _fft_radix2(x)
    else:
        coefficients = _dft_direct(x)
    return Spectrum(np.abs(coefficients), sample_rate_hz / n)


def _residual(window: Window, scale: Scale) -> np.ndarray:
    values = window.values(scale)
    return values - values.mean()


def dominant_frequency(window: Window, scale: Scale) -> float:
    """Frequency (Hz) of the strongest non-DC bin, 0.0 for a flat window"""
    if len(window.samples) < 2:
        return 0.0
    residual = _residual(window, scale)
    if float(np.sum(residual ** 2)) < FLAT_ENERGY:
        return 0.0

    n = residual.size
    spectrum = dft(residual, n / window.nominal_len_s)
    half = spectrum.bin_magnitudes[1:n // 2 + 1]
    # argmax keeps the first maximum, i.e. the lowest frequency
    return float((int(np.argmax(half)) + 1) * spectrum.bin_width_hz)


def signal_energy(window: Window, scale: Scale) -> float:
    """Sum of squared non-DC magnitudes / n of the mean-removed RSS"""
    if not window.samples:
        return 0.0
    residual = _residual(window, scale)
    n = residual.size
    spectrum = dft(residual, n / window.nominal_len_s)
    return float(np.sum(spectrum.bin_magnitudes[1:] ** 2) / n)


def window_features(window: Window, scale: Scale) -> List[float]:
    """The six features of one window in canonical order"""
    return [
        float(unique_cell_count(window)),
        avg_residence_time(window),
        rss_variance(window, scale),
        avg_consecutive_diff(window, scale),
        dominant_frequency(window, scale),
        signal_energy(window, scale),
    ]


# ---- Canonical layout ----

def feature_index(window_pos: int, scale: Scale, kind: str) -> int:
    """Column of a (window position, scale, feature) triple in the 36-vector"""
    return (window_pos * len(SCALE_ORDER) + SCALE_ORDER.index(scale)) * len(FEATURE_KINDS) \
        + FEATURE_KINDS.index(kind)


def feature_names(window_sizes: Sequence[int] = DEFAULT_WINDOW_SIZES) -> List[str]:
    """Readable column names such as w60_log_signal_energy"""
    return [
        f"w{size}_{scale.value}_{kind}"
        for size in window_sizes
        for scale in SCALE_ORDER
        for kind in FEATURE_KINDS
    ]


def feature_indices(
    scales: Iterable[Scale] = SCALE_ORDER,
    windows: Optional[Iterable[int]] = None,
    window_sizes: Sequence[int] = DEFAULT_WINDOW_SIZES,
) -> Tuple[int, ...]:
    """
    Columns belonging to a subset of scales and window sizes

    Args:
        scales: Scales to keep
        windows: Window sizes (seconds) to keep, all when None
        window_sizes: The window sizes the vectors were built with

    Returns:
        Sorted column indices
    """
    scales = set(scales)
    wanted = set(window_sizes if windows is None else windows)
    unknown = wanted - set(window_sizes)
    if unknown:
        raise DomainError(f"window sizes {sorted(unknown)} are not part of {list(window_sizes)}")
    return tuple(sorted(
        feature_index(pos, scale, kind)
        for pos, size in enumerate(window_sizes) if size in wanted
        for scale in scales
        for kind in FEATURE_KINDS
    ))


def check_window_sizes(window_sizes: Sequence[int]) -> Tuple[int, ...]:
    """Three strictly increasing sizes, each dividing the largest"""
    sizes = tuple(int(s) for s in window_sizes)
    if len(sizes) * len(SCALE_ORDER) * len(FEATURE_KINDS) != FEATURE_COUNT:
        raise DomainError(f"exactly 3 window sizes are required, got {list(sizes)}")
    if any(a >= b for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
        raise DomainError(f"window sizes must be positive and strictly increasing, got {list(sizes)}")
    if any(sizes[-1] % s for s in sizes):
        raise DomainError(f"every window size must divide {sizes[-1]}")
    return sizes


def majority_label(modes: Sequence[Optional[Mode]], agreement: float = LABEL_AGREEMENT) -> Optional[Mode]:
    """Most common mode among labeled samples when at least `agreement` of them share it"""
    counts = Counter(m for m in modes if m is not None)
    labeled = sum(counts.values())
    if labeled == 0:
        return None
    mode, count = max(counts.items(), key=lambda item: (item[1], -item[0].index))
    return mode if count >= agreement * labeled else None


def extract_instances(
    trace: Trace,
    window_sizes: Sequence[int] = DEFAULT_WINDOW_SIZES,
) -> List[FeatureVector]:
    """
    Build one 36-feature instance per valid macro-window

    The largest window size is the macro-window. Smaller sizes are computed
    on the sub-windows tiling it and averaged. Macro-windows with any
    invalid sub-window are skipped.

    Args:
        trace: A smoothed, valid trace
        window_sizes: Three increasing sizes (seconds), each dividing the largest

    Returns:
        Instances in time order, labeled when >= 80% of labeled samples agree
    """
    sizes = check_window_sizes(window_sizes)
    largest = sizes[-1]
    sample_modes = trace.sample_modes()

    instances: List[FeatureVector] = []
    skipped = 0
    for macro in segment_windows(trace, largest):
        per_size = [[macro] if size == largest else sub_windows(trace, macro, size) for size in sizes]
        if not all(w.valid for windows in per_size for w in windows):
            skipped += 1
            continue

        row: List[float] = []
        for windows in per_size:
            for scale in SCALE_ORDER:
                row.extend(np.mean([window_features(w, scale) for w in windows], axis=0).tolist())

        modes = sample_modes[macro.first_index:macro.first_index + len(macro.samples)]
        instances.append(FeatureVector(tuple(row), majority_label(modes), macro.start_ms))

    logger.debug("Extracted %d instances (%d macro-windows skipped)", len(instances), skipped)
    return instances
