"""
Trace Model

Core domain types shared by every cellmode module: transportation modes,
serving-cell samples, labeled traces and the 36-feature instances built
from them.
"""

import math
import numbers
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError

CellId = Union[int, str]

# 6 features x 2 scales x 3 windows
FEATURE_COUNT = 36


class Mode(Enum):
    """Transportation mode of the phone"""

    STATIONARY = "stationary"
    WALKING = "walking"
    DRIVING = "driving"

    @property
    def index(self) -> int:
        """Position in the Stationary < Walking < Driving order"""
        return MODE_ORDER.index(self)

    @classmethod
    def parse(cls, text: str) -> "Mode":
        """Parse one of the exact lowercase mode strings"""
        for mode in cls:
            if mode.value == text:
                return mode
        raise DomainError(f"unknown mode '{text}'")

    def __str__(self) -> str:
        return self.value


MODE_ORDER: Tuple[Mode, ...] = (Mode.STATIONARY, Mode.WALKING, Mode.DRIVING)


@dataclass(frozen=True)
class Sample:
    """One serving-cell observation: timestamp (ms), cell ID and RSS (dBm)"""

    timestamp: int
    cell_id: CellId
    rss_dbm: float


@dataclass(frozen=True)
class Segment:
    """Ground-truth annotation covering the half-open interval [start_ms, end_ms)"""

    start_ms: int
    end_ms: int
    mode: Mode

    def covers(self, timestamp: int) -> bool:
        return self.start_ms <= timestamp < self.end_ms


@dataclass(frozen=True)
class Trace:
    """Time-ordered samples plus optional ground-truth segments"""

    samples: Tuple[Sample, ...] = ()
    segments: Tuple[Segment, ...] = ()

    def __post_init__(self):
        # Accept any sequence, store tuples so the value stays immutable
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "segments", tuple(self.segments))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.samples], dtype=np.int64)

    @property
    def rss(self) -> np.ndarray:
        return np.array([s.rss_dbm for s in self.samples], dtype=float)

    @property
    def cell_ids(self) -> List[CellId]:
        return [s.cell_id for s in self.samples]

    def mode_at(self, timestamp: int) -> Optional[Mode]:
        """Ground-truth mode at a timestamp, None when no segment covers it"""
        starts = [seg.start_ms for seg in self.segments]
        pos = bisect_right(starts, timestamp) - 1
        if pos >= 0 and self.segments[pos].covers(timestamp):
            return self.segments[pos].mode
        return None

    def sample_modes(self) -> List[Optional[Mode]]:
        return [self.mode_at(s.timestamp) for s in self.samples]

    def with_cell_ids(self, cell_ids: Sequence[CellId]) -> "Trace":
        """Copy of the trace with cell IDs replaced, timestamps and RSS kept"""
        if len(cell_ids) != len(self.samples):
            raise DomainError("cell ID count does not match sample count")
        samples = tuple(
            Sample(s.timestamp, cid, s.rss_dbm) for s, cid in zip(self.samples, cell_ids)
        )
        return Trace(samples, self.segments)


@dataclass(frozen=True)
class FeatureVector:
    """One classifier instance: 36 features in canonical order plus optional label"""

    features: Tuple[float, ...]
    label: Optional[Mode] = None
    window_start_ms: int = 0

    def __post_init__(self):
        values = tuple(float(v) for v in self.features)
        if len(values) != FEATURE_COUNT:
            raise DomainError(f"feature vector must have {FEATURE_COUNT} entries, got {len(values)}")
        if not all(math.isfinite(v) for v in values):
            raise DomainError("feature vector contains non-finite values")
        object.__setattr__(self, "features", values)


@dataclass(frozen=True)
class Violation:
    """A single breach of the Trace invariants"""

    kind: str
    index: int
    message: str
    target: str = "sample"

    def __str__(self) -> str:
        return f"{self.message} at {self.target} index {self.index}"


def validate_trace(trace: Trace) -> List[Violation]:
    """
    Check every Trace invariant

    Args:
        trace: The trace to check

    Returns:
        One Violation per breach, empty when the trace is valid
    """
    violations: List[Violation] = []

    previous = None
    for i, sample in enumerate(trace.samples):
        if previous is not None and sample.timestamp <= previous:
            violations.append(Violation(
                "non_increasing_timestamp", i,
                f"duplicate/non-increasing timestamp {sample.timestamp}",
            ))
        previous = sample.timestamp

        if not isinstance(sample.rss_dbm, numbers.Real) or not math.isfinite(sample.rss_dbm):
            violations.append(Violation("non_finite_rss", i, "non-finite RSS"))

        if sample.cell_id is None or (isinstance(sample.cell_id, str) and not sample.cell_id.strip()):
            violations.append(Violation("empty_cell_id", i, "empty cell ID"))

    previous_end = None
    for i, seg in enumerate(trace.segments):
        if seg.start_ms >= seg.end_ms:
            violations.append(Violation(
                "empty_segment", i, f"segment [{seg.start_ms}, {seg.end_ms}) is empty", "segment",
            ))
        if previous_end is not None and seg.start_ms < previous_end:
            violations.append(Violation(
                "overlapping_segment", i, f"segment starting {seg.start_ms} overlaps its predecessor", "segment",
            ))
        previous_end = seg.end_ms

    return violations
