"""
Preprocess Library

Ping-pong smoothing of the serving-cell ID stream and conversion of RSS
between the logarithmic (dBm) and linear (mW) scales.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from errors import DomainError
from trace_model import CellId, Trace

logger = logging.getLogger(__name__)

Number = Union[float, np.ndarray]


@dataclass(frozen=True)
class SmoothingParams:
    """
    Ping-pong filter settings, in samples

    Args:
        max_gap: Longest interloper run that may be replaced
        min_flank: Shortest run on each side that counts as dominant
    """

    max_gap: int = 2
    min_flank: int = 3

    def __post_init__(self):
        if self.max_gap < 1:
            raise DomainError("max_gap must be >= 1")
        if self.min_flank < 1:
            raise DomainError("min_flank must be >= 1")


def cell_runs(cell_ids: Sequence[CellId]) -> List[Tuple[CellId, int, int]]:
    """Maximal same-ID runs as (cell_id, start index, length)"""
    runs: List[Tuple[CellId, int, int]] = []
    for i, cid in enumerate(cell_ids):
        if runs and runs[-1][0] == cid:
            cid_, start, length = runs[-1]
            runs[-1] = (cid_, start, length + 1)
        else:
            runs.append((cid, i, 1))
    return runs


def _flank_length(runs, start: int, step: int, params: SmoothingParams) -> int:
    """
    Samples of runs[start]'s ID reachable from start in direction step

    Further interlopers no longer than max_gap are skipped, so a flank
    broken by another ping-pong bounce still counts as dominant.
    """
    cid = runs[start][0]
    total = 0
    j = start
    while 0 <= j < len(runs) and runs[j][0] == cid:
        total += runs[j][2]
        if total >= params.min_flank:
            break
        k = j + step
        if not 0 <= k < len(runs) or runs[k][2] > params.max_gap:
            break
        j = k + step
    return total


def _smooth_pass(ids: List[CellId], params: SmoothingParams) -> int:
    """One left-to-right replacement pass over ids, in place; returns samples replaced"""
    replaced = 0
    runs = cell_runs(ids)
    i = 1
    while i < len(runs) - 1:
        left, mid, right = runs[i - 1], runs[i], runs[i + 1]
        if (
            mid[2] <= params.max_gap
            and left[0] == right[0]
            and _flank_length(runs, i - 1, -1, params) >= params.min_flank
            and _flank_length(runs, i + 1, +1, params) >= params.min_flank
        ):
            for j in range(mid[1], mid[1] + mid[2]):
                ids[j] = left[0]
            replaced += mid[2]
            # The three runs merge into one; it can flank the next interloper
            runs[i - 1:i + 2] = [(left[0], left[1], left[2] + mid[2] + right[2])]
        else:
            i += 1
    return replaced


def smooth_ids(cell_ids: Sequence[CellId], params: SmoothingParams = SmoothingParams()) -> List[CellId]:
    """Apply the replacement rule to a cell-ID sequence until nothing changes"""
    ids = list(cell_ids)
    total = 0
    # Every productive pass removes at least one run, so len(ids) passes bound the loop
    for _ in range(len(ids) + 1):
        replaced = _smooth_pass(ids, params)
        total += replaced
        if replaced == 0:
            break
    logger.debug("Ping-pong smoothing replaced %d of %d samples", total, len(ids))
    return ids


def smooth_pingpong(trace: Trace, params: SmoothingParams = SmoothingParams()) -> Trace:
    """
    Remove ping-pong handoffs from a trace

    Short runs (<= max_gap samples) sandwiched between two runs of one
    common cell ID, each at least min_flank samples long, take the flanking
    ID. A flank keeps counting across further interlopers of at most
    max_gap samples. Timestamps and RSS values are untouched.

    Args:
        trace: A valid trace
        params: Filter settings

    Returns:
        The smoothed trace
    """
    return trace.with_cell_ids(smooth_ids(trace.cell_ids, params))


def count_handoffs(trace: Trace) -> int:
    """Number of serving-cell changes between consecutive samples"""
    return max(len(cell_runs(trace.cell_ids)) - 1, 0)


def longest_run(trace: Trace) -> int:
    """Length of the longest same-cell run, 0 for an empty trace"""
    return max((length for _, _, length in cell_runs(trace.cell_ids)), default=0)


def dbm_to_milliwatts(rss_dbm: Number) -> Number:
    """Convert dBm to mW: 10^(dBm/10)"""
    if isinstance(rss_dbm, np.ndarray):
        return np.power(10.0, rss_dbm.astype(float) / 10.0)
    return 10.0 ** (float(rss_dbm) / 10.0)


def milliwatts_to_dbm(p_mw: Number) -> Number:
    """Convert mW to dBm: 10*log10(mW)"""
    values = np.asarray(p_mw, dtype=float)
    if np.any(values <= 0) or np.any(np.isnan(values)):
        raise DomainError("power must be > 0 mW")
    if isinstance(p_mw, np.ndarray):
        return 10.0 * np.log10(values)
    return 10.0 * float(np.log10(float(p_mw)))
