"""
Ingest Library

Reads and writes the CSV trace format (timestamp_ms,cell_id,rss_dbm,label)
and the instance format produced by feature extraction. Per-row labels are
coalesced into ground-truth segments while parsing.
"""

import csv
import io
import logging
import math
import re
from pathlib import Path
from typing import BinaryIO, Iterable, List, Optional, Sequence, Tuple, Union

from errors import TraceParseError, TraceValidationError
from trace_model import (
    FEATURE_COUNT,
    CellId,
    FeatureVector,
    Mode,
    Sample,
    Segment,
    Trace,
    validate_trace,
)

logger = logging.getLogger(__name__)

TRACE_HEADER = ["timestamp_ms", "cell_id", "rss_dbm", "label"]
INSTANCE_HEADER = ["window_start_ms"] + [f"f{i}" for i in range(FEATURE_COUNT)] + ["label"]
PREDICTION_HEADER = ["window_start_ms", "predicted", "label"]

_INTEGER_ID = re.compile(r"-?[1-9][0-9]*|0")

PathLike = Union[str, Path]


def _read_text(stream: BinaryIO) -> str:
    """Read a whole byte stream as UTF-8 text"""
    data = stream.read()
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as e:
        raise TraceParseError(f"stream is not valid UTF-8: {e}") from e


class _LineTap:
    """Line iterator that keeps the raw text csv.reader pulled for the current record"""

    def __init__(self, text: str):
        self._lines = iter(io.StringIO(text, newline=""))
        self.raw = ""

    def __iter__(self):
        return self

    def __next__(self) -> str:
        line = next(self._lines)
        self.raw += line
        return line


def _quoted_fields(raw: str) -> List[bool]:
    """Whether each field of one raw CSV record was enclosed in double quotes"""
    flags: List[bool] = []
    field_start = True
    in_quotes = False
    for ch in raw:
        if field_start:
            field_start = False
            flags.append(ch == '"')
            if ch == '"':
                in_quotes = True
                continue
        if ch == '"':
            in_quotes = not in_quotes
        elif ch == "," and not in_quotes:
            field_start = True
    return flags


def _rows(text: str) -> Iterable[Tuple[int, List[str], List[bool]]]:
    """Yield (line number, fields, quoted flags) for every non-blank CSV row"""
    tap = _LineTap(text)
    reader = csv.reader(tap)
    while True:
        tap.raw = ""
        try:
            row = next(reader)
        except StopIteration:
            return
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        yield reader.line_num, row, _quoted_fields(tap.raw)


def _check_header(rows, expected: List[str]) -> None:
    try:
        line, header, _ = next(rows)
    except StopIteration:
        raise TraceParseError("missing header", line=1)
    if [h.strip() for h in header] != expected:
        raise TraceParseError(f"header must be '{','.join(expected)}'", line=line)


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise TraceParseError(f"unparsable {what} '{text}'", line=line)


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise TraceParseError(f"unparsable {what} '{text}'", line=line)


def _parse_label(text: str, line: int) -> Optional[Mode]:
    text = text.strip()
    if not text:
        return None
    for mode in Mode:
        if mode.value == text:
            return mode
    raise TraceParseError(f"unknown label '{text}'", line=line)


def parse_cell_id(text: str, quoted: bool = False) -> CellId:
    """
    Unquoted integer-looking IDs become ints, anything else stays an opaque string

    A quoted field is kept verbatim, so "42" reads back as the string '42'.
    """
    if quoted:
        return text
    text = text.strip()
    if _INTEGER_ID.fullmatch(text):
        return int(text)
    return text


def format_cell_id(cell_id: CellId) -> str:
    """Cell ID as a CSV field; strings that would not read back as themselves are quoted"""
    if not isinstance(cell_id, str):
        return str(cell_id)
    if (
        _INTEGER_ID.fullmatch(cell_id)
        or cell_id != cell_id.strip()
        or any(c in cell_id for c in ',"\r\n')
    ):
        return '"' + cell_id.replace('"', '""') + '"'
    return cell_id


def coalesce_labels(timestamps: Sequence[int], labels: Sequence[Optional[Mode]]) -> List[Segment]:
    """
    Turn per-row labels into half-open ground-truth segments

    A run of equal labels ends at the timestamp of the row after it; the
    final run of the file ends one millisecond after its last row.
    """
    segments: List[Segment] = []
    run_start = None
    run_mode = None
    for ts, label in zip(timestamps, labels):
        if label != run_mode:
            if run_mode is not None:
                segments.append(Segment(run_start, ts, run_mode))
            run_start, run_mode = ts, label
    if run_mode is not None:
        segments.append(Segment(run_start, timestamps[-1] + 1, run_mode))
    return segments


def parse_trace(stream: BinaryIO) -> Trace:
    """
    Parse a trace CSV stream

    Args:
        stream: UTF-8 byte stream with header timestamp_ms,cell_id,rss_dbm,label

    Returns:
        The Trace, samples in file order, labels coalesced into segments

    Raises:
        TraceParseError: malformed row, with its line number
        TraceValidationError: the rows break the Trace invariants
    """
    rows = iter(_rows(_read_text(stream)))
    _check_header(rows, TRACE_HEADER)

    samples: List[Sample] = []
    labels: List[Optional[Mode]] = []
    for line, row, quoted in rows:
        if len(row) != len(TRACE_HEADER):
            raise TraceParseError(f"expected {len(TRACE_HEADER)} columns, got {len(row)}", line=line)
        if not row[1].strip():
            raise TraceParseError("empty cell_id", line=line)
        samples.append(Sample(
            timestamp=_parse_int(row[0], "timestamp_ms", line),
            cell_id=parse_cell_id(row[1], quoted=len(quoted) > 1 and quoted[1]),
            rss_dbm=_parse_float(row[2], "rss_dbm", line),
        ))
        labels.append(_parse_label(row[3], line))

    trace = Trace(samples, coalesce_labels([s.timestamp for s in samples], labels))
    violations = validate_trace(trace)
    if violations:
        raise TraceValidationError(violations)

    logger.debug("Parsed trace: %d samples, %d segments", len(samples), len(trace.segments))
    return trace


def format_rss(rss_dbm: float) -> str:
    """RSS with 6 significant digits"""
    return f"{rss_dbm:.6g}"


def write_trace(trace: Trace, sink: BinaryIO) -> None:
    """
    Write a trace in the CSV format read by parse_trace

    Args:
        trace: A trace passing validate_trace
        sink: Binary stream to write UTF-8 text to
    """
    violations = validate_trace(trace)
    if violations:
        raise TraceValidationError(violations)

    # Rows are joined by hand: csv.writer cannot force quotes on a single field
    lines = [",".join(TRACE_HEADER)]
    for sample, mode in zip(trace.samples, trace.sample_modes()):
        lines.append(",".join([
            str(sample.timestamp),
            format_cell_id(sample.cell_id),
            format_rss(sample.rss_dbm),
            mode.value if mode is not None else "",
        ]))
    sink.write(("\n".join(lines) + "\n").encode("utf-8"))


def read_trace(path: PathLike) -> Trace:
    """Parse a trace file from disk"""
    with open(path, "rb") as f:
        return parse_trace(f)


def save_trace(trace: Trace, path: PathLike) -> None:
    """Write a trace file to disk"""
    with open(path, "wb") as f:
        write_trace(trace, f)


# ---- Instances ----

def write_instances(instances: Sequence[FeatureVector], sink: BinaryIO) -> None:
    """Write feature vectors as window_start_ms,f0..f35,label CSV"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(INSTANCE_HEADER)
    for inst in instances:
        writer.writerow(
            [inst.window_start_ms]
            + [repr(v) for v in inst.features]
            + [inst.label.value if inst.label is not None else ""]
        )
    sink.write(buffer.getvalue().encode("utf-8"))


def parse_instances(stream: BinaryIO) -> List[FeatureVector]:
    """Parse an instance CSV stream written by write_instances"""
    rows = iter(_rows(_read_text(stream)))
    _check_header(rows, INSTANCE_HEADER)

    instances: List[FeatureVector] = []
    for line, row, _ in rows:
        if len(row) != len(INSTANCE_HEADER):
            raise TraceParseError(f"expected {len(INSTANCE_HEADER)} columns, got {len(row)}", line=line)
        features = [_parse_float(v, f"f{i}", line) for i, v in enumerate(row[1:-1])]
        if not all(math.isfinite(v) for v in features):
            raise TraceParseError("non-finite feature value", line=line)
        instances.append(FeatureVector(
            features=tuple(features),
            label=_parse_label(row[-1], line),
            window_start_ms=_parse_int(row[0], "window_start_ms", line),
        ))
    return instances


def read_instances(path: PathLike) -> List[FeatureVector]:
    with open(path, "rb") as f:
        return parse_instances(f)


def save_instances(instances: Sequence[FeatureVector], path: PathLike) -> None:
    with open(path, "wb") as f:
        write_instances(instances, f)


def write_predictions(
    instances: Sequence[FeatureVector],
    predictions: Sequence[Mode],
    sink: BinaryIO,
) -> None:
    """Write window_start_ms,predicted,label rows"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(PREDICTION_HEADER)
    for inst, predicted in zip(instances, predictions):
        writer.writerow([
            inst.window_start_ms,
            predicted.value,
            inst.label.value if inst.label is not None else "",
        ])
    sink.write(buffer.getvalue().encode("utf-8"))
