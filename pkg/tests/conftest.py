import io
from typing import Optional, Sequence

import numpy as np
import pytest

from ingest_lib import parse_trace, write_trace
from trace_model import FEATURE_COUNT, FeatureVector, Mode, Sample, Segment, Trace


def build_trace(
    cell_ids: Sequence,
    rss: Optional[Sequence[float]] = None,
    t0: int = 0,
    period_ms: int = 1000,
    mode: Optional[Mode] = None,
) -> Trace:
    """Regular 1 Hz trace; one segment covering every sample when mode is given"""
    if rss is None:
        rss = [-70.0] * len(cell_ids)
    samples = [Sample(t0 + i * period_ms, cid, float(v)) for i, (cid, v) in enumerate(zip(cell_ids, rss))]
    segments = []
    if mode is not None and samples:
        segments = [Segment(samples[0].timestamp, samples[-1].timestamp + 1, mode)]
    return Trace(samples, segments)


def instance(values: dict, label: Optional[Mode] = None, start: int = 0) -> FeatureVector:
    """36-vector of zeros with the given {index: value} entries"""
    features = [0.0] * FEATURE_COUNT
    for index, value in values.items():
        features[index] = float(value)
    return FeatureVector(tuple(features), label, start)


def roundtrip(trace: Trace) -> Trace:
    sink = io.BytesIO()
    write_trace(trace, sink)
    return parse_trace(io.BytesIO(sink.getvalue()))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def make_trace():
    return build_trace


@pytest.fixture
def make_instance():
    return instance


@pytest.fixture
def trace_roundtrip():
    return roundtrip


@pytest.fixture
def csv_bytes():
    def _csv(*rows: str) -> io.BytesIO:
        text = "timestamp_ms,cell_id,rss_dbm,label\n" + "".join(row + "\n" for row in rows)
        return io.BytesIO(text.encode("utf-8"))
    return _csv


@pytest.fixture(scope="session")
def small_suite():
    """Ten 600 s synthetic traces per mode over one tower field"""
    from synth_lib import SynthParams, generate_suite

    return generate_suite(SynthParams(suite=10, seed=7))
