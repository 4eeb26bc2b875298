import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from semlink.errors import MetricError
from semlink.metrics import (
    PSNR_CAP_DB, TaskOutcome, answer_matches, bandwidth_summary, object_coverage, psnr, success_rate,
)
from semlink.transport import TransmissionRecord


def rec(chain="baseline", nbytes=100, symbols=100, delivered=True):
    return TransmissionRecord(chain, nbytes, symbols, 1, delivered, 10.0)


# -- psnr -----------------------------------------------------------------------

def test_psnr_identical_cap():
    a = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(a, a) == PSNR_CAP_DB


def test_psnr_zero_vs_one():
    assert psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == pytest.approx(0.0, abs=1e-12)


def test_psnr_uniform_error():
    a = np.full((5, 7, 3), 0.4)
    assert psnr(a, a + 0.1) == pytest.approx(10 * math.log10(1 / 0.01), abs=1e-9)


def test_psnr_against_direct_formula():
    rng = np.random.default_rng(3)
    a, b = rng.random((6, 9, 3)), rng.random((6, 9, 3))
    mse = sum((x - y) ** 2 for x, y in zip(a.ravel().tolist(), b.ravel().tolist())) / a.size
    assert psnr(a, b) == pytest.approx(10 * math.log10(1 / mse), rel=1e-12)


def test_psnr_shape_mismatch():
    with pytest.raises(MetricError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


@given(arrays(float, (3, 4, 3), elements=st.floats(0, 1)), arrays(float, (3, 4, 3), elements=st.floats(0, 1)))
def test_psnr_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)


# -- success rate -----------------------------------------------------------------

def outcome(ok, i=0):
    return TaskOutcome.judge(str(i), "42.10" if ok else "wrong", ["42.10"])


def test_success_all_none_partial():
    assert success_rate([outcome(True, i) for i in range(5)]) == 1.0
    assert success_rate([outcome(False, i) for i in range(5)]) == 0.0
    outs = [outcome(i < 27, i) for i in range(30)]
    assert success_rate(outs) == pytest.approx(0.9)


def test_success_empty():
    with pytest.raises(MetricError):
        success_rate([])


def test_match_policy():
    assert answer_matches("  Total   42.10 ", ["total 42.10"])
    assert answer_matches("b", ["a", "B"])
    assert not answer_matches("42.1", ["42.10"])


@given(st.lists(st.booleans(), min_size=1, max_size=50), st.randoms())
def test_success_rate_bounded_and_order_free(flags, rnd):
    outs = [outcome(f, i) for i, f in enumerate(flags)]
    r = success_rate(outs)
    assert 0.0 <= r <= 1.0
    rnd.shuffle(outs)
    assert success_rate(outs) == r


# -- coverage -----------------------------------------------------------------------

def test_coverage_synonyms():
    syn = {"person": ["man"], "car": ["automobile"]}
    assert object_coverage("a man beside an automobile", {"person", "car"}, syn) == 1.0


def test_coverage_empty_response():
    assert object_coverage("", {"person", "car"}) == 0.0


def test_coverage_counting():
    assert object_coverage("there is a person", {"person", "car", "dog"}, {}) == pytest.approx(1 / 3)


def test_coverage_multiword_sequence():
    syn = {"traffic light": []}
    assert object_coverage("a traffic light ahead", {"traffic light"}, syn) == 1.0
    assert object_coverage("light traffic ahead", {"traffic light"}, syn) == 0.0


def test_coverage_default_table_plural():
    assert object_coverage("two pedestrians and a bike", {"person", "bicycle"}) == 1.0


def test_coverage_empty_categories():
    with pytest.raises(MetricError):
        object_coverage("x", set())


words = st.sampled_from(["a", "man", "car", "dog", "bike", "the", "automobile", "puppy", "tree"])


@given(st.lists(words, max_size=10), st.lists(words, max_size=10))
def test_coverage_monotone(base, more):
    cats = {"person", "car", "dog", "bicycle"}
    r0 = object_coverage(" ".join(base), cats)
    r1 = object_coverage(" ".join(base + more), cats)
    assert r1 >= r0


# -- bandwidth ------------------------------------------------------------------------

def test_bandwidth_single():
    s = bandwidth_summary([rec(nbytes=123, symbols=456)])
    assert s["mean_bytes"] == 123 and s["mean_symbols"] == 456
    assert s["chains"]["baseline"]["bytes"]["p50"] == 123


def test_bandwidth_two():
    s = bandwidth_summary([rec(symbols=100), rec(symbols=300)])
    assert s["mean_symbols"] == 200
    q = s["chains"]["baseline"]["symbols"]
    assert (q["p25"], q["p50"], q["p75"]) == (150, 200, 250)


def test_bandwidth_empty():
    with pytest.raises(MetricError):
        bandwidth_summary([])


@given(st.lists(st.tuples(st.sampled_from(["semantic", "baseline", "text"]),
                          st.integers(1, 10**9), st.integers(0, 10**9)), min_size=1, max_size=40))
@settings(max_examples=80)
def test_bandwidth_totals_exact(rows):
    records = [rec(c, b, s) for c, b, s in rows]
    summ = bandwidth_summary(records)
    assert summ["total_bytes"] == sum(b for _, b, _ in rows)
    assert summ["total_symbols"] == sum(s for _, _, s in rows)
    assert sum(c["bytes"]["total"] for c in summ["chains"].values()) == summ["total_bytes"]
    assert sum(c["symbols"]["count"] for c in summ["chains"].values()) == len(rows)


def test_outcome_payload_sums():
    o = TaskOutcome.judge("t", "x", ["x"], [rec(nbytes=10, symbols=3), rec(nbytes=5, symbols=2)])
    assert (o.success, o.payload_bytes, o.complex_symbols) == (True, 15, 5)
