import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capsketch import (
    AllThresholdSketch,
    DistinctCounter,
    IncompatibleSketchError,
    MaxDistinctSketch,
    SumCounter,
    load_sketch,
)
from capsketch.sketches import _base_rank


def test_distinct_exact_mode():
    dc = DistinctCounter(k=100, seed=0)
    for i in range(5):
        dc.update(i)
        dc.update(i)  # duplicates ignored
    assert dc.estimate() == 5.0


def test_distinct_merge_bit_exact():
    rng = np.random.default_rng(1)
    keys = rng.integers(0, 500, 2000).astype(np.uint64)
    whole = DistinctCounter(k=64, seed=3)
    whole.update_batch(keys)
    a = DistinctCounter(k=64, seed=3)
    b = DistinctCounter(k=64, seed=3)
    a.update_batch(keys[:700])
    b.update_batch(keys[700:])
    merged = a.merge(b)
    assert merged.to_bytes() == whole.to_bytes()
    assert merged.estimate() == whole.estimate()


def test_distinct_estimator_accuracy():
    n, k, trials = 10_000, 100, 200
    ests = np.empty(trials)
    for s in range(trials):
        dc = DistinctCounter(k=k, seed=s)
        dc.update_batch(np.arange(n, dtype=np.uint64) + np.uint64(s * n))
        ests[s] = dc.estimate()
    se = ests.std(ddof=1) / math.sqrt(trials)
    assert abs(ests.mean() - n) < 3 * se
    assert ests.std(ddof=1) < 1.5 * n / math.sqrt(k - 2)


def test_max_distinct_exact_mode():
    md = MaxDistinctSketch(k=10, seed=0)
    md.update(1, 3.0)
    md.update(1, 7.0)
    md.update(2, 2.0)
    assert md.estimate() == 9.0


def test_max_distinct_all_ones_reduces_to_distinct():
    keys = np.arange(50, dtype=np.uint64)
    md = MaxDistinctSketch(k=100, seed=5)
    md.update_batch(keys, np.ones(50))
    dc = DistinctCounter(k=100, seed=5)
    dc.update_batch(keys)
    assert md.estimate() == dc.estimate() == 50.0
    # at saturation the two estimators agree to a few percent
    keys = np.arange(5000, dtype=np.uint64)
    md = MaxDistinctSketch(k=100, seed=5)
    md.update_batch(keys, np.ones(5000))
    dc = DistinctCounter(k=100, seed=5)
    dc.update_batch(keys)
    assert md.estimate() == pytest.approx(dc.estimate(), rel=0.05)


def test_max_distinct_accuracy():
    n, k, trials = 10_000, 100, 200
    rng = np.random.default_rng(0)
    vals = rng.uniform(1, 2, n)
    truth = vals.sum()
    ests = np.empty(trials)
    for s in range(trials):
        md = MaxDistinctSketch(k=k, seed=s)
        md.update_batch(np.arange(n, dtype=np.uint64), vals)
        ests[s] = md.estimate()
    sigma = truth / math.sqrt(k - 2)
    assert abs(ests.mean() - truth) < 3 * sigma / math.sqrt(trials)


def test_max_distinct_monotone_in_value():
    md = MaxDistinctSketch(k=4, seed=2)
    for i in range(30):
        md.update(i, 1.0 + (i % 3))
    before = md.estimate()
    md.update(7, 50.0)
    assert md.estimate() >= before
    with pytest.raises(ValueError):
        md.update(1, 0.0)


def test_max_distinct_reentry_after_eviction():
    # a key evicted at a small value must re-enter when its value grows
    md = MaxDistinctSketch(k=3, seed=11)
    ranks = {o: _base_rank(o, 11) for o in range(10)}
    md.update(9, 0.001)  # huge rank, will be evicted once 3 better keys exist
    for o in range(3):
        md.update(o, 10.0)
    assert 9 not in md._entries
    md.update(9, 1e6)  # now its rank is tiny
    assert 9 in md._entries
    # content equals the bottom-k of the final value map
    final = {o: 10.0 for o in range(3)}
    final[9] = 1e6
    expect = sorted(((ranks[o] / m, o) for o, m in final.items()))[:3]
    assert set(md._entries) == {o for _, o in expect}


def test_all_threshold_staircase():
    # 100 keys at draw 1, 10k keys at draw 2; with k=100 the t=1 estimate
    # averages 100 and t=2 averages 10100 (its CV is about 1/sqrt(k-2))
    k, trials = 100, 300
    est1 = np.empty(trials)
    est2 = np.empty(trials)
    for s in range(trials):
        at = AllThresholdSketch(k=k, seed=s)
        keys = np.arange(10_100, dtype=np.uint64)
        ys = np.where(keys < 100, 1.0, 2.0)
        at.update_batch(keys, ys)
        assert at.estimate_at(0.5) == 0.0
        est1[s] = at.estimate_at(1.0)
        est2[s] = at.estimate_at(2.0)
    se1 = est1.std(ddof=1) / math.sqrt(trials)
    assert abs(est1.mean() - 100.0) < 4 * max(se1, 1e-9)
    se2 = est2.std(ddof=1) / math.sqrt(trials)
    assert abs(est2.mean() - 10_100.0) < 4 * se2


def test_all_threshold_matches_brute_force():
    # independent re-implementation of the retention rule and estimator
    def brute(entries, k, seed, t):
        sel = [(y, o) for o, y in entries.items() if y <= t]
        if len(sel) < k:
            return float(len(sel))
        ranks = sorted(_base_rank(o, seed) for _, o in sel)
        return (k - 1) / -math.expm1(-ranks[k - 1])

    rng = np.random.default_rng(4)
    k, seed = 8, 3
    at = AllThresholdSketch(k=k, seed=seed)
    full: dict[int, float] = {}
    for _ in range(600):
        o = int(rng.integers(0, 150))
        y = float(rng.exponential())
        at.update(o, y)
        if full.get(o, math.inf) > y:
            full[o] = y
    for t in np.linspace(0.0, 6.0, 80):
        assert at.estimate_at(float(t)) == brute(full, k, seed, float(t))
    # expected size stays near k log(n/k)
    assert len(at) <= 12 * k


def test_all_threshold_monotone_and_limits():
    rng = np.random.default_rng(9)
    at = AllThresholdSketch(k=16, seed=7)
    keys = rng.integers(0, 4000, 20_000).astype(np.uint64)
    ys = rng.exponential(size=20_000)
    at.update_batch(keys, ys)
    ts = np.linspace(0.0, ys.max() * 1.1, 500)
    ests = at.estimate_all(ts)
    assert np.all(np.diff(ests) >= -1e-9)
    assert at.estimate_at(0.0) == 0.0
    # far above every draw the answer equals a plain distinct counter
    dc = DistinctCounter(k=16, seed=7)
    dc.update_batch(keys)
    assert at.estimate_at(math.inf) == dc.estimate()


def test_all_threshold_merge_bit_exact():
    rng = np.random.default_rng(12)
    keys = rng.integers(0, 900, 5000).astype(np.uint64)
    ys = rng.exponential(size=5000)
    whole = AllThresholdSketch(k=20, seed=1)
    whole.update_batch(keys, ys)
    a = AllThresholdSketch(k=20, seed=1)
    b = AllThresholdSketch(k=20, seed=1)
    a.update_batch(keys[:2200], ys[:2200])
    b.update_batch(keys[2200:], ys[2200:])
    assert a.merge(b).to_bytes() == whole.to_bytes()


def test_sum_counter(toy_elements):
    sc = SumCounter()
    for e in toy_elements:
        sc.update(e.value)
    assert sc.value() == 30.0
    assert SumCounter().value() == 0.0
    a, b = SumCounter(), SumCounter()
    a.update(12.0)
    b.update(18.0)
    assert a.merge(b).value() == 30.0
    with pytest.raises(ValueError):
        sc.update(0.0)
    with pytest.raises(ValueError):
        sc.update(float("inf"))


def test_sum_counter_exact_and_partition_independent():
    rng = np.random.default_rng(3)
    vals = rng.uniform(0.001, 7.0, 501)
    whole = SumCounter()
    whole.update_batch(vals)
    scalar = SumCounter()
    for v in vals:
        scalar.update(float(v))
    assert whole.exact() == scalar.exact()
    assert whole.to_bytes() == scalar.to_bytes()
    parts = SumCounter()
    for chunk in np.array_split(vals, 7):
        part = SumCounter()
        part.update_batch(chunk)
        parts = parts.merge(part)
    assert parts.to_bytes() == whole.to_bytes()
    # exact rational total, independent of float summation order
    from fractions import Fraction

    assert whole.exact() == sum(Fraction(float(v)) for v in vals)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=0, max_size=120), st.integers(0, 2**32))
def test_merge_algebra(keys, seed):
    keys = np.asarray(keys, dtype=np.uint64)
    third = max(1, len(keys) // 3) if len(keys) else 1
    chunks = [keys[:third], keys[third : 2 * third], keys[2 * third :]]
    sks = []
    for c in chunks:
        sk = DistinctCounter(k=8, seed=seed)
        sk.update_batch(c)
        sks.append(sk)
    abc = sks[0].merge(sks[1]).merge(sks[2])
    acb = sks[0].merge(sks[2]).merge(sks[1])
    bca = sks[1].merge(sks[2]).merge(sks[0])
    assert abc.to_bytes() == acb.to_bytes() == bca.to_bytes()
    # idempotent on overlapping content
    assert abc.merge(abc).to_bytes() == abc.to_bytes()


def test_serialization_round_trips():
    rng = np.random.default_rng(6)
    keys = rng.integers(0, 300, 1500).astype(np.uint64)
    vals = rng.uniform(0.1, 4.0, 1500)

    dc = DistinctCounter(k=32, seed=2)
    dc.update_batch(keys)
    md = MaxDistinctSketch(k=32, seed=2)
    md.update_batch(keys, vals)
    at = AllThresholdSketch(k=12, seed=2)
    at.update_batch(keys, vals)
    sc = SumCounter()
    sc.update_batch(vals)
    for sk in (dc, md, at, sc):
        blob = sk.to_bytes()
        back = load_sketch(blob)
        assert back.to_bytes() == blob
        assert type(back) is type(sk)
    assert load_sketch(dc.to_bytes()).estimate() == dc.estimate()
    assert load_sketch(md.to_bytes()).estimate() == md.estimate()
    assert load_sketch(at.to_bytes()).estimate_at(1.0) == at.estimate_at(1.0)
    assert load_sketch(sc.to_bytes()).exact() == sc.exact()


def test_incompatible_merges():
    a = DistinctCounter(k=8, seed=1)
    with pytest.raises(IncompatibleSketchError, match="k="):
        a.merge(DistinctCounter(k=16, seed=1))
    with pytest.raises(IncompatibleSketchError, match="seed"):
        a.merge(DistinctCounter(k=8, seed=2))
    with pytest.raises(IncompatibleSketchError):
        a.merge(MaxDistinctSketch(k=8, seed=1))
    with pytest.raises(IncompatibleSketchError):
        SumCounter().merge(a)


def test_bad_blobs():
    with pytest.raises(ValueError):
        load_sketch(b"garbage")
    dc = DistinctCounter(k=4, seed=0)
    with pytest.raises(IncompatibleSketchError):
        MaxDistinctSketch.from_bytes(dc.to_bytes())
