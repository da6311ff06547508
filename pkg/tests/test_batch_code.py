import math
from random import Random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fslkit.batch_code import (
    MAX_BIN_TABLE,
    TableSpec,
    build_cuckoo_table,
    build_simple_table,
    candidate_bins,
    depth_for,
    estimate_theta,
    lookup_position,
    measure_theta,
    recommend_params,
    scale_factor,
)
from fslkit.errors import CuckooInsertionError, LookupFailure, ParameterError


@st.composite
def tables(draw, max_m=400):
    m = draw(st.integers(4, max_m))
    k = draw(st.integers(1, max(1, m // 4)))
    seed = draw(st.binary(min_size=16, max_size=16))
    spec = TableSpec(m=m, k=k, epsilon=1.5, hash_seed=seed, sigma=draw(st.integers(0, 3)))
    sel = Random(draw(st.integers(0, 2**32))).sample(range(m), k)
    return spec, sel


@given(tables())
def test_simple_table_holds_each_element_in_each_candidate_bin(case):
    spec, _ = case
    simple = build_simple_table(spec)
    assert sum(len(b) for b in simple.bins) == sum(len(candidate_bins(spec, u)) for u in range(spec.m))
    for u in range(spec.m):
        cands = candidate_bins(spec, u)
        placements = simple.placements(u)
        assert [b for b, _ in placements] == list(cands)
        for b, pos in placements:
            assert simple.bins[b][pos] == u == simple.bins[b][lookup_position(simple, b, u)]
    for members in simple.bins:
        assert members == sorted(members)
    assert simple.theta == max(len(b) for b in simple.bins)


@given(tables())
def test_cuckoo_aligned_with_simple(case):
    spec, sel = case
    try:
        table = build_cuckoo_table(spec, sel, rng=Random(0))
    except CuckooInsertionError:
        return
    simple = build_simple_table(spec)
    placed = [u for _, u in table.occupied()] + table.stash
    assert sorted(placed) == sorted(sel)
    assert len(table.stash) <= spec.sigma
    for j, u in table.occupied():
        assert j in candidate_bins(spec, u)
        assert u in simple.bins[j]


def test_hash_family_is_deterministic_and_seeded():
    a = TableSpec(m=1000, k=100)
    b = TableSpec(m=1000, k=100, hash_seed=bytes(16))
    x = np.arange(1000)
    assert np.array_equal(a.hash_matrix(x), TableSpec(m=1000, k=100).hash_matrix(x))
    assert not np.array_equal(a.hash_matrix(x), b.hash_matrix(x))
    h = a.hash_matrix(x)
    assert h.min() >= 0 and h.max() < a.bins


def test_hash_loads_are_balanced():
    spec = TableSpec(m=1 << 14, k=1 << 10)
    counts = np.bincount(spec.hash_matrix(np.arange(spec.m))[:, 0], minlength=spec.bins)
    expected = spec.m / spec.bins
    # chi-square against uniform, generous bound for B-1 = 1279 degrees of freedom
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < spec.bins * 1.3


def test_table_spec_validation_and_text():
    with pytest.raises(ParameterError):
        TableSpec(m=10, k=5, epsilon=1.0)
    with pytest.raises(ParameterError):
        TableSpec(m=10, k=5, eta=1)
    with pytest.raises(ParameterError):
        TableSpec(m=10, k=5, hash_seed=b"x")
    with pytest.raises(ParameterError):
        TableSpec(m=0, k=0)
    spec = TableSpec(m=100, k=10, sigma=2)
    assert spec.bins == 13
    assert TableSpec.from_text(spec.to_text()) == spec
    forced = TableSpec(m=100, k=10, bins_override=7, sigma=3)
    assert TableSpec.from_text(forced.to_text()) == forced


def test_bins_use_exact_ceiling():
    assert TableSpec(m=100, k=4).bins == 5
    assert TableSpec(m=100, k=8).bins == 10
    assert TableSpec(m=100, k=9).bins == 12


def test_simple_table_on_restricted_domain():
    spec = TableSpec(m=100, k=5)
    dom = [3, 10, 11, 50, 99]
    simple = build_simple_table(spec, dom)
    assert sorted(u for b in simple.bins for u in b) == sorted(
        u for u in dom for _ in candidate_bins(spec, u)
    )
    with pytest.raises(LookupFailure):
        simple.row_of(4)
    with pytest.raises(ParameterError):
        build_simple_table(spec, [5, 3])
    with pytest.raises(ParameterError):
        build_simple_table(spec, [100])


def test_cuckoo_failure_and_stash():
    spec = TableSpec(m=200, k=16, bins_override=12, sigma=6)
    sel = list(range(0, 160, 10))
    table = build_cuckoo_table(spec, sel, rng=Random(1))
    assert len(table.stash) >= 4
    assert sorted(table.location()) == sorted(sel)
    tight = TableSpec(m=200, k=16, bins_override=12, sigma=0)
    with pytest.raises(CuckooInsertionError) as info:
        build_cuckoo_table(tight, sel, rng=Random(1))
    assert info.value.placed + info.value.pending == len(sel)


def test_cuckoo_rejects_bad_selection():
    spec = TableSpec(m=50, k=3)
    with pytest.raises(ParameterError):
        build_cuckoo_table(spec, [1, 1, 2])
    with pytest.raises(ParameterError):
        build_cuckoo_table(spec, [1, 2, 50])
    empty = build_cuckoo_table(spec, [])
    assert list(empty.occupied()) == [] and empty.stash == []


def test_scale_factors():
    assert scale_factor(1) == 1.25
    assert scale_factor(1 << 15) == 1.25
    assert scale_factor((1 << 15) + 1) == 1.27
    assert scale_factor(1 << 20) == 1.27
    assert scale_factor(1 << 25) == 1.28
    assert scale_factor(1 << 30) == 1.28


@pytest.mark.parametrize("pct", sorted(MAX_BIN_TABLE))
def test_estimate_hits_table_points(pct):
    for i, lm in enumerate((10, 15, 20, 25)):
        assert estimate_theta(1 << lm, pct / 100) == MAX_BIN_TABLE[pct][i]


@given(st.integers(10, 25), st.floats(0.01, 0.7))
def test_estimate_monotone_in_rate(lm, c):
    assert estimate_theta(1 << lm, c) >= estimate_theta(1 << lm, min(0.7, c + 0.05)) - 1e-9


def test_recommend_params():
    rec = recommend_params(1 << 20, 104857)
    assert rec.epsilon == 1.27 and rec.depth <= 9
    rec = recommend_params(1 << 15, math.ceil(0.1 * (1 << 15)))
    assert (rec.theta_estimate, rec.depth) == (54, 6)
    assert recommend_params(1 << 25, (1 << 25) // 100).depth == 9
    with pytest.raises(ParameterError):
        recommend_params(10, 11)


def test_depth_for():
    assert [depth_for(t) for t in (0, 1, 2, 3, 4, 5, 64, 65)] == [1, 1, 1, 2, 2, 3, 6, 7]


def test_measure_theta_is_reproducible():
    assert measure_theta(1 << 8, 0.1, 3, seed=5) == measure_theta(1 << 8, 0.1, 3, seed=5)
