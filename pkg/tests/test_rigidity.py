import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidlab.gf2core import BitMatrix, BitVector, Subspace, distance_to_subspace, mat, random_subspace, rank, vec
from rigidlab.limits import CapExceeded, use_caps
from rigidlab.querysets import QuerySet, gen_prefix, gen_random
from rigidlab.rigidity import (
    average_distance,
    find_far_point,
    find_far_rank_one,
    fold_set,
    hamming_distance_transform,
    is_rigid,
    rigidity_value,
    strong_rigidity_value,
)

E3 = QuerySet.from_strs(["100", "010", "001"])


@st.composite
def query_sets(draw, max_n=5):
    n = draw(st.integers(1, max_n))
    bits = draw(st.sets(st.integers(0, (1 << n) - 1), min_size=1, max_size=min(2**n, 8)))
    return QuerySet(n, tuple(BitVector(n, b) for b in sorted(bits)))


def brute_rigidity(q, r):
    """Closure over every generator tuple; slow but shares no code with the scanner."""
    n = q.n
    best = None
    for gens in itertools.product(range(1 << n), repeat=r):
        elems = {0}
        for g in gens:
            elems |= {e ^ g for e in elems}
        val = max(min((x ^ e).bit_count() for e in elems) for x in q.bits())
        best = val if best is None else min(best, val)
    return best


def test_rigidity_examples():
    assert rigidity_value(E3, 1).value == 1
    assert rigidity_value(E3, 3).value == 0
    assert rigidity_value(gen_prefix(4), 0).value == 4


@settings(max_examples=60, deadline=None)
@given(query_sets(max_n=4), st.integers(0, 2))
def test_rigidity_matches_generator_brute_force(q, r):
    r = min(r, q.n)
    rep = rigidity_value(q, r)
    assert rep.value == brute_rigidity(q, r)
    assert rep.witness.dim <= r
    assert distance_to_subspace(rep.argmax_query, rep.witness) == rep.value


@settings(max_examples=40, deadline=None)
@given(query_sets(), st.integers(0, 5))
def test_exact_dimension_scan_agrees_with_all_dimensions(q, r):
    r = min(r, q.n)
    assert rigidity_value(q, r).value == rigidity_value(q, r, all_dims=True).value


@settings(max_examples=30, deadline=None)
@given(query_sets(max_n=5))
def test_rigidity_is_monotone_in_r(q):
    vals = [rigidity_value(q, r).value for r in range(q.n + 1)]
    assert vals == sorted(vals, reverse=True)
    assert vals[0] == q.max_weight and vals[-1] == 0


def test_parallel_scan_matches_serial():
    q = gen_random(6, 9, 11)
    serial = rigidity_value(q, 2)
    par = rigidity_value(q, 2, workers=3)
    assert (par.value, par.witness, par.subspaces_scanned) == (serial.value, serial.witness, serial.subspaces_scanned)


def test_rigidity_cap_names_the_cap():
    with use_caps(subspaces=100), pytest.raises(CapExceeded) as exc:
        rigidity_value(gen_random(7, 5, 1), 3)
    assert exc.value.cap == "subspaces"


def test_is_rigid_examples():
    assert is_rigid(E3, 2, 0)
    assert is_rigid(E3, 1.9, 0.2)
    assert not is_rigid(QuerySet.from_strs(["111"]), 1, 1)


# -- folding --------------------------------------------------------------------------


def test_fold_examples():
    assert sorted(str(v) for v in fold_set(QuerySet.from_strs(["1011"]), 1)) == ["10", "11"]
    assert sorted(str(v) for v in fold_set(QuerySet.from_strs(["10111"]), 1)) == ["10", "11"]
    assert [str(v) for v in fold_set(QuerySet.from_strs(["000000"]), 2)] == ["0000"]
    with pytest.raises(ValueError):
        fold_set(E3, 2)


@given(query_sets(max_n=8), st.integers(1, 4))
def test_fold_size_bound(q, r):
    if 2 * r > q.n:
        return
    assert fold_set(q, r).m <= q.m * math.ceil(q.n / (2 * r))


def test_fold_can_lose_all_rigidity():
    # two weight-one vectors in different blocks fold onto a single line
    q = QuerySet.from_strs(["1000", "0010"])
    assert rigidity_value(q, 1).value == 1
    assert rigidity_value(fold_set(q, 1), 1).value == 0


# -- strong rigidity ------------------------------------------------------------------


def test_average_distance_examples():
    assert average_distance(E3, Subspace.full(3)) == 0
    assert average_distance(E3, Subspace.zero(3)) == 1
    value, witness = strong_rigidity_value(E3, 1)
    assert value == Fraction(2, 3) and witness.dim == 1


@settings(max_examples=40, deadline=None)
@given(query_sets(), st.integers(0, 3))
def test_strong_value_at_most_max_value(q, r):
    r = min(r, q.n)
    value, witness = strong_rigidity_value(q, r)
    assert value <= rigidity_value(q, r).value
    assert average_distance(q, witness) == value


# -- far points -------------------------------------------------------------------------


@given(st.integers(1, 8), st.lists(st.integers(0, 255), min_size=1, max_size=6))
def test_distance_transform_matches_brute_force(ell, pts):
    pts = [p & ((1 << ell) - 1) for p in pts]
    d = hamming_distance_transform(pts, ell)
    assert all(d[x] == min((x ^ p).bit_count() for p in pts) for x in range(1 << ell))


def test_far_point_examples():
    fp = find_far_point([[0]], 8)
    assert str(fp.v) == "11111111" and fp.distance == 8
    assert find_far_point([range(16)], 4).distance == 0
    v1 = Subspace.span(8, [BitVector.from_str("11110000")]).element_bits()
    v2 = Subspace.span(8, [BitVector.from_str("00001111")]).element_bits()
    assert find_far_point([v1, v2], 8).distance >= 2


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.lists(st.lists(st.integers(0, 127), min_size=1, max_size=5), min_size=1, max_size=3))
def test_far_point_is_optimal_and_first(ell, sets):
    sets = [[p & ((1 << ell) - 1) for p in s] for s in sets]
    fp = find_far_point(sets, ell)
    scores = [min(min((x ^ p).bit_count() for p in s) for s in sets) for x in range(1 << ell)]
    assert fp.distance == max(scores)
    assert fp.v.bits == scores.index(max(scores))


def test_far_rank_one_examples():
    res = find_far_rank_one(Subspace.zero(4))
    assert (str(res.a), str(res.b), res.certified) == ("11", "11", 4)
    assert find_far_rank_one(Subspace.full(4)).certified == 0
    with pytest.raises(ValueError):
        find_far_rank_one(Subspace.zero(5))


@pytest.mark.parametrize("seed", range(5))
def test_far_rank_one_n16_recomputed(seed):
    v_space = random_subspace(16, 4, random.Random(seed))
    a, b, certified = find_far_rank_one(v_space, 16)
    outer = BitMatrix.outer(a, b)
    assert rank(outer) <= 1
    assert distance_to_subspace(vec(outer), v_space) == certified
    res = find_far_rank_one(v_space)
    assert certified >= math.ceil(Fraction(sum(res.block_distances) * 4, 8))


def test_far_rank_one_tiled_vector_is_low_rank():
    rng = random.Random(2)
    for dim in (1, 2, 3, 5):
        res = find_far_rank_one(random_subspace(16, dim, rng))
        assert res.rank * 4 <= 2 * res.r_prime
        assert res.rank == rank(mat(res.v))


def test_binomial_log_estimate():
    bad = [
        (ell, k)
        for ell in range(1, 65)
        for k in range(1, ell + 1)
        if math.log(math.comb(ell, k)) > k * math.log(math.e * ell / k) + 1e-9
    ]
    assert bad == []


def test_binomial_ball_estimate():
    # sum_{i <= k} C(l, i) <= 2^(l/4) for k <= l/16, compared as fourth powers
    bad = [
        (ell, k)
        for ell in range(0, 65)
        for k in range(0, ell // 16 + 1)
        if sum(math.comb(ell, i) for i in range(k + 1)) ** 4 > 2**ell
    ]
    assert bad == []
