import itertools
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidlab.commsim import (
    GameParams,
    ProtocolMessage,
    all_matrices,
    bias,
    bias_ledger,
    cell_sample,
    complement,
    constant_machine,
    count_low_rank,
    direct_sum_success,
    execute,
    build_cells,
    lossy_row_store,
    majority_flip,
    message_bits,
    moment,
    moment_bound_check,
    per_matrix_success,
    query_table,
    rank_distribution,
    rectangle_discrepancy,
    row_store,
    run_protocol,
    subset_rank,
    subset_unrank,
    verbatim_parity,
)
from rigidlab.gf2core import BitMatrix, BitVector, mat, rank
from rigidlab.limits import InvariantViolation


def M(s):
    return mat(BitVector.from_str(s))


def pairs(root):
    vs = [BitVector(root, b) for b in range(1 << root)]
    return list(itertools.product(vs, vs))


# -- machines -----------------------------------------------------------------------------


@pytest.mark.parametrize("make", [row_store, verbatim_parity])
@pytest.mark.parametrize("root", [1, 2, 3])
def test_builtin_machines_are_always_correct(make, root):
    ds = make(root)
    for m in all_matrices(root) if root < 3 else [M("101011110"), M("000000001")]:
        assert per_matrix_success(ds, m) == 1


def test_probe_budget_enforced():
    ds = row_store(2)
    cheat = ds.__class__("cheat", 2, 2, 2, 1, ds.build, ds.query)
    with pytest.raises(InvariantViolation):
        execute(cheat, build_cells(cheat, M("1111")), BitVector.from_str("11"), BitVector.from_str("11"))


def test_trace_matches_what_row_store_reads():
    table = query_table(row_store(3), M("110011101"))
    for (ub, _), rec in table.items():
        assert rec.probes == {a - 1 for a in BitVector(3, ub).support()}


# -- bias and moments ------------------------------------------------------------------------


def test_bias_examples():
    assert bias(BitMatrix.zeros(2, 2)) == 1
    assert bias(BitMatrix.identity(2)) == Fraction(1, 4)
    assert bias(M("1000")) == Fraction(1, 2)


@settings(max_examples=50)
@given(st.integers(1, 4).flatmap(lambda k: st.tuples(st.just(k), st.integers(0, (1 << (k * k)) - 1))))
def test_bias_is_two_to_minus_rank(args):
    root, bits = args
    m = mat(BitVector(root * root, bits))
    signs = sum(1 - 2 * m.bilinear(u, v) for u, v in pairs(root))
    assert Fraction(signs, 4**root) == bias(m) == Fraction(1, 2 ** rank(m))


def _gl_count(root, r):
    """Closed-form count of root x root matrices of rank r over F_2."""
    num = 1
    for i in range(r):
        num *= (2**root - 2**i) ** 2
    den = 1
    for i in range(r):
        den *= 2**r - 2**i
    return num // den


@pytest.mark.parametrize("root", [1, 2, 3, 4])
def test_rank_distribution_matches_closed_form(root):
    assert rank_distribution(root) == tuple(_gl_count(root, r) for r in range(root + 1))


def test_moment_examples():
    assert rank_distribution(2) == (1, 9, 6)
    assert rank_distribution(3) == (1, 49, 294, 168)
    assert moment(2, 1) == Fraction(7, 16)
    assert moment(3, 1) == Fraction(120, 512)
    assert moment(2, 2) == Fraction(29, 128)
    assert all(moment(r, 0) == 1 for r in (1, 2, 3))


def test_moment_bound_examples():
    assert moment_bound_check(2, 1) and moment_bound_check(2, 2) and moment_bound_check(3, 3)
    with pytest.raises(ValueError):
        moment_bound_check(2, 3)


def test_count_low_rank_examples():
    assert count_low_rank(2, 1) == 10 <= 16
    assert all(count_low_rank(r, 0) == 1 for r in (1, 2, 3))
    assert count_low_rank(3, 3) == 512 <= 2**18


def test_rectangle_discrepancy_examples():
    mats = list(all_matrices(2))
    tuples = [((u, v),) for u, v in pairs(2)]
    assert rectangle_discrepancy(2, 1, mats, tuples) == Fraction(7, 16)
    assert rectangle_discrepancy(2, 1, [], tuples) == 0


@pytest.mark.parametrize("seed", range(5))
def test_rectangle_discrepancy_random_k2(seed):
    rng = random.Random(seed)
    mats = [m for m in all_matrices(2) if rng.random() < 0.5]
    all_tuples = list(itertools.product(pairs(2), repeat=2))
    tuples = [t for t in all_tuples if rng.random() < 0.5]
    value = rectangle_discrepancy(2, 2, mats, tuples)
    # Cauchy-Schwarz: squared rectangle correlation is at most the k-th moment
    assert value**2 <= moment(2, 2)
    assert float(abs(value)) <= 2 * 2 ** (-9 * 2 * 2 / 20)


# -- majority flip and ledgers -------------------------------------------------------------------


def test_majority_flip_examples():
    good = majority_flip(row_store(2))
    m = M("1011")
    assert all(rec.answer == rec.truth for rec in query_table(good, m).values())
    flipped = majority_flip(complement(row_store(2)))
    assert all(per_matrix_success(flipped, m) == 1 for m in all_matrices(2))
    const = constant_machine(2, 0)
    fc = majority_flip(const)
    for m in all_matrices(2):
        p = per_matrix_success(const, m)
        assert per_matrix_success(fc, m) == max(p, 1 - p) >= Fraction(1, 2)


def test_direct_sum_examples():
    ledger = bias_ledger(majority_flip(constant_machine(2, 0)))
    assert direct_sum_success(ledger, 1).exact == (1 + ledger.global_advantage) / 2
    ds2 = direct_sum_success(ledger, 2)
    assert ds2.exact >= ds2.convexity_floor
    assert direct_sum_success(bias_ledger(row_store(2)), 5).exact == 1
    with pytest.raises(ValueError, match="majority_flip"):
        direct_sum_success(bias_ledger(constant_machine(2, 1)), 2)


def _xor_game_success(ds, k):
    """Play k independent (M_i, u_i, v_i) rounds and XOR answers, by full enumeration."""
    root = ds.root
    per_m = {}
    for m in all_matrices(root):
        table = query_table(ds, m)
        per_m[m] = Fraction(sum(r.correct for r in table.values()), len(table))
    # the XOR is right iff an even number of rounds err
    p_round = sum(per_m.values(), Fraction(0)) / len(per_m)
    total = Fraction(0)
    for errs in range(0, k + 1, 2):
        total += math.comb(k, errs) * (1 - p_round) ** errs * p_round ** (k - errs)
    return total


def test_direct_sum_k1_matches_game():
    ds = majority_flip(lossy_row_store(2, 1))
    assert direct_sum_success(bias_ledger(ds), 1).exact == _xor_game_success(ds, 1)


def test_direct_sum_fixed_matrix_matches_enumeration():
    # one M shared by k rounds: E_M over the XOR game, enumerated round by round
    ds = majority_flip(lossy_row_store(2, 1))
    k = 2
    total = Fraction(0)
    for m in all_matrices(2):
        recs = list(query_table(ds, m).values())
        wins = sum(1 for combo in itertools.product(recs, repeat=k) if sum(not r.correct for r in combo) % 2 == 0)
        total += Fraction(wins, len(recs) ** k)
    assert direct_sum_success(bias_ledger(ds), k).exact == total / 16


# -- cell sampling ------------------------------------------------------------------------------


def test_cell_sample_full_and_empty():
    ds = lossy_row_store(3, 2)
    m = M("110101011")
    full = cell_sample(ds, m, ds.s, trials=1, seed=0)
    assert len(full.answerable) == 64 and full.margin == full.advantage
    flipped = majority_flip(row_store(3))
    empty = cell_sample(flipped, m, 0, trials=3, seed=0)
    assert empty.answerable == frozenset() and empty.margin == 0


def test_cell_sample_row_store_recount():
    ds = row_store(3)
    m = M("011110101")
    res = cell_sample(ds, m, 2, trials=100, seed=7)
    cells = build_cells(ds, m)
    q1 = q2 = 0
    for u, v in pairs(3):
        ans, probes = execute(ds, cells, u, v)
        if probes <= res.S:
            assert (u.bits, v.bits) in res.answerable
            q1 += ans == m.bilinear(u, v)
            q2 += ans != m.bilinear(u, v)
        else:
            assert (u.bits, v.bits) not in res.answerable
    assert res.margin == Fraction(q1 - q2, 64)


def test_cell_sample_is_seeded():
    ds = verbatim_parity(2)
    m = M("1101")
    assert cell_sample(ds, m, 2, 5, 3) == cell_sample(ds, m, 2, 5, 3)


def test_game_params():
    p = GameParams(root=32, s=2048, w=16)
    assert p.n == 1024
    assert p.alpha == pytest.approx(2 * (16 + math.log2(2048 * 16 / 1024)))
    assert p.sample_size == math.ceil(1024 / (128 * p.alpha))
    assert not p.sampling_hypothesis(5)
    assert GameParams(2, 4, 1, k=3).direct_sum_regime is False


# -- message encoding and protocol ---------------------------------------------------------------


def test_message_bits_examples():
    assert message_bits(8, 3, 0) == (1, 1.0)
    exact, bound = message_bits(8, 3, 2)
    assert exact == 12 and bound == pytest.approx(13.885, abs=1e-3)
    assert message_bits(8, 3, 8)[0] == 1 + 24


@given(st.integers(1, 64), st.integers(1, 64), st.data())
def test_message_bits_exact_below_bound(s, w, data):
    size = data.draw(st.integers(1, s))
    exact, bound = message_bits(s, w, size)
    assert exact <= bound + 1e-9


@given(st.integers(0, 20).flatmap(lambda s: st.tuples(st.just(s), st.sets(st.integers(0, max(s - 1, 0)), max_size=s))))
def test_subset_rank_roundtrip(args):
    s, subset = args
    subset = {x for x in subset if x < s}
    r = subset_rank(subset)
    assert 0 <= r < math.comb(s, len(subset))
    assert subset_unrank(r, len(subset)) == tuple(sorted(subset))


def test_subset_rank_is_a_bijection():
    for s in range(7):
        for size in range(s + 1):
            ranks = sorted(subset_rank(c) for c in itertools.combinations(range(s), size))
            assert ranks == list(range(math.comb(s, size)))


def test_message_roundtrip():
    msg = ProtocolMessage(1, 10, 3, (2, 5, 9), (7, 0, 5))
    bits = msg.to_bits()
    assert len(bits) == msg.total_bits == 1 + 9 + 7
    assert ProtocolMessage.from_bits(bits, 10, 3, 3) == msg


def test_protocol_full_sample_matches_ds():
    ds = lossy_row_store(2, 1)
    for m in all_matrices(2):
        run = run_protocol(ds, m, cell_sample(ds, m, ds.s, 1, 0))
        assert run.success == per_matrix_success(ds, m)


def test_protocol_empty_sample_is_majority():
    ds = majority_flip(row_store(2))
    for m in all_matrices(2):
        run = run_protocol(ds, m, cell_sample(ds, m, 0, 1, 0))
        ones = sum(m.bilinear(u, v) for u, v in pairs(2))
        assert run.success == Fraction(max(ones, 16 - ones), 16) >= Fraction(1, 2)


def test_protocol_row_store_identity_size_one():
    ds = row_store(2)
    m = BitMatrix.identity(2)
    res = cell_sample(ds, m, 1, trials=10, seed=0)
    run = run_protocol(ds, m, res)
    # queries with u inside S are answered exactly; the rest get the majority bit
    assert run.success == run.accounting
    inside = [(u, v) for u, v in pairs(2) if {a - 1 for a in u.support()} <= res.S]
    rest = [(u, v) for u, v in pairs(2) if (u, v) not in inside]
    ones = sum(m.bilinear(u, v) for u, v in rest)
    assert run.success == Fraction(len(inside) + max(ones, len(rest) - ones), 16)
