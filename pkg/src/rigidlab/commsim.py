"""Cell-probe machines for u^T M v and the one-way protocol built from them.

Everything here is exact: probabilities are Fractions over the uniform
distribution on M and on query pairs (u, v), computed by enumeration.

A query pair is keyed by ``(u_bits, v_bits)``. A machine's executor receives a
``probe`` callable; every cell it reads goes through that callable, which is
how traces are recorded and how Bob's simulation is confined to the sampled
cells.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import random
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .gf2core import BitMatrix, BitVector, mat, parity, rank, rank_of_rows, vec
from .limits import InvariantViolation, check_cap

Probe = Callable[[int], int]
Executor = Callable[[Probe, BitVector, BitVector], int]
Pair = tuple[int, int]


@dataclasses.dataclass(frozen=True)
class CellProbeDS:
    name: str
    root: int
    s: int  # cells
    w: int  # bits per cell
    t: int  # declared max probes per query
    build: Callable[[BitMatrix], tuple[int, ...]]
    query: Executor


class _Tracer:
    def __init__(self, cells: Sequence[int]):
        self.cells = cells
        self.probed: list[int] = []

    def __call__(self, i: int) -> int:
        if not 0 <= i < len(self.cells):
            raise InvariantViolation(f"probe of cell {i} outside 0..{len(self.cells) - 1}")
        self.probed.append(i)
        return self.cells[i]


def build_cells(ds: CellProbeDS, m: BitMatrix) -> tuple[int, ...]:
    cells = tuple(ds.build(m))
    if len(cells) != ds.s:
        raise InvariantViolation(f"{ds.name} built {len(cells)} cells, declared {ds.s}")
    if any(c < 0 or c >> ds.w for c in cells):
        raise InvariantViolation(f"{ds.name} stored a cell wider than {ds.w} bits")
    return cells


def execute(ds: CellProbeDS, cells: Sequence[int], u: BitVector, v: BitVector) -> tuple[int, frozenset[int]]:
    """Run one query; returns (answer bit, set of probed cells)."""
    tracer = _Tracer(cells)
    out = ds.query(tracer, u, v) & 1
    if len(tracer.probed) > ds.t:
        raise InvariantViolation(f"{ds.name} made {len(tracer.probed)} probes, declared t={ds.t}")
    return out, frozenset(tracer.probed)


@dataclasses.dataclass(frozen=True)
class QueryRecord:
    truth: int
    answer: int
    probes: frozenset[int]

    @property
    def correct(self) -> bool:
        return self.truth == self.answer


def query_table(ds: CellProbeDS, m: BitMatrix) -> dict[Pair, QueryRecord]:
    """Trace every query pair against the cells built from m."""
    root = ds.root
    cells = build_cells(ds, m)
    table = {}
    for ub in range(1 << root):
        u = BitVector(root, ub)
        for vb in range(1 << root):
            v = BitVector(root, vb)
            ans, probes = execute(ds, cells, u, v)
            table[ub, vb] = QueryRecord(m.bilinear(u, v), ans, probes)
    return table


def per_matrix_success(ds: CellProbeDS, m: BitMatrix) -> Fraction:
    table = query_table(ds, m)
    return Fraction(sum(rec.correct for rec in table.values()), len(table))


# --------------------------------------------------------------------------
# Built-in machines


def row_store(root: int) -> CellProbeDS:
    """One cell per row of M; a query reads the rows selected by u."""

    def query(probe: Probe, u: BitVector, v: BitVector) -> int:
        acc = 0
        for a in u.support():
            acc ^= parity(probe(a - 1) & v.bits)
        return acc

    return CellProbeDS("row-store", root, root, root, root, lambda m: m.data, query)


def verbatim_parity(root: int) -> CellProbeDS:
    """One cell per bit of M plus the parity of all bits (used when u = v = 1)."""
    n = root * root
    ones = (1 << root) - 1

    def build(m: BitMatrix) -> tuple[int, ...]:
        x = vec(m).bits
        return tuple((x >> i) & 1 for i in range(n)) + (parity(x),)

    def query(probe: Probe, u: BitVector, v: BitVector) -> int:
        if u.bits == ones and v.bits == ones:
            return probe(n)
        acc = 0
        for a in u.support():
            for b in v.support():
                acc ^= probe((a - 1) * root + b - 1)
        return acc

    return CellProbeDS("verbatim-parity", root, n + 1, 1, n, build, query)


def constant_machine(root: int, bit: int = 0) -> CellProbeDS:
    """Ignores M and answers a fixed bit; one unused cell."""
    return CellProbeDS(f"constant-{bit}", root, 1, 1, 0, lambda m: (0,), lambda probe, u, v: bit)


def lossy_row_store(root: int, kept: int) -> CellProbeDS:
    """Stores only the first ``kept`` rows and drops the other terms."""
    if not 0 < kept <= root:
        raise ValueError("need 0 < kept <= root")

    def query(probe: Probe, u: BitVector, v: BitVector) -> int:
        acc = 0
        for a in u.support():
            if a <= kept:
                acc ^= parity(probe(a - 1) & v.bits)
        return acc

    return CellProbeDS(f"lossy-row-store-{kept}", root, kept, root, kept, lambda m: m.data[:kept], query)


def complement(ds: CellProbeDS) -> CellProbeDS:
    return dataclasses.replace(ds, name=f"complement({ds.name})", query=lambda probe, u, v: ds.query(probe, u, v) ^ 1)


MACHINES = {"row-store": row_store, "verbatim-parity": verbatim_parity}


def majority_flip(ds: CellProbeDS) -> CellProbeDS:
    """Add a cell recording whether ds is right on fewer than half the queries for M.

    The new executor runs ds and then reads that cell to decide whether to flip,
    so per-M success becomes max(p_M, 1 - p_M).
    """
    flip_cell = ds.s

    def build(m: BitMatrix) -> tuple[int, ...]:
        flip = 1 if per_matrix_success(ds, m) < Fraction(1, 2) else 0
        return build_cells(ds, m) + (flip,)

    def query(probe: Probe, u: BitVector, v: BitVector) -> int:
        out = ds.query(probe, u, v)
        return out ^ (probe(flip_cell) & 1)

    return CellProbeDS(f"majority-flip({ds.name})", ds.root, ds.s + 1, ds.w, ds.t + 1, build, query)


# --------------------------------------------------------------------------
# Bias and moments


def all_matrices(root: int) -> Iterator[BitMatrix]:
    n = root * root
    check_cap("matrices", 1 << n, "matrix space")
    for x in range(1 << n):
        yield mat(BitVector(n, x))


def _vectors_array(root: int) -> np.ndarray:
    xs = np.arange(1 << root)
    return ((xs[:, None] >> np.arange(root)) & 1).astype(np.int64)


def sign_sums(codes: Sequence[int] | np.ndarray, root: int, batch: int = 2048) -> np.ndarray:
    """For each matrix (given by its vec bits) the sum over all (u, v) of (-1)^(u'Mv)."""
    codes = np.asarray(codes, dtype=np.int64)
    n = root * root
    vecs = _vectors_array(root)
    out = np.empty(len(codes), dtype=np.int64)
    for lo in range(0, len(codes), batch):
        chunk = codes[lo : lo + batch]
        mats = ((chunk[:, None] >> np.arange(n)) & 1).reshape(-1, root, root)
        # values[B, u, v] = u^T M v mod 2
        values = (np.einsum("ua,kab,vb->kuv", vecs, mats, vecs) & 1)
        out[lo : lo + batch] = values.shape[1] * values.shape[2] - 2 * values.sum(axis=(1, 2))
    return out


def bias(m: BitMatrix) -> Fraction:
    """E over uniform (u, v) of (-1)^(u^T M v); enumerated up to root 5, else 2^-rank."""
    rows, cols = m.shape
    if rows != cols:
        raise ValueError("bias is defined for square matrices")
    if rows <= 5:
        return Fraction(int(sign_sums([vec(m).bits], rows)[0]), 4**rows)
    return Fraction(1, 2 ** rank(m))


@lru_cache(maxsize=None)
def rank_distribution(root: int) -> tuple[int, ...]:
    """counts[r] = number of root x root matrices of rank r, by enumeration."""
    n = root * root
    check_cap("matrices", 1 << n, "matrix space")
    counts = [0] * (root + 1)
    mask = (1 << root) - 1
    for x in range(1 << n):
        counts[rank_of_rows(((x >> (a * root)) & mask for a in range(root)), root)] += 1
    return tuple(counts)


def moment(root: int, k: int) -> Fraction:
    """E over uniform M of bias(M)^k, from the rank distribution."""
    counts = rank_distribution(root)
    total = sum(Fraction(c, 2 ** (r * k)) for r, c in enumerate(counts))
    return total / 2 ** (root * root)


def moment_bound(root: int, k: int) -> float:
    """2 * 2^(-9 k root / 20)."""
    return 2.0 * 2.0 ** (-9 * k * root / 20)


def moment_bound_check(root: int, k: int) -> bool:
    """moment(root, k) <= 2 * 2^(-9 k root / 20), compared exactly via 20th powers."""
    if not 0 <= k <= root:
        raise ValueError(f"need 0 <= k <= root, got k={k}, root={root}")
    return moment(root, k) ** 20 <= Fraction(2) ** (20 - 9 * k * root)


def count_low_rank(root: int, k: int) -> int:
    return sum(rank_distribution(root)[: k + 1])


def discrepancy_bound(root: int, k: int) -> float:
    """2 * 2^(-9 k root / 40), the rectangle bound for the k-fold game."""
    return 2.0 * 2.0 ** (-9 * k * root / 40)


def rectangle_discrepancy(
    root: int,
    k: int,
    a_set: Iterable[BitMatrix],
    b_set: Iterable[Sequence[tuple[BitVector, BitVector]]],
) -> Fraction:
    """E over uniform (M, (u_i, v_i)_i) of 1_A(M) 1_B(tuple) (-1)^(sum u_i'M v_i)."""
    mats = {vec(m).bits: m for m in a_set}
    tuples = {tuple((u.bits, v.bits) for u, v in tup): tup for tup in b_set}
    for key in tuples:
        if len(key) != k:
            raise ValueError(f"tuple of length {len(key)} in a {k}-fold rectangle")
    check_cap("input_space", len(mats) * max(len(tuples), 1), "rectangle")
    total = 0
    for m in mats.values():
        for tup in tuples.values():
            total += 1 - 2 * (sum(m.bilinear(u, v) for u, v in tup) & 1)
    return Fraction(total, 2 ** (root * root) * 4 ** (root * k))


# --------------------------------------------------------------------------
# Ledgers and direct sums


@dataclasses.dataclass(frozen=True)
class BiasLedger:
    root: int
    advantages: dict[int, Fraction]  # vec bits of M -> 2 Pr[correct | M] - 1

    @property
    def global_advantage(self) -> Fraction:
        return sum(self.advantages.values(), Fraction(0)) / len(self.advantages)

    def success(self, code: int) -> Fraction:
        return (1 + self.advantages[code]) / 2


def bias_ledger(ds: CellProbeDS, matrices: Iterable[BitMatrix] | None = None) -> BiasLedger:
    """Per-M advantage of ds; all matrices of its size unless a list is given."""
    mats = all_matrices(ds.root) if matrices is None else matrices
    adv = {vec(m).bits: 2 * per_matrix_success(ds, m) - 1 for m in mats}
    return BiasLedger(ds.root, adv)


@dataclasses.dataclass(frozen=True)
class DirectSum:
    exact: Fraction  # (1 + E_M[adv_M^k]) / 2
    convexity_floor: Fraction  # (1 + (E_M adv_M)^k) / 2


def direct_sum_success(ledger: BiasLedger, k: int) -> DirectSum:
    """Success of answering k independent pairs and outputting the XOR."""
    if any(a < 0 for a in ledger.advantages.values()):
        raise ValueError("negative per-matrix advantage: apply majority_flip (sign-bit normalization) first")
    exact = (1 + sum(a**k for a in ledger.advantages.values()) / len(ledger.advantages)) / 2
    floor = (1 + ledger.global_advantage**k) / 2
    if exact < floor:
        raise InvariantViolation(f"direct sum {exact} below convexity floor {floor}")
    return DirectSum(exact, floor)


# --------------------------------------------------------------------------
# Parameters, cell sampling, protocol


@dataclasses.dataclass(frozen=True)
class GameParams:
    root: int
    s: int
    w: int
    k: int = 1

    @property
    def n(self) -> int:
        return self.root * self.root

    @property
    def alpha(self) -> float:
        """2 (w + log2(s w / n)); also serves as beta in the sampling step."""
        return 2 * (self.w + math.log2(self.s * self.w / self.n))

    @property
    def sample_size(self) -> int:
        """ceil(n / (128 alpha))."""
        return math.ceil(self.n / (128 * self.alpha))

    @property
    def direct_sum_regime(self) -> bool:
        return self.k <= self.root

    def sampling_hypothesis(self, t: int) -> bool:
        """t <= min(n / (256 beta), sqrt(n) / (256 log2(s beta / n)))."""
        beta = self.alpha
        if beta <= 0:
            return False
        if t > self.n / (256 * beta):
            return False
        log_term = math.log2(self.s * beta / self.n)
        return log_term <= 0 or t <= self.root / (256 * log_term)


@dataclasses.dataclass(frozen=True)
class SampleResult:
    S: frozenset[int]
    q1: frozenset[Pair]  # correct queries answerable inside S
    q2: frozenset[Pair]  # incorrect queries answerable inside S
    margin: Fraction  # Pr[Q1'] - Pr[Q2']
    advantage: Fraction  # E_{u,v} Z_M(u, v)
    lemma_hypothesis: bool
    lemma_bound: float  # advantage * 2^(-root/16)

    @property
    def answerable(self) -> frozenset[Pair]:
        return self.q1 | self.q2


def _restrict(table: dict[Pair, QueryRecord], S: frozenset[int]):
    q1 = frozenset(p for p, rec in table.items() if rec.probes <= S and rec.correct)
    q2 = frozenset(p for p, rec in table.items() if rec.probes <= S and not rec.correct)
    return q1, q2


def cell_sample(ds: CellProbeDS, m: BitMatrix, size: int, trials: int, seed: int) -> SampleResult:
    """Best of ``trials`` uniform size-subsets S of the cells, by margin."""
    if not 0 <= size <= ds.s:
        raise ValueError(f"sample size {size} outside 0..{ds.s}")
    table = query_table(ds, m)
    total = len(table)
    advantage = Fraction(2 * sum(rec.correct for rec in table.values()) - total, total)
    rng = random.Random(seed)
    best = None
    for _ in range(max(trials, 1)):
        S = frozenset(rng.sample(range(ds.s), size))
        q1, q2 = _restrict(table, S)
        margin = Fraction(len(q1) - len(q2), total)
        if best is None or margin > best[3]:
            best = (S, q1, q2, margin)

    params = GameParams(ds.root, ds.s, ds.w)
    hyp = params.sampling_hypothesis(ds.t) and size >= params.sample_size
    bound = float(advantage) * 2.0 ** (-ds.root / 16)
    if hyp and best[3] < bound:
        # random trials missed; the sampling bound promises some S, so scan them all
        check_cap("input_space", math.comb(ds.s, size), "subset space")
        for c in itertools.combinations(range(ds.s), size):
            S = frozenset(c)
            q1, q2 = _restrict(table, S)
            margin = Fraction(len(q1) - len(q2), total)
            if margin > best[3]:
                best = (S, q1, q2, margin)
        if best[3] < bound:
            raise InvariantViolation(f"no sample reaches margin {bound}; best {best[3]}")
    return SampleResult(best[0], best[1], best[2], best[3], advantage, hyp, bound)


def subset_rank(elements: Iterable[int]) -> int:
    """Colexicographic rank in the combinatorial number system."""
    return sum(math.comb(c, i) for i, c in enumerate(sorted(elements), start=1))


def subset_unrank(rank_: int, size: int) -> tuple[int, ...]:
    out = []
    for i in range(size, 0, -1):
        c = i - 1
        while math.comb(c + 1, i) <= rank_:
            c += 1
        out.append(c)
        rank_ -= math.comb(c, i)
    return tuple(reversed(out))


def message_bits(s: int, w: int, size: int) -> tuple[int, float]:
    """(exact, bound): 1 + size*w + ceil(log2 C(s, size)) and 1 + size*w + size*log2(e s / size)."""
    if not 0 <= size <= s:
        raise ValueError(f"size {size} outside 0..{s}")
    exact = 1 + size * w + (math.comb(s, size) - 1).bit_length()
    bound = 1 + size * w + (size * math.log2(math.e * s / size) if size else 0.0)
    return exact, bound


@dataclasses.dataclass(frozen=True)
class ProtocolMessage:
    b: int
    s: int
    w: int
    locations: tuple[int, ...]
    contents: tuple[int, ...]

    @property
    def location_bits(self) -> int:
        return (math.comb(self.s, len(self.locations)) - 1).bit_length()

    @property
    def total_bits(self) -> int:
        return 1 + len(self.locations) * self.w + self.location_bits

    def to_bits(self) -> str:
        """b, then the subset rank, then each cell's contents, integers big-endian."""
        parts = [str(self.b)]
        if self.location_bits:
            parts.append(format(subset_rank(self.locations), f"0{self.location_bits}b"))
        parts += [format(c, f"0{self.w}b") for c in self.contents]
        bits = "".join(parts)
        if len(bits) != self.total_bits:
            raise InvariantViolation("encoded message length mismatch")
        return bits

    @classmethod
    def from_bits(cls, bits: str, s: int, w: int, size: int) -> "ProtocolMessage":
        loc_bits = (math.comb(s, size) - 1).bit_length()
        if len(bits) != 1 + loc_bits + size * w:
            raise ValueError("message has the wrong length")
        b = int(bits[0])
        rank_ = int(bits[1 : 1 + loc_bits], 2) if loc_bits else 0
        locations = subset_unrank(rank_, size)
        body = bits[1 + loc_bits :]
        contents = tuple(int(body[i * w : (i + 1) * w], 2) for i in range(size))
        return cls(b, s, w, locations, contents)


class _LeftSample(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class ProtocolRun:
    message: ProtocolMessage
    success: Fraction  # measured by simulating Bob on every (u, v)
    accounting: Fraction  # Pr[q in Q' and correct] + majority mass outside Q'


def alice_message(ds: CellProbeDS, m: BitMatrix, sample: SampleResult) -> ProtocolMessage:
    if any(not 0 <= i < ds.s for i in sample.S):
        raise ValueError("sample refers to cells the machine does not have")
    cells = build_cells(ds, m)
    inside = sample.answerable
    root = ds.root
    outside = [
        m.bilinear(BitVector(root, ub), BitVector(root, vb))
        for ub in range(1 << root)
        for vb in range(1 << root)
        if (ub, vb) not in inside
    ]
    b = 1 if 2 * sum(outside) > len(outside) else 0
    locations = tuple(sorted(sample.S))
    return ProtocolMessage(b, ds.s, ds.w, locations, tuple(cells[i] for i in locations))


def bob_answer(ds: CellProbeDS, msg: ProtocolMessage, u: BitVector, v: BitVector) -> int:
    known = dict(zip(msg.locations, msg.contents))

    def probe(i: int) -> int:
        if i not in known:
            raise _LeftSample
        return known[i]

    try:
        return ds.query(probe, u, v) & 1
    except _LeftSample:
        return msg.b


def protocol_accounting(ds: CellProbeDS, m: BitMatrix, sample: SampleResult) -> Fraction:
    table = query_table(ds, m)
    inside = sample.answerable
    total = len(table)
    good_inside = sum(1 for p, rec in table.items() if p in inside and rec.correct)
    out_ones = sum(1 for p, rec in table.items() if p not in inside and rec.truth)
    out_zeros = sum(1 for p, rec in table.items() if p not in inside and not rec.truth)
    return Fraction(good_inside + max(out_zeros, out_ones), total)


def run_protocol(ds: CellProbeDS, m: BitMatrix, sample: SampleResult) -> ProtocolRun:
    """Alice sends b and the sampled cells; Bob simulates or falls back to b."""
    msg = alice_message(ds, m, sample)
    wire = msg.to_bits()
    received = ProtocolMessage.from_bits(wire, ds.s, ds.w, len(msg.locations))
    root = ds.root
    correct = 0
    for ub in range(1 << root):
        u = BitVector(root, ub)
        for vb in range(1 << root):
            v = BitVector(root, vb)
            correct += bob_answer(ds, received, u, v) == m.bilinear(u, v)
    return ProtocolRun(received, Fraction(correct, 4**root), protocol_accounting(ds, m, sample))
