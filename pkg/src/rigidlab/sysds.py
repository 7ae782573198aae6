"""Systematic linear data structures for inner-product queries.

The structure stores v verbatim plus r bits <a_j, v> for a fixed basis
a_1..a_r of a subspace U. A query q is answered from a plan: a combination
u_q of the basis (read from the r stored bits, free of charge) plus the probed
coordinates support(q - u_q). The time of a plan is its probe count.

Probe sets use 1-based coordinates.
"""

from __future__ import annotations

import dataclasses
import functools
from typing import Iterable, Mapping

from .gf2core import BitMatrix, BitVector, Subspace, gaussian_binomial, parity, reduce_by, solve_linear
from .limits import InvariantViolation, check_cap
from .querysets import QuerySet


@dataclasses.dataclass(frozen=True)
class Plan:
    coeffs: int  # bit j selects basis row j of the redundancy subspace
    probes: frozenset[int]

    @property
    def time(self) -> int:
        return len(self.probes)


@dataclasses.dataclass(frozen=True)
class SystematicLinearDS:
    n: int
    redundancy_basis: Subspace
    plans: Mapping[int, Plan]  # keyed by query bits

    @property
    def r(self) -> int:
        return self.redundancy_basis.dim

    @property
    def time(self) -> int:
        return max((p.time for p in self.plans.values()), default=0)

    def plan(self, q: BitVector) -> Plan:
        try:
            return self.plans[q.bits]
        except KeyError:
            raise KeyError(f"unknown query {q}") from None

    def functional(self, q: BitVector) -> int:
        """The vector whose inner product with v the plan actually computes."""
        p = self.plan(q)
        out = self.redundancy_basis.combine(p.coeffs)
        for i in p.probes:
            out ^= 1 << (i - 1)
        return out

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "basis": [str(v) for v in self.redundancy_basis.basis_vectors()],
            "plans": [
                {"query": str(BitVector(self.n, q)), "coeffs": p.coeffs, "probes": sorted(p.probes)}
                for q, p in self.plans.items()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SystematicLinearDS":
        n = data["n"]
        basis = [BitVector.from_str(s) for s in data["basis"]]
        sub = Subspace.span(n, basis)
        if len(sub.rows) != len(basis) or sub.basis_vectors() != tuple(basis):
            raise ValueError("basis rows must be given in canonical RREF form")
        plans = {
            BitVector.from_str(p["query"]).bits: Plan(p["coeffs"], frozenset(p["probes"])) for p in data["plans"]
        }
        return cls(n, sub, plans)


def nearest_element(q: BitVector, u: Subspace) -> tuple[int, int, int]:
    """(coeffs, element bits, distance) of the first nearest element of U.

    Canonical coset order: coefficient vectors counted up from 0.
    """
    elems = u.element_bits()
    best_c, best_d = 0, None
    for c, e in enumerate(elems):
        d = (q.bits ^ e).bit_count()
        if best_d is None or d < best_d:
            best_c, best_d = c, d
            if d == 0:
                break
    return best_c, elems[best_c], best_d


def build_plan(q: QuerySet, u: Subspace) -> SystematicLinearDS:
    """Answer each query via its nearest element of U plus the residual coordinates."""
    if q.n != u.ambient_dim:
        raise ValueError(f"query dimension {q.n} vs subspace ambient dimension {u.ambient_dim}")
    plans = {}
    for v in q.vectors:
        c, e, _ = nearest_element(v, u)
        plans[v.bits] = Plan(c, frozenset(BitVector(q.n, v.bits ^ e).support()))
    return SystematicLinearDS(q.n, u, plans)


def stored_bits(ds: SystematicLinearDS, v: BitVector) -> int:
    """The r precomputed bits <a_j, v>, packed with bit j for basis row j."""
    return sum(parity(a & v.bits) << j for j, a in enumerate(ds.redundancy_basis.rows))


def _answer(plan: Plan, stored: int, v: int) -> int:
    out = parity(stored & plan.coeffs)
    for i in plan.probes:
        out ^= (v >> (i - 1)) & 1
    return out


def answer(ds: SystematicLinearDS, v: BitVector, q: BitVector) -> int:
    if v.n != ds.n:
        raise ValueError("input length mismatch")
    return _answer(ds.plan(q), stored_bits(ds, v), v.bits)


@dataclasses.dataclass(frozen=True)
class Verification:
    ok: bool
    counterexample: tuple[BitVector, BitVector] | None = None  # (v, q)

    def __bool__(self) -> bool:
        return self.ok


def verify_exhaustive(ds: SystematicLinearDS, q: QuerySet) -> Verification:
    """Check answer(ds, v, q) == <q, v> for every v in F_2^n and q in Q."""
    check_cap("input_space", 1 << ds.n, "input space")
    plans = [(x, ds.plan(x)) for x in q.vectors]
    for vb in range(1 << ds.n):
        stored = sum(parity(a & vb) << j for j, a in enumerate(ds.redundancy_basis.rows))
        for x, plan in plans:
            if _answer(plan, stored, vb) != parity(x.bits & vb):
                return Verification(False, (BitVector(ds.n, vb), x))
    return Verification(True)


# --------------------------------------------------------------------------
# Optimal time by direct search


@functools.lru_cache(maxsize=64)
def _subspaces_upto(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    """All subspaces of dimension <= r as element tuples, grown by closure.

    Deliberately shares nothing with the RREF enumeration in gf2core.
    """
    layer = {frozenset([0])}
    seen = set(layer)
    for _ in range(r):
        nxt = set()
        for sub in layer:
            for x in range(1, 1 << n):
                if x not in sub:
                    grown = sub | {s ^ x for s in sub}
                    if grown not in seen:
                        seen.add(grown)
                        nxt.add(grown)
        layer = nxt
    return tuple(tuple(sorted(s)) for s in sorted(seen, key=lambda s: (len(s), sorted(s))))


def t_direct(q: QuerySet, r: int) -> int:
    """Optimal probe count T(Q, r) over all redundancy subspaces of dim <= r.

    For a fixed redundancy space U a linear query algorithm answers q with
    probe set I exactly when q lies in U + span{e_i : i in I}, so the fewest
    probes is the smallest |support(q - u)| over u in U.
    """
    n = q.n
    if not 0 <= r <= n:
        raise ValueError(f"need 0 <= r <= n, got r={r}, n={n}")
    check_cap("input_space", 1 << n, "vector space")
    check_cap("subspaces", sum(gaussian_binomial(n, d) for d in range(r + 1)), "enumeration")
    if not q.m:
        return 0
    queries = q.bits()
    best = None
    for elems in _subspaces_upto(n, r):
        worst = 0
        for x in queries:
            probes = min((x ^ u).bit_count() for u in elems)
            worst = max(worst, probes)
            if best is not None and worst >= best:
                break
        if best is None or worst < best:
            best = worst
    return best


# --------------------------------------------------------------------------
# Adversary


@dataclasses.dataclass(frozen=True)
class AdversaryWitness:
    q_star: BitVector
    y: BitVector
    probes: frozenset[int]


def extract_adversary(
    n: int, redundancy_basis: Subspace, q_star: BitVector, declared_probes: Iterable[int]
) -> AdversaryWitness | None:
    """A y orthogonal to the basis and the probed units with <y, q*> = 1.

    Such a y makes v and v + y indistinguishable to any algorithm reading only
    those functionals while flipping <q*, v>. None means q* already lies in
    their span, so the declared probes suffice.
    """
    if redundancy_basis.ambient_dim != n or q_star.n != n:
        raise ValueError("dimension mismatch")
    probes = frozenset(declared_probes)
    gens = list(redundancy_basis.rows) + [1 << (i - 1) for i in sorted(probes)]
    span = Subspace.span(n, gens)
    if reduce_by(q_star.bits, span.rows) == 0:
        return None
    system = BitMatrix(n, tuple(span.rows) + (q_star.bits,))
    y = solve_linear(system, BitVector(len(system.data), 1 << span.dim))
    if y is None:
        raise InvariantViolation("q* outside U' but no separating y exists")
    return AdversaryWitness(q_star, y, probes)


def check_adversary(redundancy_basis: Subspace, witness: AdversaryWitness) -> tuple[BitVector, str] | None:
    """Exhaustively confirm the witness fools every algorithm with these reads.

    Returns None on success, else (v, reason) for the first failing input.
    """
    n = redundancy_basis.ambient_dim
    check_cap("input_space", 1 << n, "input space")
    reads = list(redundancy_basis.rows) + [1 << (i - 1) for i in sorted(witness.probes)]
    y, q = witness.y.bits, witness.q_star.bits
    for vb in range(1 << n):
        wb = vb ^ y
        if any(parity(a & vb) != parity(a & wb) for a in reads):
            return BitVector(n, vb), "visible tuples differ"
        if parity(q & vb) == parity(q & wb):
            return BitVector(n, vb), "true answers agree"
    return None


# --------------------------------------------------------------------------
# Linear model


@dataclasses.dataclass(frozen=True)
class LinearDS:
    """s = r + n stored functionals: the redundancy basis, then e_1..e_n."""

    n: int
    stored: tuple[int, ...]
    reads: Mapping[int, tuple[tuple[int, ...], int]]  # query -> (cell indices, output mask over them)

    @property
    def s(self) -> int:
        return len(self.stored)

    def read_size(self, q: BitVector) -> int:
        return len(self.reads[q.bits][0])

    @property
    def max_read(self) -> int:
        return max((len(cells) for cells, _ in self.reads.values()), default=0)

    def answer(self, v: BitVector, q: BitVector) -> int:
        cells, mask = self.reads[q.bits]
        out = 0
        for k, cell in enumerate(cells):
            if (mask >> k) & 1:
                out ^= parity(self.stored[cell] & v.bits)
        return out


def to_linear_model(ds: SystematicLinearDS) -> LinearDS:
    """Charge every read: all r redundancy cells plus the probed coordinates."""
    r = ds.r
    stored = tuple(ds.redundancy_basis.rows) + tuple(1 << i for i in range(ds.n))
    reads = {}
    for q, plan in ds.plans.items():
        cells = tuple(range(r)) + tuple(r + i - 1 for i in sorted(plan.probes))
        mask = plan.coeffs | (((1 << plan.time) - 1) << r)
        reads[q] = (cells, mask)
    lin = LinearDS(ds.n, stored, reads)
    if lin.max_read > ds.time + r:
        raise InvariantViolation("linear read set exceeds t + r")
    return lin

