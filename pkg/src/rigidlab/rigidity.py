"""Exact rigidity of small query sets and the far-point constructions.

``rigidity_value(Q, r)`` is the least t such that some subspace of dimension
at most r puts every query within distance t. Scanning dimension exactly r is
enough (enlarging a subspace never increases a distance); ``all_dims=True``
scans 0..r instead and is kept as a cross-check.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .gf2core import (
    BitMatrix,
    BitVector,
    Subspace,
    coset_min_weight,
    distance_to_subspace,
    gaussian_binomial,
    mat,
    pivot_sets,
    rank_factorize,
    subspaces_with_pivots,
    vec,
)
from .limits import InvariantViolation, check_cap, current_caps, use_caps
from .querysets import QuerySet


@dataclasses.dataclass(frozen=True)
class RigidityReport:
    r: int
    value: int
    witness: Subspace
    argmax_query: BitVector | None
    subspaces_scanned: int


# --------------------------------------------------------------------------
# Subspace scan


def _scan_partition(qbits, n, groups, objective, caps):
    """Scan the subspaces of the given (dim, pivot-index, pivots) groups.

    Returns (best value, canonical position, witness rows, scanned count).
    Positions order subspaces canonically so partitions can be merged.
    """
    with use_caps(**dataclasses.asdict(caps)):
        best = best_pos = best_rows = None
        scanned = 0
        for d, pidx, piv in groups:
            for c, u in enumerate(subspaces_with_pivots(n, piv)):
                scanned += 1
                elems = u.element_bits()
                val = 0
                for x in qbits:
                    dist = min((x ^ e).bit_count() for e in elems)
                    val = max(val, dist) if objective == "max" else val + dist
                    if best is not None and val >= best:
                        break
                if best is None or val < best:
                    best, best_pos, best_rows = val, (d, pidx, c), u.rows
                    if best == 0:
                        return best, best_pos, best_rows, scanned
        return best, best_pos, best_rows, scanned


def _scan(q: QuerySet, r: int, objective: str, all_dims: bool, workers: int):
    n = q.n
    if not 0 <= r <= n:
        raise ValueError(f"need 0 <= r <= n, got r={r}, n={n}")
    dims = range(r + 1) if all_dims else [r]
    check_cap("subspaces", sum(gaussian_binomial(n, d) for d in dims), "enumeration")
    groups = [(d, i, piv) for d in dims for i, piv in enumerate(pivot_sets(n, d))]
    qbits = sorted(q.bits(), key=lambda b: -b.bit_count())
    caps = current_caps()
    if workers <= 1 or len(groups) < 2:
        results = [_scan_partition(qbits, n, groups, objective, caps)]
    else:
        parts = [groups[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_scan_partition, qbits, n, p, objective, caps) for p in parts if p]
            results = [f.result() for f in futures]
    scanned = sum(res[3] for res in results)
    best = min((res for res in results if res[0] is not None), key=lambda res: (res[0], res[1]))
    return best[0], Subspace(n, best[2]), scanned


def rigidity_value(q: QuerySet, r: int, *, all_dims: bool = False, workers: int = 1) -> RigidityReport:
    """min over subspaces U with dim U <= r of max_q d_H(q, U)."""
    value, witness, scanned = _scan(q, r, "max", all_dims, workers)
    argmax = None
    if q.m:
        dists = [distance_to_subspace(v, witness) for v in q.vectors]
        argmax = q.vectors[dists.index(max(dists))]
        if max(dists) != value:
            raise InvariantViolation(f"witness max distance {max(dists)} != scanned value {value}")
    return RigidityReport(r, value, witness, argmax, scanned)


def is_rigid(q: QuerySet, r: float, t: float) -> bool:
    """(r, t)-rigidity with the floor/ceil convention for non-integral r, t."""
    rr, tt = math.floor(r), math.ceil(t)
    if tt <= 0:
        return True
    return rigidity_value(q, min(rr, q.n)).value >= tt


def average_distance(q: QuerySet, u: Subspace) -> Fraction:
    if not q.m:
        raise ValueError("average over an empty query set")
    return Fraction(sum(distance_to_subspace(v, u) for v in q.vectors), q.m)


def strong_rigidity_value(q: QuerySet, r: int, *, workers: int = 1) -> tuple[Fraction, Subspace]:
    """min over dim <= r subspaces of the average query distance, with witness."""
    if not q.m:
        raise ValueError("average over an empty query set")
    total, witness, _ = _scan(q, r, "sum", False, workers)
    return Fraction(total, q.m), witness


# --------------------------------------------------------------------------
# Folding


def fold_set(s: QuerySet, r: int) -> QuerySet:
    """Cut each vector into length-2r blocks (last one zero-padded) and pool them."""
    n = s.n
    if r < 1 or 2 * r > n:
        raise ValueError(f"folding needs 1 <= 2r <= n, got r={r}, n={n}")
    width = 2 * r
    mask = (1 << width) - 1
    k = n // width
    out = [BitVector(width, (v.bits >> (i * width)) & mask) for i in range(k) for v in s.vectors]
    if n % width:
        out += [BitVector(width, v.bits >> (k * width)) for v in s.vectors]
    return QuerySet.dedup(width, out, f"fold({s.name or 'S'},{r})")


# --------------------------------------------------------------------------
# Far points


@dataclasses.dataclass(frozen=True)
class FarPoint:
    v: BitVector
    distance: int  # min over subsets of d_H(v, V_i)
    distances: tuple[int, ...]
    lemma_applies: bool  # |V_i| <= 2^(l/2) and k < 2^(l/4)


def hamming_distance_transform(points: Iterable[int], ell: int) -> np.ndarray:
    """d_H(x, points) for every x in F_2^ell, indexed by x's bits."""
    check_cap("input_space", 1 << ell, "point space")
    d = np.full(1 << ell, ell + 1, dtype=np.int16)
    pts = np.fromiter(points, dtype=np.int64)
    if pts.size == 0:
        raise ValueError("distance to an empty set is undefined")
    d[pts] = 0
    idx = np.arange(1 << ell)
    # per-coordinate relaxation is exact because the Hamming metric is a sum over coordinates
    for b in range(ell):
        np.minimum(d, d[idx ^ (1 << b)] + 1, out=d)
    return d


def find_far_point(subsets: Sequence[Iterable[BitVector | int]], ell: int) -> FarPoint:
    """The v in F_2^ell maximizing min_i d_H(v, V_i); ties go to the smallest bits."""
    if not subsets:
        raise ValueError("need at least one subset")
    sets = [[x.bits if isinstance(x, BitVector) else x for x in s] for s in subsets]
    worst = None
    for pts in sets:
        if any(p >> ell for p in pts):
            raise ValueError(f"point outside F_2^{ell}")
        d = hamming_distance_transform(pts, ell)
        worst = d if worst is None else np.minimum(worst, d)
    best = int(np.argmax(worst))
    distance = int(worst[best])
    distances = tuple(min((best ^ p).bit_count() for p in pts) for pts in sets)
    k = len(sets)
    applies = all(len(set(p)) ** 2 <= 2**ell for p in sets) and k**4 < 2**ell
    if applies and distance < math.ceil(ell / 16):
        raise InvariantViolation(f"far point at distance {distance} < ceil({ell}/16)")
    return FarPoint(BitVector(ell, best), distance, distances, applies)


@dataclasses.dataclass(frozen=True)
class FarRankOne:
    a: BitVector
    b: BitVector
    certified: int  # d_H(vec(a b^T), V), recomputed exactly
    bound: int  # ceil(sum(block_distances) * root / (2 r'))
    r_prime: int
    block: BitVector  # the far point v' for the block projections
    v: BitVector  # v' tiled, zero tail
    block_distances: tuple[int, ...]
    rank: int  # rank of mat(v)

    def __iter__(self):
        return iter((self.a, self.b, self.certified))


def find_far_rank_one(v_space: Subspace, n: int | None = None) -> FarRankOne:
    """A rank-one a b^T whose vectorization is provably far from v_space.

    Tiles a point far from every block projection of v_space, factors the
    resulting low-rank matrix, and keeps the rank-one term farthest from
    v_space. By subadditivity of the distance that term is at distance at
    least (sum of block distances) * root / (2 r').
    """
    if n is not None and n != v_space.ambient_dim:
        raise ValueError(f"subspace lives in F_2^{v_space.ambient_dim}, not F_2^{n}")
    n = v_space.ambient_dim
    root = math.isqrt(n)
    if root * root != n or n < 4:
        raise ValueError(f"ambient dimension {n} must be a perfect square >= 4")
    r = v_space.dim
    r_prime = root * -(-max(r, 1) // root)
    width = min(2 * r_prime, n)
    k = max(n // (2 * r_prime), 1)
    mask = (1 << width) - 1
    projections = [
        Subspace.span(width, [(row >> (i * width)) & mask for row in v_space.rows]) for i in range(k)
    ]
    far = find_far_point([p.element_bits() for p in projections], width)
    block = far.v
    v_bits = 0
    for i in range(k):
        v_bits |= block.bits << (i * width)
    v = BitVector(n, v_bits)
    block_distances = tuple(coset_min_weight(block.bits, p.rows) for p in projections)

    a_mat, b_mat = rank_factorize(mat(v))
    rho = b_mat.nrows
    if rho * root > 2 * r_prime and width == 2 * r_prime:
        raise InvariantViolation(f"rank {rho} of tiled matrix exceeds 2r'/root")
    best = (BitVector.zeros(root), BitVector.zeros(root), 0)
    best_d = -1
    for j in range(rho):
        a = a_mat.column(j + 1)
        b = b_mat.rows[j]
        d = distance_to_subspace(vec(BitMatrix.outer(a, b)), v_space)
        if d > best_d:
            best, best_d = (a, b, d), d
    if rho == 0:
        best = (BitVector.zeros(root), BitVector.zeros(root), distance_to_subspace(BitVector.zeros(n), v_space))
    bound = -(-sum(block_distances) * root // (2 * r_prime))
    if best[2] < bound:
        raise InvariantViolation(f"certified distance {best[2]} below guaranteed {bound}")
    return FarRankOne(best[0], best[1], best[2], bound, r_prime, block, v, block_distances, rho)
