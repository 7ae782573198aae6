"""Query sets: the rank-one set, prefix sets, random sets, and file I/O."""

from __future__ import annotations

import dataclasses
import random
from pathlib import Path
from typing import Iterable, Sequence

from .gf2core import BitMatrix, BitVector, FormatError, format_vectors, parse_vectors, vec
from .limits import check_cap


@dataclasses.dataclass(frozen=True, eq=False)
class QuerySet:
    """An ordered list of distinct vectors of F_2^n.

    Order is generation order (so reports are reproducible); equality ignores it.
    """

    n: int
    vectors: tuple[BitVector, ...]
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(self.vectors))
        seen: set[int] = set()
        for v in self.vectors:
            if v.n != self.n:
                raise ValueError(f"vector {v} has length {v.n}, expected {self.n}")
            if v.bits in seen:
                raise ValueError(f"duplicate vector {v}")
            seen.add(v.bits)

    @classmethod
    def dedup(cls, n: int, vectors: Iterable[BitVector], name: str | None = None) -> "QuerySet":
        seen: dict[int, BitVector] = {}
        for v in vectors:
            seen.setdefault(v.bits, v)
        return cls(n, tuple(seen.values()), name)

    @classmethod
    def from_strs(cls, rows: Sequence[str], name: str | None = None) -> "QuerySet":
        vecs = [BitVector.from_str(r) for r in rows]
        if not vecs:
            raise ValueError("cannot infer n from an empty list")
        return cls(vecs[0].n, tuple(vecs), name)

    @property
    def m(self) -> int:
        return len(self.vectors)

    def bits(self) -> list[int]:
        return [v.bits for v in self.vectors]

    def __len__(self) -> int:
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def __contains__(self, v: BitVector) -> bool:
        return v.n == self.n and v.bits in {x.bits for x in self.vectors}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuerySet):
            return NotImplemented
        return self.n == other.n and set(self.bits()) == set(other.bits())

    def __hash__(self) -> int:
        return hash((self.n, frozenset(self.bits())))

    @property
    def max_weight(self) -> int:
        return max((v.weight for v in self.vectors), default=0)


# --------------------------------------------------------------------------
# Generators


def upsilon_sizes(root: int) -> tuple[int, int]:
    """(distinct image size including zero, the closed form 2^(2k) - 2^(k+1) + 1)."""
    return (2**root - 1) ** 2 + 1, 2 ** (2 * root) - 2 ** (root + 1) + 1


def gen_upsilon(root: int) -> QuerySet:
    """{vec(u v^T) : u, v in F_2^root}, zero vector included."""
    if root < 1:
        raise ValueError("root must be >= 1")
    check_cap("input_space", 1 << (2 * root), "rank-one pair space")
    n = root * root
    out = []
    for ub in range(1 << root):
        u = BitVector(root, ub)
        for vb in range(1 << root):
            out.append(vec(BitMatrix.outer(u, BitVector(root, vb))))
    return QuerySet.dedup(n, out, f"builtin:upsilon:{root}")


def gen_prefix(n: int) -> QuerySet:
    """{1^i 0^(n-i) : 1 <= i <= n}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return QuerySet(n, tuple(BitVector(n, (1 << i) - 1) for i in range(1, n + 1)), f"builtin:prefix:{n}")


def gen_random(n: int, m: int, seed: int) -> QuerySet:
    """m distinct uniform vectors of F_2^n, by rejection; reproducible from seed."""
    if m > 2**n:
        raise ValueError(f"cannot draw {m} distinct vectors from F_2^{n}")
    if m < 0:
        raise ValueError("m must be >= 0")
    rng = random.Random(seed)
    seen: dict[int, None] = {}
    if 2 * m > 2**n:
        # dense request: sample without replacement instead of rejecting forever
        check_cap("input_space", 2**n, "random set universe")
        for b in rng.sample(range(2**n), m):
            seen[b] = None
    else:
        while len(seen) < m:
            seen.setdefault(rng.getrandbits(n) if n else 0, None)
    return QuerySet(n, tuple(BitVector(n, b) for b in seen), f"builtin:random:{n}:{m}:{seed}")


def four_query_identity(m: BitMatrix, u: BitVector, v: BitVector, i: int, j: int) -> bool:
    """Check u'Mv + (u+e_i)'Mv + u'M(v+e_j) + (u+e_i)'M(v+e_j) == M[i, j]."""
    rows, cols = m.shape
    ui = u + BitVector.unit(rows, i)
    vj = v + BitVector.unit(cols, j)
    total = m.bilinear(u, v) ^ m.bilinear(ui, v) ^ m.bilinear(u, vj) ^ m.bilinear(ui, vj)
    return total == m.entry(i, j)


# --------------------------------------------------------------------------
# Files and URIs


def load_queryset(path: str | Path) -> QuerySet:
    path = Path(path)
    with path.open() as fh:
        parsed = parse_vectors(fh, str(path))
    if not parsed:
        raise FormatError(f"{path}: no vectors")
    first_line: dict[int, int] = {}
    for lineno, v in parsed:
        if v.bits in first_line:
            raise FormatError(f"{path}: line {lineno} duplicates line {first_line[v.bits]} ({v})")
        first_line[v.bits] = lineno
    return QuerySet(parsed[0][1].n, tuple(v for _, v in parsed), str(path))


def save_queryset(q: QuerySet, path: str | Path) -> None:
    header = f"{q.name or 'query set'}: n={q.n} m={q.m}"
    Path(path).write_text(format_vectors(q.vectors, header))


def resolve_queries(ref: str) -> QuerySet:
    """A builtin URI (builtin:upsilon:<root>, builtin:prefix:<n>,
    builtin:random:<n>:<m>:<seed>) or a path to a vector file."""
    if not ref.startswith("builtin:"):
        return load_queryset(ref)
    parts = ref.split(":")[1:]
    try:
        kind, args = parts[0], [int(a) for a in parts[1:]]
    except (IndexError, ValueError):
        raise ValueError(f"malformed builtin query set {ref!r}") from None
    if kind == "upsilon" and len(args) == 1:
        return gen_upsilon(*args)
    if kind == "prefix" and len(args) == 1:
        return gen_prefix(*args)
    if kind == "random" and len(args) == 3:
        return gen_random(*args)
    raise ValueError(f"unknown builtin query set {ref!r}")
