"""Bit-packed linear algebra over F_2.

Vectors are Python ints used as bitsets. Coordinate ``i`` (1-based, as in the
mathematics) lives at bit ``i - 1``; in the text form coordinate 1 is the
leftmost character. So ``BitVector.from_str("1100")`` has bits ``0b0011``.

Row-reduced echelon form uses the same convention: a row's pivot is its
lowest-numbered nonzero coordinate, rows are sorted by pivot, and every pivot
column is zero in all other rows. With zero rows dropped this is a canonical
form, so two subspaces are equal iff their RREF bases are identical.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .limits import check_cap


class FormatError(ValueError):
    """Malformed vector/matrix text."""


def parity(x: int) -> int:
    return x.bit_count() & 1


def _low_bit_index(x: int) -> int:
    return (x & -x).bit_length() - 1


# --------------------------------------------------------------------------
# Vectors and matrices


@dataclasses.dataclass(frozen=True, order=True)
class BitVector:
    n: int
    bits: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("negative length")
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"bits 0x{self.bits:x} do not fit in length {self.n}")

    @classmethod
    def from_str(cls, s: str) -> "BitVector":
        s = s.strip()
        if any(c not in "01" for c in s):
            raise FormatError(f"non-binary characters in {s!r}")
        return cls(len(s), int(s[::-1], 2) if s else 0)

    @classmethod
    def zeros(cls, n: int) -> "BitVector":
        return cls(n, 0)

    @classmethod
    def ones(cls, n: int) -> "BitVector":
        return cls(n, (1 << n) - 1)

    @classmethod
    def unit(cls, n: int, i: int) -> "BitVector":
        """The standard basis vector e_i, 1 <= i <= n."""
        if not 1 <= i <= n:
            raise ValueError(f"coordinate {i} outside 1..{n}")
        return cls(n, 1 << (i - 1))

    @classmethod
    def from_support(cls, n: int, coords: Iterable[int]) -> "BitVector":
        bits = 0
        for i in coords:
            if not 1 <= i <= n:
                raise ValueError(f"coordinate {i} outside 1..{n}")
            bits |= 1 << (i - 1)
        return cls(n, bits)

    def __str__(self) -> str:
        return "".join("1" if (self.bits >> i) & 1 else "0" for i in range(self.n))

    def __len__(self) -> int:
        return self.n

    def bit(self, i: int) -> int:
        """Coordinate i (1-based)."""
        if not 1 <= i <= self.n:
            raise IndexError(f"coordinate {i} outside 1..{self.n}")
        return (self.bits >> (i - 1)) & 1

    @property
    def weight(self) -> int:
        return self.bits.bit_count()

    def support(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in range(self.n) if (self.bits >> i) & 1)

    def _same_length(self, other: "BitVector") -> None:
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} vs {other.n}")

    def __add__(self, other: "BitVector") -> "BitVector":
        self._same_length(other)
        return BitVector(self.n, self.bits ^ other.bits)

    __sub__ = __add__
    __xor__ = __add__

    def dot(self, other: "BitVector") -> int:
        self._same_length(other)
        return parity(self.bits & other.bits)

    def distance(self, other: "BitVector") -> int:
        self._same_length(other)
        return (self.bits ^ other.bits).bit_count()


@dataclasses.dataclass(frozen=True)
class BitMatrix:
    """Row-major F_2 matrix; ``data[a]`` is row a+1 packed like a BitVector."""

    cols: int
    data: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(self.data))
        for row in self.data:
            if row < 0 or row >> self.cols:
                raise ValueError(f"row 0x{row:x} does not fit in {self.cols} columns")

    @classmethod
    def from_rows(cls, rows: Sequence[str | BitVector], cols: int | None = None) -> "BitMatrix":
        vecs = [BitVector.from_str(r) if isinstance(r, str) else r for r in rows]
        if cols is None:
            if not vecs:
                raise ValueError("cannot infer column count of an empty matrix")
            cols = vecs[0].n
        for v in vecs:
            if v.n != cols:
                raise ValueError(f"row length {v.n} != {cols}")
        return cls(cols, tuple(v.bits for v in vecs))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(cols, (0,) * rows)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls(n, tuple(1 << i for i in range(n)))

    @classmethod
    def outer(cls, a: BitVector, b: BitVector) -> "BitMatrix":
        """The rank-one matrix a b^T."""
        return cls(b.n, tuple(b.bits if (a.bits >> i) & 1 else 0 for i in range(a.n)))

    @property
    def nrows(self) -> int:
        return len(self.data)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.data), self.cols

    @property
    def rows(self) -> tuple[BitVector, ...]:
        return tuple(BitVector(self.cols, r) for r in self.data)

    def column(self, b: int) -> BitVector:
        """Column b (1-based) as a vector of length nrows."""
        bits = 0
        for a, row in enumerate(self.data):
            bits |= ((row >> (b - 1)) & 1) << a
        return BitVector(self.nrows, bits)

    def entry(self, a: int, b: int) -> int:
        """M[a, b] with 1-based indices."""
        return (self.data[a - 1] >> (b - 1)) & 1

    def __str__(self) -> str:
        return "\n".join(str(v) for v in self.rows)

    def transpose(self) -> "BitMatrix":
        return BitMatrix(self.nrows, tuple(self.column(b).bits for b in range(1, self.cols + 1)))

    def __add__(self, other: "BitMatrix") -> "BitMatrix":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return BitMatrix(self.cols, tuple(x ^ y for x, y in zip(self.data, other.data)))

    def __matmul__(self, other: "BitMatrix") -> "BitMatrix":
        if self.cols != other.nrows:
            raise ValueError(f"cannot multiply {self.shape} by {other.shape}")
        out = []
        for row in self.data:
            acc = 0
            while row:
                j = _low_bit_index(row)
                acc ^= other.data[j]
                row &= row - 1
            out.append(acc)
        return BitMatrix(other.cols, tuple(out))

    def apply(self, v: BitVector) -> BitVector:
        """M v."""
        if v.n != self.cols:
            raise ValueError("dimension mismatch")
        bits = 0
        for a, row in enumerate(self.data):
            bits |= parity(row & v.bits) << a
        return BitVector(self.nrows, bits)

    def bilinear(self, u: BitVector, v: BitVector) -> int:
        """u^T M v over F_2."""
        if u.n != self.nrows or v.n != self.cols:
            raise ValueError("dimension mismatch")
        acc = 0
        ub = u.bits
        while ub:
            acc ^= parity(self.data[_low_bit_index(ub)] & v.bits)
            ub &= ub - 1
        return acc


# --------------------------------------------------------------------------
# Elimination


def rref_rows(rows: Iterable[int], ncols: int) -> list[int]:
    """Canonical RREF of packed rows; zero rows dropped."""
    work = [r for r in rows if r]
    out: list[int] = []
    for col in range(ncols):
        bit = 1 << col
        for k, r in enumerate(work):
            if r & bit:
                pivot_row = work.pop(k)
                break
        else:
            continue
        work = [r ^ pivot_row if r & bit else r for r in work]
        out = [r ^ pivot_row if r & bit else r for r in out]
        out.append(pivot_row)
        if not work:
            break
    return out


def reduce_by(x: int, rref: Sequence[int]) -> int:
    """Reduce x modulo the row space of an RREF basis."""
    for row in rref:
        if x & (row & -row):
            x ^= row
    return x


def rref(m: BitMatrix) -> BitMatrix:
    return BitMatrix(m.cols, tuple(rref_rows(m.data, m.cols)))


def rank(m: BitMatrix) -> int:
    return len(rref_rows(m.data, m.cols))


def rank_of_rows(rows: Iterable[int], ncols: int) -> int:
    return len(rref_rows(rows, ncols))


def rank_factorize(m: BitMatrix) -> tuple[BitMatrix, BitMatrix]:
    """Return (A, B) with m == A @ B, A of shape rows x rho and B rho x cols."""
    basis = rref_rows(m.data, m.cols)
    pivots = [_low_bit_index(r) for r in basis]
    a_rows = []
    for row in m.data:
        a_rows.append(sum(((row >> p) & 1) << j for j, p in enumerate(pivots)))
    return BitMatrix(len(basis), tuple(a_rows)), BitMatrix(m.cols, tuple(basis))


def solve_linear(a: BitMatrix, b: BitVector) -> BitVector | None:
    """Some x with a x = b, or None when the system is inconsistent."""
    if b.n != a.nrows:
        raise ValueError(f"right-hand side has length {b.n}, matrix has {a.nrows} rows")
    n = a.cols
    aug = [row | (((b.bits >> i) & 1) << n) for i, row in enumerate(a.data)]
    x = 0
    for row in rref_rows(aug, n + 1):
        p = _low_bit_index(row)
        if p == n:
            return None
        if (row >> n) & 1:
            x |= 1 << p
    return BitVector(n, x)


# --------------------------------------------------------------------------
# Subspaces


@dataclasses.dataclass(frozen=True)
class Subspace:
    """A subspace of F_2^n held as its canonical RREF basis."""

    ambient_dim: int
    rows: tuple[int, ...]

    @classmethod
    def span(cls, n: int, vectors: Iterable[BitVector | int]) -> "Subspace":
        raw = []
        for v in vectors:
            if isinstance(v, BitVector):
                if v.n != n:
                    raise ValueError(f"vector of length {v.n} in F_2^{n}")
                raw.append(v.bits)
            else:
                raw.append(v)
        return cls(n, tuple(rref_rows(raw, n)))

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(n, ())

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(n, tuple(1 << i for i in range(n)))

    @property
    def dim(self) -> int:
        return len(self.rows)

    @property
    def basis(self) -> BitMatrix:
        return BitMatrix(self.ambient_dim, self.rows)

    @property
    def pivots(self) -> tuple[int, ...]:
        """Pivot coordinates, 1-based."""
        return tuple(_low_bit_index(r) + 1 for r in self.rows)

    def basis_vectors(self) -> tuple[BitVector, ...]:
        return tuple(BitVector(self.ambient_dim, r) for r in self.rows)

    def element_bits(self) -> list[int]:
        """All 2^dim elements; index c is the sum of basis rows selected by c's bits."""
        check_cap("coset_dim", self.dim, "coset")
        elems = [0]
        for row in self.rows:
            elems += [e ^ row for e in elems]
        return elems

    def combine(self, coeffs: int) -> int:
        x = 0
        for j, row in enumerate(self.rows):
            if (coeffs >> j) & 1:
                x ^= row
        return x

    def __contains__(self, v: BitVector) -> bool:
        return span_contains(self, v)

    def __str__(self) -> str:
        return "\n".join(str(v) for v in self.basis_vectors())


def span_contains(u: Subspace, v: BitVector) -> bool:
    if v.n != u.ambient_dim:
        raise ValueError(f"vector length {v.n} vs ambient dimension {u.ambient_dim}")
    return reduce_by(v.bits, u.rows) == 0


def gaussian_binomial(n: int, r: int) -> int:
    """Number of r-dimensional subspaces of F_2^n."""
    if r < 0 or r > n:
        return 0
    num = den = 1
    for i in range(r):
        num *= (1 << (n - i)) - 1
        den *= (1 << (i + 1)) - 1
    return num // den


def pivot_sets(n: int, r: int) -> Iterator[tuple[int, ...]]:
    """Pivot column sets (0-based) in lexicographic order."""
    return itertools.combinations(range(n), r)


def free_positions(n: int, pivots: Sequence[int]) -> list[tuple[int, int]]:
    """(row, col) slots that are free in an RREF with these pivots, row-major."""
    pset = set(pivots)
    return [(i, c) for i, p in enumerate(pivots) for c in range(p + 1, n) if c not in pset]


def subspaces_with_pivots(n: int, pivots: Sequence[int]) -> Iterator[Subspace]:
    """Every subspace whose RREF has exactly these pivots; free bits count up."""
    base = [1 << p for p in pivots]
    slots = free_positions(n, pivots)
    for counter in range(1 << len(slots)):
        rows = list(base)
        c = counter
        while c:
            k = _low_bit_index(c)
            i, col = slots[k]
            rows[i] |= 1 << col
            c &= c - 1
        yield Subspace(n, tuple(rows))


def enumerate_subspaces(n: int, r: int) -> Iterator[Subspace]:
    """Every r-dimensional subspace of F_2^n exactly once, in canonical order."""
    if not 0 <= r <= n:
        raise ValueError(f"need 0 <= r <= n, got r={r}, n={n}")
    check_cap("subspaces", gaussian_binomial(n, r), "enumeration")
    for piv in pivot_sets(n, r):
        yield from subspaces_with_pivots(n, piv)


def distance_to_subspace(q: BitVector, u: Subspace) -> int:
    """Exact d_H(q, U): minimum weight over the coset q + U, via a Gray-code walk."""
    if q.n != u.ambient_dim:
        raise ValueError(f"vector length {q.n} vs ambient dimension {u.ambient_dim}")
    check_cap("coset_dim", u.dim, "coset")
    return coset_min_weight(q.bits, u.rows)


def coset_min_weight(x: int, rows: Sequence[int]) -> int:
    best = x.bit_count()
    for i in range(1, 1 << len(rows)):
        if not best:
            break
        x ^= rows[_low_bit_index(i)]
        w = x.bit_count()
        if w < best:
            best = w
    return best


# --------------------------------------------------------------------------
# vec / mat


def vec(m: BitMatrix) -> BitVector:
    """Row concatenation: coordinate (a-1)*cols + b holds M[a, b]."""
    bits = 0
    for a, row in enumerate(m.data):
        bits |= row << (a * m.cols)
    return BitVector(m.nrows * m.cols, bits)


def mat(v: BitVector) -> BitMatrix:
    """Inverse of vec for square matrices."""
    root = math.isqrt(v.n)
    if root * root != v.n:
        raise ValueError(f"length {v.n} is not a perfect square")
    mask = (1 << root) - 1
    return BitMatrix(root, tuple((v.bits >> (a * root)) & mask for a in range(root)))


# --------------------------------------------------------------------------
# Text format


def parse_vectors(lines: Iterable[str], source: str = "<input>") -> list[tuple[int, BitVector]]:
    """Parse 0/1 lines; returns (line number, vector) pairs. '#' lines and blanks skipped."""
    out: list[tuple[int, BitVector]] = []
    width = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        bad = [c for c in line if c not in "01"]
        if bad:
            raise FormatError(f"{source} line {lineno}: non-binary character {bad[0]!r}")
        if width is None:
            width = len(line)
        elif len(line) != width:
            raise FormatError(f"{source} line {lineno}: length {len(line)} differs from {width}")
        out.append((lineno, BitVector.from_str(line)))
    return out


def read_vectors(path: str | Path) -> list[BitVector]:
    path = Path(path)
    with path.open() as fh:
        return [v for _, v in parse_vectors(fh, str(path))]


def format_vectors(vectors: Iterable[BitVector], header: str | None = None) -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [str(v) for v in vectors]
    return "\n".join(lines) + "\n"


def load_subspace(path: str | Path, n: int | None = None) -> Subspace:
    vecs = read_vectors(path)
    if n is None:
        if not vecs:
            raise FormatError(f"{path}: empty basis file needs an explicit dimension")
        n = vecs[0].n
    return Subspace.span(n, vecs)


def random_subspace(n: int, dim: int, rng) -> Subspace:
    """Uniform-ish random subspace of the given dimension: draw vectors until the span grows."""
    if not 0 <= dim <= n:
        raise ValueError(f"need 0 <= dim <= n, got dim={dim}, n={n}")
    rows: list[int] = []
    while len(rows) < dim:
        x = reduce_by(rng.getrandbits(n), rows)
        if x:
            rows = rref_rows(rows + [x], n)
    return Subspace(n, tuple(rows))
