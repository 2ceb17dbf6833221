"""Exact linear algebra over the truncated local ring Z/p^e.

Matrices are immutable values with residues in ``[0, p^e)`` stored row-major.
Python integers are used throughout, so any modulus works; the compiled
batch kernels in :mod:`flagcl._kernels` cover the common small-modulus case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence


@lru_cache(maxsize=None)
def _is_prime(p: int) -> bool:
    from sympy import isprime

    return bool(isprime(p))


@dataclass(frozen=True)
class PrimeModulus:
    """The ring Z/p^e standing in for the p-adic integers at precision e."""

    p: int
    e: int
    q: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.p, int) or self.p < 2 or not _is_prime(self.p):
            raise ValueError(f"p={self.p!r} is not a prime")
        if not isinstance(self.e, int) or self.e < 1:
            raise ValueError(f"precision e={self.e!r} must be a positive integer")
        object.__setattr__(self, "q", self.p**self.e)

    @property
    def fast(self) -> bool:
        """True when residues fit the fixed-width compiled kernels."""
        return self.q <= 2**31

    def val_and_unit(self, x: int) -> tuple[int, int]:
        return val_and_unit(x, self)


def val_and_unit(x: int, m: PrimeModulus) -> tuple[int, int]:
    """Split a residue as ``unit * p**valuation``; zero maps to ``(e, 1)``."""
    if not 0 <= x < m.q:
        raise ValueError(f"{x} is not a residue mod {m.q}")
    if x == 0:
        return m.e, 1
    v = 0
    while x % m.p == 0:
        x //= m.p
        v += 1
    return v, x % m.q


def valuation(x: int, m: PrimeModulus) -> int:
    return val_and_unit(x % m.q, m)[0]


@dataclass(frozen=True)
class Partition:
    """Type of a finite module: G = sum of Z/p^(part), parts weakly decreasing."""

    parts: tuple[int, ...] = ()

    def __post_init__(self):
        parts = tuple(int(x) for x in self.parts)
        if any(x <= 0 for x in parts):
            raise ValueError(f"partition parts must be positive: {parts}")
        if any(a < b for a, b in zip(parts, parts[1:])):
            raise ValueError(f"partition parts must be weakly decreasing: {parts}")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def from_parts(cls, parts: Iterable[int]) -> "Partition":
        return cls(tuple(sorted((x for x in parts if x > 0), reverse=True)))

    @classmethod
    def from_conjugate(cls, conj: Sequence[int]) -> "Partition":
        conj = [c for c in conj if c > 0]
        if not conj:
            return cls(())
        return cls(tuple(sum(1 for c in conj if c > i) for i in range(conj[0])))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        text = text.strip()
        if text in ("", "0"):
            return cls(())
        return cls(tuple(int(x) for x in text.split(",")))

    @property
    def size(self) -> int:
        return sum(self.parts)

    @property
    def rank(self) -> int:
        return len(self.parts)

    def order(self, p: int) -> int:
        return p**self.size

    def conjugate(self) -> tuple[int, ...]:
        if not self.parts:
            return ()
        return tuple(sum(1 for x in self.parts if x > i) for i in range(self.parts[0]))

    def __str__(self):
        return ",".join(map(str, self.parts)) if self.parts else "0"

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)


def partitions(size: int, max_rank: int | None = None, max_part: int | None = None):
    """Yield every partition of ``size`` (respecting optional bounds), largest first."""

    def rec(rest, cap, slots):
        if rest == 0:
            yield ()
            return
        if slots == 0:
            return
        for first in range(min(rest, cap), 0, -1):
            for tail in rec(rest - first, first, slots - 1):
                yield (first,) + tail

    cap = size if max_part is None else max_part
    slots = size if max_rank is None else max_rank
    for parts in rec(size, cap, slots):
        yield Partition(parts)


@dataclass(frozen=True)
class MatZpe:
    modulus: PrimeModulus
    rows: int
    cols: int
    entries: tuple[int, ...]

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("negative matrix shape")
        entries = tuple(int(x) % self.modulus.q for x in self.entries)
        if len(entries) != self.rows * self.cols:
            raise ValueError(
                f"{len(entries)} entries for a {self.rows}x{self.cols} matrix"
            )
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_rows(cls, modulus: PrimeModulus, rows: Sequence[Sequence[int]], cols=None):
        rows = [list(r) for r in rows]
        if cols is None:
            cols = len(rows[0]) if rows else 0
        if any(len(r) != cols for r in rows):
            raise ValueError("ragged rows")
        return cls(modulus, len(rows), cols, tuple(x for r in rows for x in r))

    @classmethod
    def from_columns(cls, modulus: PrimeModulus, columns: Sequence[Sequence[int]], rows: int):
        columns = [list(c) for c in columns]
        if any(len(c) != rows for c in columns):
            raise ValueError("column length mismatch")
        return cls.from_rows(
            modulus, [[c[i] for c in columns] for i in range(rows)], cols=len(columns)
        )

    @classmethod
    def identity(cls, modulus: PrimeModulus, n: int) -> "MatZpe":
        return cls.from_rows(modulus, [[int(i == j) for j in range(n)] for i in range(n)], cols=n)

    @classmethod
    def zeros(cls, modulus: PrimeModulus, rows: int, cols: int) -> "MatZpe":
        return cls(modulus, rows, cols, (0,) * (rows * cols))

    @classmethod
    def diagonal(cls, modulus: PrimeModulus, diag: Sequence[int], rows=None, cols=None):
        rows = len(diag) if rows is None else rows
        cols = len(diag) if cols is None else cols
        data = [[0] * cols for _ in range(rows)]
        for i, d in enumerate(diag):
            data[i][i] = d
        return cls.from_rows(modulus, data, cols=cols)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i * self.cols + j]

    def to_rows(self) -> list[list[int]]:
        c = self.cols
        return [list(self.entries[i * c : (i + 1) * c]) for i in range(self.rows)]

    def columns(self) -> list[tuple[int, ...]]:
        return [tuple(self.entries[i * self.cols + j] for i in range(self.rows)) for j in range(self.cols)]

    def __matmul__(self, other: "MatZpe") -> "MatZpe":
        if self.modulus != other.modulus:
            raise ValueError("moduli differ")
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.rows}x{self.cols} @ {other.rows}x{other.cols}")
        q = self.modulus.q
        a, b = self.to_rows(), other.to_rows()
        bt = list(zip(*b)) if b else [()] * other.cols
        out = [[sum(x * y for x, y in zip(row, col)) % q for col in bt] for row in a]
        return MatZpe.from_rows(self.modulus, out, cols=other.cols)

    def apply(self, v: Sequence[int]) -> tuple[int, ...]:
        if len(v) != self.cols:
            raise ValueError("vector length mismatch")
        q = self.modulus.q
        return tuple(sum(x * y for x, y in zip(row, v)) % q for row in self.to_rows())

    def __repr__(self):
        return f"MatZpe(p={self.modulus.p}, e={self.modulus.e}, {self.to_rows()})"


def unit_determinant(m: MatZpe) -> int:
    """Determinant of an invertible matrix; raises ValueError for a non-unit."""
    q, p = m.modulus.q, m.modulus.p
    a = m.to_rows()
    n = len(a)
    det = 1
    for t in range(n):
        piv = next((i for i in range(t, n) if a[i][t] % p), None)
        if piv is None:
            raise ValueError("matrix is not invertible over Z/p^e")
        if piv != t:
            a[t], a[piv] = a[piv], a[t]
            det = -det
        det = det * a[t][t] % q
        inv = pow(a[t][t], -1, q)
        for i in range(t + 1, n):
            f = a[i][t] * inv % q
            if f:
                a[i] = [(x - f * y) % q for x, y in zip(a[i], a[t])]
    return det % q


@dataclass(frozen=True)
class SnfResult:
    diag_valuations: tuple[int, ...]
    left_transform: MatZpe
    right_transform: MatZpe


def smith_normal_form(m: MatZpe) -> SnfResult:
    """Smith form ``L @ M @ R = diag(p^d)`` with minimal-valuation pivoting.

    Pivots are the entry of least valuation in the trailing submatrix, ties
    broken row-major, so the transforms are deterministic.
    """
    mod = m.modulus
    p, e, q = mod.p, mod.e, mod.q
    r, c = m.rows, m.cols
    a = m.to_rows()
    left = [[int(i == j) for j in range(r)] for i in range(r)]
    right = [[int(i == j) for j in range(c)] for i in range(c)]
    diag = []
    for t in range(min(r, c)):
        best, bi, bj = e, -1, -1
        for i in range(t, r):
            row = a[i]
            for j in range(t, c):
                x = row[j]
                if x:
                    v = 0
                    while x % p == 0:
                        x //= p
                        v += 1
                    if v < best:
                        best, bi, bj = v, i, j
                        if v == 0:
                            break
            if best == 0:
                break
        if bi < 0:
            diag.extend([e] * (min(r, c) - t))
            break
        if bi != t:
            a[t], a[bi] = a[bi], a[t]
            left[t], left[bi] = left[bi], left[t]
        if bj != t:
            for row in a:
                row[t], row[bj] = row[bj], row[t]
            for row in right:
                row[t], row[bj] = row[bj], row[t]
        pv = p**best
        inv = pow(a[t][t] // pv, -1, q)
        a[t] = [x * inv % q for x in a[t]]
        left[t] = [x * inv % q for x in left[t]]
        for i in range(t + 1, r):
            f = a[i][t] // pv
            if f:
                a[i] = [(x - f * y) % q for x, y in zip(a[i], a[t])]
                left[i] = [(x - f * y) % q for x, y in zip(left[i], left[t])]
        for j in range(t + 1, c):
            f = a[t][j] // pv
            if f:
                a[t][j] = 0
                for row in right:
                    row[j] = (row[j] - f * row[t]) % q
        diag.append(best)
    return SnfResult(
        tuple(diag),
        MatZpe.from_rows(mod, left, cols=r),
        MatZpe.from_rows(mod, right, cols=c),
    )


def cokernel_type(m: MatZpe, ambient_rows: int | None = None) -> tuple[Partition, bool]:
    """Type of ``(Z/p^e)^rows / im(M)`` and whether it is exact for the p-adic lift.

    Parts equal to ``e`` are saturated: the true cokernel may be larger, so
    the result is certified only when every part is at most ``e - 1``.
    """
    if ambient_rows is not None and ambient_rows != m.rows:
        raise ValueError("ambient_rows must equal the row count")
    e = m.modulus.e
    diag = smith_normal_form(m).diag_valuations
    parts = [d for d in diag if d > 0] + [e] * (m.rows - len(diag))
    lam = Partition.from_parts(parts)
    return lam, all(x <= e - 1 for x in lam.parts)


def howell_rows(vectors: Iterable[Sequence[int]], p: int, e: int, width: int) -> tuple[tuple[int, ...], ...]:
    """Canonical generators of the span of ``vectors`` in (Z/p^e)^width.

    Echelon rows with pivots p^v, entries above a pivot reduced below it, and
    closed under multiplication by p^(e-v) (the Howell property), so equal
    spans give identical output.
    """
    q = p**e
    active = [list(int(x) % q for x in v) for v in vectors]
    active = [v for v in active if any(v)]
    pivots: list[list[int]] = []
    for j in range(width):
        best, bi = e, -1
        for idx, v in enumerate(active):
            x = v[j]
            if x:
                k = 0
                while x % p == 0:
                    x //= p
                    k += 1
                if k < best:
                    best, bi = k, idx
                    if k == 0:
                        break
        if bi < 0:
            continue
        piv = active.pop(bi)
        pv = p**best
        inv = pow(piv[j] // pv, -1, q)
        piv = [x * inv % q for x in piv]
        rest = []
        for v in active:
            f = v[j] // pv
            if f:
                v = [(x - f * y) % q for x, y in zip(v, piv)]
            if any(v):
                rest.append(v)
        if best > 0:
            extra = [x * p ** (e - best) % q for x in piv]
            if any(extra):
                rest.append(extra)
        active = rest
        for prev in pivots:
            f = prev[j] // pv
            if f:
                prev[:] = [(x - f * y) % q for x, y in zip(prev, piv)]
        pivots.append(piv)
    return tuple(tuple(v) for v in pivots)


def howell_span(m: MatZpe) -> MatZpe:
    """Canonical generator matrix (as columns) of the column span of ``m``."""
    rows = howell_rows(m.columns(), m.modulus.p, m.modulus.e, m.rows)
    return MatZpe.from_columns(m.modulus, rows, m.rows)


def span_membership(h: MatZpe, v: Sequence[int]) -> bool:
    """Whether ``v`` lies in the column span of the Howell form ``h``."""
    if len(v) != h.rows:
        raise ValueError(f"vector of length {len(v)} for ambient rank {h.rows}")
    mod = h.modulus
    q, p = mod.q, mod.p
    w = [int(x) % q for x in v]
    cols = h.columns()
    by_pivot = {}
    for col in cols:
        j = next(i for i, x in enumerate(col) if x)
        by_pivot[j] = col
    for j in range(h.rows):
        if not w[j]:
            continue
        col = by_pivot.get(j)
        if col is None:
            return False
        f, r = divmod(w[j], col[j])
        if r:
            return False
        w = [(x - f * y) % q for x, y in zip(w, col)]
    return True


def span_index_exponent(h: MatZpe) -> int:
    """log_p of the index of the span of a Howell form in (Z/p^e)^rows."""
    e = h.modulus.e
    total = h.rows * e
    for col in h.columns():
        x = next(x for x in col if x)
        total -= e - valuation(x, h.modulus)
    return total
