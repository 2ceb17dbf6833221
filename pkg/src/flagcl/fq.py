"""Block-lower-triangular matrices over F_q and the flag Cohen-Lenstra series.

A nilpotent block-lower-triangular matrix with block sizes (n_1, ..., n_k)
is multiplication by T on a flag of F_q[[T]]-modules; conjugation by the
block-triangular invertible group identifies isomorphic flags.  q is a prime
here, so F_q is Z/q.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable

import numpy as np

from . import _kernels
from .ring import _is_prime


class BudgetExceeded(RuntimeError):
    pass


def _check_q(q: int):
    if not isinstance(q, int) or q < 2 or not _is_prime(q):
        raise ValueError(f"q={q!r} must be a prime (prime powers are not supported)")


@dataclass(frozen=True)
class BlockShape:
    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(x) for x in self.sizes)
        if not sizes:
            raise ValueError("a block shape needs at least one block")
        if any(x < 0 for x in sizes):
            raise ValueError(f"negative block size in {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def block_of(self) -> list[int]:
        out = []
        for j, s in enumerate(self.sizes):
            out += [j] * s
        return out

    def mask(self) -> np.ndarray:
        """Allowed entries: (r, c) with block(r) >= block(c)."""
        b = np.array(self.block_of(), dtype=np.int64)
        return b[:, None] >= b[None, :]

    @property
    def below_diagonal(self) -> int:
        s = self.sizes
        return sum(s[i] * s[j] for i in range(len(s)) for j in range(i))

    @property
    def free_entries(self) -> int:
        return int(self.mask().sum())


@dataclass(frozen=True)
class FqMat:
    q: int
    size: int
    entries: tuple[int, ...]
    shape: BlockShape | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.entries) != self.size * self.size:
            raise ValueError("entry count does not match size")
        if any(not 0 <= x < self.q for x in self.entries):
            raise ValueError("entries must lie in [0, q)")
        if self.shape is not None:
            if self.shape.n != self.size:
                raise ValueError("block shape does not match the matrix size")
            m = self.shape.mask().reshape(-1)
            if any(x and not ok for x, ok in zip(self.entries, m)):
                raise ValueError("matrix has entries above the block diagonal")

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64).reshape(self.size, self.size)


def gl_count(n: int, q: int) -> int:
    out = 1
    for i in range(n):
        out *= q**n - q**i
    return out


def count_block_matrices(shape: BlockShape, q: int, kind: str = "all") -> int:
    """Closed-form count of block-lower-triangular matrices of the given kind.

    A block-triangular matrix is invertible (resp. nilpotent) iff every
    diagonal block is; below-diagonal entries are free.
    """
    _check_q(q)
    free = q**shape.below_diagonal
    if kind == "all":
        return q ** sum(s * s for s in shape.sizes) * free
    if kind == "nilpotent":
        return q ** sum(s * s - s for s in shape.sizes) * free
    if kind == "invertible":
        out = free
        for s in shape.sizes:
            out *= gl_count(s, q)
        return out
    raise ValueError(f"unknown kind {kind!r}; expected nilpotent, invertible or all")


def _all_block_matrices(shape: BlockShape, q: int, budget: int) -> np.ndarray:
    n, m = shape.n, shape.free_entries
    total = q**m
    if total > budget:
        raise BudgetExceeded(f"{total} block matrices exceed the budget {budget}")
    idx = np.arange(total, dtype=np.int64)
    vals = np.empty((total, m), dtype=np.int64)
    for j in range(m - 1, -1, -1):
        vals[:, j] = idx % q
        idx //= q
    out = np.zeros((total, n * n), dtype=np.int64)
    out[:, np.flatnonzero(shape.mask().reshape(-1))] = vals
    return out.reshape(total, n, n)


def _is_nilpotent(mats: np.ndarray, q: int) -> np.ndarray:
    n = mats.shape[-1]
    if n == 0:
        return np.ones(len(mats), dtype=bool)
    power = mats.copy()
    for _ in range(n - 1):
        power = np.einsum("bij,bjk->bik", power, mats) % q
    return ~power.reshape(len(mats), -1).any(axis=1)


def _is_invertible(mats: np.ndarray, q: int) -> np.ndarray:
    n = mats.shape[-1]
    if n == 0:
        return np.ones(len(mats), dtype=bool)
    return _kernels.rank_mod_p_batch(np.ascontiguousarray(mats), q) == n


def block_matrices(shape: BlockShape, q: int, kind: str = "all", budget: int = 2**24) -> np.ndarray:
    """Every block matrix of the given kind, by exhaustion, shape (N, n, n)."""
    _check_q(q)
    mats = _all_block_matrices(shape, q, budget)
    if kind == "all":
        return mats
    if kind == "nilpotent":
        return mats[_is_nilpotent(mats, q)]
    if kind == "invertible":
        return mats[_is_invertible(mats, q)]
    raise ValueError(f"unknown kind {kind!r}")


def count_block_matrices_brute(shape: BlockShape, q: int, kind: str = "all", budget: int = 2**24) -> int:
    return len(block_matrices(shape, q, kind, budget))


@dataclass(frozen=True)
class Orbit:
    representative: FqMat
    size: int
    stabilizer: int


def _codes(mats: np.ndarray, q: int) -> np.ndarray:
    flat = mats.reshape(len(mats), -1)
    w = q ** np.arange(flat.shape[1] - 1, -1, -1, dtype=np.int64)
    return flat @ w


def orbit_enumeration(shape: BlockShape, q: int, budget: int = 2**24) -> list[Orbit]:
    """Conjugation orbits of nilpotent block matrices under the block group.

    Each orbit is swept with the whole group; representatives are the least
    matrix of the orbit in row-major base-q order.
    """
    _check_q(q)
    n = shape.n
    if q ** (shape.free_entries) > budget:
        raise BudgetExceeded(f"|Mat_shape| = {q ** shape.free_entries} exceeds the budget {budget}")
    nil = block_matrices(shape, q, "nilpotent", budget)
    group = block_matrices(shape, q, "invertible", budget)
    if n == 0:
        rep = FqMat(q, 0, (), shape)
        return [Orbit(rep, 1, 1)]
    if len(group) * len(nil) > 64 * budget:
        raise BudgetExceeded(f"orbit sweep of {len(group)} x {len(nil)} exceeds the budget")
    ginv = _kernels.inverse_mod_p_batch(np.ascontiguousarray(group), q)
    codes = _codes(nil, q)
    todo = dict(zip(codes.tolist(), range(len(nil))))
    orbits = []
    while todo:
        code, i = next(iter(todo.items()))
        m = nil[i]
        conj = np.einsum("bij,jk,bkl->bil", group, m, ginv) % q
        orb = np.unique(_codes(conj, q))
        comm = np.all((np.einsum("bij,jk->bik", group, m) - np.einsum("ij,bjk->bik", m, group)) % q == 0, axis=(1, 2))
        stab = int(comm.sum())
        for c in orb.tolist():
            del todo[c]
        rep_code = int(orb[0])
        rep = nil[np.flatnonzero(codes == rep_code)[0]]
        assert stab * len(orb) == len(group)
        orbits.append(Orbit(FqMat(q, n, tuple(int(x) for x in rep.reshape(-1)), shape), len(orb), stab))
    orbits.sort(key=lambda o: o.representative.entries)
    assert sum(o.size for o in orbits) == len(nil)
    return orbits


def _exponents(k: int, D: int) -> Iterable[tuple[int, ...]]:
    for e in product(range(D + 1), repeat=k):
        if sum(e) <= D:
            yield e


@dataclass
class SeriesTrunc:
    """Power series in t_1..t_k with rational coefficients, truncated at total degree D."""

    k: int
    D: int
    coeffs: dict[tuple[int, ...], Fraction] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for e, c in self.coeffs.items():
            e = tuple(int(x) for x in e)
            if len(e) != self.k or any(x < 0 for x in e):
                raise ValueError(f"bad exponent vector {e}")
            if sum(e) > self.D:
                raise ValueError(f"exponent {e} exceeds total degree {self.D}")
            c = Fraction(c)
            if c:
                clean[e] = c
        self.coeffs = clean

    def coefficient(self, exps) -> Fraction:
        return self.coeffs.get(tuple(exps), Fraction(0))

    def __eq__(self, other):
        if not isinstance(other, SeriesTrunc):
            return NotImplemented
        return (self.k, self.D, self.coeffs) == (other.k, other.D, other.coeffs)

    def __mul__(self, other: "SeriesTrunc") -> "SeriesTrunc":
        if self.k != other.k:
            raise ValueError("series in different numbers of variables")
        D = min(self.D, other.D)
        out: dict[tuple[int, ...], Fraction] = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                if sum(e) <= D:
                    out[e] = out.get(e, Fraction(0)) + c1 * c2
        return SeriesTrunc(self.k, D, out)

    def differences(self, other: "SeriesTrunc") -> dict[tuple[int, ...], tuple[Fraction, Fraction]]:
        keys = set(self.coeffs) | set(other.coeffs)
        return {e: (self.coefficient(e), other.coefficient(e)) for e in sorted(keys)
                if self.coefficient(e) != other.coefficient(e)}

    def to_json_dict(self) -> dict[str, str]:
        return {",".join(map(str, e)): f"{c.numerator}/{c.denominator}" for e, c in sorted(self.coeffs.items())}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, k: int, D: int, data: dict[str, str]) -> "SeriesTrunc":
        return cls(k, D, {tuple(int(x) for x in key.split(",")): Fraction(v) for key, v in data.items()})


def flag_cl_series(q: int, k: int, D: int) -> SeriesTrunc:
    """Sum over block shapes of |Nilp_shape| / |GL_shape| t^shape, from the closed forms."""
    _check_q(q)
    if D < 0:
        raise ValueError("D must be non-negative")
    out = {}
    for e in _exponents(k, D):
        s = BlockShape(e)
        out[e] = Fraction(count_block_matrices(s, q, "nilpotent"), count_block_matrices(s, q, "invertible"))
    return SeriesTrunc(k, D, out)


def flag_cl_series_orbits(q: int, k: int, D: int, budget: int = 2**24) -> SeriesTrunc:
    """The same series computed as sum over conjugation orbits of 1/|stabiliser|."""
    out = {}
    for e in _exponents(k, D):
        out[e] = sum((Fraction(1, o.stabilizer) for o in orbit_enumeration(BlockShape(e), q, budget)), Fraction(0))
    return SeriesTrunc(k, D, out)


def euler_coefficients(q: int, D: int) -> list[Fraction]:
    """Coefficients of prod_{i>=1} 1/(1 - q^-i t) up to t^D.

    With f(t) the product, f(t) (1 - t/q) = f(t/q), which gives
    c_m = c_{m-1} q^-1 / (1 - q^-m) exactly.
    """
    x = Fraction(1, q)
    c = [Fraction(1)]
    for m in range(1, D + 1):
        c.append(c[-1] * x / (1 - x**m))
    return c


def euler_product_trunc(q: int, k: int, D: int) -> SeriesTrunc:
    """prod_j prod_{i>=1} 1/(1 - q^-i t_j), exactly, up to total degree D."""
    _check_q(q)
    if D < 0:
        raise ValueError("D must be non-negative")
    c = euler_coefficients(q, D)
    out = {}
    for e in _exponents(k, D):
        v = Fraction(1)
        for x in e:
            v *= c[x]
        out[e] = v
    return SeriesTrunc(k, D, out)


def euler_product_partial(q: int, k: int, D: int, factors: int) -> SeriesTrunc:
    """prod_j prod_{i<=factors} 1/(1 - q^-i t_j) expanded as geometric series, degree <= D.

    Only the infinite product equals the series; this finite version falls
    short of it from below and converges as ``factors`` grows.
    """
    one = SeriesTrunc(k, D, {(0,) * k: Fraction(1)})
    out = one
    for j in range(k):
        for i in range(1, factors + 1):
            a = Fraction(1, q**i)
            geo = {}
            for m in range(D + 1):
                e = [0] * k
                e[j] = m
                geo[tuple(e)] = a**m
            out = out * SeriesTrunc(k, D, geo)
    return out


def zp_flag_series(p: int, k: int, D: int) -> SeriesTrunc:
    """Sum over k-flag classes of Z_p-modules with |G_k| <= p^D of t^n(G)/|Aut(G)|."""
    from .flags import enumerate_flag_classes

    out: dict[tuple[int, ...], Fraction] = {}
    for f in enumerate_flag_classes(p, k, D):
        e = f.dim_increments
        out[e] = out.get(e, Fraction(0)) + Fraction(1, f.aut_order)
    return SeriesTrunc(k, D, out)


def class_comparison(p: int, k: int, D: int, budget: int = 2**24) -> list[dict]:
    """Per exponent vector: |Aut| of each Z_p flag class next to the stabiliser
    orders of the F_p[[T]] orbits.  Reported as data; only the sums are
    claimed to agree."""
    from .flags import enumerate_flag_classes

    zp: dict[tuple[int, ...], list[int]] = {}
    for f in enumerate_flag_classes(p, k, D):
        zp.setdefault(f.dim_increments, []).append(f.aut_order)
    rows = []
    for e in _exponents(k, D):
        try:
            stabs = sorted(o.stabilizer for o in orbit_enumeration(BlockShape(e), p, budget))
        except BudgetExceeded:
            stabs = None
        auts = sorted(zp.get(e, []))
        rows.append({
            "exponents": list(e),
            "zp_aut_orders": auts,
            "fq_stabilizer_orders": stabs,
            "same_multiset": stabs is not None and auts == stabs,
        })
    return rows


__all__ = [
    "BlockShape",
    "BudgetExceeded",
    "FqMat",
    "Orbit",
    "SeriesTrunc",
    "block_matrices",
    "class_comparison",
    "count_block_matrices",
    "count_block_matrices_brute",
    "euler_coefficients",
    "euler_product_partial",
    "euler_product_trunc",
    "flag_cl_series",
    "flag_cl_series_orbits",
    "gl_count",
    "orbit_enumeration",
    "zp_flag_series",
]
