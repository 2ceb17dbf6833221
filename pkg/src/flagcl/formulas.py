"""Closed-form probabilities, counts and measures on flags, as exact rationals.

Infinite products are returned as :class:`Bracket` values: a partial product
up to a truncation ``N`` plus a certified two-sided enclosure of the limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .flags import FlagClass, aut_order, injective_flag_count
from .groups import aut_count, sub_partitions, subgroup_count
from .ring import Partition, partitions

DEFAULT_TRUNCATION = 64


@dataclass(frozen=True)
class Bracket:
    value: Fraction
    lower: Fraction
    upper: Fraction

    def __post_init__(self):
        assert self.lower <= self.upper

    def contains(self, x) -> bool:
        return self.lower <= x <= self.upper

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class MeasureParams:
    """Parameters of the deformed measure: prime p, rank n (None = infinity), t_1..t_k."""

    p: int
    n: int | None
    t: tuple[Fraction, ...]

    def __post_init__(self):
        t = tuple(Fraction(x) for x in self.t)
        object.__setattr__(self, "t", t)
        for x in t:
            if not 0 <= x < self.p:
                raise ValueError(f"t_j = {x} outside [0, {self.p})")
        if self.n is not None and self.n < 0:
            raise ValueError("n must be non-negative")


@dataclass(frozen=True)
class ShapeOffsets:
    """Column excesses u_1..u_k: M_i is (n + u_{i-1}) x (n + u_i) with u_0 = 0."""

    u: tuple[int, ...]

    def __post_init__(self):
        u = tuple(int(x) for x in self.u)
        if any(x < 0 for x in u):
            raise ValueError(f"offsets must be non-negative: {u}")
        object.__setattr__(self, "u", u)

    @classmethod
    def square(cls, k: int) -> "ShapeOffsets":
        return cls((0,) * k)

    def shapes(self, n: int) -> list[tuple[int, int]]:
        full = (0, *self.u)
        return [(n + full[i], n + full[i + 1]) for i in range(len(self.u))]


def _check_prob(x: Fraction) -> Fraction:
    assert 0 <= x <= 1, x
    return x


def _euler(p: int, lo: int, hi: int, t: Fraction = Fraction(1), shift: int = 0) -> Fraction:
    """prod_{i=lo}^{hi} (1 - t p^{-(i+shift)})."""
    val = Fraction(1)
    for i in range(lo, hi + 1):
        val *= 1 - t / Fraction(p) ** (i + shift)
    return val


def _tail_lower(p: int, N: int, t: Fraction = Fraction(1), shift: int = 0) -> Fraction:
    """Lower bound for prod_{i>N} (1 - t p^{-(i+shift)}) from 1 - sum of the terms."""
    x = Fraction(1, p)
    s = t * x ** (N + shift + 1) / (1 - x)
    return max(Fraction(0), 1 - s)


def _degenerate(flag: FlagClass, n: int | None) -> bool:
    return (not flag.certified) or (n is not None and flag.rank > n)


def prob_flag_square(n: int, p: int, k: int, flag: FlagClass) -> Fraction:
    """P(cok(M_1, ..., M_k) = G) for independent Haar M_i in Mat_n(Z_p)."""
    if flag.k != k or flag.p != p:
        raise ValueError("flag does not match (p, k)")
    if _degenerate(flag, n):
        return Fraction(0)
    r = flag.rank
    val = Fraction(1, aut_order(flag)) * _euler(p, n - r + 1, n) * _euler(p, 1, n) ** k
    return _check_prob(val)


def prob_flag_square_limit(p: int, k: int, flag: FlagClass, truncation: int = DEFAULT_TRUNCATION) -> Bracket:
    """n -> infinity limit of :func:`prob_flag_square`, enclosed from both sides."""
    if truncation < flag.rank:
        raise ValueError("truncation must be at least r(G_k)")
    if not flag.certified:
        z = Fraction(0)
        return Bracket(z, z, z)
    base = Fraction(1, aut_order(flag)) * _euler(p, 1, truncation) ** k
    lower = base * _tail_lower(p, truncation) ** k
    return Bracket(base, lower, base)


def _increment_weight(flag: FlagClass, u: Sequence[int]) -> Fraction:
    w = Fraction(1)
    for j, uj in enumerate(u, start=1):
        w /= Fraction(flag.order(j), flag.order(j - 1)) ** uj
    return w


def prob_flag_nonsquare(n: int, p: int, offsets: ShapeOffsets, flag: FlagClass) -> Fraction:
    """P(cok(M_1, ..., M_k) = G) with M_i Haar in Mat_{(n+u_{i-1}) x (n+u_i)}."""
    u = offsets.u
    if flag.k != len(u) or flag.p != p:
        raise ValueError("flag does not match (p, k)")
    if _degenerate(flag, n):
        return Fraction(0)
    val = _increment_weight(flag, u) / aut_order(flag) * _euler(p, n - flag.rank + 1, n)
    for uj in u:
        val *= _euler(p, 1, n, shift=uj)
    if not any(u):
        assert val == prob_flag_square(n, p, len(u), flag)
    return _check_prob(val)


def prob_flag_nonsquare_limit(p: int, offsets: ShapeOffsets, flag: FlagClass,
                              truncation: int = DEFAULT_TRUNCATION) -> Bracket:
    u = offsets.u
    if truncation < flag.rank:
        raise ValueError("truncation must be at least r(G_k)")
    if not flag.certified:
        z = Fraction(0)
        return Bracket(z, z, z)
    base = _increment_weight(flag, u) / aut_order(flag)
    lower_tail = Fraction(1)
    for uj in u:
        base *= _euler(p, 1, truncation, shift=uj)
        lower_tail *= _tail_lower(p, truncation, shift=uj)
    return Bracket(base, base * lower_tail, base)


def measure_P(params: MeasureParams, flag: FlagClass, truncation: int = DEFAULT_TRUNCATION):
    """Mass of ``flag`` under the t-deformed measure.

    Exact :class:`~fractions.Fraction` for finite n; a :class:`Bracket` when
    ``params.n`` is None (n = infinity).
    """
    p, n, t = params.p, params.n, params.t
    if flag.k != len(t) or flag.p != p:
        raise ValueError("flag does not match (p, k)")
    if _degenerate(flag, n):
        z = Fraction(0)
        return z if n is not None else Bracket(z, z, z)
    w = Fraction(1, aut_order(flag))
    for tj, nj in zip(t, flag.dim_increments):
        w *= tj**nj
    if n is not None:
        val = w * _euler(p, n - flag.rank + 1, n)
        for tj in t:
            val *= _euler(p, 1, n, t=tj)
        return _check_prob(val)
    if truncation < flag.rank:
        raise ValueError("truncation must be at least r(G_k)")
    val, lower_tail = w, Fraction(1)
    for tj in t:
        val *= _euler(p, 1, truncation, t=tj)
        lower_tail *= _tail_lower(p, truncation, t=tj)
    return Bracket(val, val * lower_tail, val)


def measure_ratio(params: MeasureParams, flag: FlagClass) -> Fraction:
    """prod_j t_j^{n_j} prod_{i<=n} (1 - p^-i t_j)/(1 - p^-i): the t-measure over the t=1 measure."""
    p, n = params.p, params.n
    if n is None:
        raise ValueError("ratio identity is stated for finite n")
    val = Fraction(1)
    for tj, nj in zip(params.t, flag.dim_increments):
        val *= tj**nj * _euler(p, 1, n, t=tj) / _euler(p, 1, n)
    return val


def prob_image_chain(n: int, p: int, offsets: ShapeOffsets, flag: FlagClass) -> Fraction:
    """Probability that im(M_1, ..., M_k) equals one fixed chain with quotient ``flag``."""
    u = offsets.u
    if flag.k != len(u):
        raise ValueError("offsets do not match k")
    if not flag.certified:
        return Fraction(0)
    val = Fraction(1, flag.order()) ** n * _increment_weight(flag, u)
    for uj in u:
        val *= _euler(p, 1, n, shift=uj)
    if not any(u):
        assert val == Fraction(1, flag.order()) ** n * _euler(p, 1, n) ** len(u)
    return _check_prob(val)


def surjective_composite_prob(a: int, b: int, c: int, p: int) -> Fraction:
    """P(im(f g) = A) for a fixed surjection f: Z_p^b ->> Z_p^a and Haar g: Z_p^c -> Z_p^b."""
    if not 0 <= a <= b or c < 0:
        raise ValueError("need 0 <= a <= b and c >= 0")
    if a > c:
        return Fraction(0)
    return _check_prob(_euler(p, c - a + 1, c))


def theory_mass(n: int, p: int, offsets: ShapeOffsets, flag: FlagClass) -> Fraction:
    """Probability of ``flag`` in the random-matrix model with the given shapes."""
    if any(offsets.u):
        return prob_flag_nonsquare(n, p, offsets, flag)
    return prob_flag_square(n, p, len(offsets.u), flag)


def factorization_check(n: int, flag: FlagClass) -> bool:
    """Class probability equals (number of chains) x (probability of one chain)."""
    k = flag.k
    lhs = prob_flag_square(n, flag.p, k, flag)
    if flag.rank > n:
        return lhs == 0
    return lhs == injective_flag_count(n, flag) * prob_image_chain(n, flag.p, ShapeOffsets.square(k), flag)


def chain_weight(p: int, lam: Partition, t: Sequence[Fraction]) -> Fraction:
    """Sum over kernel chains A = N_0 >= ... >= N_k = 0 in the group of type ``lam`` of prod t_j^{n_j}."""
    return _chain_weight(p, lam, tuple(Fraction(x) for x in t))


@lru_cache(maxsize=None)
def _chain_weight(p, lam, t):
    if not t:
        return Fraction(int(lam.size == 0))
    total = Fraction(0)
    for mu in sub_partitions(lam):
        total += subgroup_count(p, lam, mu) * t[0] ** (lam.size - mu.size) * _chain_weight(p, mu, t[1:])
    return total


def normalization_partial_sums(params: MeasureParams, max_exp: int) -> list[Fraction]:
    """S_D = total mass of classes with |G_k| <= p^D, for D = 0..max_exp.

    Classes sharing a top module of type lambda are summed at once: by
    orbit-stabilizer, sum of 1/|Aut(G)| over classes equals the number of
    kernel chains in the group divided by |Aut(lambda)|.
    """
    p, n, t = params.p, params.n, params.t
    if n is None:
        raise ValueError("partial sums are computed for finite n")
    const = Fraction(1)
    for tj in t:
        const *= _euler(p, 1, n, t=tj)
    sums, acc = [], Fraction(0)
    for size in range(max_exp + 1):
        for lam in partitions(size, max_rank=n):
            acc += (
                const
                * _euler(p, n - lam.rank + 1, n)
                * _chain_weight(p, lam, t)
                / aut_count(p, lam)
            )
        sums.append(acc)
    return sums
