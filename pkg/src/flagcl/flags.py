"""Surjective flags of finite Z_p-modules: construction, labels, automorphisms.

A flag ``G_k ->> ... ->> G_1`` is handled through its top module in standard
form ``A = G_k`` together with the kernel chain ``A = N_0 >= N_1 >= ... >=
N_k = 0`` where ``N_i = ker(G_k ->> G_i)``.  Isomorphism classes are
``Aut(A)``-orbits of kernel chains; the canonical form of a chain is the
lexicographically least image of its element lists under ``Aut(A)``.

Labels have the shape ``k=2;G=1|2,1;N=1,1;c=0``: the types of G_1..G_k, the
types of every kernel ``ker(G_i ->> G_j)`` for ``1 <= j < i <= k`` ordered by
``(j, i)``, and the index of the orbit among all orbits sharing those
invariants.  The trivial partition is written ``0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .groups import AbelianPGroup, BoundExceeded, aut_count, standard_group
from .ring import (
    MatZpe,
    Partition,
    PrimeModulus,
    cokernel_type,
    howell_span,
    partitions,
    smith_normal_form,
    span_membership,
)

__all__ = [
    "BoundExceeded",
    "ClassificationBound",
    "FlagClass",
    "ModuleChain",
    "aut_order",
    "classify_in_model",
    "enumerate_flag_classes",
    "flag_from_chain",
    "flag_from_matrices",
    "flags_isomorphic",
    "injective_flag_count",
    "parse_label",
    "profile_collisions",
    "surjection_count",
]


@dataclass(frozen=True)
class ClassificationBound:
    max_order: int = 2**10
    max_work: int = 2**25  # |Aut(G_k)| * |G_k|

    def check_order(self, order: int):
        if order > self.max_order:
            raise BoundExceeded(f"|G_k| = {order} exceeds the classification bound {self.max_order}")


DEFAULT_BOUND = ClassificationBound()


@dataclass(frozen=True)
class ModuleChain:
    """Lattice chain ``F_k <= ... <= F_1 <= Z_p^n`` held as Howell forms mod p^e."""

    modulus: PrimeModulus
    n: int
    lattices: tuple[MatZpe, ...]

    def __post_init__(self):
        lat = tuple(self.lattices)
        object.__setattr__(self, "lattices", lat)
        for h in lat:
            if h.rows != self.n or h.modulus != self.modulus:
                raise ValueError("lattice generator matrix does not live in (Z/p^e)^n")
        for inner, outer in zip(lat[1:], lat):
            if not all(span_membership(outer, v) for v in inner.columns()):
                raise ValueError("lattices are not nested")

    @property
    def k(self) -> int:
        return len(self.lattices)


@dataclass(frozen=True, eq=False)
class FlagClass:
    p: int
    k: int
    quotient_types: tuple[Partition, ...]
    subquotient_types: dict = field(repr=False)
    dim_increments: tuple[int, ...]
    canonical_label: str
    certified: bool
    aut_order: int | None = None
    canonical_form: tuple | None = field(default=None, repr=False)
    model_chain: tuple | None = field(default=None, repr=False)

    @property
    def top(self) -> Partition:
        return self.quotient_types[-1] if self.quotient_types else Partition()

    @property
    def rank(self) -> int:
        return self.top.rank

    def order(self, j: int | None = None) -> int:
        """|G_j| (default j = k); |G_0| = 1."""
        j = self.k if j is None else j
        return 1 if j == 0 else self.quotient_types[j - 1].order(self.p)

    def __eq__(self, other):
        if not isinstance(other, FlagClass):
            return NotImplemented
        return (self.p, self.canonical_label) == (other.p, other.canonical_label)

    def __hash__(self):
        return hash((self.p, self.canonical_label))

    def __str__(self):
        return self.canonical_label

    @classmethod
    def from_label(cls, label: str, p: int, bound: ClassificationBound = DEFAULT_BOUND) -> "FlagClass":
        return parse_label(label, p, bound)


def _fmt_types(types) -> str:
    return "|".join(str(t) for t in types)


def _profile_string(k, quotient_types, table) -> str:
    pairs = [(j, i) for j in range(1, k + 1) for i in range(j + 1, k + 1)]
    return f"k={k};G={_fmt_types(quotient_types)};N={_fmt_types(table[pr] for pr in pairs)}"


class _Model:
    """Cached per-group data: subgroup types and per-profile orbit tables."""

    def __init__(self, group: AbelianPGroup):
        self.A = group
        self.full = np.arange(group.order, dtype=np.int64)
        self._types: dict[bytes, tuple[Partition, Partition]] = {}
        self.orbit_tables: dict[tuple, tuple[list, dict]] = {}

    def types(self, s: np.ndarray) -> tuple[Partition, Partition]:
        """(type of s, type of A/s)."""
        key = s.tobytes()
        t = self._types.get(key)
        if t is None:
            t = (self.A.subgroup_type(s), self.A.quotient_type(self.full, s))
            self._types[key] = t
        return t

    def invariants(self, k: int, chain: Sequence[np.ndarray]):
        levels = [self.full, *chain, self.A.trivial()]
        q_types = tuple(self.A.quotient_type(self.full, levels[i]) for i in range(1, k + 1))
        table = {}
        for j in range(1, k + 1):
            for i in range(j + 1, k + 1):
                table[(j, i)] = self.A.quotient_type(levels[j], levels[i])
        return q_types, table

    def chains(self, k: int, q_types=None, table=None):
        """Yield kernel chains (N_1, ..., N_{k-1}), optionally matching invariants."""
        subs = self.A.subgroups()

        def rec(level, prev_mask, acc):
            if level == k:
                yield list(acc)
                return
            for s in subs:
                if not prev_mask[s].all():
                    continue
                if q_types is not None or table is not None:
                    st, qt = self.types(s)
                    if q_types is not None and qt != q_types[level - 1]:
                        continue
                    if table is not None:
                        if st != table[(level, k)]:
                            continue
                        levels = [self.full, *acc]
                        if any(self.A.quotient_type(levels[j], s) != table[(j, level)] for j in range(1, level)):
                            continue
                mask = np.zeros(self.A.order, dtype=bool)
                mask[s] = True
                acc.append(s)
                yield from rec(level + 1, mask, acc)
                acc.pop()

        yield from rec(1, np.ones(self.A.order, dtype=bool), [])

    def orbit_table(self, k, q_types, table, bound: ClassificationBound):
        """Orbits of chains with the given invariants, sorted by canonical form.

        Returns ``(orbits, members)`` with ``orbits[c] = (canonical_row,
        stabilizer_order, representative_chain)`` and ``members`` mapping a
        chain's serialized row to its orbit index.
        """
        key = (k, q_types, tuple(sorted(table.items())))
        hit = self.orbit_tables.get(key)
        if hit is not None:
            return hit
        n_aut = self.A.aut_count()
        # every N_i is 0 or A: a single chain, fixed by all of Aut(A)
        trivial = all(table[(i, k)].size == 0 or q_types[i - 1].size == 0 for i in range(1, k))
        if not trivial and n_aut * self.A.order > bound.max_work:
            # not cached: a later call may carry a larger bound
            raise BoundExceeded(
                f"Aut of type {self.A.type} has {n_aut} elements acting on {self.A.order}; "
                f"work {n_aut * self.A.order} exceeds {bound.max_work}"
            )
        chains = list(self.chains(k, q_types, table))
        if trivial:
            assert len(chains) == 1
            row = _serialize(chains[0])
            result = ([(tuple(row.tolist()), n_aut, chains[0])], {row.tobytes(): 0})
            self.orbit_tables[key] = result
            return result
        perms = self.A.automorphisms(bound.max_work)
        sizes = [s.size for s in chains[0]]
        found = []
        members: dict[bytes, int] = {}
        for ch in chains:
            row = _serialize(ch)
            if row.tobytes() in members:
                continue
            img = _images(perms, ch)
            uniq = np.unique(img, axis=0)
            oid = len(found)
            for r in uniq:
                members[r.tobytes()] = oid
            canon = uniq[0]  # np.unique sorts rows lexicographically
            found.append((tuple(canon.tolist()), n_aut // len(uniq), _split(canon, sizes)))
        order = sorted(range(len(found)), key=lambda i: found[i][0])
        remap = {old: new for new, old in enumerate(order)}
        orbits = [found[i] for i in order]
        members = {r: remap[o] for r, o in members.items()}
        assert sum(n_aut // st for _, st, _ in orbits) == len(chains)
        result = (orbits, members)
        self.orbit_tables[key] = result
        return result


def _serialize(chain: Sequence[np.ndarray]) -> np.ndarray:
    if not chain:
        return np.zeros(0, dtype=np.int32)
    return np.concatenate([np.sort(s).astype(np.int32) for s in chain])


def _images(perms: np.ndarray, chain: Sequence[np.ndarray]) -> np.ndarray:
    parts = [np.sort(perms[:, s], axis=1) for s in chain]
    return np.concatenate(parts, axis=1).astype(np.int32)


def _split(row: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    out, lo = [], 0
    for n in sizes:
        out.append(row[lo : lo + n].astype(np.int64))
        lo += n
    return out


@lru_cache(maxsize=None)
def _model(p: int, parts: tuple[int, ...]) -> _Model:
    return _Model(standard_group(p, parts))


def _dims(p, q_types):
    sizes = [0] + [t.size for t in q_types]
    return tuple(b - a for a, b in zip(sizes, sizes[1:]))


def _top_class(p, parts) -> FlagClass:
    """k = 1: the class is the isomorphism type of G_1 alone."""
    q_types = (Partition(tuple(parts)),)
    profile = _profile_string(1, q_types, {})
    return FlagClass(p, 1, q_types, {}, _dims(p, q_types), f"{profile};c=0", True,
                     aut_count(p, q_types[0]), (), ())


def _class_from_chain(model: _Model, p, k, chain, bound) -> FlagClass:
    if k == 1:
        return _top_class(p, model.A.parts)
    q_types, table = model.invariants(k, chain)
    profile = _profile_string(k, q_types, table)
    orbits, members = model.orbit_table(k, q_types, table, bound)
    row = _serialize(chain)
    c = members[row.tobytes()]
    canon, stab, rep = orbits[c]
    return FlagClass(
        p, k, q_types, table, _dims(p, q_types), f"{profile};c={c}", True,
        stab, canon, tuple(tuple(s.tolist()) for s in rep),
    )


def classify_in_model(
    p: int,
    k: int,
    parts: Sequence[int],
    levels: Sequence[Sequence[Sequence[int]]],
    bound: ClassificationBound = DEFAULT_BOUND,
) -> FlagClass:
    """Classify the flag whose top module has type ``parts`` (decreasing).

    ``levels[i - 1]`` lists generators of ``N_i`` (i = 1..k-1) as coordinate
    vectors in the standard model.  Raises :class:`BoundExceeded` when the
    top module is too large to classify.
    """
    parts = tuple(parts)
    if len(levels) != k - 1:
        raise ValueError(f"expected {k - 1} kernel levels, got {len(levels)}")
    if k == 1:
        return _top_class(p, parts)
    bound.check_order(Partition(parts).order(p))
    model = _model(p, parts)
    chain = [model.A.span(gens) for gens in levels]
    for inner, outer in zip(chain[1:], chain):
        if not np.isin(inner, outer).all():
            raise ValueError("kernel chain is not nested")
    return _class_from_chain(model, p, k, chain, bound)


def _uncertified_class(chain: ModuleChain) -> FlagClass:
    q_types = tuple(cokernel_type(h)[0] for h in chain.lattices)
    profile = f"k={chain.k};G={_fmt_types(q_types)}"
    return FlagClass(
        chain.modulus.p, chain.k, q_types, {}, _dims(chain.modulus.p, q_types),
        f"{profile};uncertified", False,
    )


def flag_from_chain(chain: ModuleChain, bound: ClassificationBound = DEFAULT_BOUND) -> FlagClass:
    """Isomorphism class of ``Z_p^n / chain`` (certified only when exact)."""
    mod = chain.modulus
    k, n, e = chain.k, chain.n, mod.e
    top = chain.lattices[-1]
    snf = smith_normal_form(top)
    diag = list(snf.diag_valuations) + [e] * (n - len(snf.diag_valuations))
    if max(diag, default=0) >= e:
        return _uncertified_class(chain)
    pos = [t for t in range(n - 1, -1, -1) if diag[t] > 0]
    parts = [diag[t] for t in pos]
    left = snf.left_transform
    levels = []
    for h in chain.lattices[:-1]:
        gens = []
        for col in h.columns():
            w = left.apply(col)
            gens.append([w[t] % mod.p ** diag[t] for t in pos])
        levels.append(gens)
    return classify_in_model(mod.p, k, parts, levels, bound)


def flag_from_matrices(
    matrices: Sequence[MatZpe], bound: ClassificationBound = DEFAULT_BOUND
) -> tuple[ModuleChain, FlagClass]:
    """The chain ``im(M_1 ... M_i)`` and the class of its cokernel flag."""
    if not matrices:
        raise ValueError("need at least one matrix")
    mod = matrices[0].modulus
    for a, b in zip(matrices, matrices[1:]):
        if a.cols != b.rows:
            raise ValueError(f"shape mismatch: {a.rows}x{a.cols} then {b.rows}x{b.cols}")
        if b.modulus != mod:
            raise ValueError("matrices over different moduli")
    prods = [matrices[0]]
    for m in matrices[1:]:
        prods.append(prods[-1] @ m)
    chain = ModuleChain(mod, matrices[0].rows, tuple(howell_span(x) for x in prods))
    return chain, flag_from_chain(chain, bound)


def _as_class(x, bound) -> FlagClass:
    if isinstance(x, ModuleChain):
        return flag_from_chain(x, bound)
    if isinstance(x, FlagClass):
        return x
    raise TypeError(f"cannot interpret {type(x).__name__} as a flag")


def flags_isomorphic(a, b, bound: ClassificationBound = DEFAULT_BOUND) -> bool:
    """Exact isomorphism test: invariants first, then canonical orbit forms."""
    fa, fb = _as_class(a, bound), _as_class(b, bound)
    if not (fa.certified and fb.certified):
        raise ValueError("isomorphism is only decided for certified flags")
    if (fa.p, fa.k) != (fb.p, fb.k):
        return False
    if fa.quotient_types != fb.quotient_types or fa.subquotient_types != fb.subquotient_types:
        return False
    return fa.canonical_form == fb.canonical_form


def aut_order(flag) -> int:
    """|Aut(G)|: automorphisms of G_k preserving every kernel N_i."""
    f = _as_class(flag, DEFAULT_BOUND)
    if not f.certified or f.aut_order is None:
        raise ValueError("automorphism count needs a certified, classified flag")
    return f.aut_order


def surjection_count(n: int, G: Partition, p: int) -> int:
    """|Surj(Z_p^n, G)| = |G|^n prod_{i=n-r+1}^{n} (1 - p^-i)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    r = G.rank
    if r > n:
        return 0
    val = Fraction(G.order(p)) ** n
    for i in range(n - r + 1, n + 1):
        val *= 1 - Fraction(1, p**i)
    assert val.denominator == 1
    return int(val)


def injective_flag_count(n: int, flag: FlagClass) -> int:
    """Number of lattice chains in Z_p^n whose quotient flag is ``flag``."""
    total = surjection_count(n, flag.top, flag.p)
    q, r = divmod(total, aut_order(flag))
    if r:
        raise ArithmeticError(
            f"{total} surjections not divisible by |Aut| = {flag.aut_order} for {flag.canonical_label}"
        )
    return q


def _classes_for_group(p, k, parts, bound) -> list[FlagClass]:
    if k == 1:
        return [_top_class(p, parts)]
    bound.check_order(Partition(tuple(parts)).order(p))
    model = _model(p, parts)
    out, seen = [], set()
    for chain in model.chains(k):
        q_types, table = model.invariants(k, chain)
        key = (q_types, tuple(sorted(table.items())))
        if key in seen:
            continue
        seen.add(key)
        orbits, _ = model.orbit_table(k, q_types, table, bound)
        for _, _, rep in orbits:
            out.append(_class_from_chain(model, p, k, rep, bound))
    return out


def enumerate_flag_classes(
    p: int,
    k: int,
    max_exp: int,
    max_rank: int | None = None,
    bound: ClassificationBound = DEFAULT_BOUND,
    min_exp: int = 0,
) -> list[FlagClass]:
    """Every k-flag class with ``p^min_exp <= |G_k| <= p^max_exp``, sorted by label."""
    out = []
    for size in range(min_exp, max_exp + 1):
        for lam in partitions(size, max_rank=max_rank):
            out.extend(_classes_for_group(p, k, lam.parts, bound))
    out.sort(key=lambda f: (f.top.size, f.canonical_label))
    return out


def parse_label(label: str, p: int, bound: ClassificationBound = DEFAULT_BOUND) -> FlagClass:
    """Resolve a (possibly abbreviated) label to a flag class.

    ``k`` and ``G`` are required; ``N`` and ``c`` may be omitted when the
    remaining fields single out one class.
    """
    fields = {}
    for part in label.strip().split(";"):
        if not part:
            continue
        name, sep, value = part.partition("=")
        if not sep or name not in ("k", "G", "N", "c"):
            raise ValueError(f"bad label field {part!r} in {label!r}")
        fields[name] = value
    if "k" not in fields or "G" not in fields:
        raise ValueError(f"label {label!r} needs both k= and G= fields")
    try:
        k = int(fields["k"])
        q_types = tuple(Partition.parse(x) for x in fields["G"].split("|"))
    except ValueError as err:
        raise ValueError(f"label {label!r}: {err}; partitions are written like 2,1 or 0") from None
    if len(q_types) != k:
        raise ValueError(f"label {label!r} lists {len(q_types)} modules for k={k}")
    top = q_types[-1]
    candidates = []
    for f in _classes_for_group(p, k, top.parts, bound):
        if f.quotient_types != q_types:
            continue
        prof, _, c = f.canonical_label.rpartition(";c=")
        if "N" in fields and prof.split(";N=")[1] != fields["N"]:
            continue
        if "c" in fields and c != fields["c"]:
            continue
        candidates.append(f)
    if not candidates:
        raise ValueError(f"no flag class matches label {label!r} at p={p}")
    if len(candidates) > 1:
        names = ", ".join(f.canonical_label for f in candidates)
        raise ValueError(f"label {label!r} is ambiguous at p={p}; candidates: {names}")
    return candidates[0]


def profile_collisions(p: int, k: int, max_exp: int, max_rank: int | None = None,
                       bound: ClassificationBound = DEFAULT_BOUND) -> dict[str, int]:
    """Invariant profiles realised by more than one isomorphism class.

    Maps each colliding profile (label minus its ``c`` index) to its number
    of classes, so the separating power of the invariants can be measured.
    """
    counts: dict[str, int] = {}
    for f in enumerate_flag_classes(p, k, max_exp, max_rank, bound):
        prof = f.canonical_label.rpartition(";c=")[0]
        counts[prof] = counts.get(prof, 0) + 1
    return {prof: n for prof, n in counts.items() if n > 1}
