"""Concrete finite abelian p-groups in standard form ``A = Z/p^l1 + ... + Z/p^lr``.

Elements are encoded as mixed-radix integers so that subgroups are sorted
index arrays and automorphisms are permutation arrays.  Everything here is
brute force and meant for groups of a few thousand elements at most.
"""

from __future__ import annotations

from functools import lru_cache
from math import prod

import numpy as np

from .ring import Partition


class BoundExceeded(RuntimeError):
    """Raised when a classification step would exceed its configured budget."""


def aut_count(p: int, lam: Partition) -> int:
    """|Aut| of the group of type ``lam``: p^(sum of squared conjugate parts) times phi factors."""
    conj = lam.conjugate()
    top = sum(c * c for c in conj)
    mult: dict[int, int] = {}
    for x in lam.parts:
        mult[x] = mult.get(x, 0) + 1
    num = p**top
    den = 1
    for m in mult.values():
        for j in range(1, m + 1):
            num *= p**j - 1
            den *= p**j
    assert num % den == 0
    return num // den


class AbelianPGroup:
    def __init__(self, p: int, parts: tuple[int, ...]):
        self.p = p
        self.parts = tuple(parts)
        self.type = Partition(self.parts)
        self.r = len(self.parts)
        self.moduli = np.array([p**x for x in self.parts], dtype=np.int64)
        self.order = int(prod(int(m) for m in self.moduli))
        w = [1] * self.r
        for j in range(self.r - 2, -1, -1):
            w[j] = w[j + 1] * int(self.moduli[j + 1])
        self.weights = np.array(w, dtype=np.int64)
        if self.r:
            grid = np.indices(tuple(int(m) for m in self.moduli)).reshape(self.r, -1).T
        else:
            grid = np.zeros((1, 0), dtype=np.int64)
        self.coords = np.ascontiguousarray(grid, dtype=np.int64)
        self._aut = None
        self._subgroups = None

    def index(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64) % self.moduli
        return (c * self.weights).sum(axis=-1)

    def element_order_exp(self, g) -> int:
        g = np.asarray(g, dtype=np.int64) % self.moduli
        best = 0
        for x, lam in zip(g.tolist(), self.parts):
            if x:
                v = 0
                while x % self.p == 0:
                    x //= self.p
                    v += 1
                best = max(best, lam - v)
        return best

    def trivial(self) -> np.ndarray:
        return np.zeros(1, dtype=np.int64)

    def join(self, subgroup: np.ndarray, g) -> np.ndarray:
        """Subgroup generated by ``subgroup`` and the element with coordinates ``g``."""
        g = np.asarray(g, dtype=np.int64) % self.moduli
        n = self.p ** self.element_order_exp(g)
        if n == 1:
            return subgroup
        base = self.coords[subgroup]
        mult = np.arange(n, dtype=np.int64)[:, None] * g[None, :]
        allc = base[None, :, :] + mult[:, None, :]
        return np.unique(self.index(allc.reshape(-1, self.r)))

    def span(self, gens) -> np.ndarray:
        s = self.trivial()
        for g in gens:
            s = self.join(s, g)
        return s

    def scale(self, subgroup: np.ndarray, s: int) -> np.ndarray:
        return np.unique(self.index(self.coords[subgroup] * self.p**s))

    def quotient_type(self, big: np.ndarray, small: np.ndarray) -> Partition:
        """Type of ``big / small`` for subgroups ``small`` contained in ``big``."""
        p = self.p
        sizes = []
        x = big
        while True:
            inter = np.intersect1d(x, small, assume_unique=True).size
            q = x.size // inter
            sizes.append(q)
            if q == 1:
                break
            x = self.scale(x, 1)
        conj = []
        for a, b in zip(sizes, sizes[1:]):
            ratio, k = a // b, 0
            while ratio > 1:
                ratio //= p
                k += 1
            conj.append(k)
        return Partition.from_conjugate(conj)

    def subgroup_type(self, subgroup: np.ndarray) -> Partition:
        return self.quotient_type(subgroup, self.trivial())

    def aut_count(self) -> int:
        return aut_count(self.p, self.type)

    def automorphism_matrices(self) -> list[np.ndarray]:
        """Every automorphism as an r x r matrix whose row j is the image of generator j."""
        p, r = self.p, self.r
        if r == 0:
            return [np.zeros((0, 0), dtype=np.int64)]
        cand = []
        for lam in self.parts:
            ok = np.all((self.coords * p**lam) % self.moduli == 0, axis=1)
            cand.append(self.coords[ok])
        out = []

        def reduce(vec, basis):
            vec = vec.copy()
            for piv, b in basis:
                if vec[piv]:
                    vec = (vec - vec[piv] * b) % p
            return vec

        def rec(j, basis, chosen):
            if j == r:
                out.append(np.array(chosen, dtype=np.int64))
                return
            for g in cand[j]:
                red = reduce(g % p, basis)
                nz = np.flatnonzero(red)
                if nz.size == 0:
                    continue
                piv = int(nz[0])
                red = red * pow(int(red[piv]), -1, p) % p
                rec(j + 1, basis + [(piv, red)], chosen + [g])

        rec(0, [], [])
        return out

    def automorphisms(self, max_work: int | None = None) -> np.ndarray:
        """Automorphisms as permutations of element indices, shape (|Aut|, |A|)."""
        if self._aut is None:
            n_aut = self.aut_count()
            if max_work is not None and n_aut * self.order > max_work:
                raise BoundExceeded(
                    f"Aut of type {self.type} has {n_aut} elements acting on {self.order}; "
                    f"work {n_aut * self.order} exceeds {max_work}"
                )
            mats = self.automorphism_matrices()
            assert len(mats) == n_aut, (len(mats), n_aut)
            perms = np.empty((n_aut, self.order), dtype=np.int32)
            if self.r == 0:
                perms[:] = 0
            else:
                for lo in range(0, n_aut, 2048):
                    stack = np.stack(mats[lo : lo + 2048])
                    img = np.einsum("nr,arc->anc", self.coords, stack)
                    perms[lo : lo + len(stack)] = self.index(img)
            self._aut = perms
        return self._aut

    def subgroups(self) -> list[np.ndarray]:
        """All subgroups, ordered by size then by element list."""
        if self._subgroups is None:
            cyclic = {}
            for g in self.coords:
                c = self.join(self.trivial(), g)
                cyclic.setdefault(c.tobytes(), (c, g))
            gens = [g for _, g in cyclic.values()]
            seen = {self.trivial().tobytes(): self.trivial()}
            frontier = [self.trivial()]
            while frontier:
                nxt = []
                for s in frontier:
                    mask = np.zeros(self.order, dtype=bool)
                    mask[s] = True
                    for g in gens:
                        if mask[self.index(g)]:
                            continue
                        t = self.join(s, g)
                        key = t.tobytes()
                        if key not in seen:
                            seen[key] = t
                            nxt.append(t)
                frontier = nxt
            subs = list(seen.values())
            subs.sort(key=lambda s: (s.size, s.tolist()))
            self._subgroups = subs
        return self._subgroups


@lru_cache(maxsize=None)
def standard_group(p: int, parts: tuple[int, ...]) -> AbelianPGroup:
    return AbelianPGroup(p, parts)


def gaussian_binomial(n: int, k: int, p: int) -> int:
    if k < 0 or k > n:
        return 0
    num = den = 1
    for i in range(k):
        num *= p ** (n - i) - 1
        den *= p ** (i + 1) - 1
    return num // den


def subgroup_count(p: int, lam: Partition, mu: Partition) -> int:
    """Number of subgroups of type ``mu`` in the group of type ``lam`` (Birkhoff)."""
    lc, mc = list(lam.conjugate()), list(mu.conjugate())
    if len(mc) > len(lc):
        return 0
    mc += [0] * (len(lc) - len(mc) + 1)
    lc += [0]
    total = 1
    for i in range(len(lc) - 1):
        if mc[i] > lc[i]:
            return 0
        total *= p ** (mc[i + 1] * (lc[i] - mc[i]))
        total *= gaussian_binomial(lc[i] - mc[i + 1], mc[i] - mc[i + 1], p)
    return total


def sub_partitions(lam: Partition):
    """Partitions mu with mu_i <= lam_i for all i (types of subgroups of lam)."""

    def rec(i, cap):
        if i == len(lam.parts):
            yield ()
            return
        for x in range(min(cap, lam.parts[i]), -1, -1):
            if x == 0:
                yield ()
                continue
            for tail in rec(i + 1, x):
                yield (x,) + tail

    for parts in rec(0, lam.parts[0] if lam.parts else 0):
        yield Partition(parts)
