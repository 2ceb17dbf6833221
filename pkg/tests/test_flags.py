import itertools
import random
from fractions import Fraction

import pytest

import flagcl.flags as flags_mod
from flagcl.flags import (
    BoundExceeded,
    ClassificationBound,
    ModuleChain,
    aut_order,
    classify_in_model,
    enumerate_flag_classes,
    flag_from_chain,
    flag_from_matrices,
    flags_isomorphic,
    injective_flag_count,
    parse_label,
    profile_collisions,
    surjection_count,
)
from flagcl.enumerator import _hermite_lattices
from flagcl.groups import aut_count, standard_group
from flagcl.ring import MatZpe, Partition, PrimeModulus, partitions


# -- a small, independent model of finite abelian p-groups -------------------

class Brute:
    """Elements are coordinate tuples; automorphisms are found by exhaustion."""

    def __init__(self, p, parts):
        self.p, self.parts = p, tuple(parts)
        self.mods = [p**x for x in self.parts]
        self.elems = list(itertools.product(*[range(m) for m in self.mods]))

    def add(self, a, b):
        return tuple((x + y) % m for x, y, m in zip(a, b, self.mods))

    def mul(self, c, a):
        return tuple(c * x % m for x, m in zip(a, self.mods))

    def span(self, gens):
        s = {tuple(0 for _ in self.parts)}
        for g in gens:
            s = {self.add(x, self.mul(c, g)) for x in s for c in range(max(self.mods, default=1))}
        return frozenset(s)

    def subgroups(self):
        out = set()
        for r in range(len(self.parts) + 1):
            for gens in itertools.combinations(self.elems, r):
                out.add(self.span(gens))
        return out

    def automorphisms(self):
        r = len(self.parts)
        cand = [[g for g in self.elems if self.mul(m, g) == tuple(0 for _ in g)] for m in self.mods]
        for images in itertools.product(*cand):
            def phi(x, images=images):
                out = tuple(0 for _ in self.parts)
                for c, g in zip(x, images):
                    out = self.add(out, self.mul(c, g))
                return out
            mapping = {x: phi(x) for x in self.elems}
            if len(set(mapping.values())) == len(self.elems):
                yield mapping


def brute_flag_auts(p, parts, chain):
    """Automorphisms of the group preserving every subgroup of ``chain``."""
    g = Brute(p, parts)
    return sum(all({m[x] for x in s} == s for s in chain) for m in g.automorphisms())


def decode(p, parts, idx_sets):
    grp = standard_group(p, tuple(parts))
    return [frozenset(tuple(int(v) for v in grp.coords[i]) for i in s) for s in idx_sets]


# -- examples -----------------------------------------------------------------

def test_flag_from_matrices_examples():
    mod = PrimeModulus(2, 3)
    _, f = flag_from_matrices([MatZpe.diagonal(mod, [2, 1])])
    assert f.quotient_types == (Partition((1,)),) and f.certified

    a = MatZpe.from_rows(mod, [[2]])
    chain, f = flag_from_matrices([a, a])
    assert [c.entries for c in chain.lattices] == [(2,), (4,)]
    assert f.quotient_types == (Partition((1,)), Partition((2,)))
    assert f.dim_increments == (1, 1)

    i2 = MatZpe.identity(mod, 2)
    _, f = flag_from_matrices([i2, i2])
    assert all(t == Partition() for t in f.quotient_types)
    assert aut_order(f) == 1


def test_shape_mismatch_rejected():
    mod = PrimeModulus(2, 2)
    with pytest.raises(ValueError):
        flag_from_matrices([MatZpe.identity(mod, 2), MatZpe.identity(mod, 3)])


def test_isomorphism_examples():
    mod = PrimeModulus(2, 3)
    d = lambda *x: MatZpe.diagonal(mod, list(x))
    ch_a, fa = flag_from_matrices([d(2, 1), d(1, 2)])
    ch_b, fb = flag_from_matrices([d(1, 2), d(2, 1)])
    assert ch_a != ch_b
    assert fa.top == Partition((1, 1)) and fa.quotient_types[0] == Partition((1,))
    assert flags_isomorphic(ch_a, ch_b)
    assert flags_isomorphic(ch_a, ch_a)
    _, fc = flag_from_matrices([d(2, 1), d(2, 1)])
    assert fc.top == Partition((2,))
    assert not flags_isomorphic(fa, fc)


def test_isomorphism_needs_certified_flags():
    mod = PrimeModulus(2, 2)
    z = MatZpe.zeros(mod, 1, 1)
    chain, f = flag_from_matrices([z])
    assert not f.certified and f.canonical_label.endswith("uncertified")
    with pytest.raises(ValueError):
        flags_isomorphic(chain, chain)
    with pytest.raises(ValueError):
        aut_order(f)


def test_aut_examples():
    assert aut_order(parse_label("k=1;G=0", 2)) == 1
    assert aut_order(parse_label("k=1;G=3", 2)) == 4
    assert aut_order(parse_label("k=2;G=1|1", 2)) == 1


@pytest.mark.parametrize("p,max_size", [(2, 4), (3, 3)])
def test_aut_count_against_brute_force(p, max_size):
    for size in range(max_size + 1):
        for lam in partitions(size):
            if lam.rank == max_size and lam.rank > 2:
                continue  # elementary abelian: covered by the GL count below
            brute = sum(1 for _ in Brute(p, lam.parts).automorphisms())
            assert aut_count(p, lam) == brute, lam
    r = max_size
    gl = 1
    for i in range(r):
        gl *= p**r - p**i
    assert aut_count(p, Partition((1,) * r)) == gl


@pytest.mark.parametrize("p,k,max_exp", [(2, 2, 3), (2, 3, 2), (3, 2, 2)])
def test_flag_aut_order_against_brute_force(p, k, max_exp):
    for f in enumerate_flag_classes(p, k, max_exp):
        chain = decode(p, f.top.parts, f.model_chain)
        assert aut_order(f) == brute_flag_auts(p, f.top.parts, chain), f.canonical_label


@pytest.mark.parametrize("p,parts", [(2, (2, 1)), (2, (1, 1, 1)), (3, (1, 1)), (2, (2, 2))])
def test_label_soundness_against_brute_isomorphism(p, parts):
    g = Brute(p, parts)
    subs = sorted(g.subgroups(), key=lambda s: (len(s), sorted(s)))
    auts = list(g.automorphisms())
    labels = {}
    for s in subs:
        gens = [list(x) for x in s]
        labels[s] = classify_in_model(p, 2, parts, [gens]).canonical_label
    for s, t in itertools.combinations_with_replacement(subs, 2):
        iso = any({m[x] for x in s} == t for m in auts)
        assert iso == (labels[s] == labels[t])


def test_three_level_label_soundness():
    p, parts = 2, (2, 1)
    g = Brute(p, parts)
    subs = list(g.subgroups())
    auts = list(g.automorphisms())
    chains = [(a, b) for a in subs for b in subs if b <= a]
    labels = {c: classify_in_model(p, 3, parts, [[list(x) for x in c[0]], [list(x) for x in c[1]]]).canonical_label
              for c in chains}
    for c, d in itertools.combinations(chains, 2):
        iso = any({m[x] for x in c[0]} == d[0] and {m[x] for x in c[1]} == d[1] for m in auts)
        assert iso == (labels[c] == labels[d])


def test_surjection_count_examples():
    assert surjection_count(1, Partition((1,)), 2) == 1
    assert surjection_count(2, Partition((1,)), 2) == 3
    assert surjection_count(1, Partition((1, 1)), 2) == 0
    assert surjection_count(0, Partition(), 2) == 1


@pytest.mark.parametrize("p,parts", [(2, (1,)), (2, (2,)), (2, (1, 1)), (2, (2, 1)), (3, (1,)), (3, (1, 1))])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_surjection_count_brute_force(p, parts, n):
    g = Brute(p, parts)
    full = frozenset(g.elems)
    count = sum(g.span(imgs) == full for imgs in itertools.product(g.elems, repeat=n))
    assert surjection_count(n, Partition(parts), p) == count


def test_injective_flag_count_examples():
    assert injective_flag_count(1, parse_label("k=1;G=1", 2)) == 1
    assert injective_flag_count(2, parse_label("k=1;G=1", 2)) == 3
    assert injective_flag_count(2, parse_label("k=2;G=1|1", 2)) == 3


@pytest.mark.parametrize("p,k,max_exp", [(2, 1, 4), (2, 2, 4), (2, 3, 3), (3, 2, 3)])
def test_class_invariants(p, k, max_exp):
    for f in enumerate_flag_classes(p, k, max_exp):
        assert sum(f.dim_increments) == f.top.size
        for j in range(1, k + 1):
            assert Fraction(f.order(j), f.order(j - 1)) == p ** f.dim_increments[j - 1]
        for (j, i), t in f.subquotient_types.items():
            # N_j / N_i has order |G_i| / |G_j|
            assert t.order(p) * f.order(j) == f.order(i)
        assert parse_label(f.canonical_label, p) == f
        # the integrality check inside injective_flag_count guards aut_order
        for n in range(f.rank, f.rank + 2):
            assert injective_flag_count(n, f) >= 1


def test_dictionary_round_trip():
    rng = random.Random(11)
    p, e, n = 2, 3, 2
    mod = PrimeModulus(p, e)
    lattices = {h for _, h in _hermite_lattices(p, e, n, 2 * (e - 1))}
    seen = 0
    for _ in range(60):
        mats = [MatZpe(mod, n, n, tuple(rng.randrange(mod.q) for _ in range(n * n))) for _ in range(2)]
        chain, f = flag_from_matrices(mats)
        if not f.certified:
            continue
        seen += 1
        assert all(h in lattices for h in chain.lattices)
        again = flag_from_chain(ModuleChain(mod, n, chain.lattices))
        assert again == f
    assert seen > 20


def test_label_parsing():
    f = parse_label("k=1;G=1", 2)
    assert f.canonical_label == "k=1;G=1;N=;c=0"
    with pytest.raises(ValueError):
        parse_label("k=2;G=1", 2)
    with pytest.raises(ValueError):
        parse_label("k=1;G=1;x=3", 2)
    with pytest.raises(ValueError):
        parse_label("k=2;G=2|1", 2)  # G_2 ->> G_1 cannot grow


def test_bound_is_explicit():
    tiny = ClassificationBound(max_order=4)
    with pytest.raises(BoundExceeded):
        classify_in_model(2, 2, (2, 1), [[[1, 0]]], tiny)
    mod = PrimeModulus(2, 5)
    m = MatZpe.diagonal(mod, [4, 2])
    with pytest.raises(BoundExceeded):
        flag_from_matrices([m, m], tiny)


def test_refusal_does_not_stick_to_larger_bounds():
    flags_mod._model.cache_clear()
    narrow = ClassificationBound(max_order=2**6, max_work=2**10)
    with pytest.raises(BoundExceeded):
        enumerate_flag_classes(2, 2, 3, max_rank=3, bound=narrow)
    assert enumerate_flag_classes(2, 2, 3, max_rank=3)


def test_no_profile_collisions_at_small_sizes():
    assert profile_collisions(2, 2, 4) == {}
    assert profile_collisions(2, 3, 3) == {}
    assert profile_collisions(3, 2, 3) == {}


def test_profile_collision_is_measured():
    found = profile_collisions(2, 2, 6, max_rank=3)
    assert found == {"k=2;G=2,1|3,2,1;N=2,1": 3}
    classes = [parse_label(f"k=2;G=2,1|3,2,1;N=2,1;c={c}", 2) for c in range(3)]
    for a, b in itertools.combinations(classes, 2):
        assert not flags_isomorphic(a, b)
    # orbit-stabilizer: the three orbits exhaust the chains with this profile
    total = sum(aut_count(2, Partition((3, 2, 1))) // aut_order(f) for f in classes)
    grp = standard_group(2, (3, 2, 1))
    count = 0
    for s in grp.subgroups():
        if s.size == 2**3:
            gens = [grp.coords[i].tolist() for i in s]
            lab = classify_in_model(2, 2, (3, 2, 1), [gens]).canonical_label
            count += lab.startswith("k=2;G=2,1|3,2,1;N=2,1;")
    assert total == count
