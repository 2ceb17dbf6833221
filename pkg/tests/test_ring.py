import itertools
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sympy import Matrix, ZZ
from sympy.matrices.normalforms import smith_normal_form as sympy_snf

from flagcl import _kernels
from flagcl.ring import (
    MatZpe,
    Partition,
    PrimeModulus,
    cokernel_type,
    howell_rows,
    howell_span,
    smith_normal_form,
    span_index_exponent,
    span_membership,
    unit_determinant,
    val_and_unit,
    valuation,
)


def random_matrix(rng, mod, rows, cols):
    return MatZpe(mod, rows, cols, tuple(rng.randrange(mod.q) for _ in range(rows * cols)))


@st.composite
def matrices(draw, max_n=3):
    p = draw(st.sampled_from([2, 3, 5]))
    e = draw(st.integers(1, 3))
    rows = draw(st.integers(0, max_n))
    cols = draw(st.integers(0, max_n))
    mod = PrimeModulus(p, e)
    ents = draw(st.lists(st.integers(0, mod.q - 1), min_size=rows * cols, max_size=rows * cols))
    return MatZpe(mod, rows, cols, tuple(ents))


def test_modulus_rejects_composites_and_bad_precision():
    with pytest.raises(ValueError):
        PrimeModulus(4, 2)
    with pytest.raises(ValueError):
        PrimeModulus(2, 0)
    assert PrimeModulus(3, 2).q == 9


@pytest.mark.parametrize(
    "x,p,e,expected", [(0, 2, 3, (3, 1)), (12, 2, 4, (2, 3)), (9 % 9, 3, 2, (2, 1)), (7, 7, 2, (1, 1))]
)
def test_val_and_unit_examples(x, p, e, expected):
    assert val_and_unit(x, PrimeModulus(p, e)) == expected


@given(st.sampled_from([2, 3, 5]), st.integers(1, 4), st.data())
def test_val_and_unit_reconstructs(p, e, data):
    mod = PrimeModulus(p, e)
    x = data.draw(st.integers(0, mod.q - 1))
    v, u = val_and_unit(x, mod)
    assert 0 <= v <= e
    assert (u * p**v - x) % mod.q == 0
    assert u % p != 0


def test_val_and_unit_rejects_non_residue():
    with pytest.raises(ValueError):
        val_and_unit(8, PrimeModulus(2, 3))


def test_partition_basics():
    lam = Partition((2, 1, 1))
    assert lam.size == 4 and lam.rank == 3 and lam.order(3) == 81
    assert lam.conjugate() == (3, 1)
    assert Partition.from_conjugate(lam.conjugate()) == lam
    assert str(Partition()) == "0" and Partition.parse("0") == Partition()
    with pytest.raises(ValueError):
        Partition((1, 2))


def test_snf_examples():
    mod = PrimeModulus(2, 3)
    assert smith_normal_form(MatZpe.diagonal(mod, [2, 3])).diag_valuations == (0, 1)
    assert smith_normal_form(MatZpe.zeros(mod, 2, 2)).diag_valuations == (3, 3)
    assert smith_normal_form(MatZpe.identity(mod, 3)).diag_valuations == (0, 0, 0)


def _check_snf(m):
    mod = m.modulus
    res = smith_normal_form(m)
    d = res.diag_valuations
    assert len(d) == min(m.rows, m.cols)
    assert list(d) == sorted(d)
    diag = MatZpe.diagonal(mod, [mod.p**v % mod.q for v in d], rows=m.rows, cols=m.cols)
    assert res.left_transform @ m @ res.right_transform == diag
    assert unit_determinant(res.left_transform) % mod.p != 0
    assert unit_determinant(res.right_transform) % mod.p != 0
    return res


@pytest.mark.parametrize("p,e,n", [(2, 2, 2), (2, 3, 3), (3, 2, 2), (3, 2, 3), (5, 1, 3)])
def test_snf_validity_random(p, e, n):
    rng = random.Random(p * 100 + e * 10 + n)
    mod = PrimeModulus(p, e)
    for _ in range(1000):
        _check_snf(random_matrix(rng, mod, n, n))


@given(matrices())
def test_snf_validity_rectangular(m):
    _check_snf(m)


@given(matrices())
def test_snf_matches_integer_oracle(m):
    # cok of M over Z/p^e is cok of [M | p^e I] over Z, so sympy's integer SNF is an independent check.
    mod = m.modulus
    if m.rows == 0:
        return
    big = Matrix(m.rows, m.cols, list(m.entries)).row_join(mod.q * Matrix.eye(m.rows))
    snf = sympy_snf(big, domain=ZZ)
    factors = [abs(int(snf[i, i])) for i in range(m.rows)]
    expected = sorted(valuation(f % mod.q, mod) if f % mod.q else mod.e for f in factors)
    got = list(smith_normal_form(m).diag_valuations) + [mod.e] * (m.rows - min(m.rows, m.cols))
    assert sorted(got) == expected


def test_snf_howell_consistency():
    rng = random.Random(5)
    mod = PrimeModulus(2, 3)
    for _ in range(200):
        m = random_matrix(rng, mod, 3, 3)
        res = smith_normal_form(m)
        _, pinv = _inverse(res.left_transform)
        diag = MatZpe.diagonal(mod, [mod.p**v % mod.q for v in res.diag_valuations])
        assert howell_span(pinv @ diag) == howell_span(m)


def _inverse(m):
    sym = Matrix(m.rows, m.cols, list(m.entries)).inv_mod(m.modulus.q)
    inv = MatZpe(m.modulus, m.rows, m.cols, tuple(int(x) for x in sym))
    return m, inv


def test_cokernel_type_examples():
    mod = PrimeModulus(2, 3)
    assert cokernel_type(MatZpe.diagonal(mod, [2, 1]), 2) == (Partition((1,)), True)
    assert cokernel_type(MatZpe.zeros(PrimeModulus(2, 2), 2, 2), 2) == (Partition((2, 2)), False)
    assert cokernel_type(MatZpe.from_rows(mod, [[2, 0], [0, 3]]), 2) == (Partition((1,)), True)
    # a missing column contributes a saturated part
    lam, cert = cokernel_type(MatZpe.from_rows(mod, [[1], [0]]), 2)
    assert lam == Partition((3,)) and not cert


def _span_size(m):
    q = m.modulus.q
    cols = m.columns()
    pts = set()
    for coeffs in itertools.product(range(q), repeat=len(cols)):
        pts.add(tuple(sum(c * v[i] for c, v in zip(coeffs, cols)) % q for i in range(m.rows)))
    return len(pts)


@pytest.mark.parametrize("p,e", [(2, 1), (2, 2), (3, 1), (3, 2)])
def test_cokernel_cardinality_brute_force(p, e):
    mod = PrimeModulus(p, e)
    for n in (1, 2):
        for ents in itertools.product(range(mod.q), repeat=n * n):
            m = MatZpe(mod, n, n, ents)
            lam, cert = cokernel_type(m, n)
            index = mod.q**n // _span_size(m)
            if cert:
                assert p**lam.size == index
            assert p ** span_index_exponent(howell_span(m)) == index


def test_howell_examples():
    mod = PrimeModulus(2, 2)
    m = MatZpe.from_columns(mod, [(2, 0), (0, 2)], 2)
    h = howell_span(m)
    assert span_index_exponent(h) == 2
    assert howell_span(h) == h
    assert span_membership(h, (2, 2)) and not span_membership(h, (1, 0))
    assert span_membership(h, (0, 0))
    full = howell_span(MatZpe.identity(mod, 2))
    assert all(span_membership(full, v) for v in itertools.product(range(4), repeat=2))
    with pytest.raises(ValueError):
        span_membership(h, (1,))


def test_howell_needs_closure_rows():
    # (2, 1) mod 4 spans {(0,0),(2,1),(0,2),(2,3)}: the row 2*(2,1) = (0,2) must be listed
    mod = PrimeModulus(2, 2)
    h = howell_span(MatZpe.from_columns(mod, [(2, 1)], 2))
    assert span_membership(h, (0, 2)) and not span_membership(h, (0, 1))
    assert span_index_exponent(h) == 2


@given(matrices(), st.randoms(use_true_random=False))
def test_howell_canonical_under_column_operations(m, rnd):
    mod = m.modulus
    c = m.cols
    if c == 0:
        return
    # random invertible C: unit upper-triangular part times a permutation
    perm = list(range(c))
    rnd.shuffle(perm)
    rows = [[0] * c for _ in range(c)]
    for i in range(c):
        unit = rnd.choice([u for u in range(1, mod.q) if u % mod.p])
        rows[i][i] = unit
        for j in range(i + 1, c):
            rows[i][j] = rnd.randrange(mod.q)
    upper = MatZpe.from_rows(mod, rows)
    pm = MatZpe.from_rows(mod, [[int(perm[i] == j) for j in range(c)] for i in range(c)])
    assert howell_span(m @ upper @ pm) == howell_span(m)


@given(matrices(), st.data())
def test_membership_agrees_with_brute_force(m, data):
    if m.rows == 0 or m.rows > 2 or m.cols > 2:
        return
    mod = m.modulus
    h = howell_span(m)
    cols = m.columns()
    span = {
        tuple(sum(a * v[i] for a, v in zip(coeffs, cols)) % mod.q for i in range(m.rows))
        for coeffs in itertools.product(range(mod.q), repeat=len(cols))
    }
    v = tuple(data.draw(st.integers(0, mod.q - 1)) for _ in range(m.rows))
    assert span_membership(h, v) == (v in span)


@pytest.mark.parametrize("p,e", [(2, 3), (3, 2), (5, 2), (2, 10)])
def test_compiled_howell_matches_reference(p, e):
    rng = np.random.default_rng(p + e)
    q = p**e
    for r, c in [(2, 2), (3, 2), (3, 4), (1, 3)]:
        mats = rng.integers(0, q, size=(50, r * c)).astype(np.int64)
        # bias some batches towards low valuations
        mats[::3] *= p
        mats %= q
        out = np.zeros((50, r * r), dtype=np.int64)
        _kernels.span_keys(mats, r, c, p, e, out)
        for b in range(50):
            cols = [tuple(int(mats[b, i * c + j]) for i in range(r)) for j in range(c)]
            ref = howell_rows(cols, p, e, r)
            got = out[b].reshape(r, r)
            expect = np.zeros((r, r), dtype=np.int64)
            for i, row in enumerate(ref):
                expect[i] = row
            assert (got == expect).all()
