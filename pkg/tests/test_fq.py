import itertools
from fractions import Fraction

import numpy as np
import pytest

from flagcl.fq import (
    BlockShape,
    BudgetExceeded,
    FqMat,
    SeriesTrunc,
    class_comparison,
    count_block_matrices,
    count_block_matrices_brute,
    euler_coefficients,
    euler_product_partial,
    euler_product_trunc,
    flag_cl_series,
    flag_cl_series_orbits,
    gl_count,
    orbit_enumeration,
    zp_flag_series,
)

F = Fraction


def python_count(shape, q, kind):
    """Pure-Python reference: every block-lower-triangular matrix, tested by powers / determinant."""
    n = shape.n
    blocks = shape.block_of()
    slots = [(r, c) for r in range(n) for c in range(n) if blocks[r] >= blocks[c]]
    count = 0
    for vals in itertools.product(range(q), repeat=len(slots)):
        m = [[0] * n for _ in range(n)]
        for (r, c), v in zip(slots, vals):
            m[r][c] = v
        if kind == "all":
            count += 1
        elif kind == "nilpotent":
            p = m
            for _ in range(n - 1):
                p = [[sum(p[i][t] * m[t][j] for t in range(n)) % q for j in range(n)] for i in range(n)]
            count += n == 0 or not any(any(r) for r in p)
        else:
            count += _det(m, q) != 0
    return count


def _det(m, q):
    m = [r[:] for r in m]
    n, det = len(m), 1
    for t in range(n):
        piv = next((i for i in range(t, n) if m[i][t] % q), None)
        if piv is None:
            return 0
        if piv != t:
            m[t], m[piv] = m[piv], m[t]
            det = -det
        det = det * m[t][t] % q
        inv = pow(m[t][t], -1, q)
        for i in range(t + 1, n):
            f = m[i][t] * inv % q
            m[i] = [(x - f * y) % q for x, y in zip(m[i], m[t])]
    return det % q


def test_count_examples():
    assert count_block_matrices(BlockShape((2,)), 2, "nilpotent") == 4
    assert count_block_matrices(BlockShape((1, 1)), 2, "nilpotent") == 2
    assert count_block_matrices(BlockShape((1, 1)), 2, "invertible") == 2
    assert count_block_matrices(BlockShape((1, 1)), 2, "all") == 8
    for n in range(5):
        assert count_block_matrices(BlockShape((n,)), 3, "all") == 3 ** (n * n)
    with pytest.raises(ValueError):
        count_block_matrices(BlockShape((1,)), 4, "all")
    with pytest.raises(ValueError):
        count_block_matrices(BlockShape((1,)), 2, "unipotent")


def shapes_up_to(total, max_k=3):
    for k in range(1, max_k + 1):
        for s in itertools.product(range(total + 1), repeat=k):
            if sum(s) <= total:
                yield BlockShape(s)


@pytest.mark.parametrize("q", [2, 3])
def test_counts_against_brute_force(q):
    total = 4 if q == 2 else 3
    for shape in shapes_up_to(total):
        for kind in ("nilpotent", "invertible", "all"):
            assert count_block_matrices_brute(shape, q, kind) == count_block_matrices(shape, q, kind), (shape, kind)


@pytest.mark.parametrize("shape,q", [(BlockShape((2, 1)), 2), (BlockShape((1, 1, 1)), 3), (BlockShape((2,)), 3)])
def test_vectorised_brute_matches_python_loop(shape, q):
    for kind in ("nilpotent", "invertible", "all"):
        assert count_block_matrices_brute(shape, q, kind) == python_count(shape, q, kind)


@pytest.mark.parametrize("q,n_max", [(2, 4), (3, 3)])
def test_fine_herstein(q, n_max):
    for n in range(n_max + 1):
        assert count_block_matrices_brute(BlockShape((n,)), q, "nilpotent") == q ** (n * n - n)


def test_orbit_examples():
    orbits = orbit_enumeration(BlockShape((2,)), 2)
    assert [(o.representative.entries, o.size, o.stabilizer) for o in orbits] == [
        ((0, 0, 0, 0), 1, 6),
        ((0, 0, 1, 0), 3, 2),
    ]
    for q in (2, 3, 5):
        (o,) = orbit_enumeration(BlockShape((1,)), q)
        assert o.size == 1 and o.stabilizer == q - 1
    orbits = orbit_enumeration(BlockShape((1, 1)), 2)
    assert sorted((o.size, o.stabilizer) for o in orbits) == [(1, 2), (1, 2)]


@pytest.mark.parametrize("q", [2, 3])
def test_orbit_sums(q):
    for shape in shapes_up_to(3):
        orbits = orbit_enumeration(shape, q)
        nil = count_block_matrices(shape, q, "nilpotent")
        gl = count_block_matrices(shape, q, "invertible")
        assert sum(o.size for o in orbits) == nil
        assert all(o.size * o.stabilizer == gl for o in orbits)
        assert sum((F(1, o.stabilizer) for o in orbits), F(0)) == F(nil, gl)


def test_orbit_budget():
    with pytest.raises(BudgetExceeded):
        orbit_enumeration(BlockShape((4,)), 3, budget=1000)


def test_fqmat_checks_block_support():
    FqMat(2, 2, (0, 0, 1, 0), BlockShape((1, 1)))
    with pytest.raises(ValueError):
        FqMat(2, 2, (0, 1, 0, 0), BlockShape((1, 1)))
    with pytest.raises(ValueError):
        FqMat(2, 1, (2,))


def test_series_examples():
    s = flag_cl_series(2, 2, 3)
    assert s.coefficient((1, 1)) == 1
    assert s.coefficient((0, 0)) == 1
    s1 = flag_cl_series(2, 1, 5)
    for n in range(6):
        assert s1.coefficient((n,)) == F(2 ** (n * n - n), gl_count(n, 2))
    e = euler_product_trunc(2, 1, 1)
    assert e.coefficient((1,)) == 1
    assert euler_product_trunc(3, 2, 0) == SeriesTrunc(2, 0, {(0, 0): 1})
    assert euler_product_trunc(2, 2, 2).coefficient((1, 1)) == 1


def test_euler_coefficients_closed_form():
    for q in (2, 3, 5):
        c = euler_coefficients(q, 8)
        for m, cm in enumerate(c):
            den = 1
            for i in range(1, m + 1):
                den *= q**i - 1
            assert cm == F(q ** (m * (m - 1) // 2), den)


def test_finite_products_converge_from_below():
    full = euler_product_trunc(2, 1, 3)
    prev = None
    for factors in (1, 3, 10, 30):
        part = euler_product_partial(2, 1, 3, factors)
        for m in range(1, 4):
            assert part.coefficient((m,)) < full.coefficient((m,))
            if prev is not None:
                assert part.coefficient((m,)) > prev.coefficient((m,))
        prev = part
    assert euler_product_partial(2, 1, 1, 10).coefficient((1,)) == F(1023, 1024)
    gap = full.coefficient((3,)) - euler_product_partial(2, 1, 3, 30).coefficient((3,))
    assert 0 < gap < F(1, 2**25)


@pytest.mark.parametrize("q", [2, 3])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_flag_series_identity(q, k):
    lhs, rhs = flag_cl_series(q, k, 6), euler_product_trunc(q, k, 6)
    assert lhs.differences(rhs) == {}
    assert lhs == rhs


@pytest.mark.parametrize("q,k", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)])
def test_orbit_series_matches_closed_form(q, k):
    assert flag_cl_series_orbits(q, k, 3) == flag_cl_series(q, k, 3)


def test_series_json_round_trip():
    s = flag_cl_series(3, 2, 3)
    data = s.to_json_dict()
    assert data["1,1"] == "1/4"  # 3 nilpotents over 12 invertibles
    assert SeriesTrunc.from_json_dict(2, 3, data) == s
    with pytest.raises(ValueError):
        SeriesTrunc(1, 1, {(2,): 1})


def test_series_product():
    a = SeriesTrunc(1, 3, {(0,): 1, (1,): 1})
    b = a * a
    assert b.to_json_dict() == {"0": "1/1", "1": "2/1", "2": "1/1"}


@pytest.mark.parametrize("k,D", [(1, 4), (2, 3), (3, 2)])
def test_cross_world_aggregate(k, D):
    assert zp_flag_series(2, k, D) == flag_cl_series(2, k, D)


def test_class_comparison_is_reported():
    rows = class_comparison(2, 2, 2)
    assert len(rows) == 6
    for row in rows:
        auts, stabs = row["zp_aut_orders"], row["fq_stabilizer_orders"]
        assert sum(F(1, a) for a in auts) == sum(F(1, s) for s in stabs)
