"""Exhaustive oracles over Z/p^e.

Nothing here uses the closed forms in :mod:`flagcl.formulas`; the counts are
obtained by running through every matrix tuple, every lattice chain or every
homomorphism and classifying each one.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from ._batch import KeyClassifier, compute_keys, tally_slow
from .flags import DEFAULT_BOUND, ClassificationBound, FlagClass, ModuleChain, flag_from_chain
from .ring import MatZpe, PrimeModulus, cokernel_type, howell_span, span_membership
from .tally import EmpiricalDistribution

DEFAULT_BUDGET = 2**32
CHECKPOINT_EVERY = 2**20


class BudgetExceeded(RuntimeError):
    """The requested enumeration is larger than the allowed budget."""

    def __init__(self, what: str, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"{what} needs {required} cases but the budget is {budget}; "
            f"raise the budget to at least {required} to run it"
        )


def _check_budget(what, required, budget):
    if required > budget:
        raise BudgetExceeded(what, required, budget)


def _check_shapes(shapes):
    shapes = [(int(r), int(c)) for r, c in shapes]
    if not shapes:
        raise ValueError("need at least one matrix shape")
    for (r0, c0), (r1, c1) in zip(shapes, shapes[1:]):
        if c0 != r1:
            raise ValueError(f"shapes {r0}x{c0} and {r1}x{c1} cannot be multiplied")
    return shapes


def _digits(idx: np.ndarray, q: int, width: int) -> np.ndarray:
    """Base-q digits, most significant first (row-major odometer order)."""
    out = np.empty((len(idx), width), dtype=np.int64)
    x = idx.copy()
    for j in range(width - 1, -1, -1):
        out[:, j] = x % q
        x //= q
    return out


def _span_classes(r: int, c: int, p: int, e: int):
    """Distinct column spans of all r x c matrices mod p^e, as r x r Howell
    matrices (row-major) with multiplicities."""
    q = p**e
    total = q ** (r * c)
    reps, counts = {}, {}
    step = 2**16
    for lo in range(0, total, step):
        idx = np.arange(lo, min(total, lo + step), dtype=np.int64)
        mats = _digits(idx, q, r * c)
        out = np.zeros((len(mats), r * r), dtype=np.int64)
        _kernels.span_keys(mats, r, c, p, e, out)
        uniq, cnt = np.unique(out, axis=0, return_counts=True)
        for u, n in zip(uniq, cnt):
            key = u.tobytes()
            counts[key] = counts.get(key, 0) + int(n)
            reps.setdefault(key, u)
    keys = sorted(reps)
    h = np.array([reps[kk].reshape(r, r).T.reshape(-1) for kk in keys], dtype=np.int64)
    w = np.array([counts[kk] for kk in keys], dtype=np.int64)
    assert int(w.sum()) == total
    return h, w


def _load_checkpoint(path: Path, params: dict):
    if not path.exists():
        return 0, EmpiricalDistribution()
    data = json.loads(path.read_text())
    if data.get("params") != params:
        raise ValueError(f"checkpoint {path} belongs to a different enumeration")
    return int(data["next_prefix"]), EmpiricalDistribution.from_dict(data["tally"])


def _save_checkpoint(path: Path, params: dict, next_prefix: int, dist: EmpiricalDistribution):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps({"params": params, "next_prefix": next_prefix, "tally": dist.to_dict()}, sort_keys=True))
    os.replace(tmp, path)


def enumerate_matrix_tuples(
    p: int,
    e: int,
    shapes: Sequence[tuple[int, int]],
    budget: int = DEFAULT_BUDGET,
    group_last: bool = True,
    checkpoint: str | os.PathLike | None = None,
    bound: ClassificationBound = DEFAULT_BOUND,
) -> EmpiricalDistribution:
    """Exact tally of cok(M_1, ..., M_k) over every tuple of matrices mod p^e.

    Tuples are visited in odometer order (entries row-major, matrices in
    chain order).  With ``group_last`` the last matrix is replaced by one
    representative per column-span class, weighted by the class size; the
    images im(M_1 ... M_i) and hence the flag are unchanged.  ``checkpoint``
    names a JSON file updated every 2^20 tuples; an existing file for the
    same parameters is resumed from.
    """
    mod = PrimeModulus(p, e)
    shapes = _check_shapes(shapes)
    q, k, n = mod.q, len(shapes), shapes[0][0]
    n_entries = sum(r * c for r, c in shapes)
    total = q**n_entries
    _check_budget("matrix-tuple enumeration", total, budget)
    pre_len = n_entries - shapes[-1][0] * shapes[-1][1]
    n_prefix = q**pre_len
    rk, ck = shapes[-1]

    if group_last and mod.fast:
        last, weights = _span_classes(rk, ck, p, e)
        run_shapes = shapes[:-1] + [(rk, rk)]
    else:
        last = _digits(np.arange(q ** (rk * ck), dtype=np.int64), q, rk * ck) if mod.fast else None
        weights = None
        run_shapes = shapes

    params = {"p": p, "e": e, "shapes": [list(s) for s in shapes], "group_last": bool(group_last)}
    path = Path(checkpoint) if checkpoint is not None else None
    start, dist = (0, EmpiricalDistribution()) if path is None else _load_checkpoint(path, params)

    if not mod.fast:
        # reference path with Python integers, one tuple at a time
        rows = (np.array(t, dtype=object) for t in product(range(q), repeat=n_entries))
        out = tally_slow(rows, shapes, mod, bound)
        out.check()
        assert out.total == total
        return out

    clf = KeyClassifier(p, k, n, bound)
    per_prefix = len(last)
    block = max(1, 2**16 // per_prefix)
    tuples_per_prefix = q ** (rk * ck)
    since = 0
    lo = start
    while lo < n_prefix:
        hi = min(n_prefix, lo + block)
        pre = _digits(np.arange(lo, hi, dtype=np.int64), q, pre_len)
        ents = np.concatenate([np.repeat(pre, per_prefix, axis=0), np.tile(last, (hi - lo, 1))], axis=1)
        keys = compute_keys(ents, run_shapes, n, p, e)
        w = None if weights is None else np.tile(weights, hi - lo)
        clf.tally(keys, w, into=dist)
        since += (hi - lo) * tuples_per_prefix
        lo = hi
        if path is not None and (since >= CHECKPOINT_EVERY or lo == n_prefix):
            _save_checkpoint(path, params, lo, dist)
            since = 0
    dist.check()
    assert dist.total == total, (dist.total, total)
    return dist


def conditional_step_counts(m1: MatZpe, cols: int | None = None) -> tuple[dict[tuple, int], int]:
    """Fix M_1 and run M_2 over all matrices: counts of each image im(M_1 M_2).

    Keys are the Howell columns of the image; the second value is the number
    of M_2 visited.
    """
    mod = m1.modulus
    if not mod.fast:
        raise ValueError("conditional step enumeration needs p^e <= 2^31")
    p, e, q = mod.p, mod.e, mod.q
    n, r = m1.rows, m1.cols
    c = r if cols is None else cols
    total = q ** (r * c)
    a = np.array(m1.entries, dtype=np.int64).reshape(n, r)
    counts: dict[tuple, int] = {}
    step = 2**15
    for lo in range(0, total, step):
        idx = np.arange(lo, min(total, lo + step), dtype=np.int64)
        m2 = _digits(idx, q, r * c).reshape(-1, r, c)
        prods = np.einsum("ij,bjk->bik", a, m2) % q
        out = np.zeros((len(prods), n * n), dtype=np.int64)
        _kernels.span_keys(prods.reshape(len(prods), -1), n, c, p, e, out)
        uniq, cnt = np.unique(out, axis=0, return_counts=True)
        for u, m in zip(uniq, cnt):
            h = tuple(tuple(int(x) for x in row) for row in u.reshape(n, n) if row.any())
            counts[h] = counts.get(h, 0) + int(m)
    return counts, total


def _hermite_lattices(p: int, e: int, n: int, max_index_exp: int):
    """Every lattice L with p^(e-1) Z_p^n <= L <= Z_p^n and [Z_p^n : L] <= p^max_index_exp,
    as the Howell form of its image mod p^e.

    Lattices are produced from their unique upper-triangular Hermite bases:
    diagonal p^(d_j), entries above the diagonal reduced mod the diagonal of
    their row.
    """
    mod = PrimeModulus(p, e)
    floor = [tuple(p ** (e - 1) if i == j else 0 for i in range(n)) for j in range(n)]
    out = []
    for d in product(range(e), repeat=n):
        if sum(d) > max_index_exp:
            continue
        slots = [(r, j) for j in range(n) for r in range(j)]
        for vals in product(*[range(p ** d[r]) for r, _ in slots]):
            cols = []
            above = dict(zip(slots, vals))
            for j in range(n):
                cols.append(tuple(p ** d[j] if i == j else above.get((i, j), 0) for i in range(n)))
            h = howell_span(MatZpe.from_columns(mod, cols, n))
            if all(span_membership(h, v) for v in floor):
                out.append((sum(d), h))
    return out


def _contains(outer: MatZpe, inner: MatZpe) -> bool:
    return all(span_membership(outer, v) for v in inner.columns())


def enumerate_submodule_flags(
    p: int,
    n: int,
    k: int,
    target: FlagClass | None = None,
    e: int | None = None,
    max_exp: int | None = None,
    bound: ClassificationBound = DEFAULT_BOUND,
    budget: int = 2**20,
):
    """Count chains H_k <= ... <= H_1 of subgroups of (Z/p^e)^n containing
    p^(e-1)(Z/p^e)^n, by the class of their quotient flag.

    With ``target`` the number of chains whose flag is isomorphic to it is
    returned; otherwise a dict label -> count over all chains with
    ``|G_k| <= p^max_exp``.  The default precision is one more than the
    largest part of the target (or ``max_exp + 1``).
    """
    if target is not None:
        if not target.certified:
            raise ValueError("target flag must be certified")
        if target.k != k or target.p != p:
            raise ValueError("target does not match (p, k)")
        max_exp = target.top.size
        need_e = (target.top.parts[0] if target.top.parts else 0) + 1
        e = need_e if e is None else e
        if e < need_e:
            raise ValueError(f"precision e={e} too small for parts of {target.top}")
    else:
        if max_exp is None:
            raise ValueError("give a target flag or max_exp")
        e = max_exp + 1 if e is None else e
    mod = PrimeModulus(p, e)
    n_hnf = sum(p ** sum(d[r] * (n - 1 - r) for r in range(n)) for d in product(range(e), repeat=n))
    _check_budget("lattice enumeration", n_hnf, budget)
    lattices = _hermite_lattices(p, e, n, max_exp)
    order = sorted(range(len(lattices)), key=lambda i: lattices[i][0])
    lat = [lattices[i][1] for i in order]
    expo = [lattices[i][0] for i in order]
    types = [cokernel_type(h)[0] for h in lat]
    want = None if target is None else target.quotient_types
    tally: dict[str, int] = {}
    count = 0

    def rec(chain_idx):
        nonlocal count
        level = len(chain_idx)
        if level == k:
            chain = ModuleChain(mod, n, tuple(lat[i] for i in chain_idx))
            flag = flag_from_chain(chain, bound)
            assert flag.certified
            if target is None:
                tally[flag.canonical_label] = tally.get(flag.canonical_label, 0) + 1
            elif flag.canonical_label == target.canonical_label:
                count += 1
            return
        prev = chain_idx[-1] if chain_idx else None
        for i in range(len(lat)):
            if want is not None and types[i] != want[level]:
                continue
            if prev is not None and (expo[i] < expo[prev] or not _contains(lat[prev], lat[i])):
                continue
            rec(chain_idx + [i])

    rec([])
    return tally if target is None else count


def projection(a: int, b: int) -> np.ndarray:
    """The coordinate projection Z^b -> Z^a onto the first a coordinates."""
    f = np.zeros((a, b), dtype=np.int64)
    f[np.arange(a), np.arange(a)] = 1
    return f


def enumerate_hom_surjectivity(a: int, b: int, c: int, p: int, e: int, f=None,
                               budget: int = DEFAULT_BUDGET) -> tuple[int, int]:
    """(number of g in Hom(Z^c, Z^b) mod p^e with f g surjective onto (Z/p^e)^a, total).

    ``f`` defaults to the projection onto the first a coordinates.
    """
    if not 0 <= a <= b or c < 0:
        raise ValueError("need 0 <= a <= b and c >= 0")
    mod = PrimeModulus(p, e)
    total = mod.q ** (b * c)
    _check_budget("homomorphism enumeration", total, budget)
    if not mod.fast:
        raise ValueError("homomorphism enumeration needs p^e <= 2^31")
    f = projection(a, b) if f is None else np.asarray(f, dtype=np.int64) % mod.q
    if f.shape != (a, b):
        raise ValueError(f"f must be {a}x{b}")
    count, tot = _kernels.surjective_count(np.ascontiguousarray(f), b, c, p, e)
    assert tot == total
    return int(count), int(total)


@dataclass(frozen=True)
class PrecisionRow:
    e: int
    uncertified: int
    total: int


def uncertified_by_precision(p: int, shapes, precisions: Sequence[int],
                             budget: int = DEFAULT_BUDGET) -> list[PrecisionRow]:
    """Uncertified counts of full enumerations at several precisions."""
    rows = []
    for e in precisions:
        d = enumerate_matrix_tuples(p, e, shapes, budget=budget)
        rows.append(PrecisionRow(e, d.uncertified_count, d.total))
    return rows


def tuple_count(p: int, e: int, shapes) -> int:
    return (p**e) ** sum(r * c for r, c in _check_shapes(shapes))


__all__ = [
    "BudgetExceeded",
    "PrecisionRow",
    "conditional_step_counts",
    "enumerate_hom_surjectivity",
    "enumerate_matrix_tuples",
    "enumerate_submodule_flags",
    "projection",
    "tuple_count",
    "uncertified_by_precision",
]
