"""Batch classification of matrix tuples via the compiled key kernel.

The kernel reduces each tuple to a small integer key (certification status,
type of G_k, Howell forms of the kernels N_i); distinct keys are classified
once in Python and memoised.
"""

from __future__ import annotations

import threading
from typing import Sequence

import numpy as np

from . import _kernels
from .flags import DEFAULT_BOUND, BoundExceeded, ClassificationBound, classify_in_model, flag_from_matrices
from .ring import MatZpe, PrimeModulus
from .tally import EmpiricalDistribution

UNCERTIFIED = "uncertified"
OVERSIZE = "oversize"


class KeyClassifier:
    """Memoised map from kernel keys to a FlagClass, or an UNCERTIFIED/OVERSIZE marker."""

    def __init__(self, p: int, k: int, n: int, bound: ClassificationBound = DEFAULT_BOUND):
        self.p, self.k, self.n, self.bound = p, k, n, bound
        self.width = 1 + n + (k - 1) * n * n
        self.cache: dict[bytes, object] = {}
        self._lock = threading.Lock()

    def decode(self, key: np.ndarray):
        if key[0]:
            return UNCERTIFIED
        n, p = self.n, self.p
        parts = [int(x) for x in key[1 : 1 + n] if x]
        top = parts[0] if parts else 0
        levels = []
        for i in range(self.k - 1):
            block = key[1 + n + i * n * n : 1 + n + (i + 1) * n * n].reshape(n, n)
            gens = []
            for row in block:
                if not row.any():
                    continue
                gens.append([int(row[j]) // p ** (top - parts[j]) for j in range(len(parts))])
            levels.append(gens)
        try:
            return classify_in_model(p, self.k, parts, levels, self.bound)
        except BoundExceeded:
            return OVERSIZE

    def lookup(self, key: np.ndarray):
        b = key.tobytes()
        hit = self.cache.get(b)
        if hit is None:
            with self._lock:
                hit = self.cache.get(b)
                if hit is None:
                    hit = self.decode(key)
                    self.cache[b] = hit
        return hit

    def tally(self, keys: np.ndarray, weights: np.ndarray | None = None,
              into: EmpiricalDistribution | None = None) -> EmpiricalDistribution:
        dist = into if into is not None else EmpiricalDistribution()
        if len(keys) == 0:
            return dist
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        if weights is None:
            counts = np.bincount(inv, minlength=len(uniq))
        else:
            counts = np.zeros(len(uniq), dtype=object)
            np.add.at(counts, inv, weights.astype(object))
        for key, c in zip(uniq, counts):
            c = int(c)
            if not c:
                continue
            out = self.lookup(key)
            if out is UNCERTIFIED:
                dist.add_uncertified(c)
            elif out is OVERSIZE:
                dist.add_oversize(c)
            else:
                dist.add(out, c)
        return dist


def tuple_layout(shapes: Sequence[tuple[int, int]]):
    """Kernel shape table and entry offsets for the given matrix shapes."""
    shp = np.array(shapes, dtype=np.int64).reshape(-1, 2)
    sizes = shp[:, 0] * shp[:, 1]
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    return shp, starts, int(sizes.sum())


def _width(n: int, k: int) -> int:
    return 1 + n + (k - 1) * n * n


def compute_keys(ents: np.ndarray, shapes, n: int, p: int, e: int) -> np.ndarray:
    shp, starts, _ = tuple_layout(shapes)
    keys = np.zeros((len(ents), _width(n, len(shp))), dtype=np.int64)
    _kernels.flag_keys(np.ascontiguousarray(ents, dtype=np.int64), shp, starts, n, p, e, keys)
    return keys


def classify_slow(ents_row: Sequence[int], shapes, modulus: PrimeModulus, bound=DEFAULT_BOUND):
    """Reference path for one tuple (any modulus size)."""
    mats, lo = [], 0
    for r, c in shapes:
        mats.append(MatZpe(modulus, r, c, tuple(int(x) for x in ents_row[lo : lo + r * c])))
        lo += r * c
    try:
        _, flag = flag_from_matrices(mats, bound)
    except BoundExceeded:
        return OVERSIZE
    return flag if flag.certified else UNCERTIFIED


def tally_slow(rows, shapes, modulus: PrimeModulus, bound=DEFAULT_BOUND, weights=None,
               into: EmpiricalDistribution | None = None) -> EmpiricalDistribution:
    dist = into if into is not None else EmpiricalDistribution()
    for idx, row in enumerate(rows):
        w = 1 if weights is None else int(weights[idx])
        out = classify_slow(row, shapes, modulus, bound)
        if out is UNCERTIFIED:
            dist.add_uncertified(w)
        elif out is OVERSIZE:
            dist.add_oversize(w)
        else:
            dist.add(out, w)
    return dist
