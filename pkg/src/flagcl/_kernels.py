"""Compiled fixed-width kernels (moduli p^e <= 2^31, so products fit in int64).

These mirror the reference routines in :mod:`flagcl.ring` and are checked
against them in the test suite.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def _val(x, p, e):
    if x == 0:
        return e
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


@nb.njit(cache=True, nogil=True)
def _inv(a, m):
    t, newt, r, newr = 0, 1, m, a % m
    while newr != 0:
        quo = r // newr
        t, newt = newt, t - quo * newt
        r, newr = newr, r - quo * newr
    if t < 0:
        t += m
    return t


@nb.njit(cache=True, nogil=True)
def howell_rows_fixed(buf, nvec, width, p, e, out):
    """Howell form of the first ``nvec`` rows of ``buf`` over Z/p^e.

    ``buf`` needs room for ``nvec + width`` rows and is clobbered; the pivot
    rows are written to ``out`` (zeroed by the caller).  Returns their number.
    """
    q = p**e
    alive = np.zeros(buf.shape[0], dtype=np.bool_)
    nrows = nvec
    for i in range(nvec):
        for j in range(width):
            buf[i, j] %= q
            if buf[i, j] != 0:
                alive[i] = True
    npiv = 0
    piv = np.empty(width, dtype=np.int64)
    for j in range(width):
        best = e
        bi = -1
        for idx in range(nrows):
            if alive[idx] and buf[idx, j] != 0:
                v = _val(buf[idx, j], p, e)
                if v < best:
                    best = v
                    bi = idx
                    if v == 0:
                        break
        if bi < 0:
            continue
        pv = p**best
        inv = _inv(buf[bi, j] // pv, q)
        for c in range(width):
            piv[c] = buf[bi, c] * inv % q
        alive[bi] = False
        for idx in range(nrows):
            if alive[idx]:
                f = buf[idx, j] // pv
                if f != 0:
                    nz = False
                    for c in range(width):
                        buf[idx, c] = (buf[idx, c] - f * piv[c]) % q
                        if buf[idx, c] != 0:
                            nz = True
                    alive[idx] = nz
        if best > 0:
            s = p ** (e - best)
            nz = False
            for c in range(width):
                buf[nrows, c] = piv[c] * s % q
                if buf[nrows, c] != 0:
                    nz = True
            if nz:
                alive[nrows] = True
                nrows += 1
        for t in range(npiv):
            f = out[t, j] // pv
            if f != 0:
                for c in range(width):
                    out[t, c] = (out[t, c] - f * piv[c]) % q
        for c in range(width):
            out[npiv, c] = piv[c]
        npiv += 1
    return npiv


@nb.njit(cache=True, nogil=True)
def span_keys(mats, r, c, p, e, out):
    """Howell rows of the column spans of a batch of r x c matrices (flattened row-major)."""
    buf = np.zeros((c + r + 1, r), dtype=np.int64)
    hout = np.zeros((r, r), dtype=np.int64)
    for b in range(mats.shape[0]):
        for j in range(c):
            for i in range(r):
                buf[j, i] = mats[b, i * c + j]
        for a in range(c, buf.shape[0]):
            for i in range(r):
                buf[a, i] = 0
        for a in range(r):
            for i in range(r):
                hout[a, i] = 0
        howell_rows_fixed(buf, c, r, p, e, hout)
        for a in range(r):
            for i in range(r):
                out[b, a * r + i] = hout[a, i]
    return out


@nb.njit(cache=True, nogil=True)
def flag_keys(ents, shapes, starts, n, p, e, keys):
    """Per-sample flag keys for batches of matrix tuples.

    ``ents[b]`` holds the k matrices of sample b row-major at ``starts``.
    Row layout of ``keys``: status (0 certified, 1 uncertified), the
    decreasing parts of G_k padded to n, then for each kernel N_1..N_{k-1}
    an n x n block with its Howell rows in G_k embedded in (Z/p^m)^r,
    where m is the largest part.
    """
    q = p**e
    k = shapes.shape[0]
    cmax = 0
    for i in range(k):
        cmax = max(cmax, shapes[i, 1])
    B = ents.shape[0]
    prods = np.zeros((k, n, cmax), dtype=np.int64)
    work = np.zeros((n, cmax), dtype=np.int64)
    left = np.zeros((n, n), dtype=np.int64)
    tmp = np.zeros(n, dtype=np.int64)
    diag = np.zeros(n, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    parts = np.zeros(n, dtype=np.int64)
    buf = np.zeros((cmax + n + 1, n), dtype=np.int64)
    hout = np.zeros((n, n), dtype=np.int64)
    for b in range(B):
        keys[b, :] = 0
        c0 = shapes[0, 1]
        for r in range(n):
            for c in range(c0):
                prods[0, r, c] = ents[b, starts[0] + r * c0 + c]
        for i in range(1, k):
            ri = shapes[i, 0]
            ci = shapes[i, 1]
            for r in range(n):
                for c in range(ci):
                    acc = 0
                    for l in range(ri):
                        acc = (acc + prods[i - 1, r, l] * ents[b, starts[i] + l * ci + c]) % q
                    prods[i, r, c] = acc
        ck = shapes[k - 1, 1]
        for r in range(n):
            for c in range(ck):
                work[r, c] = prods[k - 1, r, c]
            for c in range(n):
                left[r, c] = 1 if r == c else 0
        m = min(n, ck)
        for t in range(n):
            diag[t] = e
        for t in range(m):
            best = e
            bi = -1
            bj = -1
            for i in range(t, n):
                for j in range(t, ck):
                    if work[i, j] != 0:
                        v = _val(work[i, j], p, e)
                        if v < best:
                            best = v
                            bi = i
                            bj = j
                            if v == 0:
                                break
                if best == 0:
                    break
            if bi < 0:
                break
            if bi != t:
                for c in range(ck):
                    work[t, c], work[bi, c] = work[bi, c], work[t, c]
                for c in range(n):
                    left[t, c], left[bi, c] = left[bi, c], left[t, c]
            if bj != t:
                for r in range(n):
                    work[r, t], work[r, bj] = work[r, bj], work[r, t]
            pv = p**best
            inv = _inv(work[t, t] // pv, q)
            for c in range(ck):
                work[t, c] = work[t, c] * inv % q
            for c in range(n):
                left[t, c] = left[t, c] * inv % q
            for i in range(t + 1, n):
                f = work[i, t] // pv
                if f != 0:
                    for c in range(ck):
                        work[i, c] = (work[i, c] - f * work[t, c]) % q
                    for c in range(n):
                        left[i, c] = (left[i, c] - f * left[t, c]) % q
            for c in range(t + 1, ck):
                work[t, c] = 0
            diag[t] = best
        cert = True
        for t in range(n):
            if diag[t] >= e:
                cert = False
        if not cert:
            keys[b, 0] = 1
            continue
        r = 0
        for t in range(n - 1, -1, -1):
            if diag[t] > 0:
                pos[r] = t
                parts[r] = diag[t]
                keys[b, 1 + r] = diag[t]
                r += 1
        if r == 0:
            continue
        top = parts[0]
        for i in range(k - 1):
            ci = shapes[i, 1]
            for c in range(ci):
                for j in range(r):
                    row = pos[j]
                    acc = 0
                    for l in range(n):
                        acc = (acc + left[row, l] * prods[i, l, c]) % q
                    tmp[j] = acc
                for j in range(r):
                    buf[c, j] = (tmp[j] % p ** parts[j]) * p ** (top - parts[j])
            for c in range(ci, buf.shape[0]):
                for j in range(n):
                    buf[c, j] = 0
            for a in range(n):
                for j in range(n):
                    hout[a, j] = 0
            npiv = howell_rows_fixed(buf, ci, r, p, top, hout)
            base = 1 + n + i * n * n
            for a in range(npiv):
                for j in range(r):
                    keys[b, base + a * n + j] = hout[a, j]
    return keys


@nb.njit(cache=True)
def _rank_mod_p(h, a, c, p, work):
    for i in range(a):
        for j in range(c):
            work[i, j] = h[i, j] % p
    rank = 0
    for j in range(c):
        if rank == a:
            break
        piv = -1
        for i in range(rank, a):
            if work[i, j] != 0:
                piv = i
                break
        if piv < 0:
            continue
        for x in range(c):
            work[rank, x], work[piv, x] = work[piv, x], work[rank, x]
        inv = _inv(work[rank, j], p)
        for i in range(rank + 1, a):
            f = work[i, j] * inv % p
            if f != 0:
                for x in range(c):
                    work[i, x] = (work[i, x] - f * work[rank, x]) % p
        rank += 1
    return rank


@nb.njit(cache=True)
def _rank_table(a, c, p):
    """ok[code] for every a x c matrix mod p, column j encoded in digit j of base p^a."""
    P = p**a
    size = P**c
    ok = np.zeros(size, dtype=np.bool_)
    h = np.zeros((max(a, 1), max(c, 1)), dtype=np.int64)
    work = np.zeros((max(a, 1), max(c, 1)), dtype=np.int64)
    for code in range(size):
        x = code
        for j in range(c):
            col = x % P
            x //= P
            for i in range(a):
                h[i, j] = col % p
                col //= p
        ok[code] = _rank_mod_p(h, a, c, p, work) == a
    return ok


@nb.njit(cache=True)
def _column_codes(f, p, q):
    """Code of (f @ v) mod p for every column vector v in (Z/q)^b, in odometer order."""
    a, b = f.shape
    size = 1
    for _ in range(b):
        size *= q
    out = np.zeros(size, dtype=np.int64)
    v = np.zeros(b, dtype=np.int64)
    for idx in range(size):
        x = idx
        for l in range(b - 1, -1, -1):
            v[l] = x % q
            x //= q
        code = 0
        for i in range(a - 1, -1, -1):
            acc = 0
            for l in range(b):
                acc = (acc + f[i, l] * v[l]) % q
            code = code * p + acc % p
        out[idx] = code
    return out


@nb.njit(cache=True)
def surjective_count(f, b, c, p, e):
    """Number of g in Mat_{b x c}(Z/p^e) with f @ g surjective onto (Z/p^e)^a.

    Every g is visited: an odometer runs over the first c - 1 columns of g
    and an inner loop over all values of the last column.  Surjectivity is a
    unit a x a minor, i.e. rank a mod p, looked up in a table indexed by the
    columns of f @ g mod p.
    """
    q = p**e
    a = f.shape[0]
    P = p**a
    ok = _rank_table(a, c, p)
    total = 1
    for _ in range(b * c):
        total *= q
    if c == 0:
        return (1 if ok[0] else 0), total
    cols = _column_codes(f, p, q)
    n_outer = 1
    for _ in range(c - 1):
        n_outer *= cols.shape[0]
    w_last = 1
    for _ in range(c - 1):
        w_last *= P
    count = 0
    for outer in range(n_outer):
        x = outer
        base = 0
        w = 1
        for j in range(c - 1):
            base += cols[x % cols.shape[0]] * w
            x //= cols.shape[0]
            w *= P
        for v in range(cols.shape[0]):
            if ok[base + cols[v] * w_last]:
                count += 1
    return count, total


@nb.njit(cache=True)
def rank_mod_p_batch(mats, p):
    """Ranks over F_p of a batch of square matrices, shape (B, n, n)."""
    B, n = mats.shape[0], mats.shape[1]
    out = np.zeros(B, dtype=np.int64)
    h = np.zeros((max(n, 1), max(n, 1)), dtype=np.int64)
    work = np.zeros((max(n, 1), max(n, 1)), dtype=np.int64)
    for b in range(B):
        for i in range(n):
            for j in range(n):
                h[i, j] = mats[b, i, j]
        out[b] = _rank_mod_p(h, n, n, p, work)
    return out


@nb.njit(cache=True)
def inverse_mod_p_batch(mats, p):
    """Inverses over F_p of a batch of invertible matrices (Gauss-Jordan)."""
    B, n = mats.shape[0], mats.shape[1]
    out = np.zeros((B, n, n), dtype=np.int64)
    aug = np.zeros((n, 2 * n), dtype=np.int64)
    for b in range(B):
        for i in range(n):
            for j in range(n):
                aug[i, j] = mats[b, i, j] % p
                aug[i, n + j] = 1 if i == j else 0
        for col in range(n):
            piv = -1
            for i in range(col, n):
                if aug[i, col] != 0:
                    piv = i
                    break
            if piv < 0:
                raise ValueError("singular matrix")
            for x in range(2 * n):
                aug[col, x], aug[piv, x] = aug[piv, x], aug[col, x]
            inv = _inv(aug[col, col], p)
            for x in range(2 * n):
                aug[col, x] = aug[col, x] * inv % p
            for i in range(n):
                if i != col and aug[i, col] != 0:
                    f = aug[i, col]
                    for x in range(2 * n):
                        aug[i, x] = (aug[i, x] - f * aug[col, x]) % p
        for i in range(n):
            for j in range(n):
                out[b, i, j] = aug[i, n + j]
    return out
