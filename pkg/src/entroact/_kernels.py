"""Compiled inner loops."""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _close(Y, i, j, periodic, eps):
    for k in range(Y.shape[1]):
        d = abs(Y[i, k] - Y[j, k])
        if periodic[k] and d > 0.5:
            d = 1.0 - d
        if np.rint(d * 1e15) / 1e15 > eps:
            return False
    return True


@nb.njit(cache=True)
def greedy_separated(Y, periodic, eps, hcols, ncell):
    """Sequential greedy eps-separated subset of the rows of ``Y`` (sup metric).

    Row i is kept iff it is farther than ``eps`` from every kept row.  Kept
    rows are bucketed by a grid of ``ncell`` cells (width >= eps) on the
    ``hcols`` coordinates, so only the 3^h neighbouring buckets are scanned.
    """
    N = Y.shape[0]
    h = hcols.shape[0]
    total = 1
    for _ in range(h):
        total *= ncell
    head = -np.ones(total, np.int64)
    nxt = -np.ones(N, np.int64)
    keep = np.zeros(N, np.bool_)
    cell = np.empty(h, np.int64)
    nvals = np.empty((h, 3), np.int64)
    ncount = np.empty(h, np.int64)
    idx = np.empty(h, np.int64)
    for i in range(N):
        for a in range(h):
            v = int(Y[i, hcols[a]] * ncell)
            if v >= ncell:
                v = ncell - 1
            if v < 0:
                v = 0
            cell[a] = v
            cnt = 0
            for o in (-1, 0, 1):
                u = v + o
                if periodic[hcols[a]]:
                    u %= ncell
                elif u < 0 or u >= ncell:
                    continue
                dup = False
                for q in range(cnt):
                    if nvals[a, q] == u:
                        dup = True
                if not dup:
                    nvals[a, cnt] = u
                    cnt += 1
            ncount[a] = cnt
            idx[a] = 0
        conflict = False
        while True:
            key = 0
            for a in range(h):
                key = key * ncell + nvals[a, idx[a]]
            j = head[key]
            while j >= 0:
                if _close(Y, i, j, periodic, eps):
                    conflict = True
                    break
                j = nxt[j]
            if conflict:
                break
            a = h - 1
            while a >= 0:
                idx[a] += 1
                if idx[a] < ncount[a]:
                    break
                idx[a] = 0
                a -= 1
            if a < 0:
                break
        if not conflict:
            keep[i] = True
            key = 0
            for a in range(h):
                key = key * ncell + cell[a]
            nxt[i] = head[key]
            head[key] = i
    return keep


@nb.njit(cache=True)
def open_cover(Y, periodic, eps):
    """Symmetric boolean matrix of rounded sup distance < eps."""
    N = Y.shape[0]
    out = np.zeros((N, N), np.bool_)
    for i in range(N):
        out[i, i] = True
        for j in range(i + 1, N):
            ok = True
            for k in range(Y.shape[1]):
                d = abs(Y[i, k] - Y[j, k])
                if periodic[k] and d > 0.5:
                    d = 1.0 - d
                if np.rint(d * 1e15) / 1e15 >= eps:
                    ok = False
                    break
            if ok:
                out[i, j] = True
                out[j, i] = True
    return out


def hash_columns(m, block, periodic):
    """Up to three hashing coordinates taken from the last prefix block."""
    start = max(0, m - block)
    cols = list(range(start, m))
    # prefer genuine coordinates over a 0/1 branch flag
    cols.sort(key=lambda c: (not periodic[c], -c))
    return np.array(sorted(cols[:3]), dtype=np.int64)


def greedy_keep(Y, periodic, eps, block):
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    periodic = np.ascontiguousarray(periodic, dtype=np.bool_)
    if len(Y) == 0:
        return np.zeros(0, dtype=bool)
    hcols = hash_columns(Y.shape[1], block, periodic)
    ncell = max(1, int(np.floor(1.0 / eps))) if eps < 1 else 1
    ncell = min(ncell, 4096 if len(hcols) == 1 else (1024 if len(hcols) == 2 else 128))
    return greedy_separated(Y, periodic, float(eps), hcols, ncell)
