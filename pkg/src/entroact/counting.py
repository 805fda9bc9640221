"""Separated and spanning counts under the Bowen metric of a word.

Separation is strict (d_g > eps) and covering uses open balls (d_g < eps).
All distances are rounded to 1e-15 before comparison so the greedy kernels
and the exact oracles resolve ties identically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import pandas as pd

from ._kernels import greedy_keep
from .errors import CapacityError, DomainError, InvariantViolation
from .semigroup import bowen_distance_matrix, bowen_embedding, signature_cells
from .spaces import canonical_round, embedded_distance

EXACT_BUDGET = 24
SETCOVER_LIMIT = 2048
# relative shrink used when a maximal separated set must certify open balls
_OPEN_SHRINK = 1.0 - 1e-9


@dataclass(frozen=True)
class PackingResult:
    count: int
    certificate: tuple
    method: str
    epsilon: float
    word: object = None


@dataclass(frozen=True)
class CellSignatureTable:
    cell_width: float
    occupied: int
    populations: tuple = field(default=(), repr=False)


def _check(eps, w):
    if not eps > 0:
        raise DomainError("epsilon must be positive")
    if w.n < 1:
        raise DomainError("counting needs a word of length >= 1")


def _greedy_indices(cloud, G, w, eps):
    Y, per = bowen_embedding(G, w, cloud.coords, cloud.branch)
    keep = greedy_keep(Y, per, eps, G.space.embed_dim)
    return np.nonzero(keep)[0]


def max_separated_greedy(cloud, G, w, eps):
    """Greedy maximal eps-separated subset in canonical order."""
    _check(eps, w)
    if len(cloud) == 0:
        return PackingResult(0, (), "greedy", eps, w)
    idx = _greedy_indices(cloud, G, w, eps)
    return PackingResult(len(idx), tuple(int(i) for i in idx), "greedy", eps, w)


def min_spanning_greedy(cloud, G, w, eps, limit=SETCOVER_LIMIT):
    """Greedy set cover by open eps-balls; maximal-separated certificate past ``limit``."""
    _check(eps, w)
    N = len(cloud)
    if N == 0:
        return PackingResult(0, (), "greedy", eps, w)
    if N > limit:
        idx = _greedy_indices(cloud, G, w, eps * _OPEN_SHRINK)
        return PackingResult(len(idx), tuple(int(i) for i in idx), "greedy-maximal", eps, w)
    cover = bowen_distance_matrix(G, w, cloud.coords, cloud.branch) < eps
    chosen = greedy_set_cover(cover)
    return PackingResult(len(chosen), tuple(sorted(chosen)), "greedy", eps, w)


def greedy_set_cover(cover):
    """Greedy cover of the columns of a symmetric boolean matrix; lowest index wins ties."""
    uncovered = np.ones(len(cover), dtype=bool)
    gain = cover.sum(axis=1)
    chosen = []
    while uncovered.any():
        c = int(np.argmax(gain))
        chosen.append(c)
        new = uncovered & cover[c]
        uncovered &= ~new
        gain -= cover[:, new].sum(axis=1)
    return chosen


def _masks(adj):
    return [sum(1 << int(j) for j in np.nonzero(row)[0]) for row in adj]


def _popcount(x):
    return bin(x).count("1")


def _max_independent(nbr, cand):
    """Maximum independent set of the induced graph on bitmask ``cand``."""

    @lru_cache(maxsize=None)
    def solve(c):
        if c == 0:
            return 0
        # vertices of degree <= 1 can always be taken
        best_v, best_deg = -1, -1
        s = c
        while s:
            v = (s & -s).bit_length() - 1
            s &= s - 1
            deg = _popcount(nbr[v] & c)
            if deg <= 1:
                return (1 << v) | solve(c & ~(1 << v) & ~nbr[v])
            if deg > best_deg:
                best_v, best_deg = v, deg
        v = best_v
        a = (1 << v) | solve(c & ~(1 << v) & ~nbr[v])
        b = solve(c & ~(1 << v))
        return a if _popcount(a) >= _popcount(b) else b

    return solve(cand)


def _bits(x):
    out = []
    while x:
        v = (x & -x).bit_length() - 1
        out.append(v)
        x &= x - 1
    return tuple(out)


def _budget(N, budget):
    if N > budget:
        raise CapacityError(
            f"cloud of {N} points exceeds the exact-oracle budget {budget}",
            hint="use the greedy counts or a smaller cloud",
        )


def exact_packing(cloud, G, w, eps, budget=EXACT_BUDGET, D=None):
    """Maximum eps-separated subset (maximum independent set of the conflict graph)."""
    _check(eps, w)
    N = len(cloud)
    _budget(N, budget)
    if N == 0:
        return PackingResult(0, (), "exact", eps, w)
    if D is None:
        D = bowen_distance_matrix(G, w, cloud.coords, cloud.branch)
    conflict = D <= eps
    np.fill_diagonal(conflict, False)
    best = _max_independent(tuple(_masks(conflict)), (1 << N) - 1)
    cert = _bits(best)
    return PackingResult(len(cert), cert, "exact", eps, w)


def _min_cover(sets, universe):
    """Minimum number of the bitmask ``sets`` whose union contains ``universe``."""
    N = len(sets)
    covering = [[i for i in range(N) if sets[i] >> e & 1] for e in range(N)]
    best = [N + 1, ()]
    maxsize = max(_popcount(s) for s in sets)

    def rec(unc, chosen):
        if unc == 0:
            if len(chosen) < best[0]:
                best[0], best[1] = len(chosen), tuple(sorted(chosen))
            return
        lb = -(-_popcount(unc) // maxsize)
        if len(chosen) + lb >= best[0]:
            return
        # branch on the uncovered element with the fewest covering sets
        e = min(_bits(unc), key=lambda k: (len(covering[k]), k))
        opts = sorted(covering[e], key=lambda i: (-_popcount(sets[i] & unc), i))
        for i in opts:
            rec(unc & ~sets[i], chosen + [i])

    rec(universe, [])
    return best[1]


def exact_covering(cloud, G, w, eps, budget=EXACT_BUDGET, D=None):
    """Minimum cover of the cloud by open eps-balls centred at cloud points."""
    _check(eps, w)
    N = len(cloud)
    _budget(N, budget)
    if N == 0:
        return PackingResult(0, (), "exact", eps, w)
    if D is None:
        D = bowen_distance_matrix(G, w, cloud.coords, cloud.branch)
    cert = _min_cover(tuple(_masks(D < eps)), (1 << N) - 1)
    return PackingResult(len(cert), cert, "exact", eps, w)


def refine_labels(labels, cells):
    """Split the classes of ``labels`` by the integer rows of ``cells``."""
    key = labels.astype(np.int64)
    for k in range(cells.shape[1]):
        col = cells[:, k] - cells[:, k].min()
        key = key * (int(col.max()) + 1) + col
        key = pd.factorize(key, sort=False)[0].astype(np.int64)
    return key


def quantize(Y, cell_width):
    return np.floor(Y / cell_width).astype(np.int64)


def signature_covering_count(cloud, G, w, cell_width, populations=False):
    """Number of distinct quantized Bowen orbits (one cell per prefix image)."""
    if w.n < 1:
        raise DomainError("signature counting needs a word of length >= 1")
    if not cell_width > 0:
        raise DomainError("cell width must be positive")
    if len(cloud) == 0:
        return CellSignatureTable(cell_width, 0, ())
    cells = signature_cells(G, w, cloud.coords, cloud.branch, cell_width)
    labels = np.zeros(len(cloud), dtype=np.int64)
    for j in range(cells.shape[1]):
        labels = refine_labels(labels, cells[:, j, :])
    occupied = int(labels.max()) + 1
    pops = tuple(int(c) for c in np.sort(np.bincount(labels))[::-1]) if populations else ()
    return CellSignatureTable(cell_width, occupied, pops)


def verify_separated(cloud, G, w, eps, cert):
    D = bowen_distance_matrix(G, w, cloud.coords[list(cert)], cloud.branch[list(cert)])
    np.fill_diagonal(D, np.inf)
    return bool(np.all(D > eps))


def verify_spanning(cloud, G, w, eps, cert, strict=True):
    Y, per = bowen_embedding(G, w, cloud.coords, cloud.branch)
    C = Y[list(cert)]
    D = canonical_round(embedded_distance(Y[:, None, :], C[None, :, :], per))
    near = D < eps if strict else D <= eps
    return bool(np.all(near.any(axis=1)))


@dataclass(frozen=True)
class SandwichReport:
    word: object
    epsilon: float
    b_exact: int
    s_exact: int
    b_half_exact: int
    greedy_sep: int
    greedy_span: int
    method: str = "exact"

    def as_tuple(self):
        return (self.b_exact, self.s_exact, self.b_half_exact)

    def row(self):
        return [str(self.word), format(self.epsilon, ".17g"), self.b_exact, self.s_exact,
                self.b_half_exact, self.greedy_sep, self.greedy_span, self.method]


AUDIT_HEADER = ["word", "epsilon", "b_exact", "s_exact", "b_half_exact", "greedy_sep",
                "greedy_span", "method"]


def sandwich_audit(cloud, G, w, eps, budget=EXACT_BUDGET):
    """Exact b(eps) <= s(eps) <= b(eps/2) plus the greedy brackets; raises on violation."""
    _check(eps, w)
    _budget(len(cloud), budget)
    D = bowen_distance_matrix(G, w, cloud.coords, cloud.branch)
    b = exact_covering(cloud, G, w, eps, budget, D).count
    s = exact_packing(cloud, G, w, eps, budget, D).count
    bh = exact_covering(cloud, G, w, eps / 2, budget, D).count
    gs = max_separated_greedy(cloud, G, w, eps).count
    gc = min_spanning_greedy(cloud, G, w, eps).count
    rep = SandwichReport(w, eps, b, s, bh, gs, gc)
    if not b <= s <= bh:
        raise InvariantViolation(f"sandwich violated: b={b}, s={s}, b(eps/2)={bh}")
    if not b <= gs <= s:
        raise InvariantViolation(f"greedy separated {gs} outside [{b}, {s}]")
    if gc < b:
        raise InvariantViolation(f"greedy spanning {gc} below exact covering {b}")
    return rep


def write_audit_csv(reports, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(AUDIT_HEADER)
        for r in reports:
            wr.writerow(r.row())
