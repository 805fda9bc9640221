"""Katok-type entropy: separated counts after discarding less than delta of the mass."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .._kernels import greedy_keep
from ..counting import EXACT_BUDGET, exact_packing
from ..errors import DomainError
from ..semigroup import DEFAULT_WORD_BUDGET, Word, bowen_distance_matrix, bowen_embedding
from ..semigroup import sample_word_array
from .growth import fit_slope, usable_window, SATURATION


@dataclass(frozen=True)
class KatokParams:
    deltas: tuple
    epsilons: tuple
    method: str = "auto"

    def __post_init__(self):
        if any(not 0 < d < 1 for d in self.deltas):
            raise DomainError("delta must lie in (0, 1)")
        if any(not e > 0 for e in self.epsilons):
            raise DomainError("epsilon must be positive")
        if self.method not in ("auto", "exact", "isolation"):
            raise DomainError(f"unknown removal method {self.method!r}")


def _maximal_removals(weights, delta):
    """Index sets R with mass < delta to which no further point can be added."""
    N = len(weights)
    order = list(range(N))
    out = []

    def rec(start, chosen, mass):
        extended = False
        for i in order[start:]:
            if mass + weights[i] < delta:
                extended = True
                rec(i + 1, chosen + [i], mass + weights[i])
        if not extended:
            rest = [i for i in order if i not in chosen]
            if all(mass + weights[i] >= delta for i in rest):
                out.append(tuple(chosen))

    rec(0, [], 0.0)
    return out


def katok_count_exact(cloud, G, w, eps, delta, budget=EXACT_BUDGET):
    """min over E with nu(E) > 1 - delta of the exact packing number of E."""
    D = bowen_distance_matrix(G, w, cloud.coords, cloud.branch)
    best = None
    for R in _maximal_removals(cloud.weights.tolist(), delta):
        keep = np.setdiff1d(np.arange(len(cloud)), R)
        sub = cloud.subset(keep)
        c = exact_packing(sub, G, w, eps, budget, D[np.ix_(keep, keep)]).count
        best = c if best is None else min(best, c)
    return best


def isolation_removal(Y, periodic, weights, delta):
    """Repeatedly drop the point farthest from its nearest remaining neighbour.

    Stops before the removed mass would reach ``delta``; ties go to the lower
    index.  Returns a boolean keep-mask.
    """
    N = len(Y)
    keep = np.ones(N, dtype=bool)
    if N <= 1:
        return keep
    box = np.where(periodic, 1.0, 4.0)
    tree = cKDTree(Y, boxsize=box)
    k = min(N, 9)

    def nn(i):
        kk = k
        while True:
            d, j = tree.query(Y[i], k=kk, p=np.inf)
            d, j = np.atleast_1d(d), np.atleast_1d(j)
            for dd, jj in zip(d, j):
                if jj != i and jj < N and keep[jj]:
                    return float(np.round(dd, 15)), int(jj)
            if kk >= N:
                return math.inf, -1
            kk = min(N, kk * 4)

    d2, j2 = tree.query(Y, k=2, p=np.inf)
    own = j2[:, 0] == np.arange(N)
    # with duplicate points the query may list the other copy first
    d0 = np.round(np.where(own, d2[:, 1], d2[:, 0]), 15)
    nbr = np.where(own, j2[:, 1], j2[:, 0]).astype(np.int64)
    heap = [(-float(d), i) for i, d in enumerate(d0)]
    heapq.heapify(heap)
    removed = 0.0
    while heap:
        negd, i = heapq.heappop(heap)
        if not keep[i]:
            continue
        if not keep[nbr[i]]:
            d, j = nn(i)
            nbr[i] = j
            heapq.heappush(heap, (-d, i))
            continue
        if removed + weights[i] >= delta or keep.sum() <= 1:
            break
        keep[i] = False
        removed += weights[i]
    return keep


def katok_count_isolation(cloud, G, w, eps, delta, keep=None):
    Y, per = bowen_embedding(G, w, cloud.coords, cloud.branch)
    if keep is None:
        keep = isolation_removal(Y, per, cloud.weights, delta)
    return int(greedy_keep(Y[keep], per, eps, G.space.embed_dim).sum())


@dataclass
class _Flags:
    saturated: list


@dataclass
class KatokResult:
    value: float
    table: dict
    log_avg: dict
    method: str
    n_values: list
    saturated: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "value": self.value,
            "method": self.method,
            "n_values": self.n_values,
            "table": [{"epsilon": e, "delta": d, "slope": s}
                      for (e, d), s in sorted(self.table.items(), key=lambda t: (-t[0][0], -t[0][1]))],
        }


def katok_entropy(G, nu, params, n_range, word_budget=DEFAULT_WORD_BUDGET, seed=None, M=64):
    """Slopes of the averaged Katok counts per (eps, delta); value at the smallest pair."""
    if abs(nu.weights.sum() - 1.0) > 1e-12:
        raise DomainError("measure weights must sum to 1")
    method = params.method
    if method == "auto":
        method = "exact" if len(nu) <= EXACT_BUDGET else "isolation"
    n_values = sorted(int(n) for n in n_range)
    words = {}
    for n in n_values:
        if G.p**n <= word_budget:
            ws = list(itertools.product(range(1, G.p + 1), repeat=n))
        else:
            if seed is None:
                raise DomainError("a seed is required for Monte Carlo word sampling")
            ws = [tuple(r) for r in sample_word_array(G.p, n, M, seed).tolist()]
        words[n] = [w[: n - 1] for w in ws]
    memo, removal = {}, {}
    log_avg, table, sat = {}, {}, {}
    for e in params.epsilons:
        for d in params.deltas:
            ys, flags = [], []
            for n in n_values:
                vals = []
                for u in words[n]:
                    key = (u, e, d)
                    if key not in memo:
                        w = Word(u + (1,))
                        if method == "exact":
                            memo[key] = katok_count_exact(nu, G, w, e, d)
                        else:
                            # the removed set depends on (word, delta) only
                            if (u, d) not in removal:
                                Y, per = bowen_embedding(G, w, nu.coords, nu.branch)
                                removal[(u, d)] = isolation_removal(Y, per, nu.weights, d)
                            memo[key] = katok_count_isolation(nu, G, w, e, d, removal[(u, d)])
                    vals.append(memo[key])
                mean = math.fsum(vals) / len(vals)
                ys.append(math.log(mean))
                flags.append(bool(mean >= SATURATION * len(nu)))
            log_avg[(e, d)] = ys
            sat[(e, d)] = flags

            a, b = usable_window(_Flags(flags))
            if b - a < 3:
                # no unsaturated window (e.g. a point mass): fit the whole range
                a, b = 0, len(n_values)
            table[(e, d)] = fit_slope(n_values[a:b], ys[a:b])[0] if b - a >= 2 else 0.0
    e0, d0 = min(params.epsilons), min(params.deltas)
    value = table[(e0, d0)]
    return KatokResult(value, table, log_avg, method, n_values, sat)


def katok_micro_count(cloud, G, w, eps, delta):
    """s_nu(g, eps, delta) by exhaustive removal search (oracle-sized clouds)."""
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    return katok_count_exact(cloud, G, w, eps, delta)
