"""Countable compact sets carrying the entropy of a point.

For a point x0 and shrinking balls K_n = B_{r/n}(x0) (r = 1 by default), choose eps_m whose
slopes stay above h(x0) - 1/m on every K_n, then an increasing sequence of
word lengths k_{n,m} with S_k(K_n, eps_m) >= exp(k (h(x0) - 1/m)), and emit
a separated set of K_n for every word of length k_{n,m}.  In sequence mode
(x_i -> x0 with radii r_i -> 0) the construction runs around each x_i inside
B_{r_i/n}(x_i) and the pieces are joined together with x0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..counting import max_separated_greedy
from ..errors import DiagnosticError, DomainError
from ..semigroup import DEFAULT_WORD_BUDGET, Word, sample_word_array
from ..spaces import Point, SampleCloud, canonical_round, distance, embedded_distance, sample_ball
from .growth import entropy_of, estimate_entropy, growth_series


@dataclass
class Level:
    center: int
    m: int
    n: int
    epsilon: float
    k: int
    radius: float
    words: list
    members: list

    def to_json(self):
        return {"center": self.center, "m": self.m, "n": self.n, "epsilon": self.epsilon,
                "k": self.k, "radius": self.radius, "n_words": len(self.words),
                "sizes": [len(s) for s in self.members],
                "points": sorted({int(i) for s in self.members for i in s})}


@dataclass
class CountableSetArtifact:
    x0: Point
    centers: list
    levels: list
    cloud: SampleCloud
    h_x0: list
    re_estimate: float
    limit_points: list
    outside_counts: dict
    provenance: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {
            "x0": list(self.x0.coords),
            "centers": [list(c.coords) for c in self.centers],
            "h_centers": self.h_x0,
            "re_estimate": self.re_estimate,
            "n_points": len(self.cloud),
            "limit_points": [list(p.coords) for p in self.limit_points],
            "outside_counts": {repr(r): c for r, c in sorted(self.outside_counts.items(), reverse=True)},
            "levels": [lv.to_json() for lv in self.levels],
        }


def _words(p, k, word_budget, M, seed):
    if p**k <= word_budget:
        return [tuple(t) for t in itertools.product(range(1, p + 1), repeat=k)]
    if seed is None:
        raise DomainError("a seed is required for Monte Carlo word sampling")
    return [tuple(r) for r in sample_word_array(p, k, M, seed).tolist()]


def _construct(G, c, cap, m_max, n_max, eps_schedule, resolution, k_min, k_max, word_budget,
               seed, M):
    balls = [sample_ball(G.space, c, cap / n, resolution) for n in range(1, n_max + 1)]
    eps_schedule = sorted(eps_schedule, reverse=True)
    ks = range(k_min, k_max + 1)
    series = {(n, e): growth_series(G, balls[n - 1], e, ks, "separated", word_budget, seed, M)
              for n in range(1, n_max + 1) for e in eps_schedule}
    slope = {key: estimate_entropy([s]).value for key, s in series.items()}
    inf_n = {e: min(slope[(n, e)] for n in range(1, n_max + 1)) for e in eps_schedule}
    h0 = max(inf_n.values())
    plan = []
    for m in range(1, m_max + 1):
        target = h0 - 1.0 / m
        eps_m = next(e for e in eps_schedule if inf_n[e] > target)
        prev = k_min - 1
        for n in range(m, n_max + 1):
            s = series[(n, eps_m)]
            k = next((kk for kk, la in zip(s.n_values, s.log_avg)
                      if kk > prev and la >= kk * target), None)
            if k is None:
                raise DiagnosticError(f"no word length in [{prev + 1}, {k_max}] reaches the "
                                      f"growth bound at level m={m}, n={n}",
                                      [{"m": m, "n": n, "epsilon": eps_m, "target": target}])
            plan.append((m, n, eps_m, k))
            prev = k
    return balls, h0, plan


def countable_full_entropy_set(G, x0, m_max, n_max, eps_schedule, resolution, k_min=3, k_max=9,
                               sequence=None, radii=None, tol=0.05, audit_radii=(0.25, 0.1, 0.05),
                               word_budget=DEFAULT_WORD_BUDGET, seed=None, M=64):
    """Truncated countable set with provenance, re-estimate and limit-point audit."""
    if m_max < 1 or n_max < m_max:
        raise DomainError("need 1 <= m_max <= n_max")
    if sequence is None:
        centers, caps = [x0], [1.0]
    else:
        centers = list(sequence)
        caps = list(radii) if radii is not None else [1.0 / (i + 2) for i in range(len(centers))]
        if len(caps) != len(centers):
            raise DomainError("one radius per sequence point is required")
    keys, coords, branch, prov = {}, [], [], []

    def add(pt_c, pt_b, origin):
        key = (int(pt_b),) + tuple(float(v) for v in pt_c)
        if key not in keys:
            keys[key] = len(coords)
            coords.append(pt_c)
            branch.append(pt_b)
            prov.append(origin)
        return keys[key]

    add(np.asarray(x0.coords), x0.branch, {"kind": "x0"})
    for ci, c in enumerate(centers):
        add(np.asarray(c.coords), c.branch, {"kind": "center", "center": ci})
    levels, h_centers, eps_used = [], [], set()
    for ci, (c, cap) in enumerate(zip(centers, caps)):
        balls, h0, plan = _construct(G, c, cap, m_max, n_max, eps_schedule, resolution, k_min,
                                     k_max, word_budget, seed, M)
        h_centers.append(h0)
        for m, n, e, k in plan:
            K = balls[n - 1]
            words = _words(G.p, k, word_budget, M, seed)
            members = []
            cache = {}
            for w in words:
                u = w[: k - 1]
                if u not in cache:
                    cert = max_separated_greedy(K, G, Word(w), e).certificate
                    cache[u] = [add(K.coords[i], K.branch[i],
                                    {"kind": "level", "center": ci, "m": m, "n": n,
                                     "epsilon": e, "k": k, "word": "".join(map(str, w))})
                                for i in cert]
                members.append(cache[u])
            levels.append(Level(ci, m, n, e, k, cap / n, [Word(w) for w in words],
                                members))
            eps_used.add(e)
    coords = G.space.canonicalize(np.array(coords), np.array(branch))
    N = len(coords)
    cloud = SampleCloud(G.space, coords, np.array(branch), np.full(N, 1.0 / N), 1.0,
                        "countable-set")
    k_lo = min(lv.k for lv in levels)
    k_hi = max(lv.k for lv in levels)
    # a zero-entropy truncation is a few mutually separated points: saturated at every n
    n_lo = max(1, k_lo - 2)
    est, _ = entropy_of(G, cloud, sorted(eps_used, reverse=True),
                        range(n_lo, max(k_hi, n_lo + 2) + 1), "separated", word_budget, seed, M,
                        whole_range_fallback=True)
    target = min(h_centers) - 1.0 / m_max - tol
    limit_points = audit_limit_points(G, x0, centers, levels, cloud)
    outside = outside_counts(G, x0, cloud, audit_radii)
    art = CountableSetArtifact(x0, centers, levels, cloud, h_centers, est.value, limit_points,
                               outside, prov)
    if est.value < target:
        raise DiagnosticError(f"re-estimate {est.value:.4f} below {target:.4f}",
                              [lv.to_json() for lv in levels])
    return art


def audit_limit_points(G, x0, centers, levels, cloud):
    """Limit points of the truncation read off its provenance.

    A center is a limit point when its levels form a chain of at least two
    strictly shrinking balls that contain their members (verified metrically).
    x0 is one when it is a center of its own or the distinct centers converge
    to it with strictly decreasing distance.
    """
    Y = cloud.embedding()
    per = G.space.periodic
    out = []
    for ci, c in enumerate(centers):
        lv = [l for l in levels if l.center == ci]
        radii = sorted({l.radius for l in lv}, reverse=True)
        yc = G.space.embed(*c.as_arrays())[0]
        for l in lv:
            idx = sorted({i for s in l.members for i in s})
            d = canonical_round(embedded_distance(Y[idx], yc, per))
            if np.any(d > l.radius):
                raise DiagnosticError(f"level (m={l.m}, n={l.n}) leaves its ball",
                                      [l.to_json()])
        if len(radii) >= 2 and c not in out:
            out.append(c)
    distinct = []
    for c in centers:
        if c not in distinct:
            distinct.append(c)
    if x0 not in out:
        dist = [distance(G.space, c, x0) for c in distinct]
        if len(distinct) >= 2 and all(b < a for a, b in zip(dist, dist[1:])):
            out.insert(0, x0)
    return out


def outside_counts(G, x0, cloud, radii):
    Y = cloud.embedding()
    y0 = G.space.embed(*x0.as_arrays())[0]
    d = canonical_round(embedded_distance(Y, y0, G.space.periodic))
    return {float(r): int(np.sum(d > r)) for r in radii}
