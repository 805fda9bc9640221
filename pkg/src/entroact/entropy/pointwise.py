"""Entropy function h(x), entropy-point classification and the nested-ball finder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..catalog import factorize
from ..counting import max_separated_greedy
from ..errors import DiagnosticError, DomainError, InsufficientDataError
from ..semigroup import DEFAULT_WORD_BUDGET, Word, keyed_uint64
from ..spaces import Point, SampleCloud, embedded_distance, canonical_round, sample_ball, sample_sobol
from .growth import ProductCloud, entropy_of, estimate_entropy, growth_series

NON_ENTROPY, ENTROPY, FULL = "non-entropy", "entropy", "full-entropy"


def ball_cloud(G, x, radius, resolution, sampler="grid", seed=0):
    """Cloud approximating the closed ball B_r(x); a product of factor balls for split systems."""
    factors = factorize(G)
    if factors is not None:
        parts = []
        for f in factors:
            c = Point(f.system.space, tuple(x.coords[a] for a in f.axes))
            parts.append((f, _single_ball(f.system.space, c, radius, resolution, sampler, seed)))
        return ProductCloud(tuple(parts), f"ball(r={radius:g})")
    return _single_ball(G.space, x, radius, resolution, sampler, seed)


def _single_ball(space, c, radius, resolution, sampler, seed):
    if sampler == "grid" or space.is_union or radius >= 0.5:
        if sampler != "grid" and radius >= 0.5 and not space.is_union:
            return sample_sobol(space, resolution, seed)
        return sample_ball(space, c, radius, resolution)
    return sample_sobol(space, resolution, seed, box=(c.coords, radius))


@dataclass
class EntropyFunctionSample:
    x: Point
    per_radius: dict
    h_by_epsilon: dict
    h_of_x: float
    series: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {
            "x": list(self.x.coords),
            "branch": self.x.branch,
            "h": self.h_of_x,
            "h_by_epsilon": {repr(e): v for e, v in sorted(self.h_by_epsilon.items(), reverse=True)},
            "per_radius": {repr(r): {repr(e): s for e, s in sorted(v.items(), reverse=True)}
                           for r, v in self.per_radius.items()},
        }


def entropy_function_at(G, x, eps_schedule, radius_schedule, resolution, n_range,
                        mode="spanning", word_budget=DEFAULT_WORD_BUDGET, seed=None, M=256,
                        sampler="grid"):
    """h(x, eps) = min over radii of the growth slope on B_r(x); h(x) at the smallest eps."""
    radii = list(radius_schedule)
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise DomainError("radii must be strictly decreasing")
    eps_schedule = sorted(eps_schedule, reverse=True)
    per_radius, series = {}, []
    for r in radii:
        K = ball_cloud(G, x, r, resolution, sampler, 0 if seed is None else seed)
        if len(K) == 0:
            raise DomainError("empty ball cloud")
        slopes = {}
        for e in eps_schedule:
            s = growth_series(G, K, e, n_range, mode, word_budget, seed, M)
            series.append((r, s))
            slopes[e] = estimate_entropy([s]).value
        per_radius[r] = slopes
    h_eps = {e: min(per_radius[r][e] for r in radii) for e in eps_schedule}
    return EntropyFunctionSample(x, per_radius, h_eps, h_eps[eps_schedule[-1]], series)


def label_points(h_values, tau, global_estimate):
    """non-entropy iff h <= tau; otherwise full-entropy iff h >= global - tau."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    out = []
    for h in h_values:
        if h <= tau:
            out.append(NON_ENTROPY)
        elif h >= global_estimate - tau:
            out.append(FULL)
        else:
            out.append(ENTROPY)
    return out


@dataclass
class Classification:
    labels: list
    h_values: list
    tau: float
    global_estimate: float
    samples: list = field(default_factory=list, repr=False)

    def entropy_mask(self):
        return np.array([lab != NON_ENTROPY for lab in self.labels])


def classify_entropy_points(G, candidates, tau, global_estimate, h_values=None, **kw):
    """Label each candidate; ``kw`` is forwarded to :func:`entropy_function_at`."""
    samples = []
    if h_values is None:
        pts = candidates.points if isinstance(candidates, SampleCloud) else list(candidates)
        samples = [entropy_function_at(G, x, **kw) for x in pts]
        h_values = [s.h_of_x for s in samples]
    return Classification(label_points(h_values, tau, global_estimate), list(h_values), tau,
                          global_estimate, samples)


def _cover_centers(K, radius):
    """Greedy maximal radius-separated subset: closed radius-balls about it cover K."""
    w = Word((1,))

    class _Id:
        space = K.space
        p = 1

        @staticmethod
        def step(a, c, b):
            return c, b

    res = max_separated_greedy(K, _Id, w, radius)
    return list(res.certificate)


def find_entropy_point(G, K, depth, eps_schedule, n_range, tau=0.05, mode="signature",
                       h_kw=None, tolerance=0.1):
    """Nested refinement into sub-balls of diameter <= 1/j, keeping the highest-entropy one."""
    h0, _ = entropy_of(G, K, eps_schedule, n_range, mode)
    h0 = h0.value
    if h0 <= tau:
        raise DomainError(f"compact set has estimated entropy {h0:.4f} <= {tau}")
    trace = [{"stage": 1, "size": len(K), "h": h0}]
    cur = K
    center = 0
    for j in range(2, depth + 1):
        r = 1.0 / (2 * j)
        Y = cur.embedding()
        best = None
        for ci in _cover_centers(cur, r):
            d = canonical_round(embedded_distance(Y, Y[ci], cur.space.periodic))
            idx = np.nonzero(d <= r)[0]
            sub = cur.subset(idx, label=f"{cur.label}|B({ci},{r:g})")
            try:
                h = entropy_of(G, sub, eps_schedule, n_range, mode)[0].value
            except InsufficientDataError:
                continue
            if best is None or h > best[0]:
                best = (h, sub, int(np.nonzero(idx == ci)[0][0]))
        if best is None:
            raise DiagnosticError("no usable sub-ball", trace)
        trace.append({"stage": j, "size": len(best[1]), "h": best[0]})
        cur, center = best[1], best[2]
    x = cur.point(center)
    if h_kw is not None:
        hx = entropy_function_at(G, x, **h_kw).h_of_x
        trace.append({"stage": "check", "h_x": hx})
        if abs(hx - h0) > tolerance:
            raise DiagnosticError(f"h(x)={hx:.4f} differs from stage-1 estimate {h0:.4f}", trace)
    return x, trace


@dataclass
class SupportReport:
    applicable: bool
    fraction: float | None
    n_samples: int
    labels: list
    h_values: list
    points: list
    global_estimate: float | None

    def to_json(self):
        return {"applicable": self.applicable, "fraction": self.fraction,
                "n_samples": self.n_samples, "labels": self.labels, "h": self.h_values,
                "points": [[p.branch] + list(p.coords) for p in self.points],
                "global_estimate": self.global_estimate}


def random_walk_support(G, start, orbit_seed, orbit_length, n_samples, n_walks=None, burn_in=4):
    """Empirical support of the eta_p random walk.

    Floating-point orbits of expanding maps collapse onto 0 after ~50 steps,
    so the measure is sampled by several short walks from seeded starts.
    """
    n_walks = n_walks or n_samples
    rng = np.random.default_rng(orbit_seed)
    coords = np.repeat(np.asarray(start.coords, float)[None, :], n_walks, axis=0)
    jitter = rng.random(coords.shape)
    comp = G.space.component(start.branch)
    coords[:, : comp.d] = jitter[:, : comp.d]
    branch = np.full(n_walks, start.branch, dtype=np.int8)
    coords = G.space.canonicalize(coords, branch)
    pts = []
    letters = keyed_uint64(np.uint64(orbit_seed), np.uint64(orbit_length),
                           np.arange(n_walks, dtype=np.uint64)[:, None],
                           np.arange(orbit_length, dtype=np.uint64)[None, :])
    letters = (letters % np.uint64(G.p)).astype(np.int64) + 1
    for t in range(orbit_length):
        for a in range(1, G.p + 1):
            sel = letters[:, t] == a
            if sel.any():
                c2, b2 = G.step(a, coords[sel], branch[sel])
                coords[sel], branch[sel] = c2, b2
        if t >= burn_in:
            pts.extend(zip(branch.tolist(), map(tuple, coords.tolist())))
    pts = sorted(set(pts))
    pick = np.sort(rng.choice(len(pts), size=min(n_samples, len(pts)), replace=False))
    return [Point(G.space, pts[i][1], pts[i][0]) for i in pick]


def verify_support_in_entropy_points(G, orbit_seed, orbit_length, tau, global_estimate,
                                     start=None, n_samples=64, h_kw=None):
    if global_estimate is None or global_estimate <= tau:
        return SupportReport(False, None, 0, [], [], [], global_estimate)
    start = start or Point(G.space, tuple([0.0] * G.space.d))
    pts = random_walk_support(G, start, orbit_seed, orbit_length, n_samples)
    cls = classify_entropy_points(G, pts, tau, global_estimate, **(h_kw or {}))
    frac = float(np.mean(cls.entropy_mask()))
    return SupportReport(True, frac, len(pts), cls.labels, cls.h_values, pts, global_estimate)
