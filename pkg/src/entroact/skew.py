"""Step skew-product F_G(omega, x) = (sigma(omega), g_{omega_1}(x)) on Sigma_p^+ x X.

The shift factor carries D(omega, omega') = base^(k-1) with k the first index
where the sequences differ, and the product metric is max(D, d).  Two points
stay within eps along n steps of F_G only if their sequences agree on the
first L = n - 1 + t symbols, t = min{t >= 0 : base^t <= eps}; in that case
both fibers follow the same word omega_1 ... omega_{n-1}.  A maximal
separated set of [prefix] x K therefore splits over the classes of the first
L symbols, each class contributing a separated set of K for its fiber word.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import greedy_keep
from .counting import _masks, _max_independent, _popcount, exact_packing, quantize, refine_labels
from .entropy.growth import SATURATION, GrowthSeries, estimate_entropy, feasibility, growth_series
from .errors import CapacityError, DomainError
from .semigroup import DEFAULT_WORD_BUDGET, Word, sample_word_array
from .spaces import Point, canonical_round, distance


@dataclass(frozen=True)
class SymbolSeq:
    symbols: tuple
    p: int

    def __post_init__(self):
        s = tuple(int(v) for v in self.symbols)
        if any(not 1 <= v <= self.p for v in s):
            raise DomainError(f"symbols must lie in 1..{self.p}")
        object.__setattr__(self, "symbols", s)

    @property
    def horizon(self):
        return len(self.symbols)


def required_horizon(n_max, ell, eps_min, base=0.5):
    return n_max + ell + shift_depth(eps_min, base)


def make_sequence(symbols, p, n_max, ell, eps_min, base=0.5):
    seq = SymbolSeq(tuple(symbols), p)
    need = required_horizon(n_max, ell, eps_min, base)
    if seq.horizon < need:
        raise CapacityError(f"horizon {seq.horizon} below the required {need}",
                            hint="lengthen the sequence or lower n_max")
    return seq


@dataclass(frozen=True)
class SkewPoint:
    omega: SymbolSeq
    x: Point


@dataclass(frozen=True)
class Cylinder:
    prefix: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(int(v) for v in self.prefix))
        if any(v < 1 for v in self.prefix):
            raise DomainError("cylinder symbols start at 1")

    @property
    def ell(self):
        return len(self.prefix)


@dataclass(frozen=True)
class ProductMetricParams:
    shift_base: float = 0.5

    def __post_init__(self):
        if not 0 < self.shift_base < 1:
            raise DomainError("shift_base must lie in (0, 1)")


def skew_apply(G, z):
    if z.omega.horizon < 1:
        raise CapacityError("symbol horizon exhausted", hint="use a longer horizon")
    a = z.omega.symbols[0]
    c, b = G.step(a, *z.x.as_arrays())
    return SkewPoint(SymbolSeq(z.omega.symbols[1:], z.omega.p), Point(G.space, tuple(c[0]), int(b[0])))


def shift_distance(params, o1, o2):
    if o1.horizon != o2.horizon:
        raise DomainError("sequences must share the horizon")
    for k, (a, b) in enumerate(zip(o1.symbols, o2.symbols), start=1):
        if a != b:
            return params.shift_base ** (k - 1)
    return 0.0


def product_distance(params, z1, z2):
    return max(shift_distance(params, z1.omega, z2.omega), distance(z1.x.space, z1.x, z2.x))


def shift_depth(eps, base=0.5):
    """t = min{t >= 0 : base^t <= eps}, computed by exact repeated multiplication."""
    t, v = 0, 1.0
    while canonical_round(v) > eps:
        v *= base
        t += 1
    return t


def skew_fiber_orbit(G, symbols, coords, branch, steps):
    """Fiber images x, g_{w1}x, ... after 0..steps-1 applications of F_G (vectorized).

    ``symbols`` is a 1-D array of one shared sequence; every point follows it.
    """
    out = [G.space.embed(coords, branch)]
    for j in range(steps - 1):
        if j >= len(symbols):
            raise CapacityError("symbol horizon exhausted", hint="use a longer horizon")
        coords, branch = G.step(int(symbols[j]), coords, branch)
        out.append(G.space.embed(coords, branch))
    return out


def _fiber_count(G, cloud, u, eps, mode):
    blocks = skew_fiber_orbit(G, np.asarray(u, dtype=np.int64), cloud.coords, cloud.branch,
                              len(u) + 1)
    if mode == "signature":
        lab = np.zeros(len(cloud), dtype=np.int64)
        for Y in blocks:
            lab = refine_labels(lab, quantize(Y, eps))
        return int(lab.max()) + 1
    Y = np.hstack(blocks)
    per = np.tile(G.space.periodic, len(blocks))
    return int(greedy_keep(Y, per, eps, G.space.embed_dim).sum())


def skew_count(G, cyl, cloud, eps, n, params=ProductMetricParams(), mode="separated",
               word_budget=DEFAULT_WORD_BUDGET, seed=None, M_suffix=256, memo=None):
    """Separated count of [prefix] x cloud for n steps of F_G.

    Returns ``(count, stderr, exhaustive)``; with more window classes than the
    budget the classes are sampled and the sum rescaled.
    """
    p, ell = G.p, cyl.ell
    if any(v > p for v in cyl.prefix):
        raise DomainError("cylinder uses a symbol outside the alphabet")
    t = shift_depth(eps, params.shift_base)
    L = n - 1 + t
    free_total = max(0, L - ell)
    memo = {} if memo is None else memo

    def fiber(u):
        if u not in memo:
            memo[u] = _fiber_count(G, cloud, u, eps, mode)
        return memo[u]

    k_free = max(0, n - 1 - ell)          # free symbols that reach the fiber word
    mult_exp = free_total - k_free        # free window symbols that do not
    fixed = cyl.prefix[: n - 1]
    if p**k_free <= word_budget:
        vals = [fiber(fixed + tuple(v)) for v in itertools.product(range(1, p + 1), repeat=k_free)]
        total = math.fsum(vals) * p**mult_exp
        return total, None, True
    if seed is None:
        raise DomainError("a seed is required for Monte Carlo suffix sampling")
    arr = sample_word_array(p, k_free, M_suffix, seed)
    vals = np.array([fiber(fixed + tuple(r)) for r in arr.tolist()], dtype=float)
    scale = float(p) ** free_total
    mean = math.fsum(vals) / len(vals)
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return mean * scale, se * scale, False


def skew_growth(G, cyl, cloud, eps, n_range, word_budget=DEFAULT_WORD_BUDGET, seed=None,
                params=ProductMetricParams(), mode="separated", M_suffix=256):
    """log of the separated count of [prefix] x K under F_G (no 1/p^n normalisation)."""
    n_values = sorted(int(n) for n in n_range)
    if not n_values or n_values[0] < 1:
        raise DomainError("n_range must be nonempty with n >= 1")
    if len(cloud) == 0:
        raise DomainError("empty cloud")
    memo = {}
    logs, stderr, counts, sat, mc = [], [], [], [], False
    for n in n_values:
        c, se, exh = skew_count(G, cyl, cloud, eps, n, params, mode, word_budget, seed, M_suffix,
                                memo)
        mc = mc or not exh
        logs.append(math.log(c))
        counts.append(c)
        stderr.append(se if se is not None else 0.0)
        # fiber saturation: the average fiber count is close to the cloud size
        t = shift_depth(eps, params.shift_base)
        classes = float(G.p) ** max(0, n - 1 + t - cyl.ell)
        sat.append(bool(c / classes >= SATURATION * len(cloud)))
    return GrowthSeries(
        epsilon=float(eps), mode=f"skew-{mode}", n_values=n_values, log_avg=logs,
        mean_count=counts, saturated=sat, coverage="montecarlo" if mc else "exhaustive",
        stderr=stderr if mc else None, M=M_suffix if mc else None, seed=seed if mc else None,
        cloud_label=f"[{''.join(map(str, cyl.prefix))}]x{cloud.label}", cloud_size=len(cloud),
        system=G.name, feasibility=feasibility(cloud.mesh, G.max_expansion, n_values[-1], eps),
    )


def brute_force_skew_packing(G, cyl, cloud, eps, n, params=ProductMetricParams()):
    """Exact packing over explicit skew points (all window classes x cloud); tiny cases only."""
    t = shift_depth(eps, params.shift_base)
    L = n - 1 + t
    H = max(L, cyl.ell) + 1
    free = max(0, H - cyl.ell)
    pts = []
    for v in itertools.product(range(1, G.p + 1), repeat=max(0, L - cyl.ell)):
        tail = (1,) * (free - len(v))
        omega = SymbolSeq((cyl.prefix + tuple(v) + tail)[:H], G.p)
        for i in range(len(cloud)):
            pts.append(SkewPoint(omega, cloud.point(i)))
    N = len(pts)
    D = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            zi, zj, dmax = pts[i], pts[j], 0.0
            for _ in range(n):
                dmax = max(dmax, product_distance(params, zi, zj))
                zi, zj = skew_apply(G, zi), skew_apply(G, zj)
            D[i, j] = D[j, i] = canonical_round(dmax)
    return _packing_from_matrix(D, eps)


def _packing_from_matrix(D, eps):
    conflict = D <= eps
    np.fill_diagonal(conflict, False)
    return _popcount(_max_independent(tuple(_masks(conflict)), (1 << len(D)) - 1))


def grouped_skew_packing(G, cyl, cloud, eps, n, params=ProductMetricParams()):
    """Sum over window classes of the exact fiber packing (oracle twin of skew_count)."""
    t = shift_depth(eps, params.shift_base)
    L = n - 1 + t
    total = 0
    for v in itertools.product(range(1, G.p + 1), repeat=max(0, L - cyl.ell)):
        u = (cyl.prefix + tuple(v))[: n - 1]
        total += exact_packing(cloud, G, Word(u + (1,)), eps).count
    return total


@dataclass
class ProductFormulaReport:
    h_skew: float
    h_base: float
    log_p: float
    gap: float
    tol: float
    passed: bool
    cylinder: tuple
    params: dict
    entropy_points: dict = field(default_factory=dict)
    series: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {"h_skew": self.h_skew, "h_base": self.h_base, "log_p": self.log_p,
                "gap": self.gap, "tol": self.tol, "pass": self.passed,
                "cylinder": list(self.cylinder), "params": self.params,
                "entropy_points": self.entropy_points}


def verify_product_formula(G, cyl, cloud, eps_schedule, n_range, tol, params=ProductMetricParams(),
                           mode="separated", word_budget=DEFAULT_WORD_BUDGET, seed=None,
                           M_suffix=256, tau=0.05, n_entropy_points=4):
    """|h_skew - (h_base + ln p)| <= tol, plus the skew entropy-point corollary on samples."""
    eps_schedule = sorted(eps_schedule, reverse=True)
    sk = [skew_growth(G, cyl, cloud, e, n_range, word_budget, seed, params, mode, M_suffix)
          for e in eps_schedule]
    base = [growth_series(G, cloud, e, n_range, mode, word_budget, seed, M_suffix)
            for e in eps_schedule]
    h_skew = estimate_entropy(sk).value
    h_base = estimate_entropy(base).value
    log_p = math.log(G.p)
    gap = abs(h_skew - (h_base + log_p))
    ep = skew_entropy_points(G, cyl, cloud, eps_schedule[-1], n_range, params, mode, tau,
                             n_entropy_points, seed if seed is not None else 0, word_budget)
    return ProductFormulaReport(
        h_skew, h_base, log_p, gap, tol, bool(gap <= tol), cyl.prefix,
        {"shift_base": params.shift_base, "epsilons": eps_schedule,
         "n_range": [min(n_range), max(n_range)], "mode": mode},
        ep, sk + base,
    )


def skew_entropy_points(G, cyl, cloud, eps, n_range, params, mode, tau, count, seed, word_budget):
    """Neighbourhoods [omega_1..omega_j] x K of sampled skew points have entropy > tau.

    Applies only for p >= 2, where the shift alone contributes ln p.
    """
    if G.p < 2:
        return {"applicable": False}
    rng = np.random.default_rng(seed)
    depth = cyl.ell + 2
    vals = []
    for _ in range(count):
        tail = tuple(int(v) for v in rng.integers(1, G.p + 1, size=depth - cyl.ell))
        sub = Cylinder(cyl.prefix + tail)
        s = skew_growth(G, sub, cloud, eps, n_range, word_budget, seed, params, mode)
        vals.append(estimate_entropy([s]).value)
    return {"applicable": True, "slopes": vals, "all_entropy": bool(all(v > tau for v in vals))}
