"""Growth series S_n and slope estimation.

The count for a word of length n only involves the Bowen prefixes
j = 0, ..., n-1, i.e. the first n-1 letters (the "effective word").  Dropping
letters that act as the identity leaves every prefix image set unchanged, so
counts are memoized on the reduced effective word and evaluated by a
depth-first walk over the trie of reduced words, carrying prefix images (and,
in signature mode, the current orbit classes) down the tree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .._kernels import greedy_keep, open_cover
from ..counting import SETCOVER_LIMIT, _OPEN_SHRINK, greedy_set_cover, quantize, refine_labels
from ..errors import DomainError, InsufficientDataError
from ..semigroup import DEFAULT_WORD_BUDGET, sample_word_array

MODES = ("separated", "spanning", "signature")
SATURATION = 0.98


@dataclass(frozen=True)
class ProductCloud:
    """Cartesian product of factor clouds, one per coordinate block of a split system.

    ``factors`` is a sequence of ``(Factor, SampleCloud)`` pairs (see
    ``catalog.factorize``).  Counts of the product are the products of factor
    counts: exact for signatures, and for separated sets a lower bound on the
    product packing since s(X x Y) >= s(X) s(Y) in the sup metric.
    """

    factors: tuple
    label: str = ""

    def __len__(self):
        return int(np.prod([len(c) for _, c in self.factors]))

    @property
    def mesh(self):
        return max(c.mesh for _, c in self.factors)


@dataclass
class GrowthSeries:
    epsilon: float
    mode: str
    n_values: list
    log_avg: list
    mean_count: list
    saturated: list
    coverage: str
    stderr: list | None = None
    M: int | None = None
    seed: int | None = None
    cloud_label: str = ""
    cloud_size: int = 0
    system: str = ""
    feasibility: dict = field(default_factory=dict)

    def rows(self):
        for k, n in enumerate(self.n_values):
            se = "" if self.stderr is None else self.stderr[k]
            yield dict(system=self.system, cloud=self.cloud_label, mode=self.mode,
                       epsilon=self.epsilon, n=n, log_avg=self.log_avg[k], stderr=se,
                       saturated=self.saturated[k])


def _reduce(word, ident):
    return tuple(i for i in word if i not in ident)


class _Node:
    __slots__ = ("children", "needed")

    def __init__(self):
        self.children = {}
        self.needed = False


def _build_trie(words):
    root = _Node()
    for w in words:
        node = root
        for a in w:
            node = node.children.setdefault(a, _Node())
        node.needed = True
    return root


def _separated_count(Y, per, eps, block):
    return int(greedy_keep(Y, per, eps, block).sum())


def _spanning_count(state, per, eps, block):
    if isinstance(state, np.ndarray):
        return len(greedy_set_cover(state))
    Y = np.hstack(state)
    return int(greedy_keep(Y, np.tile(per, len(state)), eps * _OPEN_SHRINK, block).sum())


def _close(Y, per, eps):
    return open_cover(np.ascontiguousarray(Y, dtype=np.float64),
                      np.ascontiguousarray(per, dtype=np.bool_), float(eps))


def count_reduced(G, cloud, eps, mode, words):
    """Counts for each effective word in ``words`` (tuples); returns a dict."""
    if mode not in MODES:
        raise DomainError(f"unknown counting mode {mode!r}")
    words = list(words)
    if isinstance(cloud, ProductCloud):
        out = {w: 1 for w in words}
        for factor, fc in cloud.factors:
            sub = count_reduced(factor.system, fc, eps, mode, words)
            for w in words:
                out[w] *= sub[w]
        return out
    ident = G.identity_letters()
    reduced = {w: _reduce(w, ident) for w in words}
    root = _build_trie(set(reduced.values()))
    space = G.space
    per = space.periodic
    block = space.embed_dim
    counts = {}
    if len(cloud) == 0:
        return {w: 0 for w in words}

    coords0, branch0 = cloud.coords, cloud.branch
    Y0 = space.embed(coords0, branch0)
    # signature: refined cell labels; spanning on small clouds: the open-ball cover
    # relation, refined prefix by prefix (sup metric); otherwise the prefix blocks
    dense = mode == "spanning" and len(Y0) <= SETCOVER_LIMIT
    if mode == "signature":
        state0 = refine_labels(np.zeros(len(Y0), dtype=np.int64), quantize(Y0, eps))
    elif dense:
        state0 = _close(Y0, per, eps)
    else:
        state0 = [Y0]
    stack = [((), root, coords0, branch0, state0)]
    while stack:
        key, node, coords, branch, state = stack.pop()
        if node.needed:
            if mode == "signature":
                counts[key] = int(state.max()) + 1
            elif mode == "spanning":
                counts[key] = _spanning_count(state, per, eps, block)
            else:
                counts[key] = _separated_count(np.hstack(state), np.tile(per, len(state)),
                                               eps, block)
        for a in sorted(node.children, reverse=True):
            c2, b2 = G.step(a, coords, branch)
            Ya = space.embed(c2, b2)
            if mode == "signature":
                s2 = refine_labels(state, quantize(Ya, eps))
            elif dense:
                s2 = state & _close(Ya, per, eps)
            else:
                s2 = state + [Ya]
            stack.append((key + (a,), node.children[a], c2, b2, s2))
    return {w: counts[reduced[w]] for w in words}


def _effective_words(p, n, word_budget, M, seed):
    if p**n <= word_budget:
        return [tuple(t) for t in itertools.product(range(1, p + 1), repeat=n - 1)], None
    if seed is None:
        raise DomainError("a seed is required for Monte Carlo word sampling")
    arr = sample_word_array(p, n, M, seed)
    return [tuple(r[: n - 1]) for r in arr.tolist()], arr


def feasibility(mesh, lam, n_max, eps):
    bound = mesh * lam**n_max
    return {"mesh": mesh, "max_expansion": lam, "n_max": n_max,
            "mesh_times_expansion": bound, "limit": eps / 4, "flag": bool(bound > eps / 4)}


def growth_series(G, cloud, eps, n_range, mode="separated", word_budget=DEFAULT_WORD_BUDGET,
                  seed=None, M=256, system=""):
    """log S_n for n in ``n_range``: exhaustive over words when within budget, else Monte Carlo."""
    if not eps > 0:
        raise DomainError("epsilon must be positive")
    n_values = sorted(int(n) for n in n_range)
    if not n_values or n_values[0] < 1:
        raise DomainError("n_range must be nonempty with n >= 1")
    if len(cloud) == 0:
        raise DomainError("empty cloud: all counts are zero")
    p = G.p
    plan, mc = {}, False
    for n in n_values:
        words, arr = _effective_words(p, n, word_budget, M, seed)
        if arr is not None:
            mc = True
        plan[n] = (words, arr is not None)
    allw = sorted({w for ws, _ in plan.values() for w in ws})
    counts = count_reduced(G, cloud, eps, mode, allw)
    size = len(cloud)
    log_avg, mean_count, stderr, sat = [], [], [], []
    for n in n_values:
        words, is_mc = plan[n]
        vals = np.array([counts[w] for w in words], dtype=float)
        mean = math.fsum(vals) / len(vals)
        if mean <= 0:
            raise DomainError("all counts are zero")
        log_avg.append(math.log(mean))
        mean_count.append(mean)
        sat.append(bool(mean >= SATURATION * size))
        # exhaustive entries of a Monte Carlo series carry zero sampling error
        stderr.append(float(vals.std(ddof=1) / math.sqrt(len(vals))) if is_mc and len(vals) > 1
                      else 0.0)
    return GrowthSeries(
        epsilon=float(eps), mode=mode, n_values=n_values, log_avg=log_avg,
        mean_count=mean_count, saturated=sat,
        coverage="montecarlo" if mc else "exhaustive",
        stderr=stderr if mc else None, M=M if mc else None, seed=seed if mc else None,
        cloud_label=getattr(cloud, "label", ""), cloud_size=size, system=system or G.name,
        feasibility=feasibility(cloud.mesh, G.max_expansion, n_values[-1], eps),
    )


def fit_slope(n, y):
    """Least-squares slope; centring y on y[0] makes constant series give exactly 0."""
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float) - y[0]
    nc = n - n.mean()
    slope = float(np.dot(nc, y) / np.dot(nc, nc))
    resid = y - (y.mean() + slope * nc)
    return slope, float(np.sqrt(np.mean(resid**2)))


def usable_window(series):
    """Longest run of consecutive non-saturated entries (later run wins ties)."""
    best, cur = (0, 0), None
    for k, s in enumerate(series.saturated):
        if s:
            cur = None
            continue
        cur = (cur[0], k + 1) if cur else (k, k + 1)
        if cur[1] - cur[0] >= best[1] - best[0]:
            best = cur
    return best


@dataclass
class EntropyEstimate:
    value: float
    per_epsilon: dict
    n_window: list
    feasibility: dict

    def to_json(self):
        return {
            "value": self.value,
            "n_window": self.n_window,
            "per_epsilon": [dict(epsilon=e, **v) for e, v in sorted(self.per_epsilon.items(),
                                                                    reverse=True)],
            "feasibility": self.feasibility,
        }


def estimate_entropy(series_list, min_points=3, whole_range_fallback=False):
    """Per-epsilon slopes over the usable window; value = max of the usable slopes.

    With ``whole_range_fallback`` a series without a long enough unsaturated
    run is fitted over all its points instead of being dropped.
    """
    per, feas = {}, {}
    lo, hi = None, None
    for s in series_list:
        a, b = usable_window(s)
        if whole_range_fallback and b - a < min_points:
            a, b = 0, len(s.n_values)
        entry = {"slope": None, "residual": None, "window": None,
                 "saturated": list(s.saturated)}
        if b - a >= min_points:
            slope, res = fit_slope(s.n_values[a:b], s.log_avg[a:b])
            entry.update(slope=slope, residual=res, window=[s.n_values[a], s.n_values[b - 1]])
            lo = s.n_values[a] if lo is None else min(lo, s.n_values[a])
            hi = s.n_values[b - 1] if hi is None else max(hi, s.n_values[b - 1])
        per[s.epsilon] = entry
        feas[repr(s.epsilon)] = s.feasibility
    slopes = [v["slope"] for v in per.values() if v["slope"] is not None]
    if not slopes:
        raise InsufficientDataError(f"fewer than {min_points} non-saturated points for every epsilon")
    return EntropyEstimate(max(slopes), per, [lo, hi], feas)


def entropy_of(G, cloud, eps_schedule, n_range, mode="separated", word_budget=DEFAULT_WORD_BUDGET,
               seed=None, M=256, system="", whole_range_fallback=False):
    series = [growth_series(G, cloud, e, n_range, mode, word_budget, seed, M, system)
              for e in eps_schedule]
    return estimate_entropy(series, whole_range_fallback=whole_range_fallback), series
