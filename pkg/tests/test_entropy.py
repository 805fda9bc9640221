import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import branch_count_series
from entroact.catalog import build_system, builtin
from entroact.cli import random_micro_instance
from entroact.entropy.countable import countable_full_entropy_set
from entroact.entropy.growth import (entropy_of, estimate_entropy, fit_slope, growth_series,
                                     usable_window)
from entroact.entropy.katok import KatokParams, katok_entropy, katok_micro_count
from entroact.entropy.pointwise import (FULL, NON_ENTROPY, classify_entropy_points,
                                        entropy_function_at, find_entropy_point, label_points,
                                        random_walk_support, verify_support_in_entropy_points)
from entroact.errors import DomainError, InsufficientDataError
from entroact.semigroup import Word, apply_word
from entroact.spaces import (Point, circle, cloud_from_points, disjoint_union,
                             sample_grid, torus)

E23 = build_system(builtin("expanding23"))
E2 = build_system(builtin("doubling"))
ROT = build_system(builtin("rotations"))
EX43 = build_system(builtin("example43"))
U = disjoint_union(circle(), circle())
SIG = dict(eps_schedule=[0.1, 0.05], radius_schedule=[0.2, 0.1], resolution=2**14,
           n_range=range(4, 9), mode="signature")


def pt(x):
    return Point(circle(), (x,))


# growth series

def test_growth_p8_examples(P8):
    s = growth_series(E23, P8, 0.2, [1, 2])
    assert s.mean_count == [4.0, 8.0]
    assert s.log_avg[0] == math.log(4)
    assert s.saturated == [False, True]
    assert s.feasibility["flag"]
    assert s.coverage == "exhaustive" and s.stderr is None


def test_growth_isometry_constant():
    s = growth_series(ROT, sample_grid(circle(), 256), 0.05, range(1, 9))
    assert len(set(s.mean_count)) == 1
    est = estimate_entropy([s])
    assert est.value == 0.0


def test_growth_matches_branch_oracle():
    # signature counts on a dyadic grid equal the exact arc counts
    grid = sample_grid(circle(), 2**16)
    for q in (5, 10, 20):
        s = growth_series(E23, grid, 1 / q, range(2, 8), "signature")
        assert s.log_avg == pytest.approx(branch_count_series((2, 3), q, range(2, 8)), abs=1e-12)


def test_growth_montecarlo_path():
    grid = sample_grid(circle(), 1024)
    s = growth_series(E23, grid, 0.1, [4, 5], word_budget=8, seed=3, M=32)
    assert s.coverage == "montecarlo" and s.M == 32 and s.seed == 3
    assert all(v > 0 for v in s.stderr)
    again = growth_series(E23, grid, 0.1, [4, 5], word_budget=8, seed=3, M=32)
    assert again.log_avg == s.log_avg
    with pytest.raises(DomainError):
        growth_series(E23, grid, 0.1, [4, 5], word_budget=8, seed=None)
    rows = list(s.rows())
    assert len(rows) == 2 and rows[0]["stderr"] != ""


def test_growth_errors():
    with pytest.raises(DomainError):
        growth_series(E23, cloud_from_points(circle(), np.zeros((0, 1))), 0.1, [1, 2])
    with pytest.raises(DomainError):
        growth_series(E23, sample_grid(circle(), 8), 0.0, [1, 2])


@pytest.mark.parametrize("mode", ["signature", "separated"])
def test_refinement_monotone(mode):
    for G in (E23, E2, build_system(builtin("mp_rot"))):
        coarse = growth_series(G, sample_grid(circle(), 512), 0.1, range(1, 7), mode)
        fine = growth_series(G, sample_grid(circle(), 1024), 0.1, range(1, 7), mode)
        assert all(f >= c for f, c in zip(fine.log_avg, coarse.log_avg))


# slope fitting

def test_fit_slope():
    assert fit_slope([1, 2, 3, 4], [2.5] * 4) == (0.0, 0.0)
    s, r = fit_slope([1, 2, 3], [1.0, 3.0, 5.0])
    assert s == pytest.approx(2.0) and r == pytest.approx(0.0, abs=1e-12)


def test_estimate_rotations_exact_zero():
    est, _ = entropy_of(ROT, sample_grid(circle(), 4096), [0.2, 0.1, 0.05], range(1, 9))
    assert est.value == 0.0
    assert all(v["slope"] == 0.0 for v in est.per_epsilon.values())


def test_estimate_doubling_pinned():
    est, _ = entropy_of(E2, sample_grid(circle(), 2**14), [0.1], range(4, 9))
    assert 0.62 <= est.value <= 0.76
    assert est.value == pytest.approx(0.6915653912122351, abs=1e-12)


def test_estimate_insufficient(P8):
    s = growth_series(E23, P8, 0.2, [1, 2, 3])
    with pytest.raises(InsufficientDataError):
        estimate_entropy([s])
    assert usable_window(s) == (0, 1)


# entropy function and classification

def test_entropy_function_rotations_zero():
    for x in (0.0, 0.37):
        h = entropy_function_at(ROT, pt(x), [0.1, 0.05], [0.2, 0.1], 4096, range(1, 7),
                                mode="spanning")
        assert h.h_of_x == 0.0
        assert all(h.h_of_x <= v for r in h.per_radius.values() for v in r.values())


def test_entropy_function_expanding_pair():
    g = math.log(2.5)
    for x in (0.0, 0.3, 0.71):
        h = entropy_function_at(E23, pt(x), **SIG)
        assert abs(h.h_of_x - g) <= 0.1


def test_entropy_function_signature_agrees_with_spanning():
    x = pt(0.3)
    kw = dict(SIG)
    hs = entropy_function_at(E23, x, **kw).h_of_x
    kw.update(mode="spanning", resolution=2**16)
    hb = entropy_function_at(E23, x, **kw).h_of_x
    assert abs(hs - hb) <= 0.05


def test_entropy_function_example43_branches():
    h2 = entropy_function_at(EX43, Point(U, (0.4,), 1), **SIG)
    assert h2.h_of_x == 0.0
    h1 = entropy_function_at(EX43, Point(U, (0.4,), 0), **SIG)
    assert h1.h_of_x >= 0.5


def test_label_rules():
    assert label_points([0.0, 0.05, 0.5, 0.9], 0.05, 0.92) == [
        NON_ENTROPY, NON_ENTROPY, "entropy", FULL]
    with pytest.raises(DomainError):
        label_points([0.1], 0.0, 1.0)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 2), min_size=1, max_size=30), st.floats(0.001, 1),
       st.floats(0.001, 1), st.floats(0, 2))
def test_classification_monotone_in_tau(h, t1, t2, g):
    lo, hi = sorted((t1, t2))
    a = classify_entropy_points(E23, [], lo, g, h_values=h).entropy_mask()
    b = classify_entropy_points(E23, [], hi, g, h_values=h).entropy_mask()
    assert np.all(a[b])


def test_classify_rotations_non_entropy():
    pts = [pt(x) for x in (0.0, 0.25, 0.5)]
    c = classify_entropy_points(ROT, pts, 0.05, 0.0, eps_schedule=[0.1, 0.05],
                                radius_schedule=[0.2, 0.1], resolution=4096,
                                n_range=range(1, 7), mode="spanning")
    assert c.labels == [NON_ENTROPY] * 3


def test_find_entropy_point_full_circle():
    K = sample_grid(circle(), 2**14)
    x, trace = find_entropy_point(E23, K, 3, [0.1, 0.05], range(4, 9), h_kw=SIG)
    assert abs(trace[-1]["h_x"] - math.log(2.5)) <= 0.1
    assert [t["stage"] for t in trace] == [1, 2, 3, "check"]


def test_find_entropy_point_example43():
    grid = sample_grid(U, 2**12)
    x2 = grid.subset(np.nonzero(grid.branch == 1)[0], "X2")
    with pytest.raises(DomainError):
        find_entropy_point(EX43, x2, 2, [0.1, 0.05], range(4, 9))
    x1 = grid.subset(np.nonzero(grid.branch == 0)[0], "X1")
    x, _ = find_entropy_point(EX43, x1, 2, [0.1, 0.05], range(4, 9))
    assert x.branch == 0
    c = classify_entropy_points(EX43, [x], 0.05, math.log(2.5), **SIG)
    assert c.labels[0] != NON_ENTROPY


def test_invariance_under_cat_map(rng):
    G = build_system(builtin("cat"))
    kw = dict(eps_schedule=[0.2, 0.1], radius_schedule=[0.2, 0.1], resolution=256,
              n_range=range(2, 7), mode="signature")
    for _ in range(32):
        x = Point(torus(2), tuple(rng.random(2)))
        gx = apply_word(G, Word((1,)), x)
        hx = entropy_function_at(G, x, **kw).h_of_x
        hgx = entropy_function_at(G, gx, **kw).h_of_x
        assert abs(hx - hgx) <= 0.1


# support of the random walk

def test_support_rotations_not_applicable():
    r = verify_support_in_entropy_points(ROT, 1, 24, 0.05, 0.0)
    assert not r.applicable and r.fraction is None


def test_support_example43_from_x1():
    r = verify_support_in_entropy_points(EX43, 3, 24, 0.05, math.log(2.5),
                                         start=Point(U, (0.1,), 0), n_samples=16, h_kw=SIG)
    assert r.fraction == 1.0
    assert all(p.branch == 0 for p in r.points)


def test_random_walk_deterministic():
    a = random_walk_support(E23, pt(0.0), 5, 24, 32)
    b = random_walk_support(E23, pt(0.0), 5, 24, 32)
    assert a == b and len(a) == 32


# Katok entropy

def test_katok_micro(P8):
    assert katok_micro_count(P8, E23, Word((1,)), 0.2, 0.3) == 3
    with pytest.raises(DomainError):
        katok_micro_count(P8, E23, Word((1,)), 0.2, 1.0)


def test_katok_point_mass():
    nu = cloud_from_points(circle(), [0.0])
    r = katok_entropy(E2, nu, KatokParams((0.2, 0.1), (0.2, 0.1)), range(1, 7))
    assert r.value == 0.0


def test_katok_tables_monotone_on_micro_cases():
    systems = ["expanding23", "doubling", "rotations", "mp_rot", "example43", "cat"]
    eps = [0.05, 0.1, 0.2, 0.4]
    deltas = [0.05, 0.15, 0.3, 0.6]
    for i in range(30):
        _, cloud, G, w, _ = random_micro_instance(21, i, systems, 10, 3)
        T = np.array([[katok_micro_count(cloud, G, w, e, d) for d in deltas] for e in eps])
        assert np.all(np.diff(T, axis=0) <= 0)
        assert np.all(np.diff(T, axis=1) <= 0)


def test_katok_lebesgue_doubling_pinned():
    r = katok_entropy(E2, sample_grid(circle(), 4096), KatokParams((0.2, 0.1), (0.2, 0.1)),
                      range(3, 9))
    assert 0.59 <= r.value <= 0.79
    assert r.value == pytest.approx(0.6549097320160716, abs=1e-12)


def test_katok_params_validation():
    with pytest.raises(DomainError):
        KatokParams((0.0,), (0.1,))
    with pytest.raises(DomainError):
        KatokParams((0.1,), (0.1,), method="bogus")


# countable full-entropy sets

def test_countable_rotations_degenerate():
    art = countable_full_entropy_set(ROT, pt(0.0), 2, 3, [0.2, 0.1], 1024, k_min=1, k_max=6)
    assert art.h_x0 == [0.0]
    assert art.re_estimate == 0.0


def test_countable_sequence_limit_points():
    seq = [pt(0.2), pt(0.1), pt(0.05)]
    art = countable_full_entropy_set(E23, pt(0.0), 2, 3, [0.2, 0.1], 1024, sequence=seq,
                                     radii=[0.1, 0.05, 0.025], k_min=3, k_max=8)
    assert [p.coords for p in art.limit_points] == [(0.0,), (0.2,), (0.1,), (0.05,)]
    assert art.cloud.check_distinct()
    const = countable_full_entropy_set(E23, pt(0.0), 2, 3, [0.2, 0.1], 1024, sequence=[pt(0.0)] * 3,
                                       radii=[0.1, 0.05, 0.025], k_min=3, k_max=8)
    assert [p.coords for p in const.limit_points] == [(0.0,)]


def test_countable_provenance():
    art = countable_full_entropy_set(E23, pt(0.0), 2, 3, [0.2, 0.1], 1024, k_min=3, k_max=8)
    ks = {}
    for lv in art.levels:
        ks.setdefault(lv.m, []).append(lv.k)
        assert lv.n >= lv.m
    assert all(k == sorted(set(k)) for k in ks.values())
    assert art.provenance[0] == {"kind": "x0"}
    assert all(p["kind"] in ("x0", "center", "level") for p in art.provenance)
    with pytest.raises(DomainError):
        countable_full_entropy_set(E23, pt(0.0), 3, 2, [0.2], 256)
