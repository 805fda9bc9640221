"""Configuration-driven batch runner.

    entroact --config run.json [--output-dir d] [--workers k]

Every run writes result.json, series.csv and plot.csv.  Exit status is 0 on
success, 2 when a verification check fails and 1 on operational errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from .catalog import build_system, factorize, load_system
from .counting import sandwich_audit, write_audit_csv
from .entropy.countable import countable_full_entropy_set
from .entropy.growth import GrowthSeries, ProductCloud, estimate_entropy, growth_series
from .entropy.katok import KatokParams, katok_entropy
from .entropy.pointwise import (classify_entropy_points, entropy_function_at,
                                random_walk_support, verify_support_in_entropy_points)
from .errors import CapacityError, DiagnosticError, DomainError, EntroactError, InvariantViolation
from .parallel import pmap
from .semigroup import Word
from .skew import Cylinder, ProductMetricParams, verify_product_formula
from .spaces import (LEFT, RIGHT, Point, cloud_from_points, sample_ball,
                     sample_grid, sample_sobol)

log = logging.getLogger("entroact")

SERIES_HEADER = ["system", "cloud", "mode", "epsilon", "n", "log_avg", "stderr", "saturated",
                 "seed", "config_hash"]
PLOT_HEADER = ["epsilon", "n", "log_avg", "stderr", "mode"]


def _branch(v):
    return RIGHT if v in ("right", 1) else LEFT


def parse_point(space, spec):
    if isinstance(spec, dict):
        return Point(space, tuple(spec["coords"]), _branch(spec.get("branch", "left")))
    return Point(space, tuple(spec))


def build_cloud(G, spec, cfg):
    """Cloud from a config spec; ``None`` means the whole space at ``resolution``."""
    space = G.space
    seed = cfg.get("seed", 0) or 0
    if spec is None:
        spec = {"kind": "grid", "resolution": cfg["resolution"]}
    kind = spec["kind"]
    if kind == "product":
        factors = factorize(G)
        if factors is None or len(factors) != len(spec["factors"]):
            raise DomainError("product cloud needs one factor spec per system block")
        parts = tuple((f, build_cloud(f.system, fs, cfg)) for f, fs in zip(factors, spec["factors"]))
        return ProductCloud(parts, spec.get("label", "product"))
    if kind == "grid":
        cloud = sample_grid(space, spec.get("resolution", cfg["resolution"]))
        if "branch" in spec and space.is_union:
            idx = np.nonzero(cloud.branch == _branch(spec["branch"]))[0]
            cloud = cloud.subset(idx, label=f"{cloud.label}[{spec['branch']}]")
        return cloud
    if kind == "ball":
        c = parse_point(space, {"coords": spec["center"], "branch": spec.get("branch", "left")})
        return sample_ball(space, c, spec["radius"], spec.get("resolution", cfg["resolution"]))
    if kind == "sobol":
        return sample_sobol(space, spec["log2"], spec.get("seed", seed))
    if kind == "point":
        return cloud_from_points(space, [spec["coords"]], [_branch(spec.get("branch", "left"))],
                                 label="point")
    if kind == "points":
        pts = [parse_point(space, p) for p in spec["coords"]]
        return cloud_from_points(space, [p.coords for p in pts], [p.branch for p in pts],
                                 label="points")
    raise DomainError(f"unknown cloud kind {kind!r}")


def _h_kwargs(cfg):
    return dict(eps_schedule=cfg["epsilons"], radius_schedule=cfg["radii"],
                resolution=cfg["resolution"], n_range=range(cfg["n_range"][0], cfg["n_range"][1] + 1),
                mode=cfg["mode"], word_budget=cfg["word_budget"], seed=cfg.get("seed"), M=cfg["M"],
                sampler=cfg["sampler"])


def _n_range(cfg):
    return range(cfg["n_range"][0], cfg["n_range"][1] + 1)


def _global_estimate(G, cfg, workers):
    if "global_estimate" in cfg:
        return float(cfg["global_estimate"]), []
    sub = dict(cfg)
    sub.update(cfg.get("global", {}))
    cloud = build_cloud(G, sub.get("cloud"), sub)
    series = pmap(lambda e: growth_series(G, cloud, e, _n_range(sub), sub["mode"],
                                          sub["word_budget"], sub.get("seed"), sub["M"]),
                  sub["epsilons"], workers)
    return estimate_entropy(series).value, series


def _expect(value, expect):
    """Optional numeric check: {"value": v, "tol": t} or {"min": a} / {"max": b}."""
    if not expect:
        return None
    ok = True
    if "value" in expect:
        ok &= abs(value - expect["value"]) <= expect.get("tol", 0.0)
    if "min" in expect:
        ok &= value >= expect["min"]
    if "max" in expect:
        ok &= value <= expect["max"]
    return bool(ok)


def cmd_entropy(G, cfg, workers):
    cloud = build_cloud(G, cfg.get("cloud"), cfg)
    series = pmap(lambda e: growth_series(G, cloud, e, _n_range(cfg), cfg["mode"],
                                          cfg["word_budget"], cfg.get("seed"), cfg["M"]),
                  cfg["epsilons"], workers)
    est = estimate_entropy(series)
    res = {"estimate": est.to_json(), "value": est.value, "cloud": cloud.label,
           "cloud_size": len(cloud)}
    passed = _expect(est.value, cfg.get("expect"))
    return res, series, passed


def cmd_entropy_function(G, cfg, workers):
    pts = [parse_point(G.space, p) for p in cfg.get("points", [[0.0] * G.space.d])]
    kw = _h_kwargs(cfg)
    samples = pmap(lambda x: entropy_function_at(G, x, **kw), pts, workers)
    series = []
    for s in samples:
        for r, gs in s.series:
            gs.cloud_label = f"ball(x={_fmt_point(s.x)},r={r!r})"
            series.append(gs)
    res = {"samples": [s.to_json() for s in samples]}
    passed = None
    if cfg.get("expect"):
        passed = all(_expect(s.h_of_x, cfg["expect"]) for s in samples)
    return res, series, passed


def _fmt_point(x):
    b = "R" if x.branch == RIGHT else "L"
    return b + ":" + ";".join(repr(float(v)) for v in x.coords)


def cmd_entropy_points(G, cfg, workers):
    g, gseries = _global_estimate(G, cfg, workers)
    cand = build_cloud(G, cfg.get("candidates", {"kind": "grid", "resolution": 8}), cfg)
    pts = cand.points
    kw = _h_kwargs(cfg)
    samples = pmap(lambda x: entropy_function_at(G, x, **kw), pts, workers)
    cls = classify_entropy_points(G, pts, cfg["tau"], g, h_values=[s.h_of_x for s in samples])
    counts = {lab: cls.labels.count(lab) for lab in ("non-entropy", "entropy", "full-entropy")}
    res = {"global_estimate": g, "tau": cfg["tau"], "counts": counts,
           "max_h": max(cls.h_values), "min_h": min(cls.h_values),
           "points": [{"x": list(p.coords), "branch": p.branch, "h": h, "label": lab}
                      for p, h, lab in zip(pts, cls.h_values, cls.labels)]}
    passed = None
    exp = cfg.get("expect") or {}
    if "label" in exp:
        passed = all(lab == exp["label"] for lab in cls.labels)
    if "max_gap" in exp:
        ok = abs(max(cls.h_values) - g) <= exp["max_gap"]
        passed = ok if passed is None else (passed and ok)
    return res, gseries, passed


def cmd_skew_check(G, cfg, workers):
    cloud = build_cloud(G, cfg.get("cloud"), cfg)
    params = ProductMetricParams(cfg["shift_base"])
    cyls = [Cylinder(tuple(c)) for c in cfg["cylinders"]]
    reports = pmap(lambda cyl: verify_product_formula(
        G, cyl, cloud, cfg["epsilons"], _n_range(cfg), cfg["tol"], params, cfg["mode"],
        cfg["word_budget"], cfg.get("seed"), cfg["M"], cfg["tau"]), cyls, workers)
    series = []
    for r in reports:
        series.extend(r.series)
    res = {"reports": [r.to_json() for r in reports]}
    return res, series, all(r.passed for r in reports)


def cmd_katok(G, cfg, workers):
    nu = build_cloud(G, cfg.get("cloud"), cfg)
    params = KatokParams(tuple(cfg["deltas"]), tuple(cfg["epsilons"]), cfg["method"])
    kr = katok_entropy(G, nu, params, _n_range(cfg), cfg["word_budget"], cfg.get("seed"), cfg["M"])
    res = {"katok": kr.to_json(), "value": kr.value}
    series = []
    for (e, d), ys in sorted(kr.log_avg.items(), key=lambda t: (-t[0][0], -t[0][1])):
        series.append(GrowthSeries(e, f"katok(delta={d!r})", list(kr.n_values), ys,
                                   [math.exp(y) for y in ys], kr.saturated[(e, d)], "exhaustive",
                                   cloud_label=nu.label, cloud_size=len(nu), system=G.name))
    exp = cfg.get("expect")
    passed = None
    if exp:
        vals = [v for v in kr.table.values() if v is not None]
        passed = _expect(kr.value, exp)
        if "table_max" in exp:
            passed = (passed is not False) and max(vals) <= exp["table_max"]
    return res, series, passed


def cmd_countable(G, cfg, workers):
    x0 = parse_point(G.space, cfg.get("x0", [0.0] * G.space.d))
    seq = [parse_point(G.space, p) for p in cfg["sequence"]] if "sequence" in cfg else None
    try:
        art = countable_full_entropy_set(
            G, x0, cfg["m_max"], cfg["n_max"], cfg["epsilons"], cfg["resolution"], cfg["k_min"],
            cfg["k_max"], seq, cfg.get("sequence_radii"), cfg["tol"],
            word_budget=cfg["word_budget"], seed=cfg.get("seed"), M=cfg["M"])
    except DiagnosticError as exc:
        return {"error": str(exc), "trace": exc.trace}, [], False
    res = {"artifact": art.to_json(),
           "target": min(art.h_x0) - 1.0 / cfg["m_max"] - cfg["tol"]}
    exp = cfg.get("expect") or {}
    passed = True
    if "limit_points" in exp:
        want = [parse_point(G.space, p) for p in exp["limit_points"]]
        passed = sorted(p.coords for p in art.limit_points) == sorted(p.coords for p in want)
    res["cloud_points"] = [list(c) for c in art.cloud.coords.tolist()]
    return res, [], passed


def random_micro_instance(seed, i, systems, max_points, max_word):
    """Instance i of the audit: depends only on (seed, i)."""
    rng = np.random.default_rng([seed, i])
    spec = load_system(systems[int(rng.integers(len(systems)))])
    G = build_system(spec)
    N = int(rng.integers(2, max_points + 1))
    coords = rng.random((N, G.space.d))
    branch = rng.integers(0, 2, N) if G.space.is_union else np.zeros(N, dtype=int)
    if G.space.is_union:
        for b, comp in ((LEFT, G.space.left), (RIGHT, G.space.right)):
            coords[branch == b, comp.d:] = 0.0
    cloud = cloud_from_points(G.space, coords, branch, label=f"micro{i}")
    n = int(rng.integers(1, max_word + 1))
    w = Word(tuple(int(v) for v in rng.integers(1, G.p + 1, n)))
    eps = float(rng.uniform(0.02, 0.6))
    return spec.name, cloud, G, w, eps


def cmd_sandwich(G, cfg, workers):
    systems = cfg.get("systems", ["expanding23", "doubling", "rotations", "mp_rot", "example43",
                                  "cat"])
    seed = cfg["seed"]

    def run_one(i):
        name, cloud, GG, w, eps = random_micro_instance(seed, i, systems, cfg["max_points"],
                                                        cfg["max_word"])
        try:
            r = sandwich_audit(cloud, GG, w, eps)
            return name, r, None
        except InvariantViolation as exc:
            return name, None, str(exc)

    out = pmap(run_one, range(cfg["instances"]), workers)
    reports = [r for _, r, _ in out if r is not None]
    failures = [{"instance": i, "system": name, "error": err}
                for i, (name, _, err) in enumerate(out) if err is not None]
    res = {"instances": cfg["instances"], "violations": len(failures), "failures": failures,
           "rows": [dict(zip(["word", "epsilon", "b_exact", "s_exact", "b_half_exact",
                              "greedy_sep", "greedy_span", "method"], r.row())) | {"system": name}
                    for name, r, _ in out if r is not None]}
    res["_audit_reports"] = reports
    return res, [], not failures


def cmd_support(G, cfg, workers):
    g, gseries = _global_estimate(G, cfg, workers)
    kw = _h_kwargs(cfg)
    start = Point(G.space, tuple([0.0] * G.space.d), _branch(cfg.get("start_branch", "left")))
    if g <= cfg["tau"]:
        rep = verify_support_in_entropy_points(G, cfg["seed"], cfg["orbit_length"], cfg["tau"], g)
        return {"report": rep.to_json()}, gseries, None
    pts = random_walk_support(G, start, cfg["seed"], cfg["orbit_length"], cfg["n_samples"])
    samples = pmap(lambda x: entropy_function_at(G, x, **kw), pts, workers)
    rep = verify_support_in_entropy_points(G, cfg["seed"], cfg["orbit_length"], cfg["tau"], g,
                                           start, cfg["n_samples"],
                                           {"h_values": [s.h_of_x for s in samples]})
    return {"report": rep.to_json()}, gseries, rep.fraction == 1.0


COMMANDS = {
    "entropy": cmd_entropy,
    "entropy-function": cmd_entropy_function,
    "entropy-points": cmd_entropy_points,
    "skew-check": cmd_skew_check,
    "katok": cmd_katok,
    "countable-set": cmd_countable,
    "sandwich-audit": cmd_sandwich,
    "support-check": cmd_support,
}


def _num(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    return o


def write_series_csv(series, path, seed, chash):
    rows = []
    for s in series:
        for r in s.rows():
            rows.append(r)
    rows.sort(key=lambda r: (r["system"], r["cloud"], r["mode"], -r["epsilon"], r["n"]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for r in rows:
            w.writerow([r["system"], r["cloud"], r["mode"], repr(r["epsilon"]), r["n"],
                        repr(r["log_avg"]), "" if r["stderr"] == "" else repr(r["stderr"]),
                        str(r["saturated"]).lower(), "" if seed is None else seed, chash])


def emit_plot_data(series, path):
    """Long-format CSV sorted by (epsilon desc, n asc); stderr empty unless Monte Carlo."""
    rows = []
    for s in series:
        for k, n in enumerate(s.n_values):
            se = "" if s.stderr is None else repr(float(s.stderr[k]))
            rows.append((float(s.epsilon), int(n), float(s.log_avg[k]), se, s.mode,
                         s.cloud_label))
    rows.sort(key=lambda r: (-r[0], r[1], r[4], r[5], r[2]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_HEADER)
        for e, n, y, se, mode, _ in rows:
            w.writerow([repr(e), n, repr(y), se, mode])


def run(cfg, output_dir, workers=1):
    """Execute a prepared config; returns the exit status."""
    chash = cfgmod.config_hash(cfg)
    spec = load_system(cfg["system"])
    G = build_system(spec)
    res, series, passed = COMMANDS[cfg["command"]](G, cfg, workers)
    os.makedirs(output_dir, exist_ok=True)
    audit = res.pop("_audit_reports", None)
    if audit is not None:
        write_audit_csv(audit, os.path.join(output_dir, "audit.csv"))
    out = {"command": cfg["command"], "system": spec.name, "system_spec": spec.to_json(),
           "seed": cfg.get("seed"), "config_hash": chash,
           "pass": passed, "result": res}
    with open(os.path.join(output_dir, "result.json"), "w") as fh:
        json.dump(_jsonable(out), fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_series_csv(series, os.path.join(output_dir, "series.csv"), cfg.get("seed"), chash)
    emit_plot_data(series, os.path.join(output_dir, "plot.csv"))
    return 2 if passed is False else 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="entroact", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--output-dir")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = cfgmod.load(args.config)
        workers = args.workers or cfg["workers"]
        out = args.output_dir or cfg.get("output_dir") or "."
        return run(cfg, out, workers)
    except CapacityError as exc:
        log.error("%s%s", exc, f" (hint: {exc.hint})" if exc.hint else "")
        return 1
    except DiagnosticError as exc:
        log.error("diagnostic check failed: %s", exc)
        return 2
    except (EntroactError, OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
