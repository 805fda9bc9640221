"""Run configuration: schema validation, seed override and content hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os

import jsonschema

from .errors import DomainError

log = logging.getLogger("entroact")

COMMANDS = ["entropy", "entropy-function", "entropy-points", "skew-check", "katok",
            "countable-set", "sandwich-audit", "support-check"]

# commands that always sample (words, suffixes, micro-instances or walks)
SAMPLING_COMMANDS = {"sandwich-audit", "support-check", "skew-check", "katok"}

_decreasing = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}

_cloud = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["grid", "ball", "sobol", "point", "product", "points"]},
        "resolution": {"type": "integer", "minimum": 2},
        "log2": {"type": "integer", "minimum": 1, "maximum": 24},
        "seed": {"type": "integer"},
        "center": {"type": "array", "items": {"type": "number"}},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "coords": {"type": "array"},
        "branch": {"enum": ["left", "right", 0, 1]},
        "factors": {"type": "array"},
    },
    "required": ["kind"],
}

SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": COMMANDS},
        "system": {"anyOf": [{"type": "string"}, {"type": "object"}]},
        "resolution": {"type": "integer", "minimum": 2},
        "sampler": {"enum": ["grid", "sobol"]},
        "epsilons": _decreasing,
        "n_range": {"type": "array", "items": {"type": "integer", "minimum": 1},
                    "minItems": 2, "maxItems": 2},
        "mode": {"enum": ["separated", "spanning", "signature"]},
        "word_budget": {"type": "integer", "minimum": 1},
        "M": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "deltas": _decreasing,
        "radii": _decreasing,
        "cloud": _cloud,
        "points": {"type": "array"},
        "candidates": _cloud,
        "global": {"type": "object"},
        "global_estimate": {"type": "number"},
        "cylinders": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "tol": {"type": "number", "minimum": 0},
        "shift_base": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "x0": {"type": "array", "items": {"type": "number"}},
        "sequence": {"type": "array"},
        "sequence_radii": _decreasing,
        "m_max": {"type": "integer", "minimum": 1},
        "n_max": {"type": "integer", "minimum": 1},
        "k_min": {"type": "integer", "minimum": 1},
        "k_max": {"type": "integer", "minimum": 1},
        "instances": {"type": "integer", "minimum": 1},
        "max_points": {"type": "integer", "minimum": 1, "maximum": 24},
        "max_word": {"type": "integer", "minimum": 1},
        "systems": {"type": "array", "items": {"anyOf": [{"type": "string"}, {"type": "object"}]}},
        "orbit_length": {"type": "integer", "minimum": 1},
        "n_samples": {"type": "integer", "minimum": 1},
        "start_branch": {"enum": ["left", "right", 0, 1]},
        "method": {"enum": ["auto", "exact", "isolation"]},
        "expect": {"type": "object"},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
    "required": ["command", "system"],
    "additionalProperties": False,
}

DEFAULTS = {
    "resolution": 4096,
    "sampler": "grid",
    "epsilons": [0.2, 0.1],
    "n_range": [1, 8],
    "mode": "separated",
    "word_budget": 65536,
    "M": 256,
    "tau": 0.05,
    "deltas": [0.2, 0.1],
    "radii": [0.2, 0.1],
    "tol": 0.15,
    "shift_base": 0.5,
    "cylinders": [[]],
    "m_max": 3,
    "n_max": 6,
    "k_min": 3,
    "k_max": 9,
    "instances": 200,
    "max_points": 14,
    "max_word": 4,
    "orbit_length": 24,
    "n_samples": 64,
    "method": "auto",
    "workers": 1,
}

_NON_CONTENT = {"output_dir", "workers"}


def _strictly_decreasing(xs):
    return all(b < a for a, b in zip(xs, xs[1:]))


def validate(cfg):
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = ["/".join(str(p) for p in e.absolute_path) + ": " + e.message for e in errors]
        raise DomainError("config schema violation: " + "; ".join(msgs))
    for key in ("epsilons", "deltas", "radii", "sequence_radii"):
        if key in cfg and not _strictly_decreasing(cfg[key]):
            raise DomainError(f"config schema violation: {key}: schedule must be strictly decreasing")
    if "n_range" in cfg and cfg["n_range"][0] > cfg["n_range"][1]:
        raise DomainError("config schema violation: n_range: lower bound exceeds upper bound")


def load(path, env=None):
    with open(path) as fh:
        cfg = json.load(fh)
    return prepare(cfg, env)


def prepare(cfg, env=None):
    cfg = copy.deepcopy(cfg)
    validate(cfg)
    env = os.environ if env is None else env
    if env.get("ENTROACT_SEED") not in (None, ""):
        seed = int(env["ENTROACT_SEED"])
        log.info("ENTROACT_SEED overrides config seed %s -> %d", cfg.get("seed"), seed)
        cfg["seed"] = seed
    full = dict(DEFAULTS)
    full.update(cfg)
    if full["command"] in SAMPLING_COMMANDS and "seed" not in full:
        raise DomainError(f"config schema violation: seed: required for {full['command']}")
    return full


def config_hash(cfg):
    content = {k: v for k, v in cfg.items() if k not in _NON_CONTENT}
    blob = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
