"""Compact metric spaces, points, and deterministic sample clouds.

Every space is embedded coordinate-wise into a box where each coordinate is
either periodic (circle metric) or linear (absolute difference), and the
metric is the maximum over coordinates.  Tori therefore carry the sup metric
and a disjoint union gets an extra linear "branch" coordinate valued 0 or 1,
which makes the cross-branch distance exactly 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import CapacityError, DomainError

# Maximum number of lattice points a single grid may hold.
MAX_GRID_POINTS = 2**24

LEFT, RIGHT = 0, 1


def canonical_round(d):
    """Round distances to 1e-15 so that ties compare identically everywhere."""
    return np.round(d, 15)


@dataclass(frozen=True)
class Space:
    kind: str
    d: int = 1
    left: Space | None = None
    right: Space | None = None

    def __post_init__(self):
        if self.kind not in ("circle", "interval01", "torus", "disjoint_union"):
            raise DomainError(f"unknown space kind {self.kind!r}")
        if self.kind == "torus" and self.d < 1:
            raise DomainError("torus dimension must be >= 1")
        if self.kind in ("circle", "interval01") and self.d != 1:
            raise DomainError(f"{self.kind} has dimension 1")
        if self.kind == "disjoint_union":
            if self.left is None or self.right is None:
                raise DomainError("disjoint_union needs two components")
            if self.left.is_union or self.right.is_union:
                raise DomainError("nested disjoint unions are not supported")
            object.__setattr__(self, "d", max(self.left.d, self.right.d))

    @property
    def is_union(self):
        return self.kind == "disjoint_union"

    def component(self, branch):
        if not self.is_union:
            return self
        return self.left if branch == LEFT else self.right

    def periodic_axes(self):
        """Per-coordinate periodicity of the point coordinates (non-union spaces)."""
        if self.kind == "interval01":
            return np.zeros(1, dtype=bool)
        return np.ones(self.d, dtype=bool)

    @property
    def embed_dim(self):
        if self.is_union:
            return 1 + self.left.d + self.right.d
        return self.d

    @property
    def periodic(self):
        """Periodicity flags of the embedding coordinates."""
        if self.is_union:
            return np.concatenate(
                [[False], self.left.periodic_axes(), self.right.periodic_axes()]
            )
        return self.periodic_axes()

    def embed(self, coords, branch):
        """Map point arrays ``(N, d)`` / ``(N,)`` to the sup-metric embedding."""
        coords = np.asarray(coords, dtype=float)
        if not self.is_union:
            return coords
        n = coords.shape[0]
        dl, dr = self.left.d, self.right.d
        out = np.zeros((n, 1 + dl + dr))
        on_right = np.asarray(branch) == RIGHT
        out[:, 0] = on_right
        out[~on_right, 1 : 1 + dl] = coords[~on_right, :dl]
        out[on_right, 1 + dl :] = coords[on_right, :dr]
        return out

    def canonicalize(self, coords, branch=None):
        """Reduce periodic coordinates into [0, 1); validate interval ones."""
        coords = np.array(coords, dtype=float, copy=True)
        if coords.ndim == 1:
            coords = coords[:, None] if self.d == 1 and coords.size != 1 else coords.reshape(1, -1)
        if self.is_union:
            branch = np.asarray(branch)
            for b, comp in ((LEFT, self.left), (RIGHT, self.right)):
                sel = branch == b
                if sel.any():
                    coords[sel, : comp.d] = comp.canonicalize(coords[sel, : comp.d])
                    coords[sel, comp.d :] = 0.0
            return coords
        if self.kind == "interval01":
            if np.any(coords < 0.0) or np.any(coords > 1.0):
                raise DomainError("interval coordinates must lie in [0, 1]")
            return coords
        coords = np.mod(coords, 1.0)
        coords[coords >= 1.0] = 0.0
        return coords

    def to_json(self):
        if self.is_union:
            return {"kind": self.kind, "left": self.left.to_json(), "right": self.right.to_json()}
        if self.kind == "torus":
            return {"kind": "torus", "dim": self.d}
        return {"kind": self.kind}

    @classmethod
    def from_json(cls, obj):
        kind = obj.get("kind")
        if kind == "disjoint_union":
            return disjoint_union(cls.from_json(obj["left"]), cls.from_json(obj["right"]))
        if kind == "torus":
            return torus(int(obj.get("dim", 1)))
        if kind in ("circle", "interval01"):
            return Space(kind)
        raise DomainError(f"unknown space kind {kind!r}")


def circle():
    return Space("circle")


def interval01():
    return Space("interval01")


def torus(d):
    return Space("torus", d)


def disjoint_union(left, right):
    return Space("disjoint_union", left=left, right=right)


@dataclass(frozen=True)
class Point:
    space: Space
    coords: tuple
    branch: int = LEFT

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        comp = self.space.component(self.branch)
        if self.space.is_union and self.branch not in (LEFT, RIGHT):
            raise DomainError("branch must be 0 (left) or 1 (right)")
        if c.shape != (comp.d,) and c.shape != (self.space.d,):
            raise DomainError(f"expected {comp.d} coordinates, got {c.shape}")
        full = np.zeros(self.space.d)
        full[: c.size] = c
        canon = self.space.canonicalize(full[None, :], np.array([self.branch]))[0]
        object.__setattr__(self, "coords", tuple(float(v) for v in canon))
        if not self.space.is_union:
            object.__setattr__(self, "branch", LEFT)

    def as_arrays(self):
        return np.array([self.coords]), np.array([self.branch], dtype=np.int8)


def embedded_distance(ya, yb, periodic):
    """Sup distance between embedded points; broadcasts over leading axes."""
    diff = np.abs(np.asarray(ya) - np.asarray(yb))
    diff = np.where(periodic, np.minimum(diff, 1.0 - diff), diff)
    return diff.max(axis=-1)


def distance(space, x, y):
    """Metric on ``space``; see the module docstring for the conventions."""
    if x.space != space or y.space != space:
        raise DomainError("points do not belong to the given space")
    ya = space.embed(*x.as_arrays())
    yb = space.embed(*y.as_arrays())
    return float(embedded_distance(ya, yb, space.periodic)[0])


@dataclass(frozen=True)
class SampleCloud:
    """Finite weighted sample of a compact set.

    ``mesh`` bounds the distance from any point of the represented set to the
    cloud; for Sobol clouds it is a probed estimate (see :func:`sample_sobol`).
    """

    space: Space
    coords: np.ndarray
    branch: np.ndarray
    weights: np.ndarray
    mesh: float
    label: str = ""
    mesh_estimated: bool = field(default=False, compare=False)

    def __post_init__(self):
        coords = np.ascontiguousarray(np.asarray(self.coords, dtype=float).reshape(-1, self.space.d))
        branch = np.asarray(self.branch, dtype=np.int8).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(coords) == len(branch) == len(weights)):
            raise DomainError("coords, branch and weights must be aligned")
        if len(weights) and abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError("weights must sum to 1")
        if np.any(weights < 0):
            raise DomainError("weights must be nonnegative")
        if not self.mesh > 0:
            raise DomainError("mesh must be positive")
        for name, arr in (("coords", coords), ("branch", branch), ("weights", weights)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.coords)

    def __eq__(self, other):
        if not isinstance(other, SampleCloud):
            return NotImplemented
        return (
            self.space == other.space
            and self.mesh == other.mesh
            and self.label == other.label
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.branch, other.branch)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None

    def point(self, i):
        return Point(self.space, tuple(self.coords[i]), int(self.branch[i]))

    @property
    def points(self):
        return [self.point(i) for i in range(len(self))]

    def embedding(self):
        return self.space.embed(self.coords, self.branch)

    def subset(self, idx, label=None, mesh=None):
        idx = np.asarray(idx, dtype=np.int64)
        w = self.weights[idx]
        w = w / w.sum() if w.sum() > 0 else np.full(len(idx), 1.0 / max(len(idx), 1))
        return SampleCloud(
            self.space,
            self.coords[idx],
            self.branch[idx],
            w,
            self.mesh if mesh is None else mesh,
            label if label is not None else self.label,
            self.mesh_estimated,
        )

    def with_weights(self, weights):
        return SampleCloud(self.space, self.coords, self.branch, weights, self.mesh, self.label,
                           self.mesh_estimated)

    def check_distinct(self):
        keys = np.column_stack([self.branch.astype(float), self.coords])
        return len(np.unique(keys, axis=0)) == len(keys)

    def to_csv(self, path):
        """Write ``idx,branch,c0..c{d-1},weight`` rows with 17 significant digits."""
        header = ["idx", "branch"] + [f"c{k}" for k in range(self.space.d)] + ["weight"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(len(self)):
                row = [i, "right" if self.branch[i] == RIGHT else "left"]
                row += [format(v, ".17g") for v in self.coords[i]]
                row.append(format(self.weights[i], ".17g"))
                w.writerow(row)


def cloud_from_points(space, coords, branch=None, mesh=1.0, label="", weights=None):
    coords = np.asarray(coords, dtype=float).reshape(-1, space.d)
    n = len(coords)
    branch = np.zeros(n, dtype=np.int8) if branch is None else np.asarray(branch, dtype=np.int8)
    coords = space.canonicalize(coords, branch)
    if weights is None:
        weights = np.full(n, 1.0 / n) if n else np.zeros(0)
    return SampleCloud(space, coords, branch, weights, mesh, label)


def _check_budget(d, resolution):
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    if d * math.log(resolution) > math.log(MAX_GRID_POINTS) + 1e-12:
        raise CapacityError(
            f"grid with {resolution}^{d} points exceeds the budget of {MAX_GRID_POINTS}",
            hint="lower the resolution or use a Sobol/product cloud",
        )


def _lattice(d, idx_lists, resolution):
    """Lexicographic product of per-axis index lists, as coordinates k/resolution."""
    grids = np.meshgrid(*idx_lists, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1).astype(float) / resolution


def sample_grid(space, resolution):
    """Uniform lattice {k/resolution} per axis, lexicographic order, mesh 1/(2 resolution)."""
    comps = [(LEFT, space.left), (RIGHT, space.right)] if space.is_union else [(LEFT, space)]
    parts, branches = [], []
    for b, comp in comps:
        _check_budget(comp.d, resolution)
        c = _lattice(comp.d, [np.arange(resolution)] * comp.d, resolution)
        full = np.zeros((len(c), space.d))
        full[:, : comp.d] = c
        parts.append(full)
        branches.append(np.full(len(c), b, dtype=np.int8))
    coords = np.concatenate(parts)
    branch = np.concatenate(branches)
    n = len(coords)
    return SampleCloud(space, coords, branch, np.full(n, 1.0 / n), 1.0 / (2 * resolution),
                       f"grid({resolution})")


def _axis_ball(center, radius, resolution, periodic):
    vals = np.arange(resolution) / resolution
    diff = np.abs(vals - center)
    if periodic:
        diff = np.minimum(diff, 1.0 - diff)
    diff = canonical_round(diff)
    return np.nonzero(diff <= radius)[0], int(np.argmin(diff))


def sample_ball(space, center, radius, resolution):
    """Grid points within the closed ball; never empty (nearest grid point kept)."""
    if not radius > 0:
        raise DomainError("radius must be positive")
    if center.space != space:
        raise DomainError("center does not belong to the space")
    comps = [(center.branch, space.component(center.branch))]
    if space.is_union and radius >= 1.0:
        comps = [(LEFT, space.left), (RIGHT, space.right)]
    parts, branches = [], []
    for b, comp in comps:
        per = comp.periodic_axes()
        if b == center.branch:
            c = np.asarray(center.coords[: comp.d])
            axes = [_axis_ball(c[k], radius, resolution, per[k]) for k in range(comp.d)]
            idx_lists = [a[0] for a in axes]
            if any(len(ix) == 0 for ix in idx_lists):
                idx_lists = [np.array([a[1]]) for a in axes]
        else:
            idx_lists = [np.arange(resolution)] * comp.d
        if np.prod([float(len(ix)) for ix in idx_lists]) > MAX_GRID_POINTS:
            raise CapacityError("ball cloud exceeds the grid budget", hint="lower the resolution")
        pts = _lattice(comp.d, idx_lists, resolution)
        full = np.zeros((len(pts), space.d))
        full[:, : comp.d] = pts
        parts.append(full)
        branches.append(np.full(len(pts), b, dtype=np.int8))
    coords = np.concatenate(parts)
    branch = np.concatenate(branches)
    order = np.lexsort(tuple(coords[:, k] for k in range(space.d - 1, -1, -1)) + (branch,))
    coords, branch = coords[order], branch[order]
    n = len(coords)
    return SampleCloud(space, coords, branch, np.full(n, 1.0 / n), 1.0 / (2 * resolution),
                       f"ball(r={radius:g},res={resolution})")


def sample_sobol(space, log2_size, seed, box=None):
    """Scrambled Sobol cloud of 2**log2_size points, optionally inside a sup-ball.

    ``box`` is ``(center_coords, radius)``; points are drawn in the cube of
    side ``2 radius`` around the center and wrapped.  The recorded mesh is a
    probed estimate: the largest distance from 2N uniform probes to the cloud.
    """
    if space.is_union:
        raise DomainError("Sobol clouds are defined on single components")
    d = space.d
    pts = qmc.Sobol(d, scramble=True, seed=seed).random_base2(log2_size)
    if box is not None:
        c, r = np.asarray(box[0], dtype=float), float(box[1])
        pts = c + (2 * pts - 1) * min(r, 0.5)
    coords = space.canonicalize(pts)
    rng = np.random.default_rng(seed)
    probes = rng.random((2 * len(coords), d))
    if box is not None:
        probes = space.canonicalize(c + (2 * probes - 1) * min(r, 0.5))
    per = space.periodic_axes()
    boxsize = np.where(per, 1.0, 3.0)
    tree = cKDTree(coords, boxsize=boxsize)
    dist, _ = tree.query(probes, k=1, p=np.inf)
    mesh = float(dist.max()) if len(dist) else 1.0
    n = len(coords)
    return SampleCloud(space, coords, np.zeros(n, dtype=np.int8), np.full(n, 1.0 / n),
                       max(mesh, 1e-12), f"sobol(2^{log2_size},seed={seed})", True)
