"""Built-in generator systems and their JSON descriptions.

Map descriptors act on coordinate arrays ``(N, d)`` plus a branch array and
return canonical coordinates.  ``lipschitz`` is a per-step bound in the sup
metric used by the mesh feasibility guard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .semigroup import GeneratorSet
from .spaces import LEFT, RIGHT, Space, circle, disjoint_union, torus


def _wrap(y):
    y = np.mod(y, 1.0)
    y[y >= 1.0] = 0.0
    return y


class _Map:
    is_identity = False
    invertible = False
    dim = 1

    def apply(self, coords, branch):
        out = np.array(coords, dtype=float, copy=True)
        out[:, : self.dim] = self._act(out[:, : self.dim])
        return out, branch

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(repr(self.to_json()))

    def __repr__(self):
        return f"{type(self).__name__}({self.to_json()['params']})"


class ExpandingCircle(_Map):
    def __init__(self, k):
        if int(k) != k or k < 2:
            raise DomainError("expanding_circle needs an integer k >= 2")
        self.k = int(k)
        self.lipschitz = float(self.k)

    def _act(self, x):
        return _wrap(self.k * x)

    def to_json(self):
        return {"type": "expanding_circle", "params": {"k": self.k}}


class Rotation(_Map):
    invertible = True
    lipschitz = 1.0

    def __init__(self, alpha):
        self.alpha = float(alpha)

    def _act(self, x):
        return _wrap(x + self.alpha)

    def to_json(self):
        return {"type": "rotation", "params": {"alpha": self.alpha}}


class MannevillePomeau(_Map):
    """Induced circle map x(1 + (2x)^beta) on [0, 1/2], 2x - 1 on (1/2, 1)."""

    def __init__(self, beta):
        if not beta > 0:
            raise DomainError("manneville_pomeau needs beta > 0")
        self.beta = float(beta)
        self.lipschitz = max(2.0, 2.0 + self.beta)

    def _act(self, x):
        left = x <= 0.5
        y = np.where(left, x * (1.0 + np.power(2.0 * x, self.beta)), 2.0 * x - 1.0)
        return _wrap(y)

    def to_json(self):
        return {"type": "manneville_pomeau", "params": {"beta": self.beta}}


class ToralEndo(_Map):
    def __init__(self, M):
        M = np.asarray(M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DomainError("toral_endo needs a square matrix")
        if not np.all(np.asarray(M, dtype=float) == np.round(np.asarray(M, dtype=float))):
            raise DomainError("toral_endo entries must be integers")
        self.M = M.astype(np.int64)
        self.M.setflags(write=False)
        self.dim = M.shape[0]
        self.lipschitz = float(max(1, np.abs(self.M).sum(axis=1).max()))
        det = round(np.linalg.det(self.M)) if self.dim else 1
        self.invertible = abs(det) == 1
        self.is_identity = bool(np.array_equal(self.M, np.eye(self.dim, dtype=np.int64)))

    def _act(self, x):
        # exact for dyadic inputs; the matrix has small integer entries
        return _wrap(x @ self.M.T.astype(float))

    def to_json(self):
        return {"type": "toral_endo", "params": {"M": self.M.tolist()}}


class Identity(_Map):
    is_identity = True
    invertible = True
    lipschitz = 1.0

    def apply(self, coords, branch):
        return np.array(coords, dtype=float, copy=True), branch

    def to_json(self):
        return {"type": "identity", "params": {}}


class Branchwise(_Map):
    """Acts by ``left`` on the left branch and by ``right`` on the right branch."""

    def __init__(self, left, right):
        self.left, self.right = left, right
        self.lipschitz = max(left.lipschitz, right.lipschitz)
        self.invertible = left.invertible and right.invertible
        self.is_identity = left.is_identity and right.is_identity

    def apply(self, coords, branch):
        out = np.array(coords, dtype=float, copy=True)
        branch = np.asarray(branch)
        for b, m in ((LEFT, self.left), (RIGHT, self.right)):
            sel = branch == b
            if sel.any():
                sub, _ = m.apply(out[sel], branch[sel])
                out[sel] = sub
        return out, branch

    def to_json(self):
        return {"type": "branchwise",
                "params": {"left": self.left.to_json(), "right": self.right.to_json()}}


def map_from_json(obj):
    t, params = obj.get("type"), obj.get("params", {}) or {}
    if t == "expanding_circle":
        return ExpandingCircle(params["k"])
    if t == "rotation":
        return Rotation(params["alpha"])
    if t == "manneville_pomeau":
        return MannevillePomeau(params["beta"])
    if t == "toral_endo":
        return ToralEndo(params["M"])
    if t == "identity":
        return Identity()
    if t == "branchwise":
        return Branchwise(map_from_json(params["left"]), map_from_json(params["right"]))
    raise DomainError(f"unknown generator type {t!r}")


@dataclass(frozen=True)
class SystemSpec:
    name: str
    space: Space
    generators: tuple
    max_expansion: float
    invertible: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def to_json(self):
        return {
            "name": self.name,
            "space": self.space.to_json(),
            "generators": [g.to_json() for g in self.generators],
            "max_expansion": self.max_expansion,
            "invertible": self.invertible,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            name=obj["name"],
            space=Space.from_json(obj["space"]),
            generators=tuple(map_from_json(g) for g in obj["generators"]),
            max_expansion=float(obj["max_expansion"]),
            invertible=bool(obj.get("invertible", False)),
        )


def _check_pairing(space, m):
    if isinstance(m, Branchwise):
        if not space.is_union:
            raise DomainError("branchwise generator needs a disjoint_union space")
        _check_pairing(space.left, m.left)
        _check_pairing(space.right, m.right)
        return
    if space.is_union:
        raise DomainError("disjoint_union spaces need branchwise generators")
    if isinstance(m, ToralEndo):
        if space.kind not in ("torus", "circle") or m.dim != space.d:
            raise DomainError(f"matrix of size {m.dim} does not match {space.kind}({space.d})")
    elif isinstance(m, (ExpandingCircle, Rotation, MannevillePomeau)):
        if space.kind != "circle" and not (space.kind == "torus" and space.d == 1):
            raise DomainError(f"{type(m).__name__} acts on the circle only")


def build_system(spec):
    for m in spec.generators:
        _check_pairing(spec.space, m)
    lip = max(m.lipschitz for m in spec.generators)
    if spec.max_expansion < lip * (1 - 1e-12):
        raise DomainError(f"declared max_expansion {spec.max_expansion} below the bound {lip}")
    return GeneratorSet(spec.space, tuple(spec.generators), spec.invertible,
                        spec.max_expansion, spec.name)


C_CAT = ((2, 1), (1, 1))
ROTATION_ANGLES = (math.sqrt(2) - 1, math.sqrt(3) - 1)


def example44_matrices():
    C = np.array(C_CAT)
    A = np.zeros((5, 5), dtype=np.int64)
    B = np.zeros((5, 5), dtype=np.int64)
    A[:2, :2], A[2:4, 2:4] = C, np.eye(2, dtype=np.int64)
    B[:2, :2], B[2:4, 2:4] = np.eye(2, dtype=np.int64), C
    return A, B


def builtin(name, **params):
    """Canonical systems used by the acceptance suite."""
    if name == "expanding23":
        return SystemSpec(name, circle(), (ExpandingCircle(2), ExpandingCircle(3)), 3.0, False)
    if name == "doubling":
        return SystemSpec(name, circle(), (ExpandingCircle(2),), 2.0, False)
    if name == "rotations":
        a, b = ROTATION_ANGLES
        return SystemSpec(name, circle(), (Rotation(a), Rotation(b)), 1.0, True)
    if name == "mp_rot":
        beta = float(params.get("beta", 0.5))
        alpha = float(params.get("alpha", ROTATION_ANGLES[0]))
        mp = MannevillePomeau(beta)
        return SystemSpec(name, circle(), (mp, Rotation(alpha)), mp.lipschitz, False,
                          {"beta": beta, "alpha": alpha})
    if name == "example43":
        space = disjoint_union(circle(), circle())
        gens = (Branchwise(ExpandingCircle(2), Identity()),
                Branchwise(ExpandingCircle(3), Identity()))
        return SystemSpec(name, space, gens, 3.0, False)
    if name == "example44":
        A, B = example44_matrices()
        return SystemSpec(name, torus(5), (ToralEndo(A), ToralEndo(B)), 3.0, False)
    if name == "cat":
        return SystemSpec(name, torus(2), (ToralEndo(np.array(C_CAT)),), 3.0, True)
    raise DomainError(f"unknown builtin system {name!r}")


BUILTIN_NAMES = ("expanding23", "doubling", "rotations", "mp_rot", "example43", "example44", "cat")


def load_system(obj):
    """Builtin name, ``{"builtin": name, ...params}``, or a full spec object."""
    if isinstance(obj, str):
        return builtin(obj)
    if "builtin" in obj:
        extra = {k: v for k, v in obj.items() if k != "builtin"}
        return builtin(obj["builtin"], **extra)
    return SystemSpec.from_json(obj)


@dataclass(frozen=True)
class Factor:
    """One block of a block-diagonal toral system."""

    axes: tuple
    system: GeneratorSet


def factorize(G):
    """Split a toral-endomorphism system into independent coordinate blocks.

    Returns a list of factors whose product is conjugate to ``G`` by a
    coordinate permutation, or ``None`` if ``G`` is not a toral system or
    does not split.
    """
    if G.space.kind != "torus" or not all(isinstance(m, ToralEndo) for m in G.maps):
        return None
    d = G.space.d
    parent = list(range(d))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for m in G.maps:
        rows, cols = np.nonzero(m.M)
        for r, c in zip(rows, cols):
            parent[find(r)] = find(c)
    groups = {}
    for a in range(d):
        groups.setdefault(find(a), []).append(a)
    blocks = sorted(groups.values())
    if len(blocks) == 1:
        return None
    out = []
    for ax in blocks:
        sub = tuple(ToralEndo(m.M[np.ix_(ax, ax)]) for m in G.maps)
        sp = torus(len(ax))
        lip = max(s.lipschitz for s in sub)
        inv = all(s.invertible for s in sub)
        out.append(Factor(tuple(ax), GeneratorSet(sp, sub, inv, lip, f"{G.name}{list(ax)}")))
    return out
