"""Generator sets, words, word application and the Bowen metric along a word.

Words are applied right-to-left in the algebraic sense: the word (i_1, ..., i_n)
acts as g_{i_n} o ... o g_{i_1}, so i_1 is applied first.  The Bowen metric
compares the prefix images j = 0, ..., n-1 (identity included, the image under
the full word excluded), matching the classical d_n of a single map.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DomainError
from .spaces import Point, Space, embedded_distance, canonical_round, sample_grid

DEFAULT_WORD_BUDGET = 65536


@dataclass(frozen=True)
class Word:
    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 1 for i in idx):
            raise DomainError("word indices start at 1")
        object.__setattr__(self, "indices", idx)

    @property
    def n(self):
        return len(self.indices)

    def __len__(self):
        return len(self.indices)

    def __str__(self):
        if all(i < 10 for i in self.indices):
            return "".join(str(i) for i in self.indices)
        return ",".join(str(i) for i in self.indices)

    def concat(self, other):
        """Word acting as ``self`` after ``other`` (``other`` is applied first)."""
        return Word(other.indices + self.indices)

    @classmethod
    def parse(cls, text):
        text = str(text).strip()
        if not text:
            return cls(())
        if "," in text:
            return cls(tuple(int(t) for t in text.split(",")))
        return cls(tuple(int(c) for c in text))


@dataclass(frozen=True)
class GeneratorSet:
    """The p generator maps of a free semigroup action with uniform weighting.

    Each map exposes ``apply(coords, branch) -> (coords, branch)`` on arrays,
    plus ``is_identity`` and ``invertible`` attributes (see ``catalog``).
    """

    space: Space
    maps: tuple
    invertible: bool = False
    max_expansion: float = 1.0
    name: str = ""
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        if len(self.maps) < 1:
            raise DomainError("need at least one generator")
        if self.check:
            grid = sample_grid(self.space, 16)
            for m in self.maps:
                c, b = m.apply(grid.coords, grid.branch)
                c2 = self.space.canonicalize(c, b)
                if not np.array_equal(c, c2):
                    raise DomainError(f"generator {m!r} does not return canonical points")

    @property
    def p(self):
        return len(self.maps)

    @property
    def word_weighting(self):
        return np.full(self.p, 1.0 / self.p)

    def identity_letters(self):
        return frozenset(i + 1 for i, m in enumerate(self.maps) if getattr(m, "is_identity", False))

    def step(self, letter, coords, branch):
        return self.maps[letter - 1].apply(coords, branch)


def _check_word(G, w):
    if any(i > G.p for i in w.indices):
        raise DomainError(f"word {w} uses a letter outside 1..{G.p}")


def apply_word_arrays(G, w, coords, branch):
    _check_word(G, w)
    for i in w.indices:
        coords, branch = G.step(i, coords, branch)
    return coords, branch


def apply_word(G, w, x):
    """g_{i_n}(...g_{i_1}(x)...); the empty word returns x."""
    if x.space != G.space:
        raise DomainError("point does not belong to the generator space")
    c, b = apply_word_arrays(G, w, *x.as_arrays())
    return Point(G.space, tuple(c[0]), int(b[0]))


def prefix_images(G, w, coords, branch):
    """Yield the embedded prefix images for j = 0, ..., n-1."""
    _check_word(G, w)
    for j in range(w.n):
        yield G.space.embed(coords, branch)
        if j < w.n - 1:
            coords, branch = G.step(w.indices[j], coords, branch)


def bowen_embedding(G, w, coords, branch):
    """Concatenated prefix embeddings; sup distance on it equals d_g."""
    if w.n < 1:
        raise DomainError("the Bowen metric needs a word of length >= 1")
    blocks = list(prefix_images(G, w, np.asarray(coords, float), np.asarray(branch)))
    return np.concatenate(blocks, axis=1), np.tile(G.space.periodic, w.n)


def bowen_distance(G, w, x, y):
    if w.n < 1:
        raise DomainError("empty word; use spaces.distance instead")
    if x.space != G.space or y.space != G.space:
        raise DomainError("points do not belong to the generator space")
    ca, ba = x.as_arrays()
    cb, bb = y.as_arrays()
    Y, per = bowen_embedding(G, w, np.vstack([ca, cb]), np.concatenate([ba, bb]))
    return float(embedded_distance(Y[0], Y[1], per))


def bowen_distance_matrix(G, w, coords, branch):
    """Full pairwise d_g matrix, canonically rounded (small clouds only)."""
    Y, per = bowen_embedding(G, w, coords, branch)
    return canonical_round(embedded_distance(Y[:, None, :], Y[None, :, :], per))


def enumerate_words(p, n, budget=DEFAULT_WORD_BUDGET):
    if p < 1 or n < 0:
        raise DomainError("need p >= 1 and n >= 0")
    if p**n > budget:
        raise CapacityError(
            f"{p}^{n} words exceed the exhaustive budget {budget}",
            hint="use sample_words (Monte Carlo) or lower n_max",
        )
    return [Word(t) for t in itertools.product(range(1, p + 1), repeat=n)]


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def keyed_uint64(seed, stream, index, k):
    """Counter-based 64-bit hash of (seed, stream, index, k); vectorized over arrays."""
    with np.errstate(over="ignore"):
        z = _splitmix(np.asarray(seed, dtype=np.uint64) ^ np.uint64(0x5EED))
        z = _splitmix(z ^ np.asarray(stream, dtype=np.uint64))
        z = _splitmix(z ^ np.asarray(index, dtype=np.uint64))
        return _splitmix(z ^ np.asarray(k, dtype=np.uint64))


def sample_word_array(p, n, M, seed, start=0):
    """(M, n) array of 1-based symbols; row i depends only on (seed, n, start+i)."""
    if M < 1:
        raise DomainError("sample size must be >= 1")
    idx = np.arange(start, start + M, dtype=np.uint64)[:, None]
    k = np.arange(n, dtype=np.uint64)[None, :]
    h = keyed_uint64(np.uint64(seed), np.uint64(n), idx, k)
    return (h % np.uint64(p)).astype(np.int64) + 1


def sample_words(p, n, M, seed):
    arr = sample_word_array(p, n, M, seed)
    return [Word(tuple(row)) for row in arr.tolist()]


@dataclass(frozen=True)
class OrbitSignature:
    cells: tuple


def signature_cells(G, w, coords, branch, cell_width):
    """(N, n, m) integer array of quantized prefix images."""
    if cell_width <= 0:
        raise DomainError("cell width must be positive")
    blocks = list(prefix_images(G, w, np.asarray(coords, float), np.asarray(branch)))
    Y = np.stack(blocks, axis=1)
    return np.floor(Y / cell_width).astype(np.int64)


def signature(G, w, x, cell_width):
    if w.n < 1:
        raise DomainError("signature needs a word of length >= 1")
    cells = signature_cells(G, w, *x.as_arrays(), cell_width)[0]
    return OrbitSignature(tuple(tuple(int(v) for v in row) for row in cells))
