import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entroact.catalog import build_system, builtin
from entroact.errors import CapacityError, DomainError
from entroact.semigroup import (Word, apply_word, apply_word_arrays, bowen_distance,
                                bowen_distance_matrix, enumerate_words, sample_word_array,
                                sample_words, signature)
from entroact.spaces import Point, circle, distance, embedded_distance

E23 = build_system(builtin("expanding23"))
E2 = build_system(builtin("doubling"))
ROT = build_system(builtin("rotations"))


def pt(x):
    return Point(circle(), (x,))


def test_word_literals():
    assert Word.parse("12").indices == (1, 2)
    assert Word.parse("1,2,2").indices == (1, 2, 2)
    assert str(Word((1, 2))) == "12"
    assert Word((2,)).concat(Word((1,))).indices == (1, 2)
    assert Word(()).n == 0


def test_apply_word_examples():
    assert apply_word(E23, Word(()), pt(0.3)) == pt(0.3)
    assert apply_word(E23, Word((1,)), pt(0.3)).coords[0] == pytest.approx(0.6, abs=1e-15)
    assert apply_word(E23, Word((1, 2)), pt(0.3)).coords[0] == pytest.approx(0.8, abs=1e-12)


def test_apply_word_errors():
    with pytest.raises(DomainError):
        apply_word(E23, Word((3,)), pt(0.1))
    with pytest.raises(DomainError):
        Word((0,))


def test_bowen_examples():
    assert bowen_distance(E2, Word((1, 1)), pt(0.0), pt(0.3)) == pytest.approx(0.4)
    assert bowen_distance(E2, Word((1, 1)), pt(0.3), pt(0.3)) == 0.0
    with pytest.raises(DomainError):
        bowen_distance(E2, Word(()), pt(0.1), pt(0.2))


def test_bowen_isometry_equals_base(rng):
    x, y = rng.random(200), rng.random(200)
    for n in (1, 3, 6):
        w = Word(tuple(rng.integers(1, 3, n)))
        for a, b in zip(x, y):
            assert bowen_distance(ROT, w, pt(a), pt(b)) == pytest.approx(
                distance(circle(), pt(a), pt(b)), abs=1e-12)


def _random_coords(G, rng, n):
    s = G.space
    if not s.is_union:
        return rng.random((n, s.d)), np.zeros(n, dtype=int)
    b = rng.integers(0, 2, n)
    c = rng.random((n, s.d))
    for br, comp in ((0, s.left), (1, s.right)):
        c[b == br, comp.d:] = 0.0
    return c, b


@pytest.mark.parametrize("name", ["expanding23", "doubling", "rotations", "mp_rot",
                                  "example43", "example44", "cat"])
def test_action_law(systems, name, rng):
    # 100 word pairs x 100 points = 10^4 random (w, v, x)
    G = systems[name]
    per = G.space.periodic
    for _ in range(100):
        w = Word(tuple(rng.integers(1, G.p + 1, rng.integers(0, 6))))
        v = Word(tuple(rng.integers(1, G.p + 1, rng.integers(0, 6))))
        c, b = _random_coords(G, rng, 100)
        lhs = apply_word_arrays(G, w.concat(v), c, b)
        rhs = apply_word_arrays(G, w, *apply_word_arrays(G, v, c, b))
        assert np.array_equal(lhs[1], rhs[1])
        d = embedded_distance(G.space.embed(*lhs), G.space.embed(*rhs), per)
        assert d.max() <= 1e-12


@pytest.mark.parametrize("name", ["expanding23", "mp_rot", "example43", "cat"])
def test_bowen_metric_axioms(systems, name, rng):
    G = systems[name]
    for n in (1, 2, 5):
        w = Word(tuple(rng.integers(1, G.p + 1, n)))
        c, b = _random_coords(G, rng, 60)
        D = bowen_distance_matrix(G, w, c, b)
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)
        # D[i,k] <= D[i,j] + D[j,k]
        lhs = D[:, None, :]
        rhs = D[:, :, None] + D[None, :, :]
        assert np.all(lhs <= rhs + 1e-12)
        D1 = bowen_distance_matrix(G, Word(w.indices[:1]), c, b)
        assert np.all(D >= D1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 2), min_size=1, max_size=7), st.integers(1, 2),
       st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_bowen_monotone_in_prefixes(idx, a, x, y):
    w = Word(tuple(idx))
    longer = Word((a,)).concat(w)
    assert bowen_distance(E23, longer, pt(x), pt(y)) >= bowen_distance(E23, w, pt(x), pt(y))
    assert bowen_distance(E23, w, pt(x), pt(y)) >= distance(circle(), pt(x), pt(y)) - 1e-15


def test_enumerate_words():
    assert [w.indices for w in enumerate_words(2, 1)] == [(1,), (2,)]
    assert [w.indices for w in enumerate_words(2, 2)] == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert [w.indices for w in enumerate_words(3, 0)] == [()]
    with pytest.raises(CapacityError) as e:
        enumerate_words(2, 20, budget=1000)
    assert "sample_words" in e.value.hint


def test_sample_words():
    ws = sample_words(1, 5, 7, seed=3)
    assert len(ws) == 7 and all(w.indices == (1,) * 5 for w in ws)
    assert sample_words(2, 6, 50, 9) == sample_words(2, 6, 50, 9)
    arr = sample_word_array(2, 8, 4096, 7)
    freq = float(np.mean(arr == 1))
    assert 0.47 <= freq <= 0.53
    assert freq == 0.501373291015625


def test_sample_words_partition_invariant():
    full = sample_word_array(3, 5, 100, 4)
    parts = np.vstack([sample_word_array(3, 5, 30, 4, start=s) for s in (0, 30, 60)]
                      + [sample_word_array(3, 5, 10, 4, start=90)])
    assert np.array_equal(full, parts)


def test_signature():
    sig = signature(E2, Word((1, 1)), pt(0.3), 0.25)
    assert sig.cells == ((1,), (2,))
