import json

import numpy as np
import pytest

from entroact.catalog import (BUILTIN_NAMES, ROTATION_ANGLES, ExpandingCircle, MannevillePomeau,
                              SystemSpec, ToralEndo, build_system, builtin, example44_matrices,
                              factorize, load_system, map_from_json)
from entroact.errors import DomainError
from entroact.semigroup import Word, apply_word_arrays
from entroact.spaces import circle, embedded_distance, interval01, torus


def test_builtin_shapes():
    G = build_system(builtin("expanding23"))
    assert G.p == 2 and G.max_expansion == 3.0 and not G.invertible
    assert build_system(builtin("doubling")).p == 1
    R = build_system(builtin("rotations"))
    assert R.max_expansion == 1.0
    assert [m.alpha for m in R.maps] == list(ROTATION_ANGLES)
    A, B = example44_matrices()
    E = build_system(builtin("example44"))
    assert np.array_equal(E.maps[0].M, A) and np.array_equal(E.maps[1].M, B)
    assert np.array_equal(A @ B, B @ A)
    C = np.array([[2, 1], [1, 1]])
    assert np.array_equal(A[:2, :2], C) and np.array_equal(B[2:4, 2:4], C)
    assert not A[4].any() and not B[4].any()


def test_manneville_pomeau_endpoints():
    f = MannevillePomeau(1.0)
    y, _ = f.apply(np.array([[0.5], [0.0], [0.25]]), np.zeros(3, int))
    assert y[0, 0] == 0.0 and y[1, 0] == 0.0
    assert y[2, 0] == pytest.approx(0.25 * 1.5)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_lipschitz_audit(systems, name, rng):
    G = systems[name]
    s = G.space
    N = 10**5
    if s.is_union:
        b = rng.integers(0, 2, N)
        x = rng.random((N, s.d))
    else:
        b = np.zeros(N, dtype=int)
        x = rng.random((N, s.d))
    y = s.canonicalize(x + rng.uniform(-1e-3, 1e-3, x.shape), b)
    x = s.canonicalize(x, b)
    d0 = embedded_distance(s.embed(x, b), s.embed(y, b), s.periodic)
    for m in G.maps:
        gx, bx = m.apply(x, b)
        gy, by = m.apply(y, b)
        d1 = embedded_distance(s.embed(gx, bx), s.embed(gy, by), s.periodic)
        assert np.all(d1 <= G.max_expansion * d0 * (1 + 1e-9) + 1e-15)


def test_example44_action_law(rng):
    G = build_system(builtin("example44"))
    C = np.array([[2, 1], [1, 1]], dtype=object)
    Q = 2**20
    for _ in range(50):
        k = rng.integers(0, Q, 5)
        w = tuple(int(v) for v in rng.integers(1, 3, rng.integers(1, 9)))
        x = (k / Q)[None, :]
        y, _ = apply_word_arrays(G, Word(w), x, np.zeros(1, int))
        n, m = w.count(1), w.count(2)
        u = np.linalg.matrix_power(C, n).dot(k[:2].astype(object)) % Q
        v = np.linalg.matrix_power(C, m).dot(k[2:4].astype(object)) % Q
        expected = np.array([*u, *v, 0], dtype=float) / Q
        assert np.array_equal(y[0], expected)


def test_example43_x2_fixed(rng):
    G = build_system(builtin("example43"))
    x = np.zeros((1000, 1))
    x[:, 0] = rng.random(1000)
    b = np.ones(1000, dtype=int)
    for i in (1, 2):
        y, by = G.step(i, x, b)
        assert np.array_equal(y, x) and np.all(by == 1)
    y, by = G.step(1, x, np.zeros(1000, int))
    assert np.all(by == 0) and np.allclose(y[:, 0], (2 * x[:, 0]) % 1.0)


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_json_round_trip(name):
    spec = builtin(name)
    blob = json.dumps(spec.to_json())
    back = SystemSpec.from_json(json.loads(blob))
    assert back == spec
    assert json.dumps(back.to_json()) == blob
    assert load_system(json.loads(blob)) == spec
    assert load_system(name) == spec
    assert load_system({"builtin": name}) == spec


def test_pairing_errors():
    with pytest.raises(DomainError):
        build_system(SystemSpec("bad", torus(2), (ExpandingCircle(2),), 2.0))
    with pytest.raises(DomainError):
        build_system(SystemSpec("bad", torus(3), (ToralEndo(np.eye(2)),), 1.0))
    with pytest.raises(DomainError):
        build_system(SystemSpec("bad", circle(), (ExpandingCircle(3),), 2.0))
    with pytest.raises(DomainError):
        build_system(SystemSpec("bad", interval01(), (ExpandingCircle(2),), 2.0))
    with pytest.raises(DomainError):
        map_from_json({"type": "nope", "params": {}})
    with pytest.raises(DomainError):
        ToralEndo(np.array([[1.5, 0], [0, 1]]))
    with pytest.raises(DomainError):
        builtin("nope")


def test_factorize():
    f = factorize(build_system(builtin("example44")))
    assert [x.axes for x in f] == [(0, 1), (2, 3), (4,)]
    assert factorize(build_system(builtin("cat"))) is None
    assert factorize(build_system(builtin("expanding23"))) is None
