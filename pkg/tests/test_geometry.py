import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wreathe import geometry as g

finite = st.floats(-1e3, 1e3, allow_nan=False)
orders = st.integers(2, 64)


def close(p, q, tol=1e-12):
    return abs(p[0] - q[0]) <= tol and abs(p[1] - q[1]) <= tol


def test_translation_examples():
    assert close(g.apply(g.translation("X", 0), (3, 4)), (3, 4))
    assert close(g.apply(g.translation("X", 2), (0, 0)), (2, 0))
    assert close(g.apply(g.translation("Y", 0.5), (0, 0)), (0, 0.5))


def test_rotation_examples():
    assert g.rotation(4, 0).allclose(g.identity(), 0)
    # row convention: a quarter turn takes (1, 0) to (0, -1)
    assert close(g.apply(g.rotation(4, 1), (1, 0)), (0, -1))
    assert close(g.apply(g.rotation(4, 2), (1, 1)), (-1, -1))
    assert g.rotation_continuous(0).allclose(g.identity(), 0)
    assert g.rotation_continuous(math.pi).allclose(g.rotation(2, 1), 0)
    assert close(g.apply(g.rotation_continuous(math.pi / 2), (1, 0)), (0, -1))


def test_mirror_and_scale_examples():
    assert g.mirror(0) == g.identity()
    assert g.apply(g.mirror(1), (2, 3)) == (2, -3)
    assert g.apply(g.mirror(1, "Y"), (2, 3)) == (-2, 3)
    assert g.mirror(1) @ g.mirror(1) == g.identity()
    assert g.scale(2, 0) == g.identity()
    assert g.apply(g.scale(2, 1), (1, 1)) == (2, 2)
    assert g.apply(g.scale(2, -1), (2, 2)) == (1, 1)


def test_compose_examples():
    t = g.translation("Y", 1.5)
    assert g.compose(g.identity(), t) == t
    assert g.compose(g.rotation(4, 1), g.rotation(4, 3)).allclose(g.identity(), 1e-12)
    assert g.compose(g.translation("X", 1), g.translation("X", 2)) == g.translation("X", 3)


@pytest.mark.parametrize(
    "make",
    [
        lambda: g.rotation(1, 0),
        lambda: g.rotation(0, 1),
        lambda: g.scale(0, 1),
        lambda: g.scale(-2, 1),
        lambda: g.translation("Z", 1),
        lambda: g.translation("X", math.inf),
        lambda: g.rotation_continuous(math.nan),
    ],
)
def test_invalid_parameters(make):
    with pytest.raises(g.InvalidGroupError):
        make()


def test_last_row_is_fixed():
    t = g.Transform(np.arange(9.0).reshape(3, 3))
    assert t.m[2].tolist() == [0.0, 0.0, 1.0]
    with pytest.raises(ValueError):
        g.Transform(np.eye(2))


@given(orders, st.integers(-100, 100))
def test_rotation_is_proper_orthogonal(n, k):
    a = g.rotation(n, k).m[:2, :2]
    assert np.allclose(a @ a.T, np.eye(2), atol=1e-12)
    assert abs(np.linalg.det(a) - 1) < 1e-12


@given(st.integers(-50, 50))
def test_mirror_determinant(k):
    assert np.linalg.det(g.mirror(k).m[:2, :2]) == (-1 if k % 2 else 1)


@given(orders, st.integers(-100, 100), st.integers(-100, 100))
def test_rotation_closure(n, a, b):
    assert (g.rotation(n, a) @ g.rotation(n, b)).allclose(g.rotation(n, a + b))


@given(st.sampled_from("XY"), finite, finite, finite, finite)
def test_apply_of_compose(axis, t, theta, x, y):
    a, b = g.translation(axis, t), g.rotation_continuous(theta)
    lhs = g.apply(a @ b, (x, y))
    rhs = g.apply(a, g.apply(b, (x, y)))
    assert close(lhs, rhs, 1e-9)


@given(st.floats(0.1, 10), st.integers(-8, 8))
def test_scale_inverse(l, k):
    assert (g.scale(l, k) @ g.scale(l, -k)).allclose(g.identity())


def test_apply_points_matches_apply(rng):
    pts = rng.normal(size=(20, 2))
    t = g.rotation(5, 2) @ g.translation("X", 0.7)
    out = g.apply_points(t, pts)
    for p, q in zip(pts, out):
        assert close(g.apply(t, p), q, 1e-12)
    stack = g.rotation_stack(np.array([0.3, 1.1]))
    assert np.allclose(stack[1], g.rotation_continuous(1.1).m)
    assert np.allclose(g.translation_stack("Y", np.array([2.0]))[0], g.translation("Y", 2.0).m)
