import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from minimax_meta.geometry import (
    FeasibleSet,
    brute_force_simplex_qp,
    project_ball,
    project_simplex,
    prox_step,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def vectors(min_size=1, max_size=8):
    return st.integers(min_size, max_size).flatmap(lambda n: arrays(float, n, elements=finite))


def test_simplex_examples():
    assert np.allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5], atol=1e-15)
    assert np.array_equal(project_simplex([2.0, 0.0]), [1.0, 0.0])
    assert np.array_equal(project_simplex([0.5, 0.5, 2.0]), [0.0, 0.0, 1.0])
    assert np.allclose(project_simplex([-1.0, -1.0]), [0.5, 0.5])


def test_simplex_rejects_bad_input():
    with pytest.raises(ValueError):
        project_simplex([np.nan, 1.0])
    with pytest.raises(ValueError):
        project_simplex([np.inf])
    with pytest.raises(ValueError):
        project_simplex([])
    with pytest.raises(ValueError):
        project_simplex([1.0, 2.0], m=3)


def test_brute_force_examples():
    assert np.allclose(brute_force_simplex_qp([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    assert np.allclose(brute_force_simplex_qp([2.0, 0.0]), [1.0, 0.0])
    assert np.allclose(brute_force_simplex_qp([-1.0, -1.0]), [0.5, 0.5])
    with pytest.raises(ValueError):
        brute_force_simplex_qp(np.zeros(13))


def test_simplex_matches_brute_force(rng):
    for m in range(1, 9):
        for _ in range(100):
            q = rng.normal(scale=2.0, size=m)
            assert np.max(np.abs(project_simplex(q) - brute_force_simplex_qp(q))) <= 1e-9


def test_simplex_kkt_on_ties():
    # equal entries straddling the threshold
    q = np.array([0.7, 0.7, 0.7, -3.0])
    p = project_simplex(q)
    assert np.allclose(p, [1 / 3, 1 / 3, 1 / 3, 0.0])


@given(vectors())
def test_simplex_point_invariants(q):
    p = project_simplex(q)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


@given(vectors())
def test_simplex_idempotent(q):
    p = project_simplex(q)
    assert np.allclose(project_simplex(p), p, atol=1e-12)


@given(vectors(), st.floats(-100, 100))
def test_simplex_translation_invariance(q, c):
    assert np.allclose(project_simplex(q + c), project_simplex(q), atol=1e-9)


@given(vectors(2, 6))
def test_simplex_optimality_against_vertices(q):
    # the projection is no farther from q than any vertex of the simplex
    p = project_simplex(q)
    d = np.sum((p - q) ** 2)
    for k in range(q.size):
        e = np.zeros(q.size)
        e[k] = 1.0
        assert d <= np.sum((e - q) ** 2) + 1e-9


def test_nonexpansive(rng):
    ball = FeasibleSet.ball(1.5, center=[0.5, -0.2, 1.0])
    for _ in range(10_000):
        m = rng.integers(1, 7)
        u, v = rng.normal(scale=3, size=(2, m))
        assert np.linalg.norm(project_simplex(u) - project_simplex(v)) <= np.linalg.norm(u - v) + 1e-12
    u = rng.normal(scale=3, size=(10_000, 3))
    v = rng.normal(scale=3, size=(10_000, 3))
    for a, b in zip(u, v):
        assert np.linalg.norm(project_ball(a, ball) - project_ball(b, ball)) <= np.linalg.norm(a - b) + 1e-12


def test_ball_examples():
    unit = FeasibleSet.ball(1.0, dim=2)
    assert np.array_equal(project_ball(np.zeros(2), unit), np.zeros(2))
    assert np.allclose(project_ball([3.0, 4.0], unit), [0.6, 0.8], atol=1e-15)
    seg = FeasibleSet.ball(0.5, center=[1.0])
    assert np.allclose(project_ball([2.0], seg), [1.5])
    everywhere = FeasibleSet.everywhere(2)
    assert np.array_equal(project_ball([30.0, -4.0], everywhere), [30.0, -4.0])


@given(arrays(float, 3, elements=finite))
def test_ball_idempotent_and_feasible(u):
    ball = FeasibleSet.ball(2.0, center=[1.0, 0.0, -1.0])
    x = project_ball(u, ball)
    assert ball.contains(x)
    assert np.allclose(project_ball(x, ball), x, atol=1e-12)


def test_ball_rejects_bad_input():
    ball = FeasibleSet.ball(1.0, dim=2)
    with pytest.raises(ValueError):
        project_ball([np.nan, 0.0], ball)
    with pytest.raises(ValueError):
        project_ball([1.0, 0.0, 0.0], ball)
    with pytest.raises(ValueError):
        FeasibleSet.ball(0.0, dim=2)
    with pytest.raises(ValueError):
        FeasibleSet("box", np.zeros(2))


def test_prox_step_examples():
    everywhere = FeasibleSet.everywhere(1)
    assert np.array_equal(prox_step([0.3], [0.0], 0.7, everywhere), [0.3])
    assert np.allclose(prox_step([0.0], [1.0], 0.5, everywhere), [-0.5])
    ball = FeasibleSet.ball(1.0, dim=1)
    assert np.allclose(prox_step([0.9], [-1.0], 0.5, ball), [1.0])
    with pytest.raises(ValueError):
        prox_step([0.0], [1.0], 0.0, ball)


def test_prox_step_solves_linearized_problem(rng):
    # prox_step minimizes <g, x> + |x - w|^2 / (2 eta) over the ball;
    # compare against dense sampling of the boundary and interior in 2-d
    ball = FeasibleSet.ball(1.0, dim=2)
    w, g, eta = np.array([0.6, 0.5]), np.array([-2.0, 0.4]), 0.4
    x = prox_step(w, g, eta, ball)
    obj = lambda y: y @ g + np.sum((y - w) ** 2, axis=-1) / (2 * eta)
    ang = np.linspace(0, 2 * np.pi, 20001)
    rad = np.sqrt(rng.random(20000))
    cand = np.vstack([np.c_[np.cos(ang), np.sin(ang)], rad[:, None] * np.c_[np.cos(ang[:-1]), np.sin(ang[:-1])]])
    assert obj(x) <= np.min(obj(cand)) + 1e-8


def test_simplex_projection_of_huge_entries():
    assert np.array_equal(project_simplex([1e300]), [1.0])
    assert np.allclose(project_simplex([1e300, 1e300 - 1e290, -1e300]), [1.0, 0.0, 0.0])
