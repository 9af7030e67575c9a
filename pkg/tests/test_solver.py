import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from minimax_meta.errors import ConfigError, DegenerateProblemError, RunAborted
from minimax_meta.estimators import Minibatch
from minimax_meta.geometry import FeasibleSet
from minimax_meta.solver import (
    Reservoir,
    RunConfig,
    SaddleState,
    resolve_schedule,
    run_da_maml,
    run_maml_baseline,
    schedule_convex,
    schedule_nonconvex_constrained,
    schedule_nonconvex_unconstrained,
    step,
)
from minimax_meta.tasks import NoiseModel, QuadraticTask, TaskSet, quadratic_suite, trig_suite


def clean_batch(task_idx, d=1, D=1):
    C = len(task_idx)
    return Minibatch(np.asarray(task_idx), np.zeros((C, D)), np.zeros((C, D)),
                     np.zeros((C, D, d)), np.zeros((C, D, d)))


# schedules ---------------------------------------------------------------------


def test_convex_schedule_examples():
    assert schedule_convex(1.0, 2.0, 4.0, 100) == pytest.approx((0.1, 0.05))
    assert schedule_convex(1.0, 2.0, 4.0, 400) == pytest.approx((0.05, 0.025))
    assert schedule_convex(2.0, 2.0, 4.0, 100) == pytest.approx((0.2, 0.05))
    with pytest.raises(DegenerateProblemError):
        schedule_convex(1.0, 0.0, 4.0, 100)


def test_unconstrained_schedule_examples():
    eta_w, _ = schedule_nonconvex_unconstrained(0.25, 1.0, 10**4)
    assert eta_w == pytest.approx(0.1, rel=1e-15)
    _, eta_p = schedule_nonconvex_unconstrained(0.4, 1.0, 10**5)
    assert eta_p == pytest.approx(2**-0.5 * 1e-4, rel=1e-14)
    with pytest.raises(ConfigError) as err:
        schedule_nonconvex_unconstrained(0.25, 1.0, 10**4, M_tilde=20.0)
    assert err.value.field == "T"
    schedule_nonconvex_unconstrained(0.25, 1.0, 10**4, M_tilde=19.9)
    with pytest.raises(ConfigError):
        schedule_nonconvex_unconstrained(0.5, 1.0, 100)


def test_constrained_schedule_examples():
    for T in (10, 1000):
        assert schedule_nonconvex_constrained(2.0, 1.0, 0.5, T)[0] == 0.25
    eta_w, eta_p, C = schedule_nonconvex_constrained(2.0, 1.0, 2 / 3, 1000)
    assert C == 100
    assert eta_p == pytest.approx(2**-0.5 / 100)
    assert schedule_nonconvex_constrained(2.0, 1.0, 2 / 3, 8000)[2] == 400
    assert schedule_nonconvex_constrained(2.0, 1.0, 0.5, 10)[2] == 4
    with pytest.raises(DegenerateProblemError):
        schedule_nonconvex_constrained(0.0, 1.0, 0.5, 10)


def test_resolve_schedule_constrained_batch():
    tasks = trig_suite(3, 2, FeasibleSet.ball(1.0, dim=2), seed=0)
    sched = resolve_schedule(RunConfig(0.05, 1000, regime="nonconvex-constrained", beta=2 / 3), tasks)
    assert sched.C == 100
    assert sched.eta_w == pytest.approx(0.5 / sched.constants.M_tilde)


# single step -------------------------------------------------------------------


def test_step_example(single_1d):
    state = step(SaddleState(np.array([1.0]), np.array([1.0])), clean_batch([0]), 0.1, 0.1,
                 single_1d, 0.25)
    assert state.w == pytest.approx([0.95], abs=1e-15)
    assert np.array_equal(state.p, [1.0])
    assert state.t == 2


def test_zero_gradient_leaves_state_unchanged():
    tasks = TaskSet((QuadraticTask([[1.0]], [0.5]), QuadraticTask([[1.0]], [0.5])),
                    FeasibleSet.everywhere(1))
    start = SaddleState(np.array([0.5]), np.array([0.3, 0.7]))
    state = step(start, clean_batch([0, 1]), 0.1, 0.1, tasks, 0.2)
    assert np.array_equal(state.w, start.w)
    assert np.allclose(state.p, start.p, atol=1e-16)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_rejects_bad_inputs(single_1d):
    start = SaddleState(np.array([1.0]), np.array([1.0]), t=7)
    with pytest.raises(ValueError):
        step(start, clean_batch([0]), 0.0, 0.1, single_1d, 0.1)
    bad = clean_batch([0])
    bad.grad_in[0, 0, 0] = np.inf
    with pytest.raises(RunAborted) as err:
        step(start, bad, 0.1, 0.1, single_1d, 0.1)
    assert err.value.iteration == 7
    with pytest.raises(RunAborted):
        step(start, clean_batch([0]), 0.1, 0.1, single_1d, 0.1, grad_limit=0.1)


def _project2(v):
    """Euclidean projection of a 2-vector of fractions onto the simplex."""
    shift = (v[0] + v[1] - 1) / 2
    a, b = v[0] - shift, v[1] - shift
    if a < 0:
        return [Fraction(0), Fraction(1)]
    if b < 0:
        return [Fraction(1), Fraction(0)]
    return [a, b]


def _fraction_trajectory(steps, gauss_seidel=False):
    # F0 = w^2 / 4 and F1 = 9/32 (w - 1)^2 after one inner step with alpha = 1/4
    F = [lambda w: w * w / 4, lambda w: Fraction(9, 32) * (w - 1) ** 2]
    dF = [lambda w: w / 2, lambda w: Fraction(9, 16) * (w - 1)]
    eta = Fraction(1, 10)
    w, p = Fraction(1), [Fraction(1, 2), Fraction(1, 2)]
    out = []
    for _ in range(steps):
        w_new = w - eta * (p[0] * dF[0](w) + p[1] * dF[1](w))
        at = w_new if gauss_seidel else w
        p = _project2([p[0] + eta * F[0](at), p[1] + eta * F[1](at)])
        w = w_new
        out.append((w, p))
    return out


def test_simultaneous_three_step_trajectory():
    tasks = TaskSet((QuadraticTask([[2.0]], [0.0]), QuadraticTask([[1.0]], [1.0])),
                    FeasibleSet.everywhere(1))
    state = SaddleState(np.array([1.0]), np.array([0.5, 0.5]))
    exact = _fraction_trajectory(3)
    other = _fraction_trajectory(3, gauss_seidel=True)
    for (w, p), (w_gs, p_gs) in zip(exact, other):
        state = step(state, clean_batch([0, 1]), 0.1, 0.1, tasks, 0.25)
        assert state.w[0] == pytest.approx(float(w), abs=1e-15)
        assert np.allclose(state.p, [float(x) for x in p], rtol=0, atol=1e-15)
    assert abs(float(p_gs[0]) - state.p[0]) > 1e-4


# full runs ---------------------------------------------------------------------


def test_feasibility_and_average(quad4):
    cfg = RunConfig(0.2, 60, C=2, D=2, regime="manual", eta_w=0.5, eta_p=0.5,
                    termination="average", keep_history=60, record_every=1)
    out = run_da_maml(cfg, quad4)
    assert len(out.history) == 60
    for s in out.history:
        assert quad4.domain.distance(s.w) <= 1e-10
        assert np.all(s.p >= 0) and abs(s.p.sum() - 1) <= 1e-12
    w_mean = np.mean([s.w for s in out.history], axis=0)
    p_mean = np.mean([s.p for s in out.history], axis=0)
    assert np.allclose(out.w_out, w_mean, rtol=0, atol=1e-12)
    assert np.allclose(out.p_out, p_mean, rtol=0, atol=1e-12)
    # a step this large pushes some iterates onto the boundary
    assert any(quad4.domain.distance(s.w) == 0 and np.linalg.norm(s.w) > 1.999 for s in out.history)


def test_reservoir_uniform():
    rng = np.random.default_rng(0)
    counts = np.zeros(10)
    for _ in range(100_000):
        res = Reservoir()
        for t in range(1, 11):
            res.offer(t, rng)
        counts[res.index - 1] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_reservoir_first_item_uses_no_draw():
    rng = np.random.default_rng(1)
    res = Reservoir()
    assert res.offer("a", rng) and res.index == 1
    assert rng.random() == np.random.default_rng(1).random()


def test_random_termination_uniform_end_to_end():
    tasks = TaskSet((QuadraticTask([[1.0]], [1.0]), QuadraticTask([[1.0]], [-1.0])),
                    FeasibleSet.ball(2.0, dim=1))
    counts = np.zeros(10)
    for seed in range(3000):
        cfg = RunConfig(0.1, 10, regime="manual", eta_w=0.1, eta_p=0.1, termination="random",
                        seed=seed)
        counts[run_da_maml(cfg, tasks).tau - 1] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_random_output_is_traced(quad4):
    cfg = RunConfig(0.2, 40, regime="manual", eta_w=0.1, eta_p=0.1, termination="random",
                    seed=5, keep_history=40, record_every=7)
    out = run_da_maml(cfg, quad4)
    kept = out.history[out.tau - 1]
    assert np.array_equal(out.w_out, kept.w) and np.array_equal(out.p_out, kept.p)
    assert out.final.t == out.tau
    ts = [r.t for r in out.trace]
    assert out.tau in ts and ts == sorted(ts)
    assert {1, 8, 15, 22, 29, 36, 40} <= set(ts)


def test_record_schedule(quad4):
    out = run_da_maml(RunConfig(0.2, 10, record_every=3), quad4)
    assert [r.t for r in out.trace] == [1, 4, 7, 10]
    assert [r.t for r in run_da_maml(RunConfig(0.2, 10), quad4).trace] == [10]


def test_seed_determinism(trig4):
    cfg = RunConfig(0.1, 200, C=2, D=3, regime="manual", eta_w=0.05, eta_p=0.05,
                    termination="random", seed=42, record_every=10)
    a, b = run_da_maml(cfg, trig4), run_da_maml(cfg, trig4)
    assert np.array_equal(a.w_out, b.w_out) and np.array_equal(a.p_out, b.p_out)
    assert a.tau == b.tau
    assert [r.worst_loss for r in a.trace] == [r.worst_loss for r in b.trace]
    c = run_da_maml(RunConfig(0.1, 200, C=2, D=3, regime="manual", eta_w=0.05, eta_p=0.05,
                              termination="random", seed=43, record_every=10), trig4)
    assert not np.array_equal(a.w_out, c.w_out)


@pytest.mark.parametrize("termination", ["average", "random"])
def test_single_iterate(quad4, termination):
    cfg = RunConfig(0.2, 1, regime="manual", eta_w=0.1, eta_p=0.1, termination=termination)
    out = run_da_maml(cfg, quad4)
    assert np.array_equal(out.w_out, quad4.domain.center)
    assert np.array_equal(out.p_out, np.full(4, 0.25))
    assert [r.t for r in out.trace] == [1]
    assert out.tau == (1 if termination == "random" else None)


def test_baseline_with_one_task_matches(single_1d):
    tasks = TaskSet((QuadraticTask([[2.0]], [1.0], noise=NoiseModel(0.3, 0.4, 0.2)),),
                    FeasibleSet.ball(3.0, dim=1))
    cfg = RunConfig(0.1, 300, C=2, D=3, seed=9, record_every=25)
    a, b = run_da_maml(cfg, tasks), run_maml_baseline(cfg, tasks, [1.0])
    assert np.array_equal(a.w_out, b.w_out)
    assert [r.worst_loss for r in a.trace] == [r.worst_loss for r in b.trace]
    assert np.array_equal(a.p_out, [1.0])
    assert b.eta_p == 0.0 and b.method == "maml"


def test_baseline_keeps_uniform_weights(quad4):
    out = run_maml_baseline(RunConfig(0.2, 50, C=2), quad4, [0.7, 0.1, 0.1, 0.1])
    assert np.array_equal(out.p_out, np.full(4, 0.25))
    with pytest.raises(ConfigError) as err:
        run_maml_baseline(RunConfig(0.2, 5), quad4, [0.5, 0.5, 0.5, -0.5])
    assert err.value.field == "task_probs"


def test_single_task_distance_decreases():
    task = QuadraticTask([[1.0]], [2.0])
    tasks = TaskSet((task,), FeasibleSet.ball(10.0, dim=1))
    dist = []
    for T in (1, 2, 5, 10, 50, 200):
        cfg = RunConfig(0.1, T, regime="manual", eta_w=0.1, eta_p=0.1, termination="average")
        dist.append(abs(run_da_maml(cfg, tasks).w_out[0] - 2.0))
    assert all(b < a for a, b in zip(dist, dist[1:]))


def test_degenerate_problem_returns_initial_point():
    flat = TaskSet((QuadraticTask([[0.0]], [0.0]), QuadraticTask([[0.0]], [1.0])),
                   FeasibleSet.ball(1.0, center=[0.25]))
    out = run_da_maml(RunConfig(0.1, 50), flat)
    assert np.array_equal(out.w_out, [0.25]) and np.array_equal(out.p_out, [0.5, 0.5])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts():
    tasks = TaskSet((QuadraticTask([[1.0]], [0.0]),), FeasibleSet.everywhere(1))
    cfg = RunConfig(0.0, 5000, regime="manual", eta_w=10.0, eta_p=0.1, termination="random",
                    w_init=[1.0])
    with pytest.raises(RunAborted) as err:
        run_da_maml(cfg, tasks)
    assert 100 < err.value.iteration < 5000


@pytest.mark.parametrize("kwargs, field", [
    (dict(alpha=-0.1, T=10), "alpha"),
    (dict(alpha=0.1, T=0), "T"),
    (dict(alpha=0.1, T=10, C=0), "C"),
    (dict(alpha=0.1, T=10, regime="adam"), "regime"),
    (dict(alpha=0.1, T=10, regime="nonconvex-unconstrained"), "beta"),
    (dict(alpha=0.1, T=10, regime="nonconvex-constrained", beta=1.5), "beta"),
    (dict(alpha=0.1, T=10, regime="manual", eta_w=0.1, termination="average"), "eta_p"),
    (dict(alpha=0.1, T=10, regime="manual", eta_w=0.1, eta_p=0.1), "termination"),
    (dict(alpha=0.1, T=10, seed=-1), "seed"),
    (dict(alpha=0.1, T=10, w_init="origin"), "w_init"),
    (dict(alpha=0.1, T=10, reduction="kahan"), "reduction"),
])
def test_config_errors(kwargs, field):
    with pytest.raises(ConfigError) as err:
        RunConfig(**kwargs)
    assert err.value.field == field


def test_config_errors_against_suite(quad4):
    with pytest.raises(ConfigError) as err:
        run_da_maml(RunConfig(0.1, 10, w_init=[5.0, 0.0, 0.0]), quad4)
    assert err.value.field == "w_init"
    with pytest.raises(ConfigError) as err:
        run_da_maml(RunConfig(0.1, 10, w_init=[0.0, 0.0]), quad4)
    assert err.value.field == "w_init"
    with pytest.raises(ConfigError) as err:
        run_da_maml(RunConfig(0.1, 10, regime="nonconvex-unconstrained", beta=0.25), quad4)
    assert err.value.field == "domain"
    free = quadratic_suite(2, 2, FeasibleSet.everywhere(2), seed=0)
    with pytest.raises(ConfigError) as err:
        run_da_maml(RunConfig(0.1, 10), free)
    assert err.value.field == "domain"
    region = trig_suite(2, 2, FeasibleSet.everywhere(2), seed=0,
                        region=FeasibleSet.ball(1.0, dim=2))
    with pytest.raises(ConfigError) as err:
        run_da_maml(RunConfig(0.1, 10, regime="nonconvex-unconstrained", beta=0.1), region)
    assert err.value.field == "T"


def test_default_terminations():
    assert RunConfig(0.1, 5).termination == "average"
    assert RunConfig(0.1, 5, regime="nonconvex-constrained", beta=0.5).termination == "random"
