import numpy as np
import pytest

from vemadapt.adapt import AdaptConfig, run_adaptive, run_uniform
from vemadapt.assembly import CoefficientSet
from vemadapt.errors import UnsupportedOrder
from vemadapt.mesh import HangingPolicy, dorfler_mark, refine
from vemadapt.meshgen import gen_hexagonal, gen_lshape, gen_squares
from vemadapt.problems import Problem, get_problem


def quadratic_problem() -> Problem:
    """-lap u = -4 with u = x^2 + y^2 - x y, inside the k = 2 space."""
    u = lambda p: p[:, 0] ** 2 + p[:, 1] ** 2 - p[:, 0] * p[:, 1]
    gu = lambda p: np.column_stack([2 * p[:, 0] - p[:, 1], 2 * p[:, 1] - p[:, 0]])
    return Problem("quadratic", CoefficientSet.constant(f=-4.0), u, gu, u)


def _same_history(h1, h2):
    assert len(h1) == len(h2)
    for a, b in zip(h1.records, h2.records):
        assert (a.cells, a.ndofs, a.marked) == (b.cells, b.ndofs, b.marked)
        for name in ("eta2", "xi2", "theta_parts", "psi2", "err2"):
            assert np.array_equal(getattr(a.breakdown, name), getattr(b.breakdown, name))
        assert a.breakdown.h1err == b.breakdown.h1err
    assert np.array_equal(h1.solution, h2.solution)


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(theta=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(theta=1.5)
    with pytest.raises(ValueError):
        AdaptConfig(max_dofs=0)
    with pytest.raises(ValueError):
        AdaptConfig(hanging_policy="sometimes")
    with pytest.raises(UnsupportedOrder):
        AdaptConfig(k=4)
    cfg = AdaptConfig(theta=1.0, hanging_policy="one-per-face")
    assert cfg.hanging_policy is HangingPolicy.ONE_PER_FACE


@pytest.mark.parametrize("mesh", [gen_squares(3), gen_hexagonal(3)])
def test_polynomial_solution_stops_without_refining(mesh):
    hist = run_adaptive(quadratic_problem(), mesh, AdaptConfig(k=2, theta=0.5))
    assert len(hist) == 1
    assert hist.stop_reason == "estimator below tolerance"
    assert hist.records[0].marked == 0
    assert hist.records[0].breakdown.degenerate


def test_runs_are_deterministic():
    prob = get_problem("lshape-gaussian")
    cfg = AdaptConfig(k=1, theta=0.4, max_dofs=400)
    _same_history(run_adaptive(prob, gen_lshape(2), cfg), run_adaptive(prob, gen_lshape(2), cfg))


@pytest.mark.parametrize("policy", ["unlimited", "one-per-face"])
def test_marked_sets_and_mesh_sequence(policy):
    """Replays every step from the stored meshes and indicators."""
    prob = get_problem("kellogg-aligned")
    theta = 0.6
    cfg = AdaptConfig(k=1, theta=theta, max_iters=8, hanging_policy=policy, snapshots=tuple(range(8)))
    hist = run_adaptive(prob, gen_squares(5), cfg)
    assert len(hist) == 8 and hist.stop_reason == "iteration budget reached"
    ndofs = hist.column("ndofs")
    assert np.all(np.diff(ndofs) >= 0)
    for it in range(len(hist) - 1):
        mesh, ind = hist.snapshots[it]
        rec = hist.records[it]
        assert np.allclose(ind, rec.breakdown.indicators, rtol=0, atol=0)
        marks = dorfler_mark(ind, theta)
        assert len(marks) == rec.marked
        chosen = ind[sorted(marks)].sum()
        assert chosen >= theta ** 2 * ind.sum() * (1 - 1e-13)
        # greedy-minimal: dropping the smallest chosen indicator breaks the bound
        assert chosen - ind[sorted(marks)].min() < theta ** 2 * ind.sum()
        nxt, _ = hist.snapshots[it + 1]
        again = refine(mesh, marks, policy)
        assert np.array_equal(again.vertices, nxt.vertices)
        assert [e.tolist() for e in again.elements] == [e.tolist() for e in nxt.elements]


def test_marking_uses_the_full_indicator():
    prob = get_problem("lshape-gaussian")
    hist = run_adaptive(prob, gen_lshape(2), AdaptConfig(k=1, theta=0.4, max_iters=2))
    b = hist.records[0].breakdown
    assert np.allclose(b.indicators, b.eta2 + b.xi2 + b.theta_parts.sum(axis=1) + b.psi2, rtol=1e-14)


def test_estimator_trend_is_negative():
    prob = get_problem("internal-layer")
    hist = run_adaptive(prob, gen_squares(4), AdaptConfig(k=1, theta=0.5, max_dofs=1500))
    assert hist.stop_reason == "dof budget reached"
    assert hist.slope("total", last=5) < 0
    assert hist.slope("h1err", last=5) < 0


def test_budgets():
    prob = get_problem("smooth")
    hist = run_adaptive(prob, gen_squares(2), AdaptConfig(k=1, max_iters=3))
    assert len(hist) == 3 and hist.stop_reason == "iteration budget reached"
    hist = run_adaptive(prob, gen_squares(2), AdaptConfig(k=1, max_dofs=50))
    assert hist.records[-1].ndofs >= 50
    assert all(r.ndofs < 50 for r in hist.records[:-1])


def test_default_snapshots_are_first_mid_last():
    prob = get_problem("smooth")
    hist = run_adaptive(prob, gen_squares(2), AdaptConfig(k=1, max_iters=5))
    assert sorted(hist.snapshots) == [0, 2, 4]
    hist = run_adaptive(prob, gen_squares(2), AdaptConfig(k=1, max_iters=5, snapshots=(1, 3)))
    assert sorted(hist.snapshots) == [1, 3]


def test_uniform_driver():
    prob = get_problem("smooth")
    hist = run_uniform(prob, gen_squares, [2, 4, 8], AdaptConfig(k=1))
    assert hist.column("cells").tolist() == [4, 16, 64]
    assert all(r.marked == 0 for r in hist.records)
    assert hist.slope("h1err") < 0


def test_slope_helper():
    prob = get_problem("smooth")
    hist = run_uniform(prob, gen_squares, [4, 8], AdaptConfig(k=1))
    n, e = hist.column("ndofs"), hist.column("h1err")
    assert hist.slope("h1err") == pytest.approx(np.log(e[1] / e[0]) / np.log(n[1] / n[0]), rel=1e-12)
    one = run_uniform(prob, gen_squares, [4], AdaptConfig(k=1))
    assert np.isnan(one.slope("h1err"))
