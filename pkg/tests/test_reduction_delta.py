import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from campc.delta import DeltaSet, build_tube, delta_for_scheme_a, max_ball_radius, min_violation_input
from campc.errors import ConfigError, InvariantBreach
from campc.ltimodel import LtiModel, double_integrator
from campc.polytope import Polytope, tangent_facets
from campc.reduction import complement_indices, horizon_indices, select_indices, uniform_margins

HALF_LINE = Polytope([[1.0]], [1.0])


def four_rows():
    # rows 0..3 of a 1D set; used for the union/complement examples
    return Polytope([[1.0], [1.0], [1.0], [1.0]], [1.0, 2.0, 3.0, 4.0])


def test_uniform_margins_examples():
    P = Polytope([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
    assert np.allclose(uniform_margins(P, 0.1), 0.1)
    assert uniform_margins(Polytope([[3.0, 4.0]], [1.0]), 0.1) == pytest.approx([0.5])
    with pytest.raises(ConfigError):
        uniform_margins(P, 0.0)


def test_select_indices_strictness():
    assert select_indices([0.95], HALF_LINE, [0.1]).tolist() == [0]
    assert select_indices([0.9], HALF_LINE, [0.1]).tolist() == []
    assert select_indices([0.0], HALF_LINE, [0.1]).tolist() == []


def test_union_and_complement_examples():
    X = four_rows()
    m = np.full(4, 0.5)
    # x = 1.9 selects rows with b - 0.5 < 1.9 -> rows 0 and 1; x = 2.6 -> rows 0, 1, 2
    plan = np.array([[0.0], [1.9], [2.6]])
    assert horizon_indices(plan, X, m, [2, 3]).tolist() == [0, 1, 2]
    assert complement_indices(plan, X, m, [2, 3]).tolist() == [2, 3]
    deep = np.array([[-9.0], [-9.0]])
    assert horizon_indices(deep, X, m, [1, 2]).tolist() == []
    assert complement_indices(deep, X, m, [1, 2]).tolist() == [0, 1, 2, 3]
    full = np.array([[3.9], [3.9]])
    assert complement_indices(full, X, m, [1, 2]).tolist() == []
    with pytest.raises(ConfigError):
        horizon_indices(plan, X, m, [4])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_selection_properties(seed):
    rng = np.random.default_rng(seed)
    X = tangent_facets(rng.normal(size=2) * 0.1, rng.uniform(1, 3, 2), rng.uniform(-3, 3), int(rng.integers(5, 60)))
    margins = uniform_margins(X, rng.uniform(0.01, 0.5))
    x = rng.uniform(-3, 3, 2)
    J = select_indices(x, X, margins)

    pts = rng.uniform(-4, 4, size=(10_000, 2))
    assert np.all(X.row_subset(J).contains(pts[X.contains(pts)]))

    rest = np.setdiff1d(np.arange(X.n_rows), J)
    assert np.all(X.C[rest] @ x <= X.b[rest] - margins[rest])

    bigger = margins + rng.uniform(0, 0.2, X.n_rows)
    assert set(J) <= set(select_indices(x, X, bigger))

    plan = rng.uniform(-3, 3, size=(5, 2))
    union = horizon_indices(plan, X, margins, range(2, 6))
    comp = complement_indices(plan, X, margins, range(2, 6))
    outside = np.setdiff1d(np.arange(X.n_rows), union)
    assert set(outside) <= set(comp)


# -- delta sets ------------------------------------------------------------------


def test_max_ball_radius_examples():
    assert max_ball_radius([0.0, 0.0], Polytope([[1.0, 0.0]], [1.0])) == pytest.approx(1.0)
    assert max_ball_radius([0.0, 0.0], Polytope([[1.0, 1.0]], [2.0])) == pytest.approx(1.0)
    assert max_ball_radius([2.0, 0.0], Polytope([[1.0, 0.0]], [1.0])) == 0.0
    assert max_ball_radius([0.0, 0.0], Polytope([[1.0, 0.0]], [1.0]), norm="2") == pytest.approx(1.0)


def _box_radius_by_bisection(center, P, hi=100.0):
    signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    lo = 0.0
    if not P.contains(center):
        return 0.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if np.all(P.contains(center + mid * signs, 0.0)):
            lo = mid
        else:
            hi = mid
    return lo


def test_max_ball_radius_matches_corner_bisection():
    rng = np.random.default_rng(5)
    for _ in range(100):
        rows = int(rng.integers(3, 12))
        P = Polytope(rng.normal(size=(rows, 2)), rng.uniform(0.3, 2.0, rows))
        c = rng.uniform(-0.3, 0.3, 2)
        assert max_ball_radius(c, P) == pytest.approx(_box_radius_by_bisection(c, P), abs=1e-8)


def test_delta_set_basics():
    d = DeltaSet(np.zeros(2), 0.5)
    assert d.contains([0.5, -0.5]) and not d.contains([0.6, 0.0])
    assert d.as_polytope().n_rows == 4
    with pytest.raises(ConfigError):
        DeltaSet(np.zeros(2), -1.0)
    with pytest.raises(ConfigError):
        DeltaSet(np.zeros(2), 1.0, "2").as_polytope()


def test_build_tube_examples():
    X = Polytope.from_box([-1, -1], [1, 1])
    m = uniform_margins(X, 0.1)
    plan = np.array([[0.0, 0.0], [0.2, 0.0], [0.5, 0.5]])
    tube = build_tube(plan, X, m)
    assert len(tube) == 2
    assert np.allclose(tube.radii, [0.8, 0.5])

    on_edge = np.array([[0.0, 0.0], [0.95, 0.0], [0.0, 0.0]])
    # x1 <= 1 is selected at stage 2 only, so it stays in the complement
    t = build_tube(on_edge, X, m)
    assert t.radii[0] == pytest.approx(0.05)

    boundary = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    t = build_tube(boundary, X, m)
    # row x1 <= 1 is selected at every stage, so it leaves the complement
    assert np.all(t.radii > 0)
    with pytest.raises(InvariantBreach):
        build_tube(np.array([[0.0, 0.0], [2.0, 0.0]]), X, m)


def test_build_tube_radius_zero_on_complement_boundary():
    X = Polytope.from_box([-1, -1], [1, 1])
    plan = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    t = build_tube(plan, X, uniform_margins(X, 0.1))
    assert t.radii[0] == 0.0


def test_build_tube_exact_complement():
    X = Polytope.from_box([-1, -1], [1, 1])
    m = uniform_margins(X, 0.1)
    plan = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    t = build_tube(plan, X, m, exact=True)
    # x1 <= 1 is selected at stage 2, so neither ball is fitted against it
    assert np.allclose(t.radii, [1.0, 1.0])

    union = horizon_indices(plan, X, m, [2, 3])
    X_r = X.row_subset(union)
    pts = np.random.default_rng(3).uniform(-2, 2, size=(20_000, 2))
    for d in t:
        inside = X_r.contains(pts) & d.contains(pts)
        assert np.all(X.contains(pts[inside], 1e-12))


def test_scheme_a_delta_at_equilibrium():
    di = double_integrator()
    X = tangent_facets((0, 0), (2, 1), 0.0, 40)
    U = Polytope.from_box([-1], [1])
    m = uniform_margins(X, 0.1)
    ubar, d = delta_for_scheme_a([0.0, 0.0], di, U, X, m)
    assert np.allclose(ubar, 0.0, atol=1e-9)
    assert np.allclose(d.center, 0.0, atol=1e-9)
    assert d.radius == pytest.approx(max_ball_radius([0, 0], X))


def test_scheme_a_candidate_and_fallback():
    model = LtiModel(np.eye(2), np.eye(2))
    X = Polytope.from_box([-1, -1], [1, 1])
    U = Polytope.from_box([-1, -1], [1, 1])
    m = uniform_margins(X, 0.1)
    x = np.array([0.9, 0.0])
    good = np.array([-0.1, 0.2])
    ubar, _ = delta_for_scheme_a(x, model, U, X, m, good)
    assert np.array_equal(ubar, good)

    bad = np.array([0.5, 0.0])
    ubar, d = delta_for_scheme_a(x, model, U, X, m, bad)
    assert not np.allclose(ubar, bad)
    assert X.contains(model.step(x, ubar)) and U.contains(ubar)
    assert d.contains(model.step(x, ubar))

    u, worst = min_violation_input(x, model, U, X)
    assert worst <= 0


def test_scheme_a_rejects_non_invariant_state():
    model = LtiModel(np.eye(1) * 2.0, np.eye(1))
    X = Polytope.from_box([-1], [1])
    U = Polytope.from_box([-0.1], [0.1])
    with pytest.raises(ConfigError):
        delta_for_scheme_a([0.9], model, U, X, uniform_margins(X, 0.1))
