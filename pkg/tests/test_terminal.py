import numpy as np
import pytest

from campc.delta import max_ball_radius
from campc.errors import CampcError, ConfigError
from campc.ltimodel import LtiModel, double_integrator
from campc.polytope import Polytope, tangent_facets
from campc.terminal import (
    certify_subset, check_invariance, max_invariant_set, riccati_residual, solve_dare, synthesize_terminal,
)


def test_dare_examples():
    zero = LtiModel([[0.0]], [[1.0]])
    K, P = solve_dare(zero, [[1.0]], [[1.0]])
    assert P[0, 0] == pytest.approx(1.0) and K[0, 0] == pytest.approx(0.0)

    one = LtiModel([[1.0]], [[1.0]])
    K, P = solve_dare(one, [[1.0]], [[1.0]])
    assert P[0, 0] == pytest.approx((1 + np.sqrt(5)) / 2, abs=1e-10)
    assert riccati_residual(one, [[1.0]], [[1.0]], P) <= 1e-12

    di = double_integrator()
    K, P = solve_dare(di, np.eye(2), [[1.0]])
    assert riccati_residual(di, np.eye(2), [[1.0]], P) <= 1e-12
    assert np.max(np.abs(np.linalg.eigvals(di.A - di.B @ K))) < 1


def test_dare_rejects_unstabilizable():
    bad = LtiModel([[2.0]], [[0.0]])
    with pytest.raises(CampcError):
        solve_dare(bad, [[1.0]], [[1.0]], max_iter=2000)


def test_max_invariant_set_deadbeat():
    model = LtiModel(np.eye(2), np.eye(2))
    K = np.eye(2)  # A - BK = 0
    X = Polytope.from_box([-1, -1], [1, 1])
    U = Polytope.from_box([-5, -5], [5, 5])
    S = max_invariant_set(model, K, X, U)
    pts = np.random.default_rng(0).uniform(-2, 2, size=(5000, 2))
    assert np.array_equal(S.contains(pts), X.contains(pts))


def test_max_invariant_set_contraction():
    model = LtiModel([[0.5]], [[1.0]])
    S = max_invariant_set(model, np.zeros((1, 1)), Polytope.from_box([-1], [1]), Polytope.from_box([-1], [1]))
    assert S.contains([1.0]) and S.contains([-1.0]) and not S.contains([1.01])


def test_max_invariant_set_requires_stable_loop():
    model = LtiModel([[2.0]], [[1.0]])
    with pytest.raises(ConfigError):
        max_invariant_set(model, np.zeros((1, 1)), Polytope.from_box([-1], [1]), Polytope.from_box([-1], [1]))


def test_check_invariance_examples():
    deadbeat = LtiModel(np.eye(2), np.eye(2))
    ok, witness = check_invariance(deadbeat, np.eye(2), Polytope.from_box([-1, -1], [1, 1]), 500)
    assert ok and witness is None

    expand = LtiModel([[2.0]], [[1.0]])
    ok, witness = check_invariance(expand, np.zeros((1, 1)), Polytope.from_box([-1], [1]), 500)
    assert not ok and abs(2 * witness[0]) > 1


def test_synthesize_small_corpus():
    di = double_integrator()
    X = tangent_facets((0, 0), (3, 1), 0.1, 24)
    U = Polytope.from_box([-0.5], [0.5])
    term = synthesize_terminal(di, X, U, np.eye(2), [[10.0]])
    assert len(certify_subset(term.X_T, X)) == 0
    ok, _ = check_invariance(di, term.K, term.X_T, 10_000, U)
    assert ok
    assert term.X_T.contains([0.0, 0.0]) and max_ball_radius([0, 0], term.X_T) > 0


@pytest.mark.slow
def test_flagship_terminal_set(flagship):
    X_T = flagship.terminal.X_T
    assert X_T.contains([0.0, 0.0]) and max_ball_radius([0, 0], X_T) > 0
    assert len(certify_subset(X_T, flagship.X)) == 0
