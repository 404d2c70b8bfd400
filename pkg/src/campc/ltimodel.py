"""Linear plant, horizon prediction and the condensed (input-only) QP data.

States are eliminated through ``x_{1..N} = Phi x0 + Gamma U`` so the decision
variable of every MPC problem is the stacked input sequence ``U``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError
from .polytope import Polytope


@dataclass(frozen=True, eq=False)
class LtiModel:
    """``x+ = A x + B u``."""

    A: NDArray[np.float64]
    B: NDArray[np.float64]

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        B = np.array(self.B, dtype=float, ndmin=2)
        if A.shape[0] != A.shape[1]:
            raise ConfigError("A must be square")
        if B.shape[0] != A.shape[0]:
            raise ConfigError("B must have as many rows as A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x: ArrayLike, u: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if x.shape[-1] != self.n or u.shape[-1] != self.m:
            raise ConfigError(f"expected x in R^{self.n}, u in R^{self.m}")
        return x @ self.A.T + u @ self.B.T

    def simulate(self, x0: ArrayLike, inputs: ArrayLike) -> NDArray:
        """States ``x_1..x_N`` (rows) obtained by applying ``inputs`` (rows) from ``x0``."""
        inputs = np.asarray(inputs, dtype=float).reshape(-1, self.m)
        x = np.asarray(x0, dtype=float)
        out = np.empty((len(inputs), self.n))
        for i, u in enumerate(inputs):
            x = self.step(x, u)
            out[i] = x
        return out


def double_integrator(dt: float = 0.1) -> LtiModel:
    return LtiModel(np.array([[1.0, dt], [0.0, 1.0]]), np.array([[0.5 * dt * dt], [dt]]))


def _check_symmetric(M, name, tol=1e-12):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"{name} must be square")
    if np.max(np.abs(M - M.T), initial=0.0) > tol:
        raise ConfigError(f"{name} must be symmetric")


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Quadratic stage cost ``x'Qx + u'Ru`` and terminal cost ``x'P_T x``."""

    Q: NDArray[np.float64]
    R: NDArray[np.float64]
    P_T: NDArray[np.float64]

    def __post_init__(self):
        Q, R, P = (np.array(M, dtype=float, ndmin=2) for M in (self.Q, self.R, self.P_T))
        for M, name in ((Q, "Q"), (R, "R"), (P, "P_T")):
            _check_symmetric(M, name)
        for M, name in ((Q, "Q"), (P, "P_T")):
            if np.linalg.eigvalsh(M).min() < -1e-12 * max(1.0, np.abs(M).max()):
                raise ConfigError(f"{name} must be positive semidefinite")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ConfigError("R must be positive definite") from None
        if Q.shape != P.shape:
            raise ConfigError("Q and P_T must have equal shape")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "P_T", P)

    def check(self, model: LtiModel):
        if self.Q.shape != (model.n, model.n) or self.R.shape != (model.m, model.m):
            raise ConfigError("weight dimensions do not match the model")

    def stage_cost(self, x: ArrayLike, u: ArrayLike) -> float:
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return float(x @ self.Q @ x + u @ self.R @ u)


@dataclass(frozen=True, eq=False)
class PredictionMatrices:
    """Stacked free response ``Phi`` ((N n) x n) and forced response ``Gamma`` ((N n) x (N m))."""

    Phi: NDArray[np.float64]
    Gamma: NDArray[np.float64]
    N: int
    n: int
    m: int

    def stage(self, i: int) -> tuple[NDArray, NDArray]:
        """Blocks mapping ``(x0, U)`` to ``x_i`` for ``i`` in ``1..N``."""
        if not 1 <= i <= self.N:
            raise IndexError(f"stage {i} outside 1..{self.N}")
        s = slice((i - 1) * self.n, i * self.n)
        return self.Phi[s], self.Gamma[s]

    def states(self, x0: ArrayLike, U: ArrayLike) -> NDArray:
        """Predicted ``x_1..x_N`` as an (N, n) array."""
        X = self.Phi @ np.asarray(x0, dtype=float) + self.Gamma @ np.asarray(U, dtype=float).ravel()
        return X.reshape(self.N, self.n)


def build_prediction(model: LtiModel, N: int) -> PredictionMatrices:
    if N < 1:
        raise ConfigError("horizon must be at least 1")
    n, m = model.n, model.m
    Phi = np.empty((N * n, n))
    Gamma = np.zeros((N * n, N * m))
    # AkB[k] = A^k B
    AkB = [model.B]
    Ak = np.eye(n)
    for i in range(N):
        Ak = model.A @ Ak
        Phi[i * n:(i + 1) * n] = Ak
        if i:
            AkB.append(model.A @ AkB[-1])
    for i in range(N):
        for j in range(i + 1):
            Gamma[i * n:(i + 1) * n, j * m:(j + 1) * m] = AkB[i - j]
    return PredictionMatrices(Phi, Gamma, N, n, m)


@dataclass(frozen=True, eq=False)
class CondensedCost:
    """``J(U) = 0.5 U'HU + (F x0)'U + x0'W x0``; only the linear term moves with x0."""

    H: NDArray[np.float64]
    F: NDArray[np.float64]
    W: NDArray[np.float64]

    def at(self, x0: ArrayLike) -> tuple[NDArray, NDArray, float]:
        x0 = np.asarray(x0, dtype=float)
        return self.H, self.F @ x0, float(x0 @ self.W @ x0)


def condensed_cost(pred: PredictionMatrices, weights: CostWeights) -> CondensedCost:
    N, n, m = pred.N, pred.n, pred.m
    Qbar = np.zeros((N * n, N * n))
    for i in range(N - 1):
        Qbar[i * n:(i + 1) * n, i * n:(i + 1) * n] = weights.Q
    Qbar[(N - 1) * n:, (N - 1) * n:] = weights.P_T
    Rbar = np.kron(np.eye(N), weights.R)
    GtQ = pred.Gamma.T @ Qbar
    H = 2.0 * (GtQ @ pred.Gamma + Rbar)
    H = 0.5 * (H + H.T)
    F = 2.0 * GtQ @ pred.Phi
    W = weights.Q + pred.Phi.T @ Qbar @ pred.Phi
    return CondensedCost(H, F, 0.5 * (W + W.T))


def condense_objective(
    model: LtiModel, weights: CostWeights, N: int, x0: ArrayLike
) -> tuple[NDArray, NDArray, float]:
    """Hessian, gradient and constant of the horizon cost as a function of U.

    The stage cost at ``i = 0`` depends on ``x0`` only and lands in the constant.
    """
    weights.check(model)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ConfigError("x0 dimension mismatch")
    return condensed_cost(build_prediction(model, N), weights).at(x0)


def trajectory_cost(weights: CostWeights, x0, states, inputs) -> float:
    """Horizon cost evaluated along an explicit trajectory (states ``x_1..x_N``)."""
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float).reshape(len(states), -1)
    xs = np.vstack([np.asarray(x0, dtype=float), states[:-1]])
    cost = sum(weights.stage_cost(x, u) for x, u in zip(xs, inputs))
    return cost + float(states[-1] @ weights.P_T @ states[-1])


def stack_constraints(
    pred: PredictionMatrices,
    x0: ArrayLike,
    stage_sets: Sequence[Polytope],
    terminal: Polytope,
    input_set: Polytope,
    extra_first_stage: Polytope | None = None,
) -> tuple[NDArray, NDArray]:
    """Map per-stage state polytopes and the input set to rows over ``U``.

    Row order: stage 1 (then ``extra_first_stage``), stages 2..N-1, the
    terminal set at stage N, and finally the input rows for ``u_0..u_{N-1}``.
    A state row ``C_j x_i <= b_j`` becomes ``C_j Gamma_i U <= b_j - C_j Phi_i x0``.
    """
    N, n, m = pred.N, pred.n, pred.m
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ConfigError("x0 dimension mismatch")
    if len(stage_sets) != N - 1:
        raise ConfigError(f"expected {N - 1} stage sets, got {len(stage_sets)}")
    if input_set.dim != m:
        raise ConfigError("input set dimension mismatch")

    blocks_A, blocks_b = [], []

    def add(P: Polytope, i: int):
        if P.dim != n:
            raise ConfigError("state set dimension mismatch")
        if P.n_rows == 0:
            return
        Phi_i, Gam_i = pred.stage(i)
        blocks_A.append(P.C @ Gam_i)
        blocks_b.append(P.b - P.C @ (Phi_i @ x0))

    for i, P in enumerate(stage_sets, start=1):
        add(P, i)
        if i == 1 and extra_first_stage is not None:
            add(extra_first_stage, 1)
    if N == 1 and extra_first_stage is not None:
        add(extra_first_stage, 1)
    add(terminal, N)
    if input_set.n_rows:
        blocks_A.append(np.kron(np.eye(N), input_set.C))
        blocks_b.append(np.tile(input_set.b, N))
    if not blocks_A:
        return np.zeros((0, N * m)), np.zeros(0)
    return np.vstack(blocks_A), np.concatenate(blocks_b)
