"""Barycentric weak transport: V_p, its symmetrisation, and convex-order checks.

For measures ``P`` and ``Q`` on ``R^d``,

    V_p(P, Q)^p = min_pi sum_x P(x)^(1-p) * || P(x) x - sum_y pi(x, y) y ||^p
               = min_pi E_pi[ || E_pi[X - Y | X] ||^p ],

a convex problem over the transportation polytope solved by Frank-Wolfe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lp import LinearProgram, frank_wolfe, solve_lp, solve_transport
from .measures import DiscreteMeasure, _flatten_numbers, _normalise_p

__all__ = [
    "BarycentricObjective",
    "WeakOTReport",
    "ProjectionReport",
    "v_dist",
    "v_sym",
    "martingale_coupling_exists",
    "convex_projection_check",
]

DEFAULT_GAP = 1e-8


def _vectors(m: DiscreteMeasure) -> np.ndarray:
    if m.depth:
        raise ValueError("weak transport needs atoms in R^d, not nested measures")
    return np.array([[float(v) for v in _flatten_numbers(a)] for a in m.atoms])


def _check_pair(P: DiscreteMeasure, Q: DiscreteMeasure):
    X, Y = _vectors(P), _vectors(Q)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y


class BarycentricObjective:
    """``pi -> sum_x P(x)^(1-p) ||r_x||^p`` with ``r_x = P(x) x - sum_y pi(x, y) y``."""

    def __init__(self, P: DiscreteMeasure, Q: DiscreteMeasure, p=2):
        self.p = _normalise_p(p)
        self.X, self.Y = _check_pair(P, Q)
        self.px = np.array([float(w) for w in P.weights])
        self.qy = np.array([float(w) for w in Q.weights])
        self.scale = self.px ** (1.0 - self.p)

    def residual(self, pi: np.ndarray) -> np.ndarray:
        return self.px[:, None] * self.X - pi @ self.Y

    def __call__(self, pi: np.ndarray) -> float:
        norms = np.linalg.norm(self.residual(pi), axis=1)
        return float(np.sum(self.scale * norms ** self.p))

    def gradient(self, pi: np.ndarray) -> np.ndarray:
        r = self.residual(pi)
        norms = np.linalg.norm(r, axis=1)
        coef = np.zeros_like(norms)
        nz = norms > 0
        # subgradient 0 at a kink (p < 2, r = 0)
        coef[nz] = self.scale[nz] * self.p * norms[nz] ** (self.p - 2)
        return -(coef[:, None] * r) @ self.Y.T


@dataclass
class WeakOTReport:
    value: float
    coupling: np.ndarray
    pushforward: DiscreteMeasure
    gap: float
    objective: float = 0.0
    iterations: int = 0
    converged: bool = True
    stats: dict = field(default_factory=dict)


def _pushforward(P: DiscreteMeasure, X: np.ndarray, Y: np.ndarray, pi: np.ndarray) -> DiscreteMeasure:
    px = np.array([float(w) for w in P.weights])
    means = (pi @ Y) / px[:, None]
    return DiscreteMeasure(tuple(tuple(float(v) for v in row) for row in means), P.weights)


def _solve(P, Q, p, tol, max_iters):
    f = BarycentricObjective(P, Q, p)
    cost = np.array([[float(np.linalg.norm(x - y)) ** f.p for y in f.Y] for x in f.X])
    # starting at a W_p-optimal plan makes V_p <= W_p hold at every iterate
    start = solve_transport(cost, f.px, f.qy, exact=False).plan.astype(float)
    res = frank_wolfe(f, f.gradient, f.px, f.qy, max_iters=max_iters, tol=tol, x0=start,
                      step="quadratic" if f.p == 2 else "schedule")
    return f, res


def v_dist(P: DiscreteMeasure, Q: DiscreteMeasure, p=2, tol: float = DEFAULT_GAP,
           max_iters: int = 10_000) -> WeakOTReport:
    """Barycentric weak transport value ``V_p(P, Q)`` (the p-th root).

    ``gap`` is the final Frank-Wolfe duality gap, an upper bound on the
    suboptimality of ``objective = V_p^p``.
    """
    f, res = _solve(P, Q, p, tol, max_iters)
    val = max(res.value, 0.0)
    return WeakOTReport(val ** (1.0 / f.p), res.plan, _pushforward(P, f.X, f.Y, res.plan), res.gap,
                        val, res.iterations, res.converged)


def v_sym(P: DiscreteMeasure, Q: DiscreteMeasure, p=2, tol: float = DEFAULT_GAP) -> float:
    """``(max(V_p^p(P, Q), V_p^p(Q, P)))^(1/p)``."""
    p = _normalise_p(p)
    a = v_dist(P, Q, p, tol).objective
    b = v_dist(Q, P, p, tol).objective
    return max(a, b) ** (1.0 / p)


def martingale_coupling_exists(P: DiscreteMeasure, Q: DiscreteMeasure, tol: float = 1e-9) -> bool:
    """Whether some coupling has ``E[Y | X = x] = x`` for every atom ``x`` of ``P``.

    Each barycentre equation may be violated by at most ``tol`` per
    coordinate.  Equivalent to ``P <=_cx Q``.
    """
    X, Y = _check_pair(P, Q)
    m, n, d = len(X), len(Y), X.shape[1]
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        A_eq[m + j, j::n] = 1
    b_eq = [float(w) for w in P.weights] + [float(w) for w in Q.weights]
    rows = []
    for i in range(m):
        for k in range(d):
            row = np.zeros(m * n)
            row[i * n:(i + 1) * n] = Y[:, k] - X[i, k]
            rows.append(row)
    M = np.array(rows)
    A_ub = np.vstack([M, -M])
    b_ub = np.full(2 * len(rows), float(tol))
    lp = LinearProgram(c=np.zeros(m * n), A_eq=A_eq, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub)
    return solve_lp(lp, exact=False).optimal


@dataclass
class ProjectionReport:
    """Outcome of the convex-order projection cross-check."""

    v: float
    w: float
    projection: DiscreteMeasure
    convex_order: bool
    identity: bool
    gap: float

    @property
    def passed(self) -> bool:
        return self.convex_order and self.identity


def convex_projection_check(Pk: DiscreteMeasure, P: DiscreteMeasure, p=2, tol: float = 1e-6,
                            max_iters: int = 10_000) -> ProjectionReport:
    """Check that ``V_p(Pk, P) = W_p(Pk, Q*)`` for ``Q*`` the barycentric image of ``Pk``.

    ``Q*`` is the law of ``E[Y | X]`` under the computed weak-transport
    optimiser.  Two facts are certified: ``Q* <=_cx P`` (a martingale
    coupling of ``Q*`` and ``P`` exists) and ``|W_p^p(Pk, Q*) - V_p^p| <=
    max(gap, tol)``.
    """
    f, res = _solve(Pk, P, p, min(tol, DEFAULT_GAP), max_iters)
    qstar = _pushforward(Pk, f.X, f.Y, res.plan)
    Z = _vectors(qstar)
    cost = np.array([[float(np.linalg.norm(x - z)) ** f.p for z in Z] for x in f.X])
    w_pow = float(solve_transport(cost, f.px, f.px, exact=False).value)
    v_pow = max(res.value, 0.0)
    ok_order = martingale_coupling_exists(qstar, P, tol=1e-9)
    ok_identity = abs(w_pow - v_pow) <= max(res.gap, tol)
    return ProjectionReport(v_pow ** (1.0 / f.p), max(w_pow, 0.0) ** (1.0 / f.p), qstar,
                            ok_order, ok_identity, res.gap)
