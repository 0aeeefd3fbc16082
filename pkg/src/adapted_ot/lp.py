"""Dense linear programming, discrete optimal transport and Frank-Wolfe.

The simplex solver works on a dense tableau and always pivots with Bland's
rule, so identical inputs produce identical outputs.  Setting the environment
variable ``ADAPTED_OT_RATIONAL=1`` (or passing ``exact=True``) switches the
tableau to :class:`fractions.Fraction` arithmetic.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "LinearProgram",
    "LPSolution",
    "TransportResult",
    "FWResult",
    "rational_mode",
    "solve_lp",
    "solve_transport",
    "transport_lp",
    "frank_wolfe",
    "format_tableau",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_EPS = 1e-9
_COST_EPS = 1e-11


def rational_mode() -> bool:
    """Whether exact rational arithmetic is requested via the environment."""
    return os.environ.get("ADAPTED_OT_RATIONAL", "").strip().lower() in {"1", "true", "yes", "on"}


def _resolve_exact(exact: Optional[bool]) -> bool:
    return rational_mode() if exact is None else bool(exact)


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(float(v))


def _as_matrix(a, n: int, exact: bool) -> np.ndarray:
    if a is None:
        a = np.zeros((0, n))
    if exact:
        arr = np.array(a, dtype=object)
        if arr.size == 0:
            return np.zeros((0, n), dtype=object)
        arr = arr.reshape(-1, n) if arr.ndim == 2 else arr.reshape(1, -1)
        return np.vectorize(_to_fraction, otypes=[object])(arr)
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        return np.zeros((0, n))
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


def _as_vector(v, n: int, exact: bool, fill=0) -> np.ndarray:
    if v is None:
        v = [fill] * n
    elif np.ndim(v) == 0 and n:
        v = [v] * n
    if exact:
        return np.array([_to_fraction(x) for x in np.ravel(np.asarray(v, dtype=object))], dtype=object)
    return np.asarray(v, dtype=float).ravel()


@dataclass(frozen=True)
class LinearProgram:
    """``min (or max) c @ x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``x >= lb``."""

    c: Sequence
    A_eq: Optional[Sequence] = None
    b_eq: Optional[Sequence] = None
    A_ub: Optional[Sequence] = None
    b_ub: Optional[Sequence] = None
    lb: Optional[Sequence] = None
    sense: str = "min"

    @property
    def n(self) -> int:
        return len(np.ravel(np.asarray(self.c, dtype=object)))

    def arrays(self, exact: bool = False):
        n = self.n
        c = _as_vector(self.c, n, exact)
        A_eq = _as_matrix(self.A_eq, n, exact)
        A_ub = _as_matrix(self.A_ub, n, exact)
        b_eq = _as_vector(self.b_eq if self.b_eq is not None else [], 0, exact)
        b_ub = _as_vector(self.b_ub if self.b_ub is not None else [], 0, exact)
        lb = _as_vector(self.lb, n, exact)
        if A_eq.shape[1] != n or A_ub.shape[1] != n:
            raise ValueError("constraint matrices must have one column per variable")
        if A_eq.shape[0] != len(b_eq) or A_ub.shape[0] != len(b_ub):
            raise ValueError("right-hand side length does not match constraint rows")
        if len(lb) != n:
            raise ValueError("lower bound length does not match number of variables")
        if self.sense not in ("min", "max"):
            raise ValueError(f"unknown sense {self.sense!r}")
        if not exact:
            for name, arr in (("c", c), ("A_eq", A_eq), ("b_eq", b_eq), ("A_ub", A_ub), ("b_ub", b_ub), ("lb", lb)):
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"non-finite entry in {name}")
        return c, A_eq, b_eq, A_ub, b_ub, lb


@dataclass(frozen=True)
class LPSolution:
    status: str
    value: object
    x: Optional[np.ndarray]
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Tableau ``[A | b]`` with a cost row kept separately."""

    def __init__(self, A, b, basis, exact):
        self.T = np.concatenate([A, b.reshape(-1, 1)], axis=1)
        self.basis = list(basis)
        self.exact = exact
        self.pivots = 0

    def pivot(self, r: int, j: int, cost: np.ndarray) -> np.ndarray:
        T = self.T
        piv = T[r, j]
        T[r] = T[r] / piv
        col = T[:, j].copy()
        col[r] = 0
        nz = np.nonzero(col)[0] if self.exact else np.nonzero(np.abs(col) > 0)[0]
        if len(nz):
            T[nz] -= np.outer(col[nz], T[r])
        if not self.exact:
            T[r, j] = 1.0
            T[nz, j] = 0.0
        cj = cost[j]
        if cj != 0:
            cost = cost - cj * T[r]
        self.basis[r] = j
        self.pivots += 1
        return cost

    def run(self, cost: np.ndarray, allowed: int, max_iter: int):
        """Bland's rule on columns ``< allowed``; returns (status, cost row)."""
        eps_c = 0 if self.exact else _COST_EPS
        eps_p = 0 if self.exact else _PIVOT_EPS
        T = self.T
        while True:
            if self.pivots >= max_iter:
                raise RuntimeError(f"simplex exceeded {max_iter} pivots")
            red = cost[:allowed]
            neg = np.nonzero(red < -eps_c)[0]
            if len(neg) == 0:
                return OPTIMAL, cost
            j = int(neg[0])
            col = T[:, j]
            rows = np.nonzero(col > eps_p)[0]
            if len(rows) == 0:
                return UNBOUNDED, cost
            ratios = T[rows, -1] / col[rows]
            best = min(ratios)
            if self.exact:
                ties = [int(r) for r, q in zip(rows, ratios) if q == best]
            else:
                scale = max(1.0, abs(float(best)))
                ties = [int(r) for r, q in zip(rows, ratios) if q <= best + 1e-12 * scale]
            r = min(ties, key=lambda i: self.basis[i])
            cost = self.pivot(r, j, cost)


def solve_lp(lp: LinearProgram, exact: Optional[bool] = None, tol: float = 1e-9,
             max_iter: int = 200_000) -> LPSolution:
    """Solve ``lp`` by two-phase simplex with Bland's rule.

    ``tol`` is the phase-one residual above which the problem is declared
    infeasible (ignored in exact mode, where feasibility is decided exactly).
    """
    exact = _resolve_exact(exact)
    c, A_eq, b_eq, A_ub, b_ub, lb = lp.arrays(exact)
    n = len(c)
    sign = -1 if lp.sense == "max" else 1
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0

    # shift x = lb + z
    if len(b_eq):
        b_eq = b_eq - A_eq @ lb
    if len(b_ub):
        b_ub = b_ub - A_ub @ lb
    me, mu = len(b_eq), len(b_ub)
    m = me + mu
    dtype = object if exact else float

    ncols = n + mu
    A = np.zeros((m, ncols), dtype=dtype) if not exact else np.full((m, ncols), zero, dtype=object)
    b = np.zeros(m, dtype=dtype) if not exact else np.full(m, zero, dtype=object)
    if me:
        A[:me, :n] = A_eq
        b[:me] = b_eq
    if mu:
        A[me:, :n] = A_ub
        A[me:, n:] = np.eye(mu, dtype=dtype) if not exact else _eye(mu)
        b[me:] = b_ub

    basis = [-1] * m
    for i in range(m):
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]
        elif i >= me:
            basis[i] = n + (i - me)
    need = [i for i in range(m) if basis[i] < 0]
    na = len(need)
    art = np.full((m, na), zero, dtype=object) if exact else np.zeros((m, na))
    for k, i in enumerate(need):
        art[i, k] = one
        basis[i] = ncols + k
    tab = _Tableau(np.concatenate([A, art], axis=1), b, basis, exact)
    width = ncols + na

    # phase one
    if na:
        cost = np.full(width + 1, zero, dtype=object) if exact else np.zeros(width + 1)
        for i in need:
            cost = cost - tab.T[i]
        for k in range(na):
            cost[ncols + k] = zero
        status, cost = tab.run(cost, ncols, max_iter)
        infeas = -cost[-1]
        if (infeas > 0) if exact else (infeas > tol * max(1.0, float(np.abs(b).max(initial=0.0)))):
            return LPSolution(INFEASIBLE, None, None, tab.pivots)
        # drive artificials out of the basis, dropping redundant rows
        keep = []
        eps_p = 0 if exact else _PIVOT_EPS
        for r in range(m):
            if tab.basis[r] < ncols:
                keep.append(r)
                continue
            row = tab.T[r, :ncols]
            cand = np.nonzero(np.abs(row) > eps_p)[0] if not exact else np.nonzero(row != 0)[0]
            if len(cand):
                cost = tab.pivot(r, int(cand[0]), cost)
                keep.append(r)
        tab.T = np.ascontiguousarray(tab.T[keep][:, list(range(ncols)) + [width]])
        tab.basis = [tab.basis[r] for r in keep]

    # phase two
    full_c = np.full(ncols, zero, dtype=object) if exact else np.zeros(ncols)
    full_c[:n] = sign * c
    cost = np.concatenate([full_c, [zero]]).astype(dtype)
    for r, j in enumerate(tab.basis):
        if cost[j] != 0:
            cost = cost - cost[j] * tab.T[r]
    status, cost = tab.run(cost, ncols, max_iter)
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, None, None, tab.pivots)
    z = np.full(ncols, zero, dtype=object) if exact else np.zeros(ncols)
    for r, j in enumerate(tab.basis):
        z[j] = tab.T[r, -1]
    x = lb + z[:n]
    if not exact:
        x = np.where(np.abs(x) < 1e-15, 0.0, x)
    value = c @ x if n else zero
    return LPSolution(OPTIMAL, value, x, tab.pivots)


def _eye(k: int) -> np.ndarray:
    out = np.full((k, k), Fraction(0), dtype=object)
    for i in range(k):
        out[i, i] = Fraction(1)
    return out


def format_tableau(lp: LinearProgram) -> str:
    """Plain-text dump of an LP, one constraint per line, for failing tests."""
    c, A_eq, b_eq, A_ub, b_ub, lb = lp.arrays(False)
    lines = [f"{lp.sense} " + " ".join(f"{v:+.6g}" for v in c)]
    for row, rhs in zip(A_eq, b_eq):
        lines.append(" ".join(f"{v:+.6g}" for v in row) + f" = {rhs:.6g}")
    for row, rhs in zip(A_ub, b_ub):
        lines.append(" ".join(f"{v:+.6g}" for v in row) + f" <= {rhs:.6g}")
    lines.append("lb " + " ".join(f"{v:.6g}" for v in lb))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# transport


@dataclass(frozen=True)
class TransportResult:
    value: object
    plan: np.ndarray
    iterations: int = 0

    def __iter__(self):
        return iter((self.value, self.plan))


def _check_marginal(w, name: str, exact: bool):
    arr = np.asarray(w, dtype=object if exact else float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    vals = [float(v) for v in arr]
    if min(vals) < -1e-12:
        raise ValueError(f"{name} has negative mass")
    if abs(sum(vals) - 1.0) > 1e-9:
        raise ValueError(f"{name} does not sum to one (sum={sum(vals)!r})")
    return arr


def transport_lp(cost, mu, nu) -> LinearProgram:
    """The transportation LP over row-major ``m*n`` plan entries."""
    C = np.asarray(cost, dtype=object)
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        A[m + j, j::n] = 1
    b = list(np.ravel(np.asarray(mu, dtype=object))) + list(np.ravel(np.asarray(nu, dtype=object)))
    return LinearProgram(c=C.ravel(), A_eq=A, b_eq=b)


def solve_transport(cost, mu, nu, exact: Optional[bool] = None) -> TransportResult:
    """Exact optimal transport between weight vectors ``mu`` and ``nu``.

    Parameters
    ----------
    cost : array-like, shape (m, n)
    mu, nu : array-like
        Probability vectors of length ``m`` and ``n``.
    exact : bool, optional
        Rational arithmetic; defaults to ``ADAPTED_OT_RATIONAL``.

    Returns
    -------
    TransportResult
        Unpacks as ``(value, plan)``.
    """
    exact = _resolve_exact(exact)
    mu = _check_marginal(mu, "mu", exact)
    nu = _check_marginal(nu, "nu", exact)
    C = np.asarray(cost, dtype=object if exact else float)
    if C.ndim != 2 or C.shape != (len(mu), len(nu)):
        raise ValueError(f"cost shape {C.shape} does not match marginals ({len(mu)}, {len(nu)})")
    if exact:
        C = np.vectorize(_to_fraction, otypes=[object])(C)
        mu = np.array([_to_fraction(v) for v in mu], dtype=object)
        nu = np.array([_to_fraction(v) for v in nu], dtype=object)
    elif not np.all(np.isfinite(C)):
        raise ValueError("non-finite transport cost")
    m, n = C.shape
    if m == 1 or n == 1:
        # the plan is forced
        plan = np.outer(mu, nu)
        return TransportResult(np.sum(C * plan), plan, 0)
    sol = solve_lp(transport_lp(C, mu, nu), exact=exact)
    if not sol.optimal:
        raise RuntimeError(f"transport LP returned {sol.status}")
    plan = sol.x.reshape(m, n)
    return TransportResult(sol.value, plan, sol.iterations)


# --------------------------------------------------------------------------
# Frank-Wolfe


@dataclass
class FWResult:
    value: float
    plan: np.ndarray
    gap: float
    iterations: int
    converged: bool
    values: list = field(default_factory=list)
    gaps: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.value, self.plan))


def frank_wolfe(objective: Callable[[np.ndarray], float],
                gradient: Callable[[np.ndarray], np.ndarray],
                mu, nu, max_iters: int = 10_000, tol: float = 1e-8,
                x0: Optional[np.ndarray] = None, step: str = "schedule") -> FWResult:
    """Minimise a convex function over the couplings of ``mu`` and ``nu``.

    The linear minimisation oracle is :func:`solve_transport` applied to the
    gradient.  Iteration stops once the Frank-Wolfe duality gap
    ``<grad f(x), x - s>`` is at most ``tol``.

    ``step="schedule"`` uses the classic ``2/(k+2)`` rule, halving a step
    that would increase the objective.  ``step="quadratic"`` assumes ``f`` is
    quadratic and runs the fully corrective variant: after each oracle call
    the weights on all vertices found so far are re-optimised exactly (an
    exact line search over their convex hull).  For quadratics this
    terminates finitely, like Wolfe's minimum-norm-point method.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if step not in ("schedule", "quadratic"):
        raise ValueError(f"unknown step rule {step!r}")
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    x = np.outer(mu, nu) if x0 is None else np.array(x0, dtype=float)
    shape = x.shape
    fx = float(objective(x))
    if not np.isfinite(fx):
        raise ValueError("objective is not finite at the starting coupling")

    corral = _Corral(objective, x, fx) if step == "quadratic" else None
    values, gaps = [fx], []
    gap = np.inf
    k = 0
    converged = False
    while k < max_iters:
        g = np.asarray(gradient(x), dtype=float)
        if g.shape != shape:
            raise ValueError(f"gradient shape {g.shape} does not match coupling shape {shape}")
        s = solve_transport(g, mu, nu, exact=False).plan.astype(float)
        gap = float(np.sum(g * (x - s)))
        gaps.append(max(gap, 0.0))
        if gap <= tol:
            converged = True
            break
        k += 1
        if corral is not None:
            x_new = corral.add(s)
            f_new = float(objective(x_new))
            if f_new > fx + 1e-12 * max(1.0, abs(fx)):
                # round-off defeated the corrective step; keep the best iterate
                corral.reset(x, fx)
                break
        else:
            gamma = 2.0 / (k + 2.0)
            d = s - x
            for _ in range(40):
                x_new = x + gamma * d
                f_new = float(objective(x_new))
                if f_new <= fx:
                    break
                gamma *= 0.5
            else:
                break
        if not np.isfinite(f_new):
            raise ValueError("objective is not finite at a feasible coupling")
        x, fx = x_new, f_new
        values.append(fx)
    return FWResult(fx, x, max(float(gap), 0.0), k, converged, values, gaps)


class _Corral:
    """Active vertices with weights minimising a quadratic over their hull.

    On the hull, ``f(sum_i l_i V_i) = l^T M l`` for weights summing to one,
    with ``M_ij = 2 f((V_i + V_j)/2) - (f(V_i) + f(V_j))/2`` by polarisation,
    so ``M`` is built from objective values alone.
    """

    def __init__(self, objective, x, fx):
        self.f = objective
        self.reset(x, fx)

    def reset(self, x, fx):
        self.V = [x.copy()]
        self.M = np.array([[fx]])
        self.lam = np.array([1.0])

    def _extend(self, s):
        fs = float(self.f(s))
        row = [2.0 * float(self.f(0.5 * (v + s))) - 0.5 * (self.M[i, i] + fs)
               for i, v in enumerate(self.V)]
        k = len(self.V)
        M = np.empty((k + 1, k + 1))
        M[:k, :k] = self.M
        M[k, :k] = M[:k, k] = row
        M[k, k] = fs
        self.V.append(s.copy())
        self.M = M
        self.lam = np.append(self.lam, 0.0)

    def add(self, s):
        for i, v in enumerate(self.V):
            if np.array_equal(v, s):
                break
        else:
            self._extend(s)
        self.lam = _simplex_qp(self.M, self.lam, len(self.V) - 1)
        keep = self.lam > 0
        self.V = [v for v, kp in zip(self.V, keep) if kp]
        self.M = self.M[np.ix_(keep, keep)]
        self.lam = self.lam[keep] / self.lam[keep].sum()
        return sum(l * v for l, v in zip(self.lam, self.V))


def _affine_min(M: np.ndarray) -> np.ndarray:
    """Minimiser of ``l^T M l`` subject to ``sum(l) = 1``."""
    k = len(M)
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = 2.0 * M
    K[:k, k] = K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    return np.linalg.lstsq(K, rhs, rcond=None)[0][:k]


def _simplex_qp(M: np.ndarray, lam: np.ndarray, new: int) -> np.ndarray:
    """Wolfe-style minor cycles for ``min l^T M l`` over the simplex.

    ``lam`` is feasible; index ``new`` joins the support even at weight 0.
    """
    lam = lam.copy()
    S = sorted(set(np.flatnonzero(lam > 0)) | {new})
    for _ in range(4 * len(M) + 4):
        alpha = _affine_min(M[np.ix_(S, S)])
        if np.all(alpha > 1e-14):
            lam[:] = 0.0
            lam[S] = alpha
            return lam
        cur = lam[S]
        # move from cur toward alpha until a weight hits zero
        theta, drop = 1.0, None
        for j, (c, a) in enumerate(zip(cur, alpha)):
            if a <= 1e-14 and c - a > 0:
                t = c / (c - a)
                if t < theta:
                    theta, drop = t, j
        lam[S] = cur + theta * (alpha - cur)
        if drop is None:
            drop = int(np.argmin(lam[S]))
        lam[S[drop]] = 0.0
        lam = np.clip(lam, 0.0, None)
        S = [i for i in S if lam[i] > 0]
        if not S:
            lam[new] = 1.0
            return lam
        lam /= lam.sum()
    return lam
