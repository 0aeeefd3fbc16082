"""Process distances W_p, CW_p, SCW_p, AW_p and the optimal stopping value."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .couplings import (
    FORWARD,
    REVERSE,
    Coupling,
    causal_constraints,
    exact_causal_constraints,
    path_cost,
)
from .lp import LinearProgram, _resolve_exact, solve_lp, solve_transport
from .measures import _normalise_p, _point_cost, _root
from .process import ProcessTree, _check_shapes

__all__ = [
    "DistanceReport",
    "w_dist",
    "cw_dist",
    "scw_dist",
    "aw_dist",
    "aw_dist_lp_oracle",
    "optimal_stopping_value",
    "snell_envelope",
    "DEFAULT_ORACLE_CAP",
]

DEFAULT_ORACLE_CAP = 400


@dataclass
class DistanceReport:
    value: float
    coupling: Coupling
    method: str
    stats: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)


def _cost_matrix(x: ProcessTree, y: ProcessTree, p, exact: bool) -> np.ndarray:
    xs, ys = x.leaf_paths(), y.leaf_paths()
    C = np.empty((len(xs), len(ys)), dtype=object)
    for i, a in enumerate(xs):
        for j, b in enumerate(ys):
            C[i, j] = path_cost(a, b, p)
    return C if exact else C.astype(float)


def _coupling_lp(x: ProcessTree, y: ProcessTree, p, directions: tuple, exact: bool):
    C = _cost_matrix(x, y, p, exact)
    m, n = C.shape
    px, py = list(x.leaf_probs), list(y.leaf_probs)
    marg = np.zeros((m + n, m * n), dtype=object if exact else float)
    if exact:
        marg[:] = 0
    for i in range(m):
        marg[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        marg[m + j, j::n] = 1
    blocks = [marg]
    for direction in directions:
        if exact:
            rows = exact_causal_constraints(x, y, direction)
            A = np.zeros((len(rows), m * n), dtype=object)
            A[:] = 0
            for r, row in enumerate(rows):
                for k, v in row.items():
                    A[r, k] = v
        else:
            A = causal_constraints(x, y, direction)
        blocks.append(A)
    A_eq = np.concatenate(blocks, axis=0)
    b_eq = px + py + [0] * (A_eq.shape[0] - m - n)
    return LinearProgram(c=C.ravel(), A_eq=A_eq, b_eq=b_eq), (m, n)


def _solve_coupling(x, y, p, directions, exact, method) -> DistanceReport:
    _check_shapes(x, y)
    p = _normalise_p(p)
    exact = _resolve_exact(exact)
    t0 = time.perf_counter()
    lp, shape = _coupling_lp(x, y, p, directions, exact)
    sol = solve_lp(lp, exact=exact)
    if not sol.optimal:
        # the product coupling is always feasible
        raise RuntimeError(f"coupling LP unexpectedly {sol.status}")
    plan = sol.x.reshape(shape)
    stats = {"pivots": sol.iterations, "constraints": int(np.asarray(lp.A_eq).shape[0]),
             "variables": shape[0] * shape[1], "seconds": time.perf_counter() - t0}
    return DistanceReport(_root(sol.value, p), Coupling(x, y, plan), method, stats)


def w_dist(x: ProcessTree, y: ProcessTree, p=1, exact: Optional[bool] = None) -> DistanceReport:
    """Wasserstein distance between the path laws (ground cost ``sum_t |x_t - y_t|^p``)."""
    _check_shapes(x, y)
    p = _normalise_p(p)
    exact = _resolve_exact(exact)
    t0 = time.perf_counter()
    C = _cost_matrix(x, y, p, exact)
    res = solve_transport(C, list(x.leaf_probs), list(y.leaf_probs), exact=exact)
    stats = {"pivots": res.iterations, "seconds": time.perf_counter() - t0}
    return DistanceReport(_root(res.value, p), Coupling(x, y, res.plan), "lp", stats)


def cw_dist(x: ProcessTree, y: ProcessTree, p=1, exact: Optional[bool] = None) -> DistanceReport:
    """Causal Wasserstein distance from ``x`` to ``y`` (not symmetric)."""
    return _solve_coupling(x, y, p, (FORWARD,), exact, "lp")


def scw_dist(x: ProcessTree, y: ProcessTree, p=1, exact: Optional[bool] = None) -> float:
    return max(cw_dist(x, y, p, exact).value, cw_dist(y, x, p, exact).value)


def aw_dist_lp_oracle(x: ProcessTree, y: ProcessTree, p=1, exact: Optional[bool] = None,
                      cap: int = DEFAULT_ORACLE_CAP) -> DistanceReport:
    """Adapted Wasserstein distance as one LP over the bicausal polytope."""
    pairs = len(x.leaves) * len(y.leaves)
    if pairs > cap:
        raise ValueError(f"{pairs} leaf pairs exceed the oracle cap of {cap}")
    return _solve_coupling(x, y, p, (FORWARD, REVERSE), exact, "lp")


def aw_dist(x: ProcessTree, y: ProcessTree, p=1, exact: Optional[bool] = None) -> DistanceReport:
    """Adapted Wasserstein distance by backward induction over node pairs.

    ``V(u, v)`` is the optimal transport cost between the children of ``u``
    and ``v`` with cost ``|x_u' - y_v'|^p + V(u', v')``; the distance is
    ``V(root, root) ** (1/p)``.  The returned coupling chains the nodewise
    optimal plans and is bicausal by construction.
    """
    _check_shapes(x, y)
    p = _normalise_p(p)
    exact = _resolve_exact(exact)
    t0 = time.perf_counter()
    V: dict = {}
    plans: dict = {}
    pivots = 0
    for t in range(x.N, -1, -1):
        for u in x.nodes_at(t):
            for v in y.nodes_at(t):
                if t == x.N:
                    V[u, v] = 0
                    continue
                ku, kv = x.children[u], y.children[v]
                C = np.empty((len(ku), len(kv)), dtype=object)
                for i, a in enumerate(ku):
                    for j, b in enumerate(kv):
                        C[i, j] = _point_cost(x.value[a], y.value[b], p) + V[a, b]
                res = solve_transport(C if exact else C.astype(float),
                                      [x.prob[a] for a in ku], [y.prob[b] for b in kv], exact=exact)
                V[u, v] = res.value
                plans[u, v] = res.plan
                pivots += res.iterations
    M = np.zeros((len(x.leaves), len(y.leaves)), dtype=object if exact else float)

    def spread(u, v, mass):
        if x.time[u] == x.N:
            M[x.leaf_index[u], y.leaf_index[v]] += mass
            return
        plan = plans[u, v]
        for i, a in enumerate(x.children[u]):
            for j, b in enumerate(y.children[v]):
                w = plan[i, j]
                if w != 0:
                    spread(a, b, mass * w)

    spread(0, 0, Fraction(1) if exact else 1.0)
    stats = {"pivots": pivots, "node_pairs": len(V), "seconds": time.perf_counter() - t0}
    return DistanceReport(_root(V[0, 0], p), Coupling(x, y, M), "dp", stats)


# --------------------------------------------------------------------------
# optimal stopping

CostSpec = Union[Mapping[int, object], Callable[[int, tuple], object]]


def _node_costs(x: ProcessTree, c: CostSpec) -> dict:
    out = {}
    for u in range(1, len(x)):
        if callable(c):
            out[u] = c(x.time[u], x.history(u))
        else:
            if u not in c:
                raise ValueError(f"missing stopping cost for node {u} (time {x.time[u]})")
            out[u] = c[u]
    return out


def snell_envelope(x: ProcessTree, c: CostSpec) -> dict:
    """Node-wise minimal expected stopping cost, ``S(u) = min(c(u), E[S(child)])``.

    ``c`` is either a table ``{node: cost}`` covering every non-root node or a
    non-anticipative path function ``c(t, (x_1, ..., x_t))``.  The root entry
    is the continuation value, since stopping happens at times ``1..N``.
    """
    cost = _node_costs(x, c)
    S: dict = {}
    for u in range(len(x) - 1, -1, -1):
        kids = x.children[u]
        if not kids:
            S[u] = cost[u]
            continue
        cont = sum((x.prob[k] * S[k] for k in kids), 0)
        S[u] = cont if u == 0 else min(cost[u], cont)
    return S


def optimal_stopping_value(x: ProcessTree, c: CostSpec):
    """``inf_rho E[c(rho, X)]`` over stopping times of the tree filtration."""
    return snell_envelope(x, c)[0]
