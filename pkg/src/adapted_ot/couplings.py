"""Couplings between process trees: causality constraints, products and gluing.

A coupling is a matrix over (left leaf, right leaf) pairs, stored row-major
when flattened for the LP.  For tree filtrations, causality from X to Y is
the family of linear equalities

    pi(w, cyl(v)) * P(u) = pi(cyl(u), cyl(v)) * P(w)

for every time ``t < N``, every X-leaf ``w`` with time-``t`` ancestor ``u``
and every time-``t`` Y-node ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .process import ProcessTree

__all__ = [
    "Coupling",
    "ThreeWayMeasure",
    "causal_constraints",
    "constraint_violation",
    "check_coupling",
    "product_coupling",
    "ci_product",
    "glue_causal",
    "coupling_to_json",
]

FORWARD = "forward"
REVERSE = "reverse"


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint law of the leaves of ``left`` and ``right``."""

    left: ProcessTree
    right: ProcessTree
    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix)
        if M.shape != (len(self.left.leaves), len(self.right.leaves)):
            raise ValueError(f"coupling shape {M.shape} does not match the trees' leaf counts "
                             f"({len(self.left.leaves)}, {len(self.right.leaves)})")
        object.__setattr__(self, "matrix", M)

    @cached_property
    def causal(self) -> bool:
        return check_coupling(self, "causal", 1e-8)

    @cached_property
    def bicausal(self) -> bool:
        return check_coupling(self, "bicausal", 1e-8)

    def expected_cost(self, p=1) -> float:
        """``E[d^p(X, Y)]`` with the additive path cost."""
        xs = self.left.leaf_paths()
        ys = self.right.leaf_paths()
        M = self.matrix
        total = 0.0
        for i, a in enumerate(xs):
            for j, b in enumerate(ys):
                w = float(M[i, j])
                if w:
                    total += w * path_cost(a, b, p)
        return total


def path_cost(a, b, p) -> float:
    total = 0
    for xt, yt in zip(a, b):
        if len(xt) == 1:
            total += abs(xt[0] - yt[0]) ** p
        else:
            s = sum((u - v) ** 2 for u, v in zip(xt, yt))
            total += s if p == 2 else float(s) ** (p / 2)
    return total


@dataclass(frozen=True, eq=False)
class ThreeWayMeasure:
    x: ProcessTree
    y: ProcessTree
    z: ProcessTree
    weights: np.ndarray

    def marginal(self, axes: str) -> np.ndarray:
        """Pairwise marginal, e.g. ``"xy"`` or ``"xz"``."""
        drop = {"xy": 2, "xz": 1, "yz": 0}[axes]
        return self.weights.sum(axis=drop)


def causal_constraints(x: ProcessTree, y: ProcessTree, direction: str = FORWARD) -> np.ndarray:
    """Causality equalities ``A @ vec(pi) = 0`` over ``pi`` of shape (|X leaves|, |Y leaves|).

    ``direction="reverse"`` gives causality from ``y`` to ``x`` (the
    anticausal half of bicausality) on the same variable layout.  Rows that
    vanish identically, or that are implied by the marginals because ``v``
    is the only time-``t`` node, are omitted.
    """
    if direction not in (FORWARD, REVERSE):
        raise ValueError(f"unknown direction {direction!r}")
    if x.N != y.N:
        raise ValueError("trees have different horizons")
    m, n = len(x.leaves), len(y.leaves)
    rows = []
    if direction == FORWARD:
        src, dst = x, y
    else:
        src, dst = y, x
    for t in range(1, x.N):
        targets = dst.nodes_at(t)
        if len(targets) < 2:
            continue
        for li, leaf in enumerate(src.leaves):
            u = src.ancestor(leaf, t)
            ulo, uhi = src.leaf_range[u]
            if uhi - ulo == 1:
                continue
            pu = float(src.abs_prob[u])
            pw = float(src.leaf_probs[li])
            for v in targets:
                vlo, vhi = dst.leaf_range[v]
                G = np.zeros((len(src.leaves), len(dst.leaves)))
                G[li, vlo:vhi] += pu
                G[ulo:uhi, vlo:vhi] -= pw
                rows.append(G.ravel() if direction == FORWARD else G.T.ravel())
    if not rows:
        return np.zeros((0, m * n))
    return np.array(rows)


def exact_causal_constraints(x: ProcessTree, y: ProcessTree, direction: str = FORWARD) -> list:
    """Same rows as :func:`causal_constraints`, as sparse dicts with exact coefficients."""
    m, n = len(x.leaves), len(y.leaves)
    src, dst = (x, y) if direction == FORWARD else (y, x)
    out = []
    for t in range(1, x.N):
        targets = dst.nodes_at(t)
        if len(targets) < 2:
            continue
        for li, leaf in enumerate(src.leaves):
            u = src.ancestor(leaf, t)
            ulo, uhi = src.leaf_range[u]
            if uhi - ulo == 1:
                continue
            pu, pw = src.abs_prob[u], src.leaf_probs[li]
            for v in targets:
                vlo, vhi = dst.leaf_range[v]
                row: dict = {}
                for j in range(vlo, vhi):
                    for i in range(ulo, uhi):
                        c = -pw + (pu if i == li else 0)
                        k = i * len(dst.leaves) + j if direction == FORWARD else j * n + i
                        row[k] = row.get(k, 0) + c
                out.append(row)
    return out


def marginal_violation(pi: Coupling) -> float:
    M = np.asarray(pi.matrix, dtype=float)
    px = np.array([float(p) for p in pi.left.leaf_probs])
    py = np.array([float(p) for p in pi.right.leaf_probs])
    return float(max(np.abs(M.sum(axis=1) - px).max(), np.abs(M.sum(axis=0) - py).max(),
                     max(0.0, -M.min())))


def constraint_violation(pi: Coupling, direction: str = FORWARD) -> float:
    A = causal_constraints(pi.left, pi.right, direction)
    if A.shape[0] == 0:
        return 0.0
    return float(np.abs(A @ np.asarray(pi.matrix, dtype=float).ravel()).max())


def check_coupling(pi: Coupling, mode: str = "marginal", tol: float = 1e-8) -> bool:
    """Whether ``pi`` is a coupling (``marginal``), causal, or bicausal within ``tol``."""
    if mode not in ("marginal", "causal", "bicausal"):
        raise ValueError(f"unknown mode {mode!r}")
    if marginal_violation(pi) > tol:
        return False
    if mode == "marginal":
        return True
    if constraint_violation(pi, FORWARD) > tol:
        return False
    if mode == "causal":
        return True
    return constraint_violation(pi, REVERSE) <= tol


def product_coupling(x: ProcessTree, y: ProcessTree) -> Coupling:
    return Coupling(x, y, np.outer(np.array(x.leaf_probs, dtype=object), np.array(y.leaf_probs, dtype=object)))


def identity_coupling(x: ProcessTree) -> Coupling:
    M = np.zeros((len(x.leaves), len(x.leaves)), dtype=object)
    for i, p in enumerate(x.leaf_probs):
        M[i, i] = p
    return Coupling(x, x, M)


def ci_product(gamma: Coupling, eta: Coupling, tol: float = 1e-10) -> ThreeWayMeasure:
    """Conditionally independent product glued along the shared middle tree.

    ``w(a, b, c) = gamma(a, b) * eta(b, c) / P^Y(b)``.
    """
    y = gamma.right
    if len(y.leaves) != len(eta.left.leaves):
        raise ValueError("middle marginals live on different trees")
    py = np.array(y.leaf_probs, dtype=object)
    G = np.asarray(gamma.matrix)
    H = np.asarray(eta.matrix)
    g_col = np.array([float(v) for v in G.sum(axis=0)])
    h_row = np.array([float(v) for v in H.sum(axis=1)])
    pyf = np.array([float(v) for v in py])
    pyf_eta = np.array([float(v) for v in eta.left.leaf_probs])
    if (np.abs(g_col - pyf).max() > tol or np.abs(h_row - pyf).max() > tol
            or np.abs(pyf - pyf_eta).max() > tol):
        raise ValueError("gamma's right marginal does not match eta's left marginal")
    exact = G.dtype == object and H.dtype == object
    if exact:
        W = np.empty((G.shape[0], G.shape[1], H.shape[1]), dtype=object)
        for b in range(G.shape[1]):
            W[:, b, :] = np.outer(G[:, b], H[b, :]) / py[b]
    else:
        Gf = G.astype(float)
        Hf = H.astype(float)
        W = Gf[:, :, None] * (Hf / pyf[:, None])[None, :, :]
    return ThreeWayMeasure(gamma.left, y, eta.right, W)


def glue_causal(gamma: Coupling, eta: Coupling, tol: float = 1e-8) -> Coupling:
    """Compose causal couplings X->Y and Y->Z into a causal coupling X->Z."""
    if not check_coupling(gamma, "causal", tol) or not check_coupling(eta, "causal", tol):
        raise ValueError("glue_causal needs causal couplings")
    three = ci_product(gamma, eta)
    return Coupling(three.x, three.z, three.marginal("xz"))


def coupling_to_json(pi: Coupling) -> dict:
    """Sparse triplet form ``{"shape": [m, n], "entries": [[i, j, w], ...]}``."""
    M = np.asarray(pi.matrix)
    entries = [[int(i), int(j), float(M[i, j])] for i in range(M.shape[0]) for j in range(M.shape[1])
               if float(M[i, j]) != 0.0]
    return {"shape": list(M.shape), "entries": entries}
