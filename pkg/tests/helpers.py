"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from adapted_ot.generators import random_tree, reveal_future, split_node
from adapted_ot.process import ProcessTree, hk_quotient


def inner_nodes(x: ProcessTree) -> list:
    return [u for u in range(1, len(x)) if x.children[u]]


def related_pair(rng: np.random.Generator, N: int = 2, d: int = 1, max_children: int = 3):
    """A pair of trees that is often, but not always, at distance zero."""
    x = random_tree(rng, N, d, max_children)
    mode = int(rng.integers(0, 4))
    if mode == 0:
        return x, random_tree(rng, N, d, max_children)
    nodes = list(range(1, len(x)))
    inner = inner_nodes(x)
    if mode == 1 or not inner:
        return x, split_node(x, int(rng.choice(nodes)))
    if mode == 2:
        return x, hk_quotient(x)
    return x, reveal_future(x, int(rng.choice(inner)))


def random_pair_within(rng, cap: int, N=None, d=None, max_children: int = 3):
    """Independent random trees whose leaf-pair count is at most ``cap``."""
    while True:
        n = N or int(rng.integers(1, 4))
        dd = d or int(rng.integers(1, 3))
        x = random_tree(rng, n, dd, max_children)
        y = random_tree(rng, n, dd, max_children)
        if len(x.leaves) * len(y.leaves) <= cap:
            return x, y


# --------------------------------------------------------------------------
# transport polytope vertices


def transport_vertices(mu, nu):
    """All vertices of the transportation polytope, in exact arithmetic.

    A vertex is the unique solution supported on ``m + n - 1`` cells whose
    bipartite graph is a spanning tree; every such support is tried.
    """
    mu = [Fraction(v) for v in mu]
    nu = [Fraction(v) for v in nu]
    m, n = len(mu), len(nu)
    cells = [(i, j) for i in range(m) for j in range(n)]
    seen = set()
    out = []
    for support in itertools.combinations(cells, m + n - 1):
        plan = _solve_on_support(support, mu, nu)
        if plan is None:
            continue
        key = tuple(sorted(plan.items()))
        if key not in seen:
            seen.add(key)
            M = [[Fraction(0)] * n for _ in range(m)]
            for (i, j), v in plan.items():
                M[i][j] = v
            out.append(M)
    return out


def _solve_on_support(support, mu, nu):
    """Unique plan on ``support`` if the support is a forest, else None."""
    rows, cols = list(mu), list(nu)
    left = set(support)
    plan = {}
    while left:
        for c in sorted(left):
            i, j = c
            if sum(1 for d in left if d[0] == i) == 1:
                v = rows[i]
                break
            if sum(1 for d in left if d[1] == j) == 1:
                v = cols[j]
                break
        else:
            return None  # every remaining vertex has degree >= 2: a cycle
        if v < 0:
            return None
        plan[c] = v
        rows[i] -= v
        cols[j] -= v
        left.discard(c)
    if any(r != 0 for r in rows) or any(c != 0 for c in cols):
        return None
    return plan


def brute_force_transport(cost, mu, nu):
    best = None
    for M in transport_vertices(mu, nu):
        val = sum(Fraction(cost[i][j]) * M[i][j] for i in range(len(mu)) for j in range(len(nu)))
        best = val if best is None or val < best else best
    return best


# --------------------------------------------------------------------------
# direct causality check


def causal_by_definition(pi: np.ndarray, x: ProcessTree, y: ProcessTree, tol: float = 1e-9) -> bool:
    """Causality checked from conditional probabilities.

    For every ``t < N``, every X-atom ``u`` of time ``t`` with positive
    mass, every event ``A`` of X's terminal sigma-algebra below ``u`` (a leaf)
    and every event ``B`` of Y's time-``t`` sigma-algebra (a union of time-t
    atoms): ``pi(A and B | u) = pi(A | u) * pi(B | u)``.
    """
    M = np.asarray(pi, dtype=float)
    for t in range(1, x.N):
        ynodes = y.nodes_at(t)
        events = [s for r in range(1, len(ynodes) + 1) for s in itertools.combinations(ynodes, r)]
        for u in x.nodes_at(t):
            lo, hi = x.leaf_range[u]
            pu = M[lo:hi, :].sum()
            if pu <= 0:
                continue
            for B in events:
                cols = [j for v in B for j in range(*y.leaf_range[v])]
                pB = M[lo:hi][:, cols].sum() / pu
                for w in range(lo, hi):
                    pA = M[w, :].sum() / pu
                    pAB = M[w, cols].sum() / pu
                    if abs(pAB - pA * pB) > tol:
                        return False
    return True


# --------------------------------------------------------------------------
# stopping times


def enumerate_stopping_value(x: ProcessTree, cost: dict):
    """Minimum of ``E[c(rho)]`` over every stopping time, listed explicitly.

    A stopping time is a set of non-root inner nodes at which to stop; on
    each path it stops at the first marked node, or at the leaf.
    """
    inner = inner_nodes(x)
    paths = []
    for leaf, p in zip(x.leaves, x.leaf_probs):
        chain = []
        u = leaf
        while u:
            chain.append(u)
            u = x.parent[u]
        paths.append((chain[::-1], p))
    best = None
    for r in range(len(inner) + 1):
        for marked in itertools.combinations(inner, r):
            mk = set(marked)
            total = 0
            for chain, p in paths:
                stop = next((u for u in chain if u in mk), chain[-1])
                total += p * cost[stop]
            best = total if best is None or total < best else best
    return best
