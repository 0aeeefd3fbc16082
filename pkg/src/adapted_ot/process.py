"""Filtered processes on finite trees.

A :class:`ProcessTree` is a rooted tree of depth ``N``.  The root sits at time
0 and carries no value; every other node carries a value in R^d and a
strictly positive transition probability from its parent.  The filtration at
time ``t`` is generated by the time-``t`` nodes.

Nodes are numbered in preorder, so the leaves below any node form a
contiguous range of leaf indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence

from .measures import (
    DEFAULT_TOL,
    DiscreteMeasure,
    NestedLaw,
    _near,
    canonicalize,
    dirac,
    freeze_atom,
    nested_distance,
    wasserstein,
)

__all__ = [
    "ProcessTree",
    "MarkovStatistic",
    "E1",
    "E2",
    "E3",
    "leaky_bet",
    "path_law",
    "conditional_law",
    "future_law",
    "is_n_markov",
    "markov_statistic",
    "markov_statistic_distance",
    "hellwig_statistic",
    "hellwig_distance",
    "hk_classes",
    "hk_quotient",
    "plainify",
    "isomorphic",
    "prediction_process",
    "prediction_values",
]

INF = math.inf


@dataclass(frozen=True, eq=False)
class ProcessTree:
    """Immutable finitely supported filtered process.

    Build instances with :meth:`build`; the raw constructor expects the flat
    preorder arrays and validates them.
    """

    N: int
    d: int
    parent: tuple
    time: tuple
    value: tuple
    prob: tuple
    children: tuple

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("time horizon N must be at least 1")
        if self.d < 1:
            raise ValueError("state dimension d must be at least 1")
        n = len(self.parent)
        if not (len(self.time) == len(self.value) == len(self.prob) == len(self.children) == n):
            raise ValueError("node arrays differ in length")
        if n == 0 or self.time[0] != 0 or self.parent[0] != -1:
            raise ValueError("node 0 must be the root at time 0")
        for u in range(n):
            t = self.time[u]
            kids = self.children[u]
            if t < self.N and not kids:
                raise ValueError(f"node {u} at time {t} is a leaf before the horizon N={self.N}")
            if t == self.N and kids:
                raise ValueError(f"node {u} at the horizon has children")
            if kids:
                ps = [self.prob[c] for c in kids]
                if any(not p > 0 for p in ps):
                    raise ValueError(f"node {u} has a child with non-positive probability")
                if abs(float(sum(ps)) - 1.0) > 1e-12:
                    raise ValueError(f"child probabilities of node {u} sum to {float(sum(ps))!r}")
            if u:
                v = self.value[u]
                if v is None or len(v) != self.d:
                    raise ValueError(f"node {u} must carry a value of dimension {self.d}")
                if any(not math.isfinite(float(c)) for c in v):
                    raise ValueError(f"node {u} has a non-finite value")

    # -- construction -----------------------------------------------------

    @classmethod
    def build(cls, N: int, d: int, children: Sequence) -> "ProcessTree":
        """Build a tree from nested ``(p, value, children)`` triples.

        Dicts with keys ``p``, ``value`` and ``children`` are accepted as well;
        scalar values are allowed when ``d == 1``.
        """
        parent, time, value, prob, kids = [-1], [0], [None], [1], [[]]

        def visit(spec, par, t):
            if isinstance(spec, dict):
                p, v, ch = spec["p"], spec["value"], spec.get("children", [])
            else:
                p, v, ch = spec
            u = len(parent)
            parent.append(par)
            time.append(t)
            value.append(freeze_atom(v))
            prob.append(p)
            kids.append([])
            kids[par].append(u)
            for c in ch:
                visit(c, u, t + 1)

        for spec in children:
            visit(spec, 0, 1)
        return cls(N, d, tuple(parent), tuple(time), tuple(value), tuple(prob),
                   tuple(tuple(k) for k in kids))

    def to_nested(self, u: int = 0) -> list:
        return [(self.prob[c], self.value[c], self.to_nested(c)) for c in self.children[u]]

    # -- structure --------------------------------------------------------

    def __len__(self) -> int:
        return len(self.parent)

    @cached_property
    def abs_prob(self) -> tuple:
        out = [1] * len(self)
        for u in range(1, len(self)):
            out[u] = out[self.parent[u]] * self.prob[u]
        return tuple(out)

    @cached_property
    def leaves(self) -> tuple:
        return tuple(u for u in range(len(self)) if self.time[u] == self.N)

    @cached_property
    def leaf_index(self) -> dict:
        return {u: i for i, u in enumerate(self.leaves)}

    @cached_property
    def leaf_probs(self) -> tuple:
        return tuple(self.abs_prob[u] for u in self.leaves)

    @cached_property
    def leaf_range(self) -> tuple:
        """``(lo, hi)`` leaf-index range below every node."""
        lo = [0] * len(self)
        hi = [0] * len(self)
        for u in range(len(self) - 1, -1, -1):
            if self.time[u] == self.N:
                lo[u] = self.leaf_index[u]
                hi[u] = lo[u] + 1
            else:
                kids = self.children[u]
                lo[u] = lo[kids[0]]
                hi[u] = hi[kids[-1]]
        return tuple(zip(lo, hi))

    def nodes_at(self, t: int) -> tuple:
        return self._levels[t]

    @cached_property
    def _levels(self) -> tuple:
        lv = [[] for _ in range(self.N + 1)]
        for u in range(len(self)):
            lv[self.time[u]].append(u)
        return tuple(tuple(v) for v in lv)

    @cached_property
    def _ancestors(self) -> tuple:
        anc = [None] * len(self)
        anc[0] = (0,)
        for u in range(1, len(self)):
            anc[u] = anc[self.parent[u]] + (u,)
        return tuple(anc)

    def ancestor(self, u: int, t: int) -> int:
        """The time-``t`` ancestor of node ``u`` (``u`` itself when ``t`` is its time)."""
        return self._ancestors[u][t]

    def history(self, u: int) -> tuple:
        """Values ``(x_1, ..., x_t)`` along the path to node ``u``."""
        return tuple(self.value[a] for a in self._ancestors[u][1:])

    def leaf_paths(self) -> list:
        return [self.history(u) for u in self.leaves]

    def __repr__(self) -> str:
        return f"ProcessTree(N={self.N}, d={self.d}, nodes={len(self)}, leaves={len(self.leaves)})"


@dataclass(frozen=True)
class MarkovStatistic:
    t: int
    n: float
    law: NestedLaw


# --------------------------------------------------------------------------
# named fixtures

_H = Fraction(1, 2)


def E1() -> ProcessTree:
    """Plain bet: one time-1 node at 0, then +1 or -1 with probability 1/2."""
    return ProcessTree.build(2, 1, [(1, 0, [(_H, 1, []), (_H, -1, [])])])


def E2() -> ProcessTree:
    """Informed bet: same law as E1, but the outcome is known at time 1."""
    return ProcessTree.build(2, 1, [(_H, 0, [(1, 1, [])]), (_H, 0, [(1, -1, [])])])


def E3() -> ProcessTree:
    """Duplicated bet: E1 with its time-1 node split into two copies."""
    bet = [(_H, 1, []), (_H, -1, [])]
    return ProcessTree.build(2, 1, [(_H, 0, list(bet)), (_H, 0, list(bet))])


def leaky_bet(k: int) -> ProcessTree:
    """E2 whose time-1 values ``+1/k`` and ``-1/k`` leak the outcome."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    return ProcessTree.build(2, 1, [(_H, Fraction(1, k), [(1, 1, [])]),
                                    (_H, Fraction(-1, k), [(1, -1, [])])])


# --------------------------------------------------------------------------
# laws and statistics


def path_law(x: ProcessTree, tol: float = DEFAULT_TOL) -> DiscreteMeasure:
    return canonicalize(DiscreteMeasure(tuple(x.leaf_paths()), x.leaf_probs), tol)


def conditional_law(x: ProcessTree, u: int, tol: float = DEFAULT_TOL) -> DiscreteMeasure:
    """One-step law ``L(X_{t+1} | node u)``."""
    kids = x.children[u]
    return canonicalize(DiscreteMeasure(tuple(x.value[c] for c in kids),
                                        tuple(x.prob[c] for c in kids)), tol)


def future_law(x: ProcessTree, u: int, tol: float = DEFAULT_TOL) -> DiscreteMeasure:
    """Law of the remaining path ``X_{t+1:N}`` given node ``u``."""
    t = x.time[u]
    lo, hi = x.leaf_range[u]
    pu = x.abs_prob[u]
    atoms, weights = [], []
    for leaf in x.leaves[lo:hi]:
        atoms.append(x.history(leaf)[t:])
        weights.append(x.abs_prob[leaf] / pu)
    return canonicalize(DiscreteMeasure(tuple(atoms), tuple(weights)), tol)


def _window(x: ProcessTree, u: int, n) -> tuple:
    h = x.history(u)
    if n == INF or n >= len(h):
        return h
    return h[len(h) - int(n):]


def _check_order(n):
    if not (n == INF or (float(n).is_integer() and n >= 1)):
        raise ValueError(f"Markov order must be a positive integer or infinity, got {n!r}")


def is_n_markov(x: ProcessTree, n=1, tol: float = DEFAULT_TOL) -> bool:
    """Whether the one-step transition law depends only on the last ``n`` values.

    Two time-``t`` nodes whose last ``n`` values agree within ``tol`` must
    have one-step laws within W_1 distance ``tol``.  ``n = math.inf``
    compares full histories, i.e. tests plainness.
    """
    _check_order(n)
    for t in range(1, x.N):
        nodes = x.nodes_at(t)
        wins = [_window(x, u, n) for u in nodes]
        laws = [conditional_law(x, u, tol) for u in nodes]
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                if _near(wins[i], wins[j], tol) and laws[i] != laws[j]:
                    if wasserstein(laws[i], laws[j], 1) > tol:
                        return False
    return True


def _check_time(x: ProcessTree, t: int):
    if not 1 <= t <= x.N - 1:
        raise ValueError(f"t must lie in 1..{x.N - 1}, got {t}")


def markov_statistic(x: ProcessTree, n, t: int, tol: float = DEFAULT_TOL) -> MarkovStatistic:
    """Law of (last ``n`` values, one-step conditional law) over time-``t`` nodes."""
    _check_order(n)
    _check_time(x, t)
    nodes = x.nodes_at(t)
    atoms = tuple((_window(x, u, n), conditional_law(x, u, tol)) for u in nodes)
    law = canonicalize(DiscreteMeasure(atoms, tuple(x.abs_prob[u] for u in nodes)), tol)
    return MarkovStatistic(t, n, law)


def hellwig_statistic(x: ProcessTree, t: int, tol: float = DEFAULT_TOL) -> NestedLaw:
    """Law of (history up to ``t``, conditional law of the remaining path)."""
    _check_time(x, t)
    nodes = x.nodes_at(t)
    atoms = tuple((x.history(u), future_law(x, u, tol)) for u in nodes)
    return canonicalize(DiscreteMeasure(atoms, tuple(x.abs_prob[u] for u in nodes)), tol)


def markov_statistic_distance(x: ProcessTree, y: ProcessTree, n=1, tol: float = DEFAULT_TOL) -> float:
    """Sum over ``t`` of the nested W_1 distance between Markov statistics."""
    _check_shapes(x, y)
    return sum(nested_distance(markov_statistic(x, n, t, tol).law, markov_statistic(y, n, t, tol).law)
               for t in range(1, x.N))


def hellwig_distance(x: ProcessTree, y: ProcessTree, tol: float = DEFAULT_TOL) -> float:
    _check_shapes(x, y)
    return sum(nested_distance(hellwig_statistic(x, t, tol), hellwig_statistic(y, t, tol))
               for t in range(1, x.N))


def _check_shapes(x: ProcessTree, y: ProcessTree):
    if x.N != y.N or x.d != y.d:
        raise ValueError(f"shape mismatch: (N={x.N}, d={x.d}) vs (N={y.N}, d={y.d})")


# --------------------------------------------------------------------------
# prediction processes


def prediction_values(x: ProcessTree, r: int, tol: float = DEFAULT_TOL) -> list:
    """Per-leaf values ``(pp^0, ..., pp^r)``.

    ``pp^0`` is the path; ``pp^k`` is the tuple over ``t = 1..N`` of the
    conditional laws of ``pp^(k-1)`` given the time-``t`` ancestor.
    Returns one list per rank, indexed by leaf.
    """
    if r < 0:
        raise ValueError("rank must be non-negative")
    intern: dict = {}
    ranks = [[x.history(u) for u in x.leaves]]
    for _ in range(r):
        prev = ranks[-1]
        cond = {}
        for u in range(1, len(x)):
            lo, hi = x.leaf_range[u]
            pu = x.abs_prob[u]
            if hi - lo == 1:
                m = dirac(prev[lo])
            else:
                m = canonicalize(DiscreteMeasure(tuple(prev[lo:hi]),
                                                 tuple(x.abs_prob[lf] / pu for lf in x.leaves[lo:hi])), tol)
            cond[u] = intern.setdefault(m, m)
        ranks.append([tuple(cond[x.ancestor(leaf, t)] for t in range(1, x.N + 1)) for leaf in x.leaves])
    return ranks


def prediction_process(x: ProcessTree, r: int, tol: float = DEFAULT_TOL) -> NestedLaw:
    """Law of ``(pp^0, ..., pp^r)``; for ``r = 0`` this is the path law."""
    if r < 0:
        raise ValueError("rank must be non-negative")
    if r == 0:
        return path_law(x, tol)
    ranks = prediction_values(x, r, tol)
    atoms = tuple(tuple(rank[i] for rank in ranks) for i in range(len(x.leaves)))
    return canonicalize(DiscreteMeasure(atoms, x.leaf_probs), tol)


# --------------------------------------------------------------------------
# quotients


def _cluster(items: list, close: Callable, key: Callable) -> list:
    """Greedy deterministic clustering; returns lists of items."""
    groups: list = []
    for it in sorted(items, key=key):
        for g in groups:
            if close(g[0], it):
                g.append(it)
                break
        else:
            groups.append([it])
    return groups


def _value_key(v) -> tuple:
    return tuple(float(c) for c in v)


def hk_classes(x: ProcessTree, tol: float = DEFAULT_TOL) -> tuple:
    """Partition refinement for Hoover-Keisler equivalence of nodes.

    Starts from nodes grouped by (time, value) and repeatedly splits blocks
    whose members put different mass on the current blocks of their
    children.  Returns ``(block_of_node, rounds)`` where ``rounds`` counts the
    refinement passes that changed the partition.
    """
    block = [0] * len(x)
    nb = 1
    for t in range(1, x.N + 1):
        groups = _cluster(list(x.nodes_at(t)),
                          lambda a, b: _near(x.value[a], x.value[b], tol),
                          lambda u: (_value_key(x.value[u]), u))
        for g in groups:
            for u in g:
                block[u] = nb
            nb += 1
    rounds = 0
    while True:
        members: dict = {}
        for u in range(len(x)):
            members.setdefault(block[u], []).append(u)
        sig = {}
        for u in range(len(x)):
            dist: dict = {}
            for c in x.children[u]:
                dist[block[c]] = dist.get(block[c], 0) + x.prob[c]
            sig[u] = dist

        def close(a, b):
            da, db = sig[a], sig[b]
            return all(abs(float(da.get(k, 0)) - float(db.get(k, 0))) <= tol for k in set(da) | set(db))

        new = [0] * len(x)
        count = 0
        for b in sorted(members):
            for g in _cluster(members[b], close, lambda u: u):
                for u in g:
                    new[u] = count
                count += 1
        if count == len(members):
            return tuple(block), rounds
        block = new
        rounds += 1


def _merge_tree(x: ProcessTree, group: Callable) -> ProcessTree:
    """Rebuild ``x`` top-down, merging sibling nodes according to ``group``.

    ``group`` receives ``[(node, absolute_prob), ...]`` and returns a list of
    such lists.  Merged nodes take the value of their first member; their
    probability is the total absolute mass, so the path law is preserved.
    """

    def build(members, mass):
        kids = [(c, x.abs_prob[c]) for u, _ in members for c in x.children[u]]
        out = []
        for g in group(kids):
            gm = sum((w for _, w in g), 0)
            rep = min(u for u, _ in g)
            out.append((gm / mass, x.value[rep], build(g, gm)))
        out.sort(key=lambda s: (_value_key(s[1]), float(s[0])))
        return out

    return ProcessTree.build(x.N, x.d, build([(0, 1)], 1))


def hk_quotient(x: ProcessTree, tol: float = DEFAULT_TOL) -> ProcessTree:
    """Minimal tree representing the Hoover-Keisler class of ``x``."""
    block, _ = hk_classes(x, tol)

    def group(kids):
        by: dict = {}
        for c, w in sorted(kids):
            by.setdefault(block[c], []).append((c, w))
        return list(by.values())

    return _merge_tree(x, group)


def plainify(x: ProcessTree, tol: float = DEFAULT_TOL) -> ProcessTree:
    """Same path law, natural filtration: siblings with equal values merge."""

    def group(kids):
        return _cluster(kids, lambda a, b: _near(x.value[a[0]], x.value[b[0]], tol),
                        lambda it: (_value_key(x.value[it[0]]), it[0]))

    return _merge_tree(x, group)


def isomorphic(a: ProcessTree, b: ProcessTree, tol: float = DEFAULT_TOL) -> bool:
    """Rooted isomorphism of trees, matching values and probabilities within ``tol``."""
    if a.N != b.N or a.d != b.d:
        return False

    def iso(u, v):
        ka, kb = list(a.children[u]), list(b.children[v])
        if len(ka) != len(kb):
            return False
        free = list(kb)
        for c in ka:
            for i, e in enumerate(free):
                if (abs(float(a.prob[c]) - float(b.prob[e])) <= tol
                        and _near(a.value[c], b.value[e], tol) and iso(c, e)):
                    del free[i]
                    break
            else:
                return False
        return True

    return iso(0, 0)
