"""Deterministic process-tree generators for tests and experiments."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .process import E1, E2, E3, ProcessTree, leaky_bet

__all__ = [
    "FAMILIES",
    "random_tree",
    "split_node",
    "reveal_future",
    "markov_tree",
    "markov_perturbation",
    "random_walk_quantization",
    "generate",
    "named_tree",
]

FAMILIES = ("leaky-bet", "markov-perturbation", "random-walk-quantization", "custom-file-sequence")


def _split_mass(rng: np.random.Generator, k: int, exact: bool):
    """``k`` positive weights summing to one (multiples of 1/12 when exact)."""
    if k == 1:
        return [Fraction(1) if exact else 1.0]
    if exact:
        cuts = sorted(rng.choice(np.arange(1, 12), size=k - 1, replace=False).tolist())
        edges = [0] + cuts + [12]
        return [Fraction(b - a, 12) for a, b in zip(edges, edges[1:])]
    w = rng.dirichlet(np.ones(k))
    w = np.maximum(w, 1e-3)
    return (w / w.sum()).tolist()


def random_tree(rng: np.random.Generator, N: int = 2, d: int = 1, max_children: int = 3,
                values: Sequence = (-1, 0, 1), exact: bool = True) -> ProcessTree:
    """Random tree with small integer values, so coincidences are common.

    With ``exact`` the probabilities are multiples of 1/12.
    """

    def grow(t):
        if t == N:
            return []
        k = int(rng.integers(1, max_children + 1))
        ws = _split_mass(rng, k, exact)
        out = []
        for w in ws:
            v = [int(rng.choice(values)) for _ in range(d)]
            out.append((w, v, grow(t + 1)))
        return out

    return ProcessTree.build(N, d, grow(0))


def _spec(x: ProcessTree, u: int):
    return (x.prob[u], list(x.value[u]), [_spec(x, c) for c in x.children[u]])


def split_node(x: ProcessTree, u: int) -> ProcessTree:
    """Replace node ``u`` by two identical copies of half its probability.

    The result is Hoover-Keisler equivalent to ``x``.
    """
    if u == 0:
        raise ValueError("the root cannot be split")

    def rebuild(v):
        out = []
        for c in x.children[v]:
            p, val, ch = x.prob[c], list(x.value[c]), rebuild(c)
            if c == u:
                out.append((p / 2, val, ch))
                out.append((p / 2, val, [_copy(s) for s in ch]))
            else:
                out.append((p, val, ch))
        return out

    return ProcessTree.build(x.N, x.d, rebuild(0))


def _copy(spec):
    p, v, ch = spec
    return (p, list(v), [_copy(s) for s in ch])


def reveal_future(x: ProcessTree, u: int) -> ProcessTree:
    """Same path law as ``x``, but at node ``u`` the next step is already known.

    Node ``u`` is replaced by one copy per child, each copy leading surely to
    that child.  This enlarges the filtration (E1 becomes E2).
    """
    if u == 0 or not x.children[u]:
        raise ValueError("reveal_future needs a non-root inner node")

    def rebuild(v):
        out = []
        for c in x.children[v]:
            if c == u:
                for g in x.children[u]:
                    out.append((x.prob[u] * x.prob[g], list(x.value[u]),
                                [(1, list(x.value[g]), rebuild(g))]))
            else:
                out.append((x.prob[c], list(x.value[c]), rebuild(c)))
        return out

    return ProcessTree.build(x.N, x.d, rebuild(0))


# --------------------------------------------------------------------------
# n-th order Markov trees


def _kernel_rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng([seed, *(int(k) for k in key)])


def markov_tree(seed: int, n: int = 1, N: int = 3, states: int = 3, max_children: int = 3,
                eps: float = 0.0) -> ProcessTree:
    """Seeded ``n``-th order Markov tree, optionally perturbed by ``eps``.

    States are ``0..states-1``.  The transition law at time ``t`` depends on
    the last ``n`` states only.  With ``eps > 0`` every kernel is mixed with
    a second seeded kernel on the same support, ``(1-eps) K + eps R``, and
    state ``s`` takes the value ``s + eps * shift(s)`` with ``shift`` in
    ``[0, 0.4]``, which keeps distinct states distinct.  ``eps = 0``
    reproduces the base tree exactly.
    """
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    if n < 1:
        raise ValueError("Markov order n must be at least 1")
    shift = _kernel_rng(seed, 0, 9).uniform(0.0, 0.4, size=states)

    def value(s):
        return float(s) + eps * float(shift[s]) if eps else s

    def kernel(t, window):
        g = _kernel_rng(seed, 1, t, *window)
        k = int(g.integers(1, min(max_children, states) + 1))
        support = sorted(g.choice(states, size=k, replace=False).tolist())
        base = g.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
        mix = _kernel_rng(seed, 2, t, *window).dirichlet(np.ones(k))
        w = (1 - eps) * base + eps * mix
        return support, (w / w.sum()).tolist()

    def grow(t, hist):
        if t == N:
            return []
        support, w = kernel(t, hist[-n:])
        return [(p, [value(s)], grow(t + 1, hist + (s,))) for s, p in zip(support, w)]

    return ProcessTree.build(N, 1, grow(0, ()))


def markov_perturbation(k: int, seed: int = 42, n: int = 1, N: int = 3, states: int = 3,
                        max_children: int = 3) -> ProcessTree:
    """The ``k``-th member of the perturbation family, ``eps_k = 1/k``."""
    return markov_tree(seed, n, N, states, max_children, eps=1.0 / k)


# --------------------------------------------------------------------------
# quantised random walks


def random_walk_quantization(k: int, N: int = 2) -> ProcessTree:
    """Random walk whose increments take ``k`` values.

    Increments are a standardised Binomial(k-1, 1/2) variable, so they have
    mean 0 and variance 1 for ``k >= 2``; ``k = 1`` is the constant walk.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if k == 1:
        incs = [(Fraction(1), 0.0)]
    else:
        scale = math.sqrt((k - 1) / 4.0)
        incs = [(Fraction(math.comb(k - 1, j), 2 ** (k - 1)), (j - (k - 1) / 2.0) / scale)
                for j in range(k)]

    def grow(t, level):
        if t == N:
            return []
        return [(p, [level + dx], grow(t + 1, level + dx)) for p, dx in incs]

    return ProcessTree.build(N, 1, grow(0, 0.0))


# --------------------------------------------------------------------------
# family dispatch


def named_tree(name: str) -> ProcessTree:
    fixtures = {"E1": E1, "E2": E2, "E3": E3}
    if name not in fixtures:
        raise ValueError(f"unknown named tree {name!r}")
    return fixtures[name]()


def generate(family: str, k: int, params: Optional[dict] = None, seed: int = 42) -> ProcessTree:
    """The ``k``-th tree of ``family``."""
    params = dict(params or {})
    if family == "leaky-bet":
        return leaky_bet(k)
    if family == "markov-perturbation":
        return markov_perturbation(k, seed=seed, **params)
    if family == "random-walk-quantization":
        return random_walk_quantization(k, **params)
    if family == "custom-file-sequence":
        from .serialization import load_tree

        files = params.get("files") or []
        if not 1 <= k <= len(files):
            raise ValueError(f"custom-file-sequence has no member {k}")
        return load_tree(files[k - 1])
    raise ValueError(f"unknown family {family!r}")
