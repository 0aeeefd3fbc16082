"""Finitely supported (and nested) probability measures.

An atom is one of

* a *point*: a tuple of numbers (a vector in R^d),
* a :class:`DiscreteMeasure` (a measure is a legal atom, which is how nested
  laws are built),
* a *composite*: a tuple whose entries are points, measures or composites,
  e.g. a path ``((x1,), (x2,))`` or a pair ``(history, conditional_law)``.

Ground costs are additive over the leaves of a composite atom, so for paths
the p-th power cost is ``sum_t |x_t - y_t|^p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Number
from typing import Iterable, Optional, Sequence

import numpy as np

from .lp import solve_transport

__all__ = [
    "DiscreteMeasure",
    "NestedLaw",
    "DEFAULT_TOL",
    "canonicalize",
    "wasserstein",
    "nested_distance",
    "nested_equal",
    "dirac",
    "uniform",
    "atom_cost",
    "measure_to_json",
    "measure_from_json",
]

DEFAULT_TOL = 1e-9


def _is_number(x) -> bool:
    return isinstance(x, Number) and not isinstance(x, bool)


def _num(x):
    if isinstance(x, (Fraction, int)) and not isinstance(x, bool):
        return x
    if isinstance(x, np.integer):
        return int(x)
    v = float(x)
    if not math.isfinite(v):
        raise ValueError(f"non-finite coordinate {x!r}")
    return v


def freeze_atom(x):
    """Normalise user input (lists, arrays, scalars) into an immutable atom."""
    if isinstance(x, DiscreteMeasure):
        return x
    if _is_number(x):
        return (_num(x),)
    if isinstance(x, np.ndarray):
        x = x.tolist()
    if isinstance(x, dict):
        return measure_from_json(x)
    seq = tuple(x)
    if not seq:
        raise ValueError("empty atom")
    if all(_is_number(v) for v in seq):
        return tuple(_num(v) for v in seq)
    return tuple(freeze_atom(v) for v in seq)


def _is_point(a) -> bool:
    return isinstance(a, tuple) and _is_number(a[0])


def _key(a):
    if isinstance(a, DiscreteMeasure):
        return a.key
    if _is_point(a):
        return tuple(float(v) for v in a)
    return tuple(_key(c) for c in a)


def _signature(a):
    if isinstance(a, DiscreteMeasure):
        return ("M", _signature(a.atoms[0]))
    if _is_point(a):
        return ("P", len(a))
    return tuple(_signature(c) for c in a)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure ``sum_i weights[i] * delta(atoms[i])``.

    Equality and hashing are structural (exact), so canonicalized measures can
    be used as dictionary keys and compared cheaply.
    """

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(freeze_atom(a) for a in self.atoms)
        weights = tuple(_num(w) for w in self.weights)
        if not atoms:
            raise ValueError("a measure needs at least one atom")
        if len(atoms) != len(weights):
            raise ValueError("atoms and weights differ in length")
        if any(w < 0 for w in weights):
            raise ValueError("negative weight")
        total = sum(weights)
        if abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {float(total)!r}, not 1")
        sig = _signature(atoms[0])
        if any(_signature(a) != sig for a in atoms[1:]):
            raise ValueError("atoms have inconsistent dimension or nesting structure")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @cached_property
    def key(self) -> tuple:
        return tuple((_key(a), float(w)) for a, w in zip(self.atoms, self.weights))

    @cached_property
    def _hash(self) -> int:
        return hash((self.atoms, self.weights))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return self._hash == other._hash and self.atoms == other.atoms and self.weights == other.weights

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(zip(self.atoms, self.weights))

    @property
    def signature(self):
        return _signature(self.atoms[0])

    @cached_property
    def depth(self) -> int:
        """Nesting rank: 0 for a measure over points or paths."""
        return _depth(self.atoms[0])

    def mass_of(self, atom) -> object:
        atom = freeze_atom(atom)
        return sum((w for a, w in self if a == atom), 0)

    def __repr__(self) -> str:
        inner = ", ".join(f"{_fmt(a)}: {float(w):.6g}" for a, w in self)
        return f"DiscreteMeasure({{{inner}}})"


NestedLaw = DiscreteMeasure


def _depth(a) -> int:
    if isinstance(a, DiscreteMeasure):
        return 1 + a.depth
    if _is_point(a):
        return 0
    return max(_depth(c) for c in a)


def _fmt(a) -> str:
    if isinstance(a, DiscreteMeasure):
        return repr(a)
    if _is_point(a):
        return "(" + ", ".join(f"{float(v):.6g}" for v in a) + ")"
    return "(" + ", ".join(_fmt(c) for c in a) + ")"


def dirac(atom) -> DiscreteMeasure:
    return DiscreteMeasure((atom,), (1,))


def uniform(atoms: Sequence) -> DiscreteMeasure:
    n = len(atoms)
    return DiscreteMeasure(tuple(atoms), (Fraction(1, n),) * n)


# --------------------------------------------------------------------------
# canonical forms


def _near(a, b, tol: float) -> bool:
    if a is b:
        return True
    if isinstance(a, DiscreteMeasure):
        if len(a) != len(b):
            return False
        return all(abs(float(wa) - float(wb)) <= tol and _near(xa, xb, tol)
                   for (xa, wa), (xb, wb) in zip(a, b))
    if _is_point(a):
        if len(a) == 1:
            return abs(float(a[0]) - float(b[0])) <= tol
        return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b))) <= tol
    return all(_near(x, y, tol) for x, y in zip(a, b))


def _canon_atom(a, tol: float):
    if isinstance(a, DiscreteMeasure):
        return canonicalize(a, tol)
    if _is_point(a):
        return a
    return tuple(_canon_atom(c, tol) for c in a)


def canonicalize(m: DiscreteMeasure, tol: float = DEFAULT_TOL) -> DiscreteMeasure:
    """Merge atoms within ``tol`` of each other and sort them.

    Atoms are visited in lexicographic order; each one joins the first
    representative within ``tol`` (points: euclidean distance; nested atoms:
    componentwise, with inner measures matched atom by atom), otherwise it
    becomes a new representative.  Representatives are therefore pairwise
    more than ``tol`` apart, which makes the operation idempotent.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if getattr(m, "_canonical_tol", None) == tol:
        return m
    atoms = [_canon_atom(a, tol) for a in m.atoms]
    keys = [_key(a) for a in atoms]
    order = sorted(range(len(atoms)), key=lambda i: (keys[i], float(m.weights[i])))
    reps: list = []
    rep_w: list = []
    exact_index: dict = {}
    for i in order:
        a, w = atoms[i], m.weights[i]
        j = exact_index.get(keys[i])
        if j is None:
            for k in range(len(reps) - 1, -1, -1):
                if _near(a, reps[k], tol):
                    j = k
                    break
        if j is None:
            exact_index[keys[i]] = len(reps)
            reps.append(a)
            rep_w.append(w)
        else:
            rep_w[j] = rep_w[j] + w
    out = DiscreteMeasure(tuple(reps), tuple(rep_w))
    object.__setattr__(out, "_canonical_tol", tol)
    return out


# --------------------------------------------------------------------------
# ground costs and Wasserstein distances


def _normalise_p(p) -> object:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p!r}")
    fp = float(p)
    return int(fp) if fp.is_integer() else fp


def _point_cost(a, b, p):
    if len(a) == 1:
        return abs(a[0] - b[0]) ** p
    s = sum((x - y) ** 2 for x, y in zip(a, b))
    if p == 2:
        return s
    return float(s) ** (p / 2)


def _flatten_numbers(a) -> list:
    if isinstance(a, DiscreteMeasure):
        raise ValueError("the euclidean ground metric is undefined for nested atoms")
    if _is_point(a):
        return list(a)
    out = []
    for c in a:
        out.extend(_flatten_numbers(c))
    return out


class _CostCache:
    def __init__(self):
        self.store: dict = {}


def atom_cost(a, b, p=1, ground: str = "nested", exact: Optional[bool] = None, _cache=None):
    """p-th power ground cost between two atoms of identical structure."""
    if ground == "euclidean":
        fa, fb = _flatten_numbers(a), _flatten_numbers(b)
        return _point_cost(tuple(fa), tuple(fb), p)
    if isinstance(a, DiscreteMeasure):
        return _measure_cost(a, b, p, exact, _cache)
    if _is_point(a):
        return _point_cost(a, b, p)
    return sum(atom_cost(x, y, p, ground, exact, _cache) for x, y in zip(a, b))


def _measure_cost(a: DiscreteMeasure, b: DiscreteMeasure, p, exact, cache):
    """``W_p^p`` between nested measures, memoised per top-level call."""
    if a is b or a == b:
        return 0
    if cache is None:
        cache = _CostCache()
    k = (id(a), id(b))
    hit = cache.store.get(k)
    if hit is not None:
        return hit[2]
    val = _transport_cost(a, b, p, "nested", exact, cache)[0]
    cache.store[k] = (a, b, val)
    cache.store[(id(b), id(a))] = (b, a, val)
    return val


def _transport_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, p, ground, exact, cache):
    if len(mu) == 1 or len(nu) == 1:
        # forced plan
        cost = 0
        plan = np.empty((len(mu), len(nu)), dtype=object)
        for i, (a, wa) in enumerate(mu):
            for j, (b, wb) in enumerate(nu):
                plan[i, j] = wa * wb
                cost = cost + wa * wb * atom_cost(a, b, p, ground, exact, cache)
        return cost, plan
    C = [[atom_cost(a, b, p, ground, exact, cache) for b in nu.atoms] for a in mu.atoms]
    res = solve_transport(np.array(C, dtype=object), list(mu.weights), list(nu.weights), exact=exact)
    return res.value, res.plan


def _root(v, p):
    if p == 1:
        return v
    v = float(v)
    return max(v, 0.0) ** (1.0 / p)


def _check_compatible(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.signature != nu.signature:
        raise ValueError(f"dimension mismatch: {mu.signature} vs {nu.signature}")


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p=1, ground: str = "path",
                exact: Optional[bool] = None) -> float:
    """Exact p-Wasserstein distance between finitely supported measures.

    ``ground`` is ``"euclidean"`` (norm of the flattened difference),
    ``"path"`` (``sum_t |x_t - y_t|^p`` over the components of an atom) or
    ``"nested"`` (as ``"path"``, with inner measures compared by W_p
    recursively).  ``"path"`` and ``"nested"`` coincide on atoms without
    inner measures.
    """
    p = _normalise_p(p)
    if ground not in ("euclidean", "path", "nested"):
        raise ValueError(f"unknown ground metric {ground!r}")
    _check_compatible(mu, nu)
    if ground == "path" and (mu.depth or nu.depth):
        ground = "nested"
    cost, _ = _transport_cost(mu, nu, p, ground, exact, _CostCache())
    return _root(cost, p)


def wasserstein_plan(mu: DiscreteMeasure, nu: DiscreteMeasure, p=1, ground: str = "path",
                     exact: Optional[bool] = None):
    """Like :func:`wasserstein` but also returns the optimal plan over atoms."""
    p = _normalise_p(p)
    _check_compatible(mu, nu)
    if ground == "path" and (mu.depth or nu.depth):
        ground = "nested"
    cost, plan = _transport_cost(mu, nu, p, ground, exact, _CostCache())
    return _root(cost, p), plan


def nested_distance(a: DiscreteMeasure, b: DiscreteMeasure, exact: Optional[bool] = None) -> float:
    """Recursive Wasserstein-1 distance between nested laws."""
    if a.depth != b.depth:
        raise ValueError(f"nesting depth mismatch: {a.depth} vs {b.depth}")
    return float(wasserstein(a, b, 1, "nested", exact))


def nested_equal(a: DiscreteMeasure, b: DiscreteMeasure, tol: float = DEFAULT_TOL) -> bool:
    if a.depth != b.depth:
        raise ValueError(f"nesting depth mismatch: {a.depth} vs {b.depth}")
    if a == b:
        return True
    return nested_distance(a, b) <= tol


# --------------------------------------------------------------------------
# JSON


def _atom_to_json(a):
    if isinstance(a, DiscreteMeasure):
        return measure_to_json(a)
    if _is_point(a):
        return [_json_number(v) for v in a]
    return [_atom_to_json(c) for c in a]


def _json_number(v):
    if isinstance(v, Fraction):
        return v.numerator if v.denominator == 1 else float(v)
    return v


def measure_to_json(m: DiscreteMeasure) -> dict:
    return {"atoms": [_atom_to_json(a) for a in m.atoms],
            "weights": [_json_number(w) for w in m.weights]}


def measure_from_json(obj) -> DiscreteMeasure:
    if not isinstance(obj, dict) or set(obj) - {"atoms", "weights"} or "atoms" not in obj or "weights" not in obj:
        raise ValueError("a measure must be an object with exactly 'atoms' and 'weights'")
    return DiscreteMeasure(tuple(freeze_atom(a) for a in obj["atoms"]), tuple(obj["weights"]))


def from_points(points: Iterable, weights: Iterable) -> DiscreteMeasure:
    return DiscreteMeasure(tuple(points), tuple(weights))
