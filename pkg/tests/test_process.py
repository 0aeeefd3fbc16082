import math
from fractions import Fraction

import numpy as np
import pytest

from adapted_ot.generators import random_tree, split_node
from adapted_ot.measures import DiscreteMeasure, nested_equal, uniform
from adapted_ot.process import (
    E1,
    E2,
    E3,
    ProcessTree,
    hellwig_statistic,
    hk_classes,
    hk_quotient,
    is_n_markov,
    isomorphic,
    leaky_bet,
    markov_statistic,
    path_law,
    plainify,
    prediction_process,
    prediction_values,
)

H = Fraction(1, 2)
E1_LAW = DiscreteMeasure((((0,), (-1,)), ((0,), (1,))), (H, H))


def test_tree_validation():
    with pytest.raises(ValueError):
        ProcessTree.build(2, 1, [(1, 0, [])])  # leaf before the horizon
    with pytest.raises(ValueError):
        ProcessTree.build(1, 1, [(H, 0, []), (Fraction(1, 3), 1, [])])
    with pytest.raises(ValueError):
        ProcessTree.build(1, 1, [(1, 0, []), (0, 1, [])])
    with pytest.raises(ValueError):
        ProcessTree.build(1, 1, [(1, float("inf"), [])])
    with pytest.raises(ValueError):
        ProcessTree.build(1, 2, [(1, [0], [])])


def test_path_law_examples():
    for x in (E1(), E2(), E3()):
        assert path_law(x) == E1_LAW


def test_is_n_markov_examples():
    assert is_n_markov(E1(), 1)
    assert not is_n_markov(E2(), math.inf)
    assert is_n_markov(E3(), 1)


def test_markov_statistic_examples():
    unif = uniform([(-1,), (1,)])
    assert markov_statistic(E1(), 1, 1).law == DiscreteMeasure(((((0,),), unif),), (1,))
    e2 = markov_statistic(E2(), 1, 1).law
    assert len(e2) == 2 and e2.weights == (H, H)
    assert {a[1].atoms for a in e2.atoms} == {((-1,),), ((1,),)}
    assert nested_equal(markov_statistic(E3(), 1, 1).law, markov_statistic(E1(), 1, 1).law)
    assert len(markov_statistic(E3(), 1, 1).law) == 1
    with pytest.raises(ValueError):
        markov_statistic(E1(), 1, 2)


def test_hellwig_examples():
    future = DiscreteMeasure((((-1,),), ((1,),)), (H, H))
    assert hellwig_statistic(E1(), 1) == DiscreteMeasure(((((0,),), future),), (1,))
    e2 = hellwig_statistic(E2(), 1)
    assert len(e2) == 2
    assert nested_equal(hellwig_statistic(E1(), 1), hellwig_statistic(E3(), 1))
    with pytest.raises(ValueError):
        hellwig_statistic(E1(), 0)


def test_hk_quotient_examples():
    assert isomorphic(hk_quotient(E3()), E1())
    assert isomorphic(hk_quotient(E2()), E2())
    assert isomorphic(hk_quotient(E1()), E1())


def test_plainify_examples():
    assert isomorphic(plainify(E2()), E1())
    assert isomorphic(plainify(E1()), E1())
    assert isomorphic(plainify(leaky_bet(3)), leaky_bet(3))


def test_prediction_process_examples():
    assert prediction_process(E1(), 0) == path_law(E1())
    assert nested_equal(prediction_process(E1(), 1), prediction_process(E3(), 1))
    assert not nested_equal(prediction_process(E1(), 1), prediction_process(E2(), 1))
    with pytest.raises(ValueError):
        prediction_process(E1(), -1)


def _trees(seed, count, N=3):
    rng = np.random.default_rng(seed)
    return [random_tree(rng, int(rng.integers(1, N + 1)), 1, 3) for _ in range(count)]


def test_quotients_preserve_law_exactly():
    for x in _trees(1, 25):
        assert path_law(hk_quotient(x)) == path_law(x)
        assert path_law(plainify(x)) == path_law(x)
        assert is_n_markov(plainify(x), math.inf)


def test_hk_quotient_idempotent_and_fast():
    for x in _trees(2, 25, N=4):
        q = hk_quotient(x)
        assert len(q) <= len(x)
        assert isomorphic(hk_quotient(q), q)
        _, rounds = hk_classes(x)
        assert rounds <= max(x.N - 1, 1)


def test_markov_orders_are_nested():
    for x in _trees(3, 40):
        flags = [is_n_markov(x, n) for n in (1, 2, 3, math.inf)]
        assert all(a <= b for a, b in zip(flags, flags[1:]))


def test_split_node_is_hk_equivalent():
    for x in _trees(4, 15):
        y = split_node(x, len(x) - 1)
        assert isomorphic(hk_quotient(x), hk_quotient(y))


def test_prediction_process_martingale():
    # E[f(pp^k_{t+1}) | node at t] = f(pp^k_t) for indicators of canonical atoms
    for x in _trees(6, 10):
        r = x.N - 1
        ranks = prediction_values(x, r)
        for k in range(1, r + 1):
            for t in range(1, x.N):
                for u in x.nodes_at(t):
                    lo, hi = x.leaf_range[u]
                    w = x.leaf_probs[lo:hi]
                    mass = sum(w)
                    vals_t = {ranks[k][i][t - 1] for i in range(lo, hi)}
                    assert len(vals_t) == 1
                    law_t = next(iter(vals_t))
                    # average of the time-(t+1) laws equals the time-t law
                    mix: dict = {}
                    for i, p in zip(range(lo, hi), w):
                        for a, q in ranks[k][i][t]:
                            mix[a] = mix.get(a, 0) + p / mass * q
                    for a, q in law_t:
                        assert float(mix.get(a, 0)) == pytest.approx(float(q), abs=1e-12)
