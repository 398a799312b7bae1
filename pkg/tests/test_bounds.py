import numpy as np
import pytest

from fedlora.bounds import (GammaBreakdown, TheoryConsts, corollary1_bound,
                            drift_bound_B, lemma1_bound, theorem1_gamma_term)


def unit_consts(**kw):
    base = dict(S=1.0, W=1.0, G=1.0, H=1.0, phi=1.0, r_max=2, E=1, eta=1.0)
    base.update(kw)
    return TheoryConsts(**base)


def test_hand_evaluated_total():
    # all constants 1, E = 1, N = 2, K = 1, r = 1, r_max = 2, O = 0.5:
    # rank 2, cov 4, local 1, drift 0, sampling 8, sparsification 32 -> 47
    g = theorem1_gamma_term(unit_consts(), r=1, ratio=0.5, k=1, n=2)
    assert g.rank_term == 2.0
    assert g.cov_term == 4.0
    assert g.local_term == 1.0
    assert g.drift_term == 0.0
    assert g.sampling_term == 8.0
    assert g.sparsification_term == 32.0
    assert g.total == 47.0


def test_vanishing_terms():
    # dense transmission kills the sparsification term
    g = theorem1_gamma_term(unit_consts(), r=1, ratio=1.0, k=1, n=2)
    assert g.sparsification_term == 0.0
    # full participation kills the sampling term
    g = theorem1_gamma_term(unit_consts(), r=1, ratio=0.5, k=2, n=2)
    assert g.sampling_term == 0.0
    # structural rank at the cap kills the rank term
    g = theorem1_gamma_term(unit_consts(), r=2, ratio=0.5, k=1, n=2)
    assert g.rank_term == 0.0
    # a single local pass never drifts
    assert theorem1_gamma_term(unit_consts(), 1, 0.5, 1, 2, epochs=1).drift_term == 0.0
    assert theorem1_gamma_term(unit_consts(), 1, 0.5, 1, 2, epochs=3).drift_term \
        == pytest.approx(3 * 2 * 5 / 6)


def test_init_gap_passthrough():
    g = theorem1_gamma_term(unit_consts(), 1, 1.0, 2, 2, init_gap=3.5)
    assert g.init_gap == 3.5
    assert g.total == pytest.approx(3.5 + g.rank_term + g.cov_term + g.local_term)


def test_total_is_sum_of_parts():
    b = GammaBreakdown(1, 2, 3, 4, 5, 6, 7)
    assert b.total == 28


def test_validation():
    with pytest.raises(ValueError):
        theorem1_gamma_term(unit_consts(), 1, 0.0, 1, 2)
    with pytest.raises(ValueError):
        theorem1_gamma_term(unit_consts(), 1, 1.1, 1, 2)
    with pytest.raises(ValueError):
        theorem1_gamma_term(unit_consts(), 1, 0.5, 3, 2)
    with pytest.raises(ValueError):
        TheoryConsts(S=0.0)
    with pytest.raises(ValueError):
        TheoryConsts(r_max=0)


def test_lemma_and_corollary_hand_values():
    # O = 0.5, max squared update 1: 4 * 0.5 / 0.25 = 8, and half of it is 4
    assert lemma1_bound(0.5, 1.0) == 8.0
    assert corollary1_bound(0.5, 1.0) == 4.0
    assert lemma1_bound(1.0, 123.0) == 0.0
    with pytest.raises(ValueError):
        lemma1_bound(0.0, 1.0)


def test_drift_bound_hand_value():
    assert drift_bound_B(3.0, 1.0) == 2.0
    assert drift_bound_B(0.0, 1.0) == 0.5
    with pytest.raises(ValueError):
        drift_bound_B(-1.0, 1.0)


def test_monotonicity_sweeps():
    consts = TheoryConsts(S=1, W=1, G=1, H=1, phi=0.05, r_max=16, E=2, eta=0.01)

    def total(r=4, ratio=0.5, k=5, n=20):
        return theorem1_gamma_term(consts, r, ratio, k, n).total

    # denser transmission always helps
    ratios = np.linspace(0.1, 1.0, 40)
    vals = [total(ratio=o) for o in ratios]
    assert np.all(np.diff(vals) < 0)

    # scheduling more clients always helps
    vals = [total(k=k) for k in range(1, 21)]
    assert np.all(np.diff(vals) < 0)

    # the sparsification term alone grows with rank
    terms = [theorem1_gamma_term(consts, r, 0.5, 5, 20).sparsification_term
             for r in range(1, 17)]
    assert np.all(np.diff(terms) > 0)
