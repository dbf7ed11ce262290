"""Pseudo-label assignment and soft correction rules."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sagefed.pseudo import (
    CorrectionConfig,
    DecisionKind,
    confidence_gap,
    correction_coefficient,
    cpg_assign,
    sage_assign,
    soft_correct,
    strategy_assign,
)

CFG = CorrectionConfig(tau=0.95, kappa=13.86)


def dist(*vals):
    v = np.asarray(vals, dtype=float)
    return v / v.sum()


@st.composite
def prediction(draw, C=4):
    raw = draw(st.lists(st.floats(1e-3, 1.0), min_size=C, max_size=C))
    v = np.asarray(raw)
    return v / v.sum()


@st.composite
def confident_prediction(draw, C=4, floor=0.951):
    peak = draw(st.integers(0, C - 1))
    conf = draw(st.floats(floor, 0.999))
    rest = draw(st.lists(st.floats(1e-3, 1.0), min_size=C - 1, max_size=C - 1))
    rest = np.asarray(rest)
    v = np.full(C, 0.0)
    v[peak] = conf
    others = [i for i in range(C) if i != peak]
    v[others] = rest / rest.sum() * (1 - conf)
    return v


def test_config_validation():
    with pytest.raises(ValueError):
        CorrectionConfig(tau=0.0)
    with pytest.raises(ValueError):
        CorrectionConfig(tau=1.0)
    with pytest.raises(ValueError):
        CorrectionConfig(kappa=-1.0)
    assert CorrectionConfig().tau == 0.95
    assert CorrectionConfig().kappa == pytest.approx(13.86)


def test_cpg_local_branch():
    d = cpg_assign(dist(0.02, 0.02, 0.96), dist(0.4, 0.3, 0.3), CFG)
    assert d.kind is DecisionKind.HARD and d.branch == "local"
    np.testing.assert_array_equal(d.target, [0, 0, 1])
    assert d.class_local == 2


def test_cpg_global_branch():
    p_l = dist(0.5, 0.1, 0.1, 0.1, 0.1, 0.1)
    p_g = np.array([0.006, 0.006, 0.006, 0.006, 0.006, 0.97])
    d = cpg_assign(p_l, p_g, CFG)
    assert d.kind is DecisionKind.HARD and d.branch == "global"
    np.testing.assert_array_equal(d.target, [0, 0, 0, 0, 0, 1])


def test_cpg_abstains_when_both_below():
    d = cpg_assign(dist(0.90, 0.05, 0.05), dist(0.05, 0.90, 0.05), CFG)
    assert d.kind is DecisionKind.ABSTAIN
    assert d.target is None and d.lam is None and d.branch is None


def test_threshold_is_strict():
    p = dist(0.95, 0.025, 0.025)
    assert cpg_assign(p, p, CFG).kind is DecisionKind.ABSTAIN
    assert sage_assign(p, p, CFG).kind is DecisionKind.ABSTAIN


def test_confidence_gap_values():
    p = dist(0.6, 0.4)
    assert confidence_gap(p, p) == 0.0
    a, b = np.array([0.99, 0.01]), np.array([0.94, 0.06])
    assert confidence_gap(a, b) == pytest.approx(0.05, abs=1e-12)
    assert confidence_gap(a, b) == confidence_gap(b, a)


def test_correction_coefficient_values():
    assert correction_coefficient(0.0, 13.86) == 1.0
    assert correction_coefficient(0.05, 13.86) == pytest.approx(0.5, abs=1e-3)
    assert correction_coefficient(0.7, 0.0) == 1.0
    with pytest.raises(ValueError):
        correction_coefficient(-0.1, 1.0)
    with pytest.raises(ValueError):
        correction_coefficient(0.1, -1.0)


@pytest.mark.invariant
@settings(deadline=None, max_examples=60)
@given(
    d1=st.floats(1e-3, 0.9),
    d_step=st.floats(1e-6, 0.1),
    k1=st.floats(0.01, 50.0),
    k_step=st.floats(1e-4, 10.0),
)
def test_lambda_monotonicity(d1, d_step, k1, k_step):
    assert correction_coefficient(d1, k1) > correction_coefficient(d1 + d_step, k1)
    assert correction_coefficient(d1, k1) > correction_coefficient(d1, k1 + k_step)
    assert 0 < correction_coefficient(d1, k1) <= 1
    assert correction_coefficient(0.0, k1) == 1.0


def test_soft_correct_values():
    same = soft_correct(dist(0.7, 0.2, 0.1), dist(0.6, 0.3, 0.1), 0.3)
    np.testing.assert_array_equal(same, [1, 0, 0])
    local = soft_correct(dist(0.1, 0.8, 0.1), dist(0.8, 0.1, 0.1), 1.0)
    np.testing.assert_array_equal(local, [0, 1, 0])
    p_l = np.full(10, 0.02)
    p_l[1] = 0.82
    p_g = np.roll(p_l, 3)  # argmax moves to class 4
    mixed = soft_correct(p_l, p_g, 0.7)
    expected = np.zeros(10)
    expected[1], expected[4] = 0.7, 0.3
    np.testing.assert_allclose(mixed, expected, atol=1e-12)
    with pytest.raises(ValueError):
        soft_correct(p_l, p_g, 1.2)


def test_sage_corrected_soft_worked_example():
    d = sage_assign(np.array([0.97, 0.02, 0.01]), np.array([0.10, 0.85, 0.05]), CFG)
    assert d.kind is DecisionKind.CORRECTED_SOFT
    assert d.confidence_local == pytest.approx(0.97)
    assert abs(d.confidence_local - d.confidence_global) == pytest.approx(0.12)
    assert d.lam == pytest.approx(0.1896, abs=1e-3)
    np.testing.assert_allclose(d.target, [0.1896, 0.8104, 0.0], atol=1e-3)


def test_sage_global_fallback():
    d = sage_assign(dist(0.90, 0.05, 0.05), np.array([0.96, 0.02, 0.02]), CFG)
    assert d.kind is DecisionKind.HARD and d.branch == "global"
    np.testing.assert_array_equal(d.target, [1, 0, 0])


def test_sage_abstains_when_both_below():
    d = sage_assign(dist(0.5, 0.3, 0.2), dist(0.4, 0.4, 0.2), CFG)
    assert d.kind is DecisionKind.ABSTAIN


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        cpg_assign(dist(0.5, 0.5), dist(0.4, 0.3, 0.3), CFG)
    with pytest.raises(ValueError):
        sage_assign(dist(0.5, 0.5), dist(0.4, 0.3, 0.3), CFG)
    with pytest.raises(ValueError):
        confidence_gap(np.array([0.5, 0.6]), np.array([0.5, 0.5]))  # not normalized


def test_strategy_lpl():
    d = strategy_assign("lpl", dist(0.96, 0.02, 0.02), dist(0.4, 0.3, 0.3), CFG)
    assert d.kind is DecisionKind.HARD and d.branch == "local"
    np.testing.assert_array_equal(d.target, [1, 0, 0])
    assert strategy_assign("lpl", dist(0.5, 0.3, 0.2), dist(0.99, 0.005, 0.005), CFG).abstained


def test_strategy_gpl_ignores_local():
    p_g = dist(0.96, 0.02, 0.02)
    a = strategy_assign("gpl", dist(0.98, 0.01, 0.01), p_g, CFG)
    b = strategy_assign("gpl", dist(0.1, 0.1, 0.8), p_g, CFG)
    assert a.kind == b.kind
    np.testing.assert_array_equal(a.target, b.target)
    assert a.branch == b.branch == "global"


def test_strategy_unknown_mode():
    with pytest.raises(ValueError):
        strategy_assign("flexmatch", dist(0.5, 0.5), dist(0.5, 0.5), CFG)


def test_sage_high_kappa_limit():
    # huge kappa with disagreeing argmaxes: target collapses onto global
    cfg = CorrectionConfig(tau=0.95, kappa=1e6)
    d = sage_assign(np.array([0.97, 0.02, 0.01]), np.array([0.10, 0.85, 0.05]), cfg)
    assert d.kind is DecisionKind.CORRECTED_SOFT
    assert d.target[0] < 1e-9
    assert d.target[1] == pytest.approx(1.0, abs=1e-9)


@pytest.mark.invariant
@settings(deadline=None, max_examples=60)
@given(p_l=prediction(), p_g=prediction(), mode=st.sampled_from(["lpl", "gpl", "cpg", "sage"]))
def test_targets_are_valid_distributions(p_l, p_g, mode):
    d = strategy_assign(mode, p_l, p_g, CFG)
    if d.abstained:
        assert d.target is None
    else:
        assert np.all(d.target >= 0)
        assert d.target.sum() == pytest.approx(1.0, abs=1e-9)
        support = np.flatnonzero(d.target)
        assert support.size <= 2
        assert set(support) <= {d.class_local, d.class_global}
    if d.kind is DecisionKind.CORRECTED_SOFT:
        assert 0 < d.lam <= 1
    else:
        assert d.lam is None


@pytest.mark.invariant
@settings(deadline=None, max_examples=40)
@given(p_l=confident_prediction(), p_g=confident_prediction())
def test_agreement_purity(p_l, p_g):
    d = sage_assign(p_l, p_g, CFG)
    if d.class_local == d.class_global and d.kind is DecisionKind.CORRECTED_SOFT:
        hot = np.zeros(4)
        hot[d.class_local] = 1.0
        np.testing.assert_array_equal(d.target, hot)


@pytest.mark.invariant
@settings(deadline=None, max_examples=60)
@given(p_l=prediction(), p_g=prediction())
def test_fallback_consistency_when_local_unconfident(p_l, p_g):
    if p_l.max() > CFG.tau:
        return
    ds = sage_assign(p_l, p_g, CFG)
    dc = cpg_assign(p_l, p_g, CFG)
    dg = strategy_assign("gpl", p_l, p_g, CFG)
    assert ds.kind == dc.kind == dg.kind
    if not ds.abstained:
        np.testing.assert_array_equal(ds.target, dc.target)
        np.testing.assert_array_equal(ds.target, dg.target)


@pytest.mark.invariant
@settings(deadline=None, max_examples=40)
@given(p_l=confident_prediction(), p_g=prediction())
def test_zero_kappa_reduces_to_local_hard_label(p_l, p_g):
    cfg = CorrectionConfig(tau=0.95, kappa=0.0)
    d = sage_assign(p_l, p_g, cfg)
    lpl = strategy_assign("lpl", p_l, p_g, cfg)
    assert d.kind is DecisionKind.CORRECTED_SOFT and d.lam == 1.0
    np.testing.assert_array_equal(d.target, lpl.target)


@pytest.mark.invariant
@settings(deadline=None, max_examples=60)
@given(
    p_l=prediction(),
    p_g=prediction(),
    tau_lo=st.floats(0.3, 0.95),
    tau_hi=st.floats(0.3, 0.95),
    mode=st.sampled_from(["lpl", "gpl", "cpg", "sage"]),
)
def test_abstention_monotone_in_tau(p_l, p_g, tau_lo, tau_hi, mode):
    if tau_lo > tau_hi:
        tau_lo, tau_hi = tau_hi, tau_lo
    lo = strategy_assign(mode, p_l, p_g, CorrectionConfig(tau=tau_lo, kappa=13.86))
    hi = strategy_assign(mode, p_l, p_g, CorrectionConfig(tau=tau_hi, kappa=13.86))
    if lo.abstained:
        assert hi.abstained
