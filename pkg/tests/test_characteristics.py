import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from slhjb.characteristics import (LAMBDA_MIN, branch_weights, column_foot, combine_columns,
                                   truncated_feet, truncated_foot)
from slhjb.geometry import Disk, Interval, Rectangle


def test_unconstrained_column():
    c = column_foot(Interval(0, 1), [0.5], 0.0, 0.04, [0.0], [1.0])
    assert c.lam_plus == c.lam_minus == 1.0
    assert c.gamma_plus == c.gamma_minus == 0.5
    assert c.tau == 0.04
    assert c.foot_plus[0] == 0.5 + 0.2 and c.foot_minus[0] == 0.5 - 0.2


def test_quarter_exit_weights():
    gp, gm, tau = branch_weights(1.0, 0.25, 0.04)
    assert gp == pytest.approx(oracles.GAMMA_PLUS_QUARTER, abs=1e-15)
    assert gm == pytest.approx(oracles.GAMMA_MINUS_QUARTER, abs=1e-15)
    assert tau == pytest.approx(oracles.TAU_QUARTER_OVER_DT * 0.04, abs=1e-17)
    c = column_foot(Interval(0, 1), [0.1], 0.3, 0.04, [0.0], [1.0])
    assert c.lam_minus == pytest.approx(0.25, abs=1e-14)
    assert c.foot_minus[0] == 0.0
    assert c.time_minus == pytest.approx(0.3 + 0.25 * 0.04)
    assert c.gamma_minus == pytest.approx(2 / 3, abs=1e-14)


def test_zero_column_is_symmetric():
    c = column_foot(Rectangle((0, 1), (0, 1)), [0.5, 0.5], 0.0, 0.1, [0.3, 0.0], [0.0, 0.0])
    assert np.array_equal(c.foot_plus, c.foot_minus)
    assert c.lam_plus == c.lam_minus
    assert c.gamma_plus == 0.5


@given(st.floats(1e-12, 1.0), st.floats(1e-12, 1.0), st.floats(1e-6, 1.0))
def test_branch_weight_invariants(lp, lm, dt):
    gp, gm, tau = branch_weights(lp, lm, dt)
    egp, egm, etau = oracles.branch_weights_oracle(lp, lm, dt)
    assert abs(gp + gm - 1) <= 1e-14
    assert abs(gp - egp) <= 1e-14 and abs(gm - egm) <= 1e-14
    assert abs(tau - etau) <= 1e-14 * dt
    assert 0 < tau <= dt


def test_lambda_clamped():
    gp, gm, tau = branch_weights(0.0, 1.0, 1.0)
    assert tau == pytest.approx(math.sqrt(LAMBDA_MIN))
    assert np.isfinite(gp) and np.isfinite(gm)


@pytest.mark.parametrize("taus,pi,tau", [([1.0], [1.0], 1.0), ([1.0, 1.0], [0.5, 0.5], 1.0),
                                         ([1.0, 0.5], [1 / 3, 2 / 3], 2 / 3)])
def test_combine_examples(taus, pi, tau):
    p, t = combine_columns(taus, 1.0)
    assert np.allclose(p, pi, atol=1e-15) and t == pytest.approx(tau, abs=1e-15)
    assert np.allclose(p * np.array(taus), t / len(taus), rtol=1e-13)


def test_combine_rejects_bad_tau():
    with pytest.raises(ValueError):
        combine_columns([0.5, 0.0])
    with pytest.raises(ValueError):
        combine_columns([0.5, 2.0], dt=1.0)


@given(st.lists(st.floats(-6, 0), min_size=1, max_size=5))
def test_reciprocal_equals_product_form(log_taus):
    taus = [10.0 ** e for e in log_taus]
    pi, tau = combine_columns(taus)
    epi, etau = oracles.product_form_combine(taus)
    assert np.allclose(pi, epi, rtol=1e-12, atol=0)
    assert tau == pytest.approx(etau, rel=1e-12)
    assert abs(pi.sum() - 1) <= 1e-14


def test_all_inside_reduces_to_equal_split():
    dom = Disk((0, 0), 1.0)
    foot = truncated_foot(dom, [0.1, 0.0], 0.0, 1e-3, [0.1, 0.2], [[0.3, 0.0], [0.0, 0.4]])
    assert np.allclose(foot.pi, 0.5) and foot.tau == 1e-3


def test_exited_feet_on_boundary(rng):
    dom = Disk((0, 0), 1.0)
    for _ in range(200):
        x = rng.uniform(-0.7, 0.7, 2)
        b, S = rng.normal(size=2), rng.normal(size=(2, 2))
        foot = truncated_foot(dom, x, 0.0, 0.2, b, S)
        assert abs(foot.pi.sum() - 1) <= 1e-14
        for l, c in enumerate(foot.columns):
            for lam, y, sgn in ((c.lam_plus, c.foot_plus, 1), (c.lam_minus, c.foot_minus, -1)):
                assert 0 < lam <= 1
                if lam < 1:
                    assert abs(np.linalg.norm(y) - 1) <= 1e-12
                else:
                    assert np.array_equal(y, x + 0.2 * b + sgn * math.sqrt(2 * 0.2) * S[:, l])
            assert foot.pi[l] * c.tau == pytest.approx(foot.tau / 2, rel=1e-13)


def test_batch_matches_single(rng):
    dom = Rectangle((0, 1), (0, 1))
    X = rng.uniform(0.05, 0.95, size=(50, 2))
    B = rng.normal(size=(50, 2))
    S = rng.normal(size=(50, 2, 2)) * 0.5
    batch = truncated_feet(dom, X, 0.1, B, S)
    for i in range(50):
        ref = truncated_foot(dom, X[i], 0.0, 0.1, B[i], S[i])
        assert batch.tau[i] == pytest.approx(ref.tau, rel=1e-14)
        assert np.allclose(batch.pi[i], ref.pi, rtol=1e-14)
        for l, c in enumerate(ref.columns):
            assert batch.lam[i, l, 0] == pytest.approx(c.lam_plus, rel=1e-12)
            assert batch.lam[i, l, 1] == pytest.approx(c.lam_minus, rel=1e-12)
            assert np.allclose(batch.feet[i, l, 0], c.foot_plus, atol=1e-14)
            assert np.allclose(batch.feet[i, l, 1], c.foot_minus, atol=1e-14)
