import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundstate.errors import DegenerateCritical, EmptyResult, InvalidM, NoLocalMax, ValidationError
from groundstate.potential import (
    allen_cahn,
    classify_hypothesis,
    double_well,
    find_critical_points,
    get_potential,
    neg_quadratic,
    polynomial_potential,
    quartic_decay,
    tilted_a2,
    truncate_potential,
)


def _fd_check(pot, t, h=1e-6):
    dF = (pot.F(t + h) - pot.F(t - h)) / (2 * h)
    df = (pot.f(t + h) - pot.f(t - h)) / (2 * h)
    return np.max(np.abs(dF - pot.f(t))), np.max(np.abs(df - pot.fp(t)))


@pytest.mark.parametrize("name", ["double_well", "neg_quadratic", "quartic_decay", "tilted_a2"])
def test_builtin_derivatives_consistent(name):
    pot = get_potential(name)
    t = np.linspace(-3, 3, 61)
    e1, e2 = _fd_check(pot, t)
    assert e1 < 1e-6 and e2 < 1e-6


def test_unknown_potential():
    with pytest.raises(ValidationError):
        get_potential("nope")


def test_double_well_critical_points():
    cps = find_critical_points(double_well())
    pts = [(round(t, 10), k) for t, k in cps.points]
    assert pts == [(-1.0, "min"), (0.0, "max"), (1.0, "min")]
    assert cps.unstable == [0.0]
    assert cps.k_minus == 0.0 and cps.k_plus == 0.0
    assert cps.kind_of(1.0) == "min" and cps.kind_of(0.3) is None


def test_degenerate_and_empty():
    with pytest.raises(DegenerateCritical):
        find_critical_points(polynomial_potential([0, 0, 0, 0, 1]))  # t^4
    with pytest.raises(EmptyResult):
        find_critical_points(polynomial_potential([0, 1]))  # f = 1


def test_allen_cahn_scaling():
    W = double_well()
    p = allen_cahn(0.5)
    t = np.linspace(-2, 2, 9)
    assert np.allclose(p.F(t), W.F(t) / 0.25)
    assert p.scale == pytest.approx(0.25) and p.energy_factor == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        allen_cahn(0.0)


@pytest.mark.parametrize("N", [1, 2, 3, 5])
def test_double_well_is_a1(N):
    pot = double_well()
    hc = classify_hypothesis(pot, find_critical_points(pot), N)
    assert hc.tag == "A1"
    assert hc.K == pytest.approx(max(0.0, float(np.max(np.abs(pot.f(np.array([0.0])))))))


def test_tilted_is_a2():
    pot = tilted_a2()
    cps = find_critical_points(pot)
    assert [k for _, k in cps.points] == ["min", "max", "min", "max"]
    hc = classify_hypothesis(pot, cps, 3)
    assert hc.tag == "A2"
    # -sgn(t) f(t) <= C (1 + |t|) on a wide sample
    t = np.linspace(-200, 200, 40001)
    assert np.all(-np.sign(t) * pot.f(t) <= hc.C * (1 + np.abs(t)) + 1e-12)


def test_neg_quadratic_needs_no_minimum_for_a2():
    pot = neg_quadratic()
    hc = classify_hypothesis(pot, find_critical_points(pot), 3)
    assert hc.tag == "A2" and hc.C == pytest.approx(1.0, rel=1e-3)


def test_quartic_decay_is_none():
    # superlinear decay but the outer critical points are maxima
    pot = quartic_decay()
    hc = classify_hypothesis(pot, find_critical_points(pot), 3)
    assert hc.tag == "none"


def test_no_local_max():
    pot = polynomial_potential([0, 0, 1])
    with pytest.raises(NoLocalMax):
        classify_hypothesis(pot, find_critical_points(pot), 3)


def test_truncation_properties():
    pot = tilted_a2()
    cps = find_critical_points(pot)
    M = 4.0
    ps = truncate_potential(pot, cps, M)
    t = np.linspace(-5, M, 2001)
    assert np.allclose(ps.F(t), pot.F(t)) and np.allclose(ps.f(t), pot.f(t))
    far = np.linspace(M, 50, 5001)
    assert np.all(ps.F(far) >= pot.F(far) - 1e-12)
    e1, e2 = _fd_check(ps, np.linspace(M - 0.5, M + 2.0, 301))
    assert e1 < 1e-5 and e2 < 1e-4
    new = find_critical_points(ps.__class__(ps.eval_F, ps.eval_f, ps.eval_fp, search_interval=(-5.0, 20.0)))
    extra = [t for t, _ in new.points if t > M]
    assert len(extra) == 1 and new.kind_of(extra[0]) == "min"


def test_truncation_rejects():
    pot = tilted_a2()
    cps = find_critical_points(pot)
    with pytest.raises(InvalidM):
        truncate_potential(pot, cps, 1.5)
    dw = double_well()
    with pytest.raises(InvalidM):
        truncate_potential(dw, find_critical_points(dw), 3.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.05, max_value=2.0))
def test_allen_cahn_critical_points_eps_invariant(eps):
    cps = find_critical_points(allen_cahn(eps))
    assert np.allclose([t for t, _ in cps.points], [-1.0, 0.0, 1.0], atol=1e-9)
