import numpy as np
import pytest

from groundstate.errors import NoValidDelta, ValidationError
from groundstate.field import (
    Field,
    ac_identity_gap,
    apriori_bound,
    energy,
    gradient_magnitude,
    p_function,
    raw_energy,
    raw_gradient,
    residual_norm,
    unstable_range_check,
    unstable_range_report,
)
from groundstate.potential import allen_cahn, double_well, find_critical_points


def test_field_validation(s3):
    with pytest.raises(ValidationError):
        Field(np.zeros(3), s3)
    v = np.zeros(s3.n_nodes)
    v[0] = np.nan
    with pytest.raises(ValidationError):
        Field(v, s3)


def test_constant_energy(s3, ac04):
    u = Field.constant(s3, 0.0)
    rep = energy(u, ac04)
    # E_eps(0) = eps * |S^3| * W(0) / eps^2
    assert rep.energy == pytest.approx(2 * np.pi**2 * 0.25 / 0.4, rel=1e-10)
    assert rep.dirichlet_part == 0.0
    assert residual_norm(Field.constant(s3, 1.0), ac04) < 1e-10


def test_gradient_matches_energy(s3_coarse, rng):
    pot = double_well()
    v = 0.5 * np.cos(s3_coarse.nodes) + 0.1 * rng.standard_normal(s3_coarse.n_nodes)
    d = rng.standard_normal(s3_coarse.n_nodes)
    h = 1e-6
    fd = (raw_energy(s3_coarse, v + h * d, pot) - raw_energy(s3_coarse, v - h * d, pot)) / (2 * h)
    assert fd == pytest.approx(raw_gradient(s3_coarse, v, pot) @ d, rel=1e-6)


def test_identity_gap_on_solution(ground04, ac04):
    assert ac_identity_gap(ground04, ac04) < 1e-9
    with pytest.raises(ValidationError):
        ac_identity_gap(ground04, double_well())


def test_gradient_magnitude_radial(s3):
    u = Field(np.cos(s3.nodes), s3)
    g = gradient_magnitude(u)
    inner = slice(5, -5)
    assert np.allclose(g[inner], np.abs(np.sin(s3.nodes[inner])), atol=1e-4)


def test_gradient_magnitude_trisphere(ico3):
    X = ico3.nodes
    g = gradient_magnitude(Field(X[:, 2], ico3))
    assert np.max(np.abs(g - np.sqrt(1 - X[:, 2] ** 2))) < 0.1


def test_p_function_report(ground04, ac04):
    rep = p_function(ground04, ac04)
    assert rep.values.values.shape == (ground04.domain.n_nodes,)
    assert 0 <= rep.argmax < ground04.domain.n_nodes
    assert rep.distance >= 0.0


def test_apriori_bound_basic():
    b = apriori_bound(C=1.0, K=1.0, d=np.pi, kplus=0.0, kminus=0.0)
    assert 0 < b.delta < 1
    D = b.delta * np.log(b.delta) ** 2 + b.delta * (b.delta - 2) * np.pi**2
    assert D > 0
    assert b.M0 == pytest.approx(np.pi * b.B0 + b.B0)
    assert b.B0 == pytest.approx(np.sqrt(2 * b.R0 * (1 + b.R0)))


def test_apriori_bound_monotone_in_C():
    small = apriori_bound(C=0.5, K=1.0, d=2.0, kplus=1.0, kminus=-1.0)
    big = apriori_bound(C=2.0, K=1.0, d=2.0, kplus=1.0, kminus=-1.0)
    assert big.M0 > small.M0


def test_apriori_bound_invalid():
    with pytest.raises(ValidationError):
        apriori_bound(C=1.0, K=1.0, d=0.0, kplus=0.0, kminus=0.0)
    with pytest.raises(ValidationError):
        apriori_bound(C=1.0, K=1.0, d=1.0, kplus=-1.0, kminus=0.0)
    with pytest.raises(NoValidDelta):
        apriori_bound(C=1e8, K=1.0, d=10.0, kplus=0.0, kminus=0.0)


def test_unstable_range(ground04, s3):
    cps = find_critical_points(double_well())
    assert unstable_range_check(ground04, cps, double_well())
    rep = unstable_range_report(Field.constant(s3, 1.0), cps)
    assert rep["item1"] is False and rep["note"] == "stable, lemma not applicable"


def test_field_csv(tmp_path, s3_coarse):
    u = Field(np.cos(s3_coarse.nodes), s3_coarse)
    p = tmp_path / "u.csv"
    u.to_csv(p)
    assert p.read_text().count("\n") >= s3_coarse.n_nodes


def test_apriori_delta_rules():
    largest = apriori_bound(C=1.0, K=1.0, d=np.pi, kplus=0.0, kminus=0.0)
    best = apriori_bound(C=1.0, K=1.0, d=np.pi, kplus=0.0, kminus=0.0, delta_rule="max_denominator")
    assert largest.delta > best.delta
    assert best.R0 <= largest.R0 and best.M0 <= largest.M0
    with pytest.raises(ValidationError):
        apriori_bound(C=1.0, K=1.0, d=1.0, kplus=0.0, kminus=0.0, delta_rule="other")
