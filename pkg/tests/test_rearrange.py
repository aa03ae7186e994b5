import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundstate.errors import AsymmetricMesh, ValidationError
from groundstate.field import Field, dirichlet_form
from groundstate.geometry import build_trisphere
from groundstate.rearrange import (
    Halfspace,
    distribution,
    embed,
    is_polarized,
    polarization_sequence,
    polarize,
    rearrangement_report,
    symmetrize,
)

ICO = build_trisphere(3)[0]
NORTH = np.array([0.0, 0.0, 1.0])


def _smooth(dom, seed):
    r = np.random.default_rng(seed)
    X = dom.nodes
    c = r.standard_normal((3, 3))
    return Field(X @ c[0] + (X**2) @ c[1] + np.sin(X @ c[2]), dom)


def test_distribution_function(ico3):
    u = _smooth(ico3, 0)
    V = distribution(u)
    assert V(u.u_min - 1.0) == pytest.approx(ico3.volume_weights.sum())
    assert V(u.u_max) == 0.0
    s = np.linspace(u.u_min, u.u_max, 50)
    assert np.all(np.diff(V(s)) <= 0)


def test_symmetrize_equimeasurable(ico3):
    u = _smooth(ico3, 1)
    s = symmetrize(u, NORTH)
    assert np.array_equal(np.sort(s.values), np.sort(u.values))
    z = ico3.nodes @ NORTH
    # nonincreasing in distance from the pole
    order = np.argsort(-z, kind="stable")
    assert np.all(np.diff(s.values[order]) <= 0)


def test_symmetrize_idempotent_and_dirichlet(ico3):
    u = _smooth(ico3, 2)
    s = symmetrize(u, NORTH)
    assert np.array_equal(symmetrize(s, NORTH).values, s.values)
    assert dirichlet_form(ico3, s.values) <= dirichlet_form(ico3, u.values) * 1.05


def test_symmetrize_radial(s3):
    u = Field(np.cos(3 * s3.nodes), s3)
    s = symmetrize(u, [0, 0, 0, 1])
    assert np.all(np.diff(s.values) <= 1e-12)
    with pytest.raises(ValidationError):
        symmetrize(u, [1, 0, 0, 0])


def test_embed_radial(s3):
    X = embed(s3)
    assert X.shape == (s3.n_nodes, 4)
    assert np.allclose(np.linalg.norm(X, axis=1), 1.0)


def test_halfspace():
    H = Halfspace([0, 0, 2.0])
    assert np.allclose(H.normal, NORTH)
    assert H.contains(NORTH) and not H.flipped().contains(NORTH)
    with pytest.raises(ValidationError):
        Halfspace([0, 0, 0])


@pytest.mark.parametrize("mode", ["permutation", "interpolate", "matching"])
def test_polarize_modes(ico3, mode):
    u = _smooth(ico3, 3)
    H = Halfspace(NORTH)
    v = polarize(u, H, mode=mode)
    inside = ico3.nodes @ NORTH > 1e-9
    if mode != "interpolate":
        assert np.allclose(np.sort(v.values), np.sort(u.values))
    # polarizing twice changes nothing
    assert np.allclose(polarize(v, H, mode=mode).values, v.values)
    if mode == "permutation":
        assert np.all(v.values[inside] >= u.values[inside] - 1e-15)


def test_polarize_asymmetric_plane(ico3):
    u = _smooth(ico3, 4)
    with pytest.raises(AsymmetricMesh):
        polarize(u, Halfspace([0.3, 0.5, 0.81]), mode="permutation")
    with pytest.raises(ValidationError):
        polarize(u, Halfspace(NORTH), mode="bogus")


def test_polarization_sequence_converges():
    u = _smooth(ICO, 5)
    seq = polarization_sequence(u, NORTH, 200, seed=0)
    assert len(seq) >= 150
    assert seq.distances[-1] < 0.1 * seq.distances[0]
    assert np.allclose(np.sort(seq.final.values), np.sort(u.values))


def test_is_polarized(ico3, s3):
    u = _smooth(ico3, 6)
    assert is_polarized(symmetrize(u, NORTH), NORTH)
    assert not is_polarized(u, NORTH)
    r = Field(np.cos(s3.nodes), s3)
    assert is_polarized(r, [0, 0, 0, 1])


def test_report_keys(ico3):
    rep = rearrangement_report(_smooth(ico3, 7), NORTH)
    assert rep["l2"] == pytest.approx(rep["l2_star"])
    assert rep["grad_l2_star"] <= rep["grad_l2"] * 1.05


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_symmetrize_preserves_values(seed):
    u = Field(np.random.default_rng(seed).standard_normal(ICO.n_nodes), ICO)
    s = symmetrize(u, NORTH)
    assert np.array_equal(np.sort(s.values), np.sort(u.values))
    assert np.sum(ICO.volume_weights * s.values**2) == pytest.approx(np.sum(ICO.volume_weights * u.values**2))
