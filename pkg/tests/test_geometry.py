from math import pi

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundstate.errors import ValidationError
from groundstate.geometry import (
    build_ball_radial,
    build_biaxial,
    build_clifford_reduced,
    build_domain,
    build_sphere_radial,
    build_trisphere,
    cap_radius,
    export_mesh,
    icosahedron,
    sphere_volume,
    spherical_cap_volume,
)


def test_sphere_volumes():
    assert sphere_volume(1) == pytest.approx(2 * pi)
    assert sphere_volume(2) == pytest.approx(4 * pi)
    assert sphere_volume(3) == pytest.approx(2 * pi**2)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_radial_weights_sum_to_volume(N):
    dom = build_sphere_radial(N, 300)[0]
    assert dom.volume_weights.sum() == pytest.approx(sphere_volume(N), rel=1e-10)
    assert dom.diameter == pytest.approx(pi)


def test_clifford_and_biaxial_volume():
    cl = build_clifford_reduced(200)[0]
    assert cl.volume_weights.sum() == pytest.approx(2 * pi**2, rel=1e-8)
    bi = build_biaxial(24, 48)[0]
    assert bi.volume_weights.sum() == pytest.approx(2 * pi**2, rel=1e-3)


def test_trisphere_area_and_symmetry():
    dom = build_trisphere(3)[0]
    assert dom.volume_weights.sum() == pytest.approx(4 * pi, rel=2e-2)
    K = dom.laplacian.matrix
    assert abs(K - K.T).max() < 1e-12
    assert np.allclose(K @ np.ones(dom.n_nodes), 0.0, atol=1e-10)
    v, f = icosahedron()
    assert v.shape == (12, 3) and f.shape == (20, 3)


@pytest.mark.parametrize("build", [
    lambda: build_sphere_radial(3, 64)[0],
    lambda: build_clifford_reduced(64)[0],
    lambda: build_biaxial(24, 48)[0],
])
def test_stiffness_annihilates_constants(build):
    dom = build()
    assert np.max(np.abs(dom.laplacian.stiffness_apply(np.ones(dom.n_nodes)))) < 1e-10


def test_ball_dirichlet_nodes():
    dom = build_ball_radial(3, 1.0, 100, "dirichlet", "euclidean")[0]
    assert list(dom.boundary_nodes) == [dom.n_nodes - 1]
    neu = build_ball_radial(3, 1.0, 100, "neumann", "euclidean")[0]
    assert neu.boundary_nodes.size == 0


def test_cap_volume_roundtrip():
    for N in (2, 3, 4):
        for r in (0.1, 1.0, 2.5):
            assert cap_radius(N, spherical_cap_volume(N, r)) == pytest.approx(r, abs=1e-10)
    assert spherical_cap_volume(3, pi) == pytest.approx(sphere_volume(3))
    with pytest.raises(ValidationError):
        spherical_cap_volume(3, 4.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.floats(min_value=0.0, max_value=1.0))
def test_cap_radius_monotone(N, frac):
    v = frac * sphere_volume(N)
    r = cap_radius(N, v)
    assert 0.0 <= r <= pi
    assert spherical_cap_volume(N, r) == pytest.approx(v, abs=1e-9)


def test_invalid_sizes():
    with pytest.raises(ValidationError):
        build_sphere_radial(3, 4)
    with pytest.raises(ValidationError):
        build_domain("torus")


def test_build_domain_presets():
    assert build_domain("sphere3", n=100).kind == "SphereRadial"
    assert build_domain("sphere2-radial", n=100).params["N"] == 2
    assert build_domain("clifford", n=100).kind == "CliffordReduced"
    assert build_domain("trisphere", subdiv=2).kind == "TriSphere"
    assert build_domain("ball3-geodesic", n=100).kind == "BallRadial"


def test_export_mesh(tmp_path, ico3):
    p = tmp_path / "mesh.txt"
    export_mesh(ico3, p)
    lines = p.read_text().splitlines()
    assert lines[0] == f"# nodes {ico3.n_nodes}"
    k = lines.index(f"# elements {len(ico3.extra['faces'])}")
    assert k == ico3.n_nodes + 1
