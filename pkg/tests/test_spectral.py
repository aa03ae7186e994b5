import numpy as np
import pytest

from groundstate.errors import ValidationError
from groundstate.field import Field
from groundstate.geometry import build_ball_radial, build_sphere_radial, build_trisphere
from groundstate.potential import allen_cahn
from groundstate.spectral import (
    constant_stability,
    harmonic_multiplicity,
    laplace_spectrum,
    mode_spectrum,
    rayleigh_consistency,
    spectrum,
)


def test_harmonic_multiplicity():
    # degree-k harmonics on S^{N-1}: circle, S^2, S^3
    assert [harmonic_multiplicity(k, 2) for k in range(4)] == [1, 2, 2, 2]
    assert [harmonic_multiplicity(k, 3) for k in range(4)] == [1, 3, 5, 7]
    assert [harmonic_multiplicity(k, 4) for k in range(4)] == [1, 4, 9, 16]


@pytest.mark.parametrize("N", [2, 3])
def test_laplace_spectrum_sphere(N):
    dom = build_sphere_radial(N, 400)[0]
    rep = laplace_spectrum(dom, k=10)
    ev = np.sort(rep.eigenvalues)
    expect = sorted(k * (k + N - 1) for k in range(4) for _ in range(harmonic_multiplicity(k, N + 1)))[:10]
    assert np.allclose(ev, expect, rtol=1e-3, atol=1e-8)


def test_laplace_spectrum_trisphere():
    rep = laplace_spectrum(build_trisphere(4)[0], k=9)
    ev = np.sort(rep.eigenvalues)
    assert abs(ev[0]) < 1e-8
    assert np.allclose(ev[1:4], 2.0, rtol=2e-2)
    assert np.allclose(ev[4:9], 6.0, rtol=3e-2)


def test_constant_zero_index(s3):
    rep = constant_stability(0.0, allen_cahn(0.45), s3)
    # eps^2 k(k+2) < 1 for k = 0, 1 only: 1 + 4 negative directions
    assert rep.morse_index == 5 and rep.nullity == 0
    with pytest.raises(ValidationError):
        constant_stability(0.5, allen_cahn(0.45), s3)


def test_ground_state_morse_data(ground04, ac04):
    rep = spectrum(ground04, ac04, k=10)
    assert rep.morse_index == 1 and rep.nullity == 3
    assert rayleigh_consistency(rep, ground04, ac04) < 1e-8


def test_mode_spectrum_blocks(ground04, ac04):
    modes = mode_spectrum(ground04, ac04, ell_max=3)
    assert [m.ell for m in modes] == [0, 1, 2, 3]
    assert [m.multiplicity for m in modes] == [1, 3, 5, 7]
    assert modes[0].radial_eigenvalues[0] < 0
    # rotations of the odd ground state: a zero eigenvalue in the ell = 1 block
    assert abs(modes[1].radial_eigenvalues[0]) < 1e-3
    with pytest.raises(ValidationError):
        mode_spectrum(ground04, ac04, ell_max=11)


def test_spectrum_json(ground04, ac04):
    import json

    d = json.loads(spectrum(ground04, ac04, k=6).to_json())
    assert d["index"] == 1 and len(d["eigenvalues"]) == 6


def test_spectrum_k_limit(ground04, ac04):
    with pytest.raises(ValidationError):
        spectrum(ground04, ac04, k=51)


def test_dirichlet_ball_eigenvalue():
    # unit Euclidean ball in R^3: lambda_1 = pi^2
    dom = build_ball_radial(3, 1.0, 400, "dirichlet", "euclidean")[0]
    rep = laplace_spectrum(dom, k=1)
    assert rep.eigenvalues[0] == pytest.approx(np.pi**2, rel=1e-4)


def test_eigenfields_are_fields(ground04, ac04):
    rep = spectrum(ground04, ac04, k=4)
    assert all(isinstance(f, Field) for f in rep.eigenfields)
