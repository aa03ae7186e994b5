import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundstate.errors import InterfaceMismatch, ValidationError
from groundstate.field import Field, residual_norm
from groundstate.flow import (
    dirichlet_positive_solve,
    dt_max,
    first_dirichlet_eigen,
    gradient_flow,
    half_domain,
    newton_solve,
    reflect_odd,
)
from groundstate.geometry import build_ball_radial, build_sphere_radial
from groundstate.potential import allen_cahn


def test_dt_max_double_well():
    # 1 / max f' on [-1, 1] with f' = (3t^2 - 1) / eps^2
    assert dt_max(allen_cahn(0.4), -1.0, 1.0) == pytest.approx(0.16 / 2)


def test_flow_energy_decreases(s3_coarse, ac04, rng):
    u0 = Field(rng.uniform(-0.9, 0.9, s3_coarse.n_nodes), s3_coarse)
    tr = gradient_flow(u0, ac04, dt=0.05, t_end=1.0)
    assert np.all(np.diff(tr.energies) <= 0.0)
    assert tr.times[0] == 0.0 and tr.times[-1] <= 1.0 + 1e-12


def test_flow_barrier_gaps(s3_coarse, ac04, rng):
    u0 = Field(rng.uniform(-0.95, 0.95, s3_coarse.n_nodes), s3_coarse)
    tr = gradient_flow(u0, ac04, dt=0.05, t_end=3.0, barrier=(-1.0, 1.0), keep=1)
    assert len(tr.barrier_gaps) == len(tr.times) - 1
    assert min(tr.barrier_gaps) > 0.0
    assert all(np.all(np.abs(s) <= 1.0) for s in tr.snapshots)


def test_flow_barrier_tiny_gaps_stay_positive(s3_coarse, ac04):
    # a field already within 1e-12 of the upper well keeps a positive gap
    u0 = Field(np.full(s3_coarse.n_nodes, 1.0 - 1e-12), s3_coarse)
    tr = gradient_flow(u0, ac04, dt=0.05, t_end=2.0, barrier=(-1.0, 1.0), tol=0.0)
    assert min(tr.barrier_gaps) > 0.0


def test_flow_barrier_validation(s3_coarse, ac04):
    with pytest.raises(ValidationError):
        gradient_flow(Field.constant(s3_coarse, 1.0), ac04, 0.01, 1.0, barrier=(-1.0, 1.0))
    with pytest.raises(ValidationError):
        gradient_flow(Field.constant(s3_coarse, 0.2), ac04, 0.01, 1.0, barrier=(-0.5, 1.0))
    with pytest.raises(ValidationError):
        gradient_flow(Field.constant(s3_coarse, 0.2), ac04, -0.01, 1.0)


def test_stationary_start(ground04, ac04):
    tr = gradient_flow(ground04, ac04, dt=0.05, t_end=1.0, barrier=(-1.0, 1.0), tol=0.0)
    assert np.max(np.abs(tr.final.values - ground04.values)) < 1e-8


def test_flow_csv(tmp_path, s3_coarse, ac04):
    u0 = Field(0.3 * np.cos(s3_coarse.nodes), s3_coarse)
    tr = gradient_flow(u0, ac04, dt=0.05, t_end=0.5)
    p = tmp_path / "trace.csv"
    tr.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,energy,residual_norm" and len(lines) == len(tr.times) + 1


def test_newton_converges_from_flow(s3, ac04):
    u0 = Field(0.8 * np.cos(s3.nodes), s3)
    u = newton_solve(u0, ac04, tol=1e-10)
    assert residual_norm(u, ac04) < 1e-10
    assert np.allclose(u.values, -u.values[::-1], atol=1e-8)


def test_first_dirichlet_eigen_hemisphere():
    dom = build_ball_radial(3, np.pi / 2, 400, "dirichlet", "sphere")[0]
    lam, phi = first_dirichlet_eigen(dom)
    # the first odd harmonic on S^3 has eigenvalue 3
    assert lam == pytest.approx(3.0, rel=1e-4)
    assert phi.max() == pytest.approx(1.0) and np.all(phi[:-1] > 0)


def test_dirichlet_positive_solve_threshold():
    dom = build_ball_radial(3, np.pi / 2, 200, "dirichlet", "sphere")[0]
    assert dirichlet_positive_solve(dom, allen_cahn(0.6)) is None
    u = dirichlet_positive_solve(dom, allen_cahn(0.4))
    assert u is not None and np.all(u.values[:-1] > 0)


def test_reflect_odd_roundtrip():
    full = build_sphere_radial(3, 200)[0]
    half = half_domain(full, "equator")
    u = dirichlet_positive_solve(half, allen_cahn(0.4))
    v = reflect_odd(u, full, "equator")
    assert np.allclose(v.values, -v.values[::-1], atol=1e-14)
    bad = u.with_values(u.values + 1e-3)
    with pytest.raises(InterfaceMismatch):
        reflect_odd(bad, full, "equator")


def test_half_domain_requires_even():
    with pytest.raises(ValidationError):
        half_domain(build_sphere_radial(3, 201)[0], "equator")


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_flow_monotone_random_start(seed):
    dom = build_sphere_radial(3, 64)[0]
    u0 = np.random.default_rng(seed).uniform(-0.99, 0.99, dom.n_nodes)
    tr = gradient_flow(Field(u0, dom), allen_cahn(0.5), dt=0.1, t_end=1.0, barrier=(-1.0, 1.0))
    assert np.all(np.diff(tr.energies) <= 0.0)
    assert min(tr.barrier_gaps, default=1.0) > 0.0
