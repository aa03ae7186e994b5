import numpy as np
import pytest

from groundstate.bifurcation import (
    continue_branch,
    default_domain,
    existence_threshold,
    family_level,
    gap_table,
    pitchfork_fit,
    reduced_threshold,
    solution_exists,
    solve_member,
    symmetry_certificates,
    thresholds,
)
from groundstate.errors import ValidationError
from groundstate.geometry import build_sphere_radial


def test_thresholds_s3(s3):
    th = thresholds(s3)
    e1, e2 = th
    assert e1 == pytest.approx(1 / np.sqrt(3), rel=1e-4)
    assert e2 == pytest.approx(1 / (2 * np.sqrt(2)), rel=1e-4)
    assert th.as_dict()["eps1_analytic"] == pytest.approx(1 / np.sqrt(3))


def test_thresholds_s2():
    e1, e2 = thresholds(build_sphere_radial(2, 400)[0])
    assert e1 == pytest.approx(1 / np.sqrt(2), rel=1e-4)
    assert e2 == pytest.approx(1 / np.sqrt(6), rel=1e-4)


def test_reduced_threshold_matches(s3):
    assert reduced_threshold("ground", s3) == pytest.approx(1 / np.sqrt(3), rel=1e-4)


def test_solution_exists_sides(s3_coarse):
    assert solution_exists("ground", 0.5, s3_coarse)
    assert not solution_exists("ground", 0.65, s3_coarse)


def test_existence_threshold_bisection(s3_coarse):
    e = existence_threshold("ground", s3_coarse, 0.5, 0.65, rtol=5e-3)
    assert e == pytest.approx(1 / np.sqrt(3), rel=6e-3)
    with pytest.raises(ValidationError):
        existence_threshold("ground", s3_coarse, 0.6, 0.65)


def test_solve_member_absent(s3):
    assert solve_member("ground", 0.7, s3) is None
    assert family_level("ground", 0.7, s3) is None


def test_ground_branch_and_pitchfork(s3):
    br = continue_branch("ground", 0.57, 0.45, 6, dom=s3)
    assert br.status == "complete" and len(br.points) == 7
    sup = np.array([p.sup_norm for p in br.points])
    assert np.all(np.diff(sup) > 0)
    assert all(p.morse_index == 1 for p in br.points)
    beta, _ = pitchfork_fit(br, 1 / np.sqrt(3))
    assert 0.3 < beta < 0.7
    cert = symmetry_certificates(br)
    assert cert["max_defect"] < 1e-6


def test_branch_reports_absence(s3):
    br = continue_branch("ground", 0.62, 0.55, 2, dom=s3, with_spectrum=False)
    assert br.points and br.points[-1].eps == pytest.approx(0.55)
    assert br.status in ("complete", "absent")


def test_branch_csv(tmp_path, s3):
    br = continue_branch("ground", 0.5, 0.45, 1, dom=s3, with_spectrum=False)
    br.to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert len(lines) == len(br.points) + 1


def test_default_domain_checks():
    assert default_domain("clifford").kind == "CliffordReduced"
    with pytest.raises(ValidationError):
        default_domain("clifford", N=2)
    with pytest.raises(ValidationError):
        default_domain("torus")


def test_gap_table_small():
    t = gap_table([0.45, 0.7])
    r45, r70 = t.rows
    assert r45.a_family == "ground" and r45.gap > 0
    assert r70.degenerate and r70.a == pytest.approx(2 * np.pi**2 / (4 * 0.7), rel=1e-6)
    assert t.is_upper_bound and t.as_dict()["rows"][1]["degenerate"]
