import json

import numpy as np
import pytest

from groundstate.errors import NotStableEndpoint, ValidationError
from groundstate.field import Field
from groundstate.mountainpass import (
    MIN_SAMPLES,
    build_optimal_path,
    first_eigenfunction,
    initial_path,
    minmax_deform,
    verify_optimal,
)
from groundstate.potential import allen_cahn


def _seed(dom):
    return Field(np.cos(dom.nodes), dom)


def test_initial_path_shape(s3_coarse, ac04):
    p = initial_path(-1.0, 1.0, _seed(s3_coarse), s3_coarse, 21, pot=ac04)
    assert p.m == 21 and p.t[0] == -1.0 and p.t[-1] == 1.0
    assert np.all(p.U[0] == -1.0) and np.all(p.U[-1] == 1.0)
    assert np.allclose(p.sample_at(0.0).values, np.cos(s3_coarse.nodes))


def test_initial_path_validation(s3_coarse, ac04):
    with pytest.raises(ValidationError):
        initial_path(-1.0, 1.0, None, s3_coarse, MIN_SAMPLES - 1)
    with pytest.raises(ValidationError):
        initial_path(-1.0, 1.0, _seed(s3_coarse), s3_coarse, 20)
    with pytest.raises(ValidationError):
        initial_path(1.0, -1.0, None, s3_coarse, 21)
    with pytest.raises(NotStableEndpoint):
        initial_path(0.0, 1.0, None, s3_coarse, 21, pot=ac04)


@pytest.fixture(scope="module")
def mp04(s3):
    pot = allen_cahn(0.4)
    p = initial_path(-1.0, 1.0, _seed(s3), s3, 33, pot=pot)
    return minmax_deform(p, pot, iters=2000, tol=1e-8, check_index=True)


def test_minmax_level_and_polish(mp04, ground04, ac04):
    from groundstate.field import energy

    E = energy(ground04, ac04).energy
    assert abs(mp04.level - E) / E < 5e-3
    assert mp04.polished_residual < 1e-8 and mp04.converged
    assert mp04.polished_energy == pytest.approx(E, rel=1e-9)
    assert mp04.peak_morse_index == 1 and not mp04.high_index


def test_minmax_history_non_increasing(mp04):
    h = np.asarray(mp04.max_history)
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))


def test_path_export(tmp_path, mp04, ac04):
    mp04.path.export(tmp_path / "path", ac04)
    meta = json.loads((tmp_path / "path" / "path.json").read_text())
    assert len(meta["t"]) == mp04.path.m == len(list((tmp_path / "path").glob("sample_*.csv")))


def test_first_eigenfunction_positive(ground04, ac04):
    phi = first_eigenfunction(ground04, ac04)
    assert phi.max() == pytest.approx(1.0) and np.all(phi > 0)


def test_optimal_path_ground(ground04, ac04):
    path = build_optimal_path(ground04, ac04)
    chk = verify_optimal(path, ac04, ground04)
    assert chk.ok, chk.reason
    E = path.energies(ac04)
    assert np.argmax(E) == int(np.argmin(np.abs(path.t)))


def test_straight_line_not_optimal(s3, ground04, ac04):
    p = initial_path(-1.0, 1.0, None, s3, 33)
    chk = verify_optimal(p, ac04, ground04)
    assert not chk
    assert "a" in chk.reason
