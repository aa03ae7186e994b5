import json
import os
import subprocess
import sys

import numpy as np
import pytest

from groundstate import _accel
from groundstate.geometry import icosahedron, subdivide

ref = _accel.reference


def _tri(rng, n):
    off = -rng.uniform(0.1, 1.0, n - 1)
    diag = np.abs(np.concatenate([off, [0]])) + np.abs(np.concatenate([[0], off])) + rng.uniform(0.1, 1.0, n)
    return off, diag


@pytest.mark.parametrize("n", [2, 17, 500])
def test_tridiag_solve_matches_reference(rng, n):
    off, diag = _tri(rng, n)
    b = rng.standard_normal(n)
    x = _accel.tridiag_solve(off, diag, b)
    assert np.allclose(x, ref["tridiag_solve"](off, diag, b), rtol=1e-12, atol=1e-12)
    assert np.allclose(_accel.tridiag_matvec(off, diag, x), b, atol=1e-10)


def test_tridiag_matvec_matches_reference(rng):
    off, diag = _tri(rng, 300)
    x = rng.standard_normal(300)
    assert np.allclose(_accel.tridiag_matvec(off, diag, x), ref["tridiag_matvec"](off, diag, x.copy()))


def test_cotan_assembly_matches_reference():
    v, f = icosahedron()
    for _ in range(2):
        v, f = subdivide(v, f)
    a = _accel.cotan_assembly(v, f)
    b = ref["cotan_assembly"](v, f)
    import scipy.sparse as sp

    n = len(v)
    Ka = sp.coo_matrix((a[2], (a[0], a[1])), shape=(n, n)).tocsr()
    Kb = sp.coo_matrix((b[2], (b[0], b[1])), shape=(n, n)).tocsr()
    assert abs(Ka - Kb).max() < 1e-12
    assert np.allclose(a[3], b[3])


def test_polarize_kernel_matches_reference(rng):
    n = 200
    vals = rng.standard_normal(n)
    partner = rng.permutation(n).astype(np.int64)
    partner[rng.random(n) < 0.2] = -1
    inside = rng.random(n) < 0.5
    assert np.array_equal(_accel.polarize_kernel(vals, partner, inside), ref["polarize_kernel"](vals, partner, inside))


def test_backend_flag_selects_numpy():
    env = dict(os.environ, GROUNDSTATE_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "import groundstate._accel as a; print(a.BACKEND, a.tridiag_solve is a.reference['tridiag_solve'])"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.split() == ["numpy", "True"]


def test_fallback_gives_same_ground_state():
    # same solve under both backends agrees to solver tolerance
    code = (
        "from groundstate.bifurcation import solve_member;"
        "from groundstate.geometry import build_sphere_radial;"
        "import json;"
        "u = solve_member('ground', 0.4, build_sphere_radial(3, 200)[0]);"
        "print(json.dumps(u.values.tolist()))"
    )
    vals = []
    for flag in ("0", "1"):
        env = dict(os.environ, GROUNDSTATE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
        vals.append(np.array(json.loads(out.stdout)))
    assert np.max(np.abs(vals[0] - vals[1])) < 1e-9
