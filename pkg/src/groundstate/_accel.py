"""Hot kernels with a numba path and a pure numpy/scipy fallback.

The backend is picked once at import time.  Set ``GROUNDSTATE_DISABLE_NUMBA=1``
to force the fallback (also used when numba is not importable).
"""

import os

import numpy as np
from scipy.linalg import solve_banded

_DISABLED = os.environ.get("GROUNDSTATE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy / scipy reference implementations

def _tridiag_solve_np(off, diag, rhs):
    ab = np.empty((3, diag.size))
    ab[0, 0] = 0.0
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _tridiag_matvec_np(off, diag, x):
    y = diag * x
    y[:-1] += off * x[1:]
    y[1:] += off * x[:-1]
    return y


def _cotan_assembly_np(verts, faces):
    rows, cols, vals = [], [], []
    area = np.zeros(len(verts))
    for k in range(3):
        i = faces[:, k]
        j = faces[:, (k + 1) % 3]
        o = faces[:, (k + 2) % 3]
        e1 = verts[i] - verts[o]
        e2 = verts[j] - verts[o]
        cot = np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1)
        w = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    tri_area = 0.5 * np.linalg.norm(
        np.cross(verts[faces[:, 1]] - verts[faces[:, 0]], verts[faces[:, 2]] - verts[faces[:, 0]]), axis=1
    )
    for k in range(3):
        np.add.at(area, faces[:, k], tri_area / 3.0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), area


def _polarize_np(values, partner, inside):
    out = values.copy()
    idx = np.nonzero(partner >= 0)[0]
    a = values[idx]
    b = values[partner[idx]]
    out[idx] = np.where(inside[idx], np.maximum(a, b), np.minimum(a, b))
    return out


# ---------------------------------------------------------------------------
# numba kernels

if HAS_NUMBA:

    @njit(cache=True)
    def _tridiag_solve_nb(off, diag, rhs):
        # Thomas algorithm for a symmetric tridiagonal system
        n = diag.size
        c = np.empty(n)
        x = np.empty(n)
        beta = diag[0]
        x[0] = rhs[0] / beta
        for i in range(1, n):
            c[i] = off[i - 1] / beta
            beta = diag[i] - off[i - 1] * c[i]
            x[i] = (rhs[i] - off[i - 1] * x[i - 1]) / beta
        for i in range(n - 2, -1, -1):
            x[i] -= c[i + 1] * x[i + 1]
        return x

    @njit(cache=True)
    def _tridiag_matvec_nb(off, diag, x):
        n = diag.size
        y = np.empty(n)
        for i in range(n):
            s = diag[i] * x[i]
            if i > 0:
                s += off[i - 1] * x[i - 1]
            if i < n - 1:
                s += off[i] * x[i + 1]
            y[i] = s
        return y

    @njit(cache=True)
    def _cotan_assembly_nb(verts, faces):
        # scalar arithmetic only; small temporaries would dominate the loop
        nf = faces.shape[0]
        rows = np.empty(12 * nf, dtype=np.int64)
        cols = np.empty(12 * nf, dtype=np.int64)
        vals = np.empty(12 * nf)
        area = np.zeros(verts.shape[0])
        p = 0
        for f in range(nf):
            for k in range(3):
                i = faces[f, k]
                j = faces[f, (k + 1) % 3]
                o = faces[f, (k + 2) % 3]
                ax = verts[i, 0] - verts[o, 0]
                ay = verts[i, 1] - verts[o, 1]
                az = verts[i, 2] - verts[o, 2]
                bx = verts[j, 0] - verts[o, 0]
                by = verts[j, 1] - verts[o, 1]
                bz = verts[j, 2] - verts[o, 2]
                cx = ay * bz - az * by
                cy = az * bx - ax * bz
                cz = ax * by - ay * bx
                w = 0.5 * (ax * bx + ay * by + az * bz) / np.sqrt(cx * cx + cy * cy + cz * cz)
                rows[p] = i; cols[p] = j; vals[p] = -w; p += 1
                rows[p] = j; cols[p] = i; vals[p] = -w; p += 1
                rows[p] = i; cols[p] = i; vals[p] = w; p += 1
                rows[p] = j; cols[p] = j; vals[p] = w; p += 1
            a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
            ax = verts[b, 0] - verts[a, 0]
            ay = verts[b, 1] - verts[a, 1]
            az = verts[b, 2] - verts[a, 2]
            bx = verts[c, 0] - verts[a, 0]
            by = verts[c, 1] - verts[a, 1]
            bz = verts[c, 2] - verts[a, 2]
            cx = ay * bz - az * by
            cy = az * bx - ax * bz
            cz = ax * by - ay * bx
            ta = 0.5 * np.sqrt(cx * cx + cy * cy + cz * cz) / 3.0
            area[a] += ta
            area[b] += ta
            area[c] += ta
        return rows, cols, vals, area

    @njit(cache=True)
    def _polarize_nb(values, partner, inside):
        out = values.copy()
        for i in range(values.size):
            j = partner[i]
            if j >= 0:
                a = values[i]
                b = values[j]
                if inside[i]:
                    out[i] = a if a > b else b
                else:
                    out[i] = a if a < b else b
        return out

    tridiag_solve = _tridiag_solve_nb
    tridiag_matvec = _tridiag_matvec_nb
    cotan_assembly = _cotan_assembly_nb
    polarize_kernel = _polarize_nb
else:
    tridiag_solve = _tridiag_solve_np
    tridiag_matvec = _tridiag_matvec_np
    cotan_assembly = _cotan_assembly_np
    polarize_kernel = _polarize_np


# Reference versions stay importable so tests and the benchmark can compare paths.
reference = {
    "tridiag_solve": _tridiag_solve_np,
    "tridiag_matvec": _tridiag_matvec_np,
    "cotan_assembly": _cotan_assembly_np,
    "polarize_kernel": _polarize_np,
}
