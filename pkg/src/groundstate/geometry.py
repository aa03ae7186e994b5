"""Discretized domains with a symmetric stiffness matrix and lumped mass.

Sign convention: ``K`` is positive semidefinite and ``Lap u ~ -(K u) / mass``.
The energy of ``u`` is ``0.5 u.K.u + sum(mass * F(u))``.

One-dimensional reductions (sphere, ball, Clifford) use a vertex-centred
finite-volume scheme on a uniform grid ``x_i = a + i h`` with density ``w``:
face conductance ``w(x_{i+1/2}) / h`` and mass equal to the exact integral of
``w`` over the dual cell.  Neumann ends are natural.  Dirichlet ends are
imposed by pinning the end node to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import gamma, pi

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from . import _accel
from .errors import ValidationError

KINDS = ("SphereRadial", "BallRadial", "CliffordReduced", "BiAxial", "TriSphere")


def sphere_volume(N: int) -> float:
    """Volume of the unit N-sphere, beta_N."""
    return 2.0 * pi ** ((N + 1) / 2) / gamma((N + 1) / 2)


@dataclass(frozen=True, eq=False)
class LaplaceOperator:
    """Stiffness ``matrix``, lumped ``mass`` and the pinned (Dirichlet) node set."""

    matrix: sp.csr_matrix
    mass: np.ndarray
    bc: str
    boundary: np.ndarray
    tri: tuple[np.ndarray, np.ndarray] | None = None  # (diag, off) when tridiagonal

    @cached_property
    def free(self) -> np.ndarray:
        mask = np.ones(self.mass.size, dtype=bool)
        mask[self.boundary] = False
        return np.nonzero(mask)[0]

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = np.zeros(self.mass.size, dtype=bool)
        mask[self.free] = True
        return mask

    @property
    def size(self) -> int:
        return self.mass.size

    def stiffness_apply(self, u: np.ndarray) -> np.ndarray:
        if self.tri is not None:
            return _accel.tridiag_matvec(self.tri[1], self.tri[0], np.ascontiguousarray(u, dtype=float))
        return self.matrix @ u

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Discrete Laplacian of ``u``; zero on pinned nodes."""
        out = -self.stiffness_apply(u) / self.mass
        if self.boundary.size:
            out[self.boundary] = 0.0
        return out

    def free_block(self) -> sp.csr_matrix:
        f = self.free
        return self.matrix[f][:, f].tocsr()

    def shifted_solver(self, alpha: float, extra_diag: np.ndarray | None = None):
        """Return ``solve(rhs)`` for ``(diag(mass + extra) + alpha K) x = rhs`` on free nodes.

        ``rhs`` and the result are indexed by the free nodes only.
        """
        f = self.free
        d0 = self.mass[f].copy()
        if extra_diag is not None:
            d0 = d0 + extra_diag[f]
        if self.tri is not None and _contiguous(f):
            diag = d0 + alpha * self.tri[0][f]
            off = alpha * self.tri[1][f[0] : f[-1]]
            return lambda rhs: _accel.tridiag_solve(off, diag, np.ascontiguousarray(rhs, dtype=float))
        A = (sp.diags(d0) + alpha * self.free_block()).tocsc()
        lu = splu(A)
        return lu.solve


def _contiguous(idx: np.ndarray) -> bool:
    return idx.size > 0 and idx[-1] - idx[0] + 1 == idx.size


@dataclass(frozen=True, eq=False)
class Domain:
    kind: str
    params: dict
    nodes: np.ndarray
    volume_weights: np.ndarray
    boundary_nodes: np.ndarray
    diameter: float
    total_volume: float
    laplacian: LaplaceOperator
    spacing: float
    extra: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.volume_weights.size

    @property
    def mass(self) -> np.ndarray:
        return self.laplacian.mass

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params, "n_nodes": self.n_nodes}


# ---------------------------------------------------------------------------
# 1D reductions


def _cell_integrals(omega, x: np.ndarray) -> np.ndarray:
    """Integral of ``omega`` over each dual cell of the uniform grid ``x``."""
    h = x[1] - x[0]
    gx, gw = np.polynomial.legendre.leggauss(10)
    # right half-cells [x_i, x_i + h/2] and left half-cells [x_i - h/2, x_i]
    q = 0.25 * h * (gx + 1.0)
    right = (omega(x[:, None] + q[None, :]) @ gw) * 0.25 * h
    left = (omega(x[:, None] - q[None, :]) @ gw) * 0.25 * h
    m = right + left
    m[0] = right[0]
    m[-1] = left[-1]
    return m


def _radial_operator(omega, a: float, b: float, n: int, pinned=()) -> tuple[np.ndarray, LaplaceOperator]:
    if n < 2:
        raise ValidationError("need at least two intervals")
    x = np.linspace(a, b, n + 1)
    h = (b - a) / n
    kf = omega(0.5 * (x[:-1] + x[1:])) / h
    diag = np.zeros(n + 1)
    diag[:-1] += kf
    diag[1:] += kf
    off = -kf
    mass = _cell_integrals(omega, x)
    K = sp.diags([off, diag, off], [-1, 0, 1], format="csr")
    boundary = np.array(sorted(pinned), dtype=np.int64)
    op = LaplaceOperator(K, mass, "dirichlet" if boundary.size else "neumann", boundary, tri=(diag, off))
    return x, op


def _check_int(name, val, lo, hi=None):
    if int(val) != val or val < lo or (hi is not None and val > hi):
        rng = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise ValidationError(f"{name}={val} must be an integer {rng}")


def build_sphere_radial(N: int, n: int) -> tuple[Domain, LaplaceOperator]:
    """Zonal functions on S^N as functions of the polar angle on [0, pi]."""
    _check_int("N", N, 2)
    _check_int("n", n, 16)
    bN1 = sphere_volume(N - 1)
    omega = lambda t: bN1 * np.abs(np.sin(t)) ** (N - 1)
    x, op = _radial_operator(omega, 0.0, pi, int(n))
    dom = Domain(
        "SphereRadial",
        {"N": int(N), "n": int(n)},
        x,
        op.mass.copy(),
        np.array([], dtype=np.int64),
        pi,
        sphere_volume(N),
        op,
        pi / n,
    )
    return dom, op


def build_ball_radial(
    N: int, R_out: float, n: int, bc: str = "dirichlet", metric: str = "euclidean"
) -> tuple[Domain, LaplaceOperator]:
    """Radial functions on a Euclidean ball or a geodesic ball of S^N.

    ``metric="sphere"`` uses the density ``sin^{N-1} r`` of S^N (for N = 3 this
    is the ``sin^2 r`` geodesic ball of S^3).  N = 1 gives even functions on
    the interval ``(-R_out, R_out)``.
    """
    _check_int("N", N, 1)
    _check_int("n", n, 8)
    if bc not in ("dirichlet", "neumann"):
        raise ValidationError("bc must be 'dirichlet' or 'neumann'", op="build_ball_radial")
    if metric not in ("euclidean", "sphere"):
        raise ValidationError("metric must be 'euclidean' or 'sphere'", op="build_ball_radial")
    if not R_out > 0 or (metric == "sphere" and R_out > pi):
        raise ValidationError(f"R_out={R_out} out of range", op="build_ball_radial")
    cN = sphere_volume(N - 1) if N > 1 else 2.0
    if metric == "euclidean":
        omega = lambda r: cN * np.abs(r) ** (N - 1)
        vol = cN * R_out**N / N
        diam = 2.0 * R_out
    else:
        omega = lambda r: cN * np.abs(np.sin(r)) ** (N - 1)
        vol = spherical_cap_volume(N, R_out)
        diam = min(2.0 * R_out, pi)
    pinned = (int(n),) if bc == "dirichlet" else ()
    x, op = _radial_operator(omega, 0.0, float(R_out), int(n), pinned)
    dom = Domain(
        "BallRadial",
        {"N": int(N), "R_out": float(R_out), "n": int(n), "bc": bc, "metric": metric},
        x,
        op.mass.copy(),
        op.boundary.copy(),
        diam,
        vol,
        op,
        R_out / n,
    )
    return dom, op


def build_clifford_reduced(n: int, half: bool = False) -> tuple[Domain, LaplaceOperator]:
    """Functions on S^3 invariant under the torus action, as functions of s.

    A point is ``(cos s e^{ia}, sin s e^{ib})`` with ``s`` in [0, pi/2]; the
    level ``s = pi/4`` is the Clifford torus.  ``half=True`` keeps ``[0, pi/4]``
    with a Dirichlet node on the torus (``n`` still counts intervals of the
    full range, so the half grid matches the full one node for node).
    """
    _check_int("n", n, 32)
    if half and n % 2:
        raise ValidationError("n must be even for the half domain", op="build_clifford_reduced")
    omega = lambda s: 4.0 * pi**2 * np.cos(s) * np.sin(s)
    if half:
        x, op = _radial_operator(omega, 0.0, pi / 4, n // 2, pinned=(n // 2,))
        vol = pi**2
    else:
        x, op = _radial_operator(omega, 0.0, pi / 2, int(n))
        vol = 2.0 * pi**2
    dom = Domain(
        "CliffordReduced",
        {"n": int(n), "half": bool(half)},
        x,
        op.mass.copy(),
        op.boundary.copy(),
        pi,
        vol,
        op,
        (pi / 2) / n,
    )
    return dom, op


# ---------------------------------------------------------------------------
# bi-axial 2D reduction of S^3


def build_biaxial(n_rho: int, n_phi: int, quarter: bool = False) -> tuple[Domain, LaplaceOperator]:
    """Functions of ``(rho, phi)`` with ``x3 + i x4 = rho e^{i phi}``.

    The remaining circle ``x1 + i x2 = sqrt(1 - rho^2) e^{i psi}`` is integrated
    out.  Rho is cell centred (``rho_i = (i + 1/2) d_rho``), so the axis and
    the degenerate rim never carry a node.  ``n_phi`` counts nodes on the full
    circle and must be a multiple of 4.  ``quarter=True`` keeps
    ``phi`` in [0, pi/2] with Dirichlet rows on both edges (the set
    ``{x3 > 0, x4 > 0}``).
    """
    _check_int("n_rho", n_rho, 24)
    _check_int("n_phi", n_phi, 24)
    if n_phi % 4:
        raise ValidationError("n_phi must be a multiple of 4", op="build_biaxial")
    dr = 1.0 / n_rho
    dphi = 2.0 * pi / n_phi
    rho = (np.arange(n_rho) + 0.5) * dr
    m = n_phi // 4
    if quarter:
        nj = m + 1
        jw = np.ones(nj)
        jw[0] = jw[-1] = 0.5
    else:
        nj = n_phi
        jw = np.ones(nj)
    idx = np.arange(n_rho * nj).reshape(n_rho, nj)
    mass = (2.0 * pi * rho * dr * dphi)[:, None] * jw[None, :]

    rows, cols, vals = [], [], []

    def couple(a, b, w):
        rows.extend([a, b, a, b])
        cols.extend([b, a, a, b])
        vals.extend([-w, -w, w, w])

    rf = rho[:-1] + 0.5 * dr
    wr = 2.0 * pi * rf * (1.0 - rf**2) * dphi / dr
    wr = wr[:, None] * jw[None, :]
    couple(idx[:-1].ravel(), idx[1:].ravel(), wr.ravel())
    wphi = np.broadcast_to((2.0 * pi * dr / (rho * dphi))[:, None], (n_rho, nj))
    if quarter:
        couple(idx[:, :-1].ravel(), idx[:, 1:].ravel(), wphi[:, :-1].ravel())
    else:
        couple(idx.ravel(), np.roll(idx, -1, axis=1).ravel(), wphi.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(idx.size, idx.size)
    ).tocsr()
    K.sum_duplicates()
    boundary = np.sort(np.concatenate([idx[:, 0], idx[:, -1]])) if quarter else np.array([], dtype=np.int64)
    op = LaplaceOperator(K, mass.ravel(), "dirichlet" if quarter else "neumann", boundary.astype(np.int64))
    phi = np.arange(nj) * dphi
    R, P = np.meshgrid(rho, phi, indexing="ij")
    nodes = np.column_stack([R.ravel(), P.ravel()])
    dom = Domain(
        "BiAxial",
        {"n_rho": int(n_rho), "n_phi": int(n_phi), "quarter": bool(quarter)},
        nodes,
        op.mass.copy(),
        op.boundary.copy(),
        pi,
        float(mass.sum()),
        op,
        max(dr, dphi),
        extra={"shape": (n_rho, nj), "rho": rho, "phi": phi, "d_rho": dr, "d_phi": dphi},
    )
    return dom, op


# ---------------------------------------------------------------------------
# triangulated S^2


def icosahedron() -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + 5**0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1)[:, None], f


def subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One midpoint refinement, new vertices projected to the sphere."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1)[:, None]
    nv = len(verts)
    nf = len(faces)
    ab, bc, ca = (nv + inv[:nf]), (nv + inv[nf : 2 * nf]), (nv + inv[2 * nf :])
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new = np.concatenate(
        [np.column_stack([a, ab, ca]), np.column_stack([b, bc, ab]), np.column_stack([c, ca, bc]), np.column_stack([ab, bc, ca])]
    )
    return np.vstack([verts, mid]), new


def mirror_normals() -> np.ndarray:
    """Unit normals of the 15 mirror planes of the base icosahedron."""
    v, f = icosahedron()
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e.sort(axis=1)
    e = np.unique(e, axis=0)
    mids = v[e[:, 0]] + v[e[:, 1]]
    mids /= np.linalg.norm(mids, axis=1)[:, None]
    out: list[np.ndarray] = []
    for m in mids:
        if not any(abs(abs(m @ o) - 1.0) < 1e-9 for o in out):
            out.append(m)
    return np.array(out)


def reflect(points: np.ndarray, normal: np.ndarray) -> np.ndarray:
    return points - 2.0 * np.outer(points @ normal, normal)


def build_trisphere(subdiv: int) -> tuple[Domain, LaplaceOperator]:
    """Icosphere with cotangent stiffness and lumped (area/3) mass.

    ``volume_weights`` are the equal weights ``4 pi / n``: on this symmetric
    node set they integrate low-degree polynomials exactly and make sorting
    based rearrangements exact permutations.
    """
    _check_int("subdiv", subdiv, 2, 7)
    v, f = icosahedron()
    for _ in range(int(subdiv)):
        v, f = subdivide(v, f)
    rows, cols, vals, area = _accel.cotan_assembly(np.ascontiguousarray(v), np.ascontiguousarray(f))
    n = len(v)
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    op = LaplaceOperator(K, np.asarray(area), "neumann", np.array([], dtype=np.int64))
    normals = mirror_normals()
    tree = cKDTree(v)
    perms = []
    for nrm in normals:
        dist, perm = tree.query(reflect(v, nrm))
        if dist.max() > 1e-9:
            raise RuntimeError("icosphere lost its mirror symmetry")
        perms.append(perm.astype(np.int64))
    h = float(np.mean(np.linalg.norm(v[f[:, 0]] - v[f[:, 1]], axis=1)))
    dom = Domain(
        "TriSphere",
        {"subdiv": int(subdiv)},
        v,
        np.full(n, 4.0 * pi / n),
        np.array([], dtype=np.int64),
        pi,
        4.0 * pi,
        op,
        h,
        extra={"faces": f, "mirror_normals": normals, "mirror_perms": np.array(perms), "kdtree": tree},
    )
    return dom, op


# ---------------------------------------------------------------------------
# caps


def spherical_cap_volume(N: int, r: float) -> float:
    """Volume of a geodesic ball of radius ``r`` in S^N."""
    _check_int("N", N, 1)
    if not 0.0 <= r <= pi:
        raise ValidationError(f"r={r} outside [0, pi]", op="spherical_cap_volume")
    c = sphere_volume(N - 1) if N > 1 else 2.0
    val, _ = quad(lambda t: np.sin(t) ** (N - 1), 0.0, r, epsabs=1e-14, epsrel=1e-13)
    return c * val


def cap_radius(N: int, v: float) -> float:
    """Inverse of :func:`spherical_cap_volume`."""
    total = sphere_volume(N)
    if not 0.0 <= v <= total * (1 + 1e-14):
        raise ValidationError(f"v={v} outside [0, {total}]", op="cap_radius")
    if v <= 0.0:
        return 0.0
    if v >= total:
        return pi
    return brentq(lambda r: spherical_cap_volume(N, r) - v, 0.0, pi, xtol=1e-15, rtol=1e-15)


# ---------------------------------------------------------------------------
# export


def export_mesh(dom: Domain, path) -> None:
    """Node/element text format: ``# nodes`` block (coords + weight), ``# elements`` block."""
    nodes = np.atleast_2d(dom.nodes.T).T if dom.nodes.ndim == 1 else dom.nodes
    with open(path, "w") as fh:
        fh.write(f"# nodes {dom.n_nodes}\n")
        for row, w in zip(nodes, dom.volume_weights):
            fh.write(" ".join(f"{c:.17g}" for c in np.atleast_1d(row)) + f" {w:.17g}\n")
        if dom.kind == "TriSphere":
            faces = dom.extra["faces"]
        elif dom.nodes.ndim == 1:
            faces = np.column_stack([np.arange(dom.n_nodes - 1), np.arange(1, dom.n_nodes)])
        else:
            faces = np.zeros((0, 3), dtype=int)
        fh.write(f"# elements {len(faces)}\n")
        for el in faces:
            fh.write(" ".join(str(int(i)) for i in el) + "\n")


def build_domain(spec: str, **kw) -> Domain:
    """Named domain presets used by the CLI and config files.

    ``sphere3`` / ``sphere3-radial`` / ``sphereN-radial``, ``clifford``,
    ``biaxial``, ``trisphere``, ``ball3-geodesic``.
    """
    s = spec.lower()
    n = int(kw.get("n", 400))
    if s.startswith("sphere"):
        N = int(s[6:].split("-")[0] or 3)
        return build_sphere_radial(N, n)[0]
    if s == "clifford":
        return build_clifford_reduced(n)[0]
    if s == "biaxial":
        return build_biaxial(int(kw.get("n_rho", 48)), int(kw.get("n_phi", 96)), bool(kw.get("quarter", False)))[0]
    if s == "trisphere":
        return build_trisphere(int(kw.get("subdiv", 4)))[0]
    if s.startswith("ball"):
        N = int(s[4:].split("-")[0] or 3)
        metric = "sphere" if "geodesic" in s else "euclidean"
        return build_ball_radial(N, float(kw.get("radius", pi / 2)), n, kw.get("bc", "dirichlet"), metric)[0]
    raise ValidationError(f"unknown domain {spec!r}", op="build_domain")
