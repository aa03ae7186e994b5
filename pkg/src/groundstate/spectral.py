"""Linearized operator ``L_u = -Lap + f'(u)``: eigenpairs, Morse index, nullity.

Eigenvalues are reported times ``pot.scale`` (``eps^2`` for Allen-Cahn), i.e.
for ``-eps^2 Lap + W''(u)``.  Radial problems on S^N are split into angular
blocks: block ``l`` adds ``l (l + N - 2) / sin^2(theta)`` and pins both poles.
Torus-invariant fields on S^3 split into Fourier blocks ``(j, k)`` and
bi-axial fields into circle modes ``j``; in all three cases the blocks give
the complete spectrum on S^N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import EigensolverNoConvergence, ValidationError
from .field import Field
from .geometry import Domain
from .potential import Potential


@dataclass(frozen=True)
class ModeSpectrum:
    ell: int
    angular_eigenvalue: float
    multiplicity: int
    radial_eigenvalues: np.ndarray
    radial_vectors: np.ndarray = field(repr=False, default=None)


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenfields: list[Field]
    morse_index: int
    nullity: int
    zero_tol: float
    modes: list[ModeSpectrum] = field(default_factory=list)
    labels: list = field(default_factory=list)

    def to_json(self) -> str:
        d = {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "index": self.morse_index,
            "nullity": self.nullity,
            "zero_tol": self.zero_tol,
            "modes": [
                {
                    "mode": m.ell,
                    "multiplicity": m.multiplicity,
                    "angular_eigenvalue": m.angular_eigenvalue,
                    "radial_eigenvalues": [float(x) for x in m.radial_eigenvalues],
                }
                for m in self.modes
            ],
        }
        return json.dumps(d, indent=2)


# ---------------------------------------------------------------------------
# core generalized eigensolver


def lowest_eigenpairs(
    dom: Domain,
    q: np.ndarray,
    k: int,
    extra: np.ndarray | None = None,
    pin: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenpairs of ``(K + M diag(q + extra)) v = lam M v``.

    Pinned nodes are the domain's Dirichlet nodes plus ``pin``.  Returned
    vectors live on all nodes (zero on pinned ones) and are M-orthonormal.
    """
    op = dom.laplacian
    n = op.size
    mask = op.free_mask.copy()
    if pin is not None and len(pin):
        mask[np.asarray(pin, dtype=np.int64)] = False
    idx = np.nonzero(mask)[0]
    k = int(min(k, idx.size))
    if k < 1:
        raise ValidationError("need k >= 1", op="lowest_eigenpairs")
    qq = np.asarray(q, dtype=float) + (0.0 if extra is None else extra)
    m = op.mass[idx]
    vecs = np.zeros((n, k))
    if op.tri is not None and idx[-1] - idx[0] + 1 == idx.size:
        diag, off = op.tri
        s = 1.0 / np.sqrt(m)
        d = diag[idx] * s * s + qq[idx]
        e = off[idx[0] : idx[-1]] * s[:-1] * s[1:]
        lam, y = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
        vecs[idx] = y * s[:, None]
    else:
        K = op.matrix[idx][:, idx]
        A = (K + sp.diags(m * qq[idx])).tocsc()
        Mm = sp.diags(m).tocsc()
        sigma = float(np.min(qq[idx])) - 1.0
        v0 = np.random.default_rng(seed).standard_normal(idx.size)
        try:
            if idx.size <= 400:
                from scipy.linalg import eigh

                lam, y = eigh(A.toarray(), np.diag(m), subset_by_index=(0, k - 1))
            else:
                # Lanczos can drop copies of a degenerate eigenvalue; ask for spares
                kk = min(max(2 * k, k + 10), idx.size - 1)
                lam, y = eigsh(A, k=kk, M=Mm, sigma=sigma, which="LM", v0=v0, tol=1e-12, maxiter=5000)
        except ArpackNoConvergence as exc:
            raise EigensolverNoConvergence(str(exc), op="spectrum") from exc
        order = np.argsort(lam)[:k]
        lam, y = lam[order], y[:, order]
        vecs[idx] = y
    # fix signs for determinism
    for j in range(k):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] *= -1.0
    return np.asarray(lam), vecs


def rayleigh_quotient(dom: Domain, q: np.ndarray, v: np.ndarray, extra: np.ndarray | None = None) -> float:
    qq = q + (0.0 if extra is None else extra)
    num = v @ dom.laplacian.stiffness_apply(v) + np.sum(dom.mass * qq * v * v)
    return float(num / np.sum(dom.mass * v * v))


# ---------------------------------------------------------------------------
# blocks


def harmonic_multiplicity(ell: int, N: int) -> int:
    """Dimension of degree-``ell`` spherical harmonics on S^{N-1}."""
    if ell < 0:
        return 0
    if N == 2:
        return 1 if ell == 0 else 2
    return comb(ell + N - 1, N - 1) - comb(ell + N - 3, N - 1)


def _sphere_block(dom: Domain, ell: int):
    N = dom.params["N"]
    th = dom.nodes
    n = th.size
    if ell == 0:
        return None, None
    lam = ell * (ell + N - 2)
    extra = np.zeros(n)
    extra[1:-1] = lam / np.sin(th[1:-1]) ** 2
    return extra, np.array([0, n - 1])


def _clifford_block(dom: Domain, j: int, k: int):
    s = dom.nodes
    n = s.size
    extra = np.zeros(n)
    pin = []
    c2, s2 = np.cos(s) ** 2, np.sin(s) ** 2
    inner = np.ones(n, dtype=bool)
    if k:
        pin.append(0)
        inner[0] = False
    if j and dom.params["n"] == n - 1:
        pin.append(n - 1)
        inner[-1] = False
    if j:
        extra[inner] += j * j / c2[inner]
    if k:
        extra[inner] += k * k / s2[inner]
    return extra, np.array(pin, dtype=np.int64)


def _biaxial_block(dom: Domain, j: int):
    rho = dom.nodes[:, 0]
    return j * j / (1.0 - rho**2), None


def _clifford_mult(j: int, k: int) -> int:
    return (1 if j == 0 else 2) * (1 if k == 0 else 2)


# ---------------------------------------------------------------------------
# zero tolerance


_ZT_CACHE: dict[tuple, float] = {}


def grid_zero_tol(dom: Domain) -> float:
    """Ten times the discrete error of a known eigenvalue on this grid (unscaled)."""
    key = (dom.kind, tuple(sorted(dom.params.items())))
    if key in _ZT_CACHE:
        return _ZT_CACHE[key]
    z = np.zeros(dom.n_nodes)
    if dom.kind == "SphereRadial":
        extra, pin = _sphere_block(dom, 1)
        lam, _ = lowest_eigenpairs(dom, z, 1, extra, pin)
        err = abs(lam[0] - dom.params["N"])
    elif dom.kind == "BallRadial" and dom.params["metric"] == "sphere" and dom.params["N"] == 3 and dom.params["bc"] == "dirichlet":
        lam, _ = lowest_eigenpairs(dom, z, 1)
        err = abs(lam[0] - ((np.pi / dom.params["R_out"]) ** 2 - 1.0))
    elif dom.kind == "BallRadial" and dom.params["metric"] == "euclidean" and dom.params["N"] == 1 and dom.params["bc"] == "dirichlet":
        lam, _ = lowest_eigenpairs(dom, z, 1)
        err = abs(lam[0] - (np.pi / (2 * dom.params["R_out"])) ** 2)
    elif dom.kind == "CliffordReduced":
        if dom.params["half"]:
            lam, _ = lowest_eigenpairs(dom, z, 1)
            err = abs(lam[0] - 8.0)
        else:
            extra, pin = _clifford_block(dom, 1, 0)
            lam, _ = lowest_eigenpairs(dom, z, 1, extra, pin)
            err = abs(lam[0] - 3.0)
    elif dom.kind == "BiAxial":
        lam, _ = lowest_eigenpairs(dom, z, 2)
        err = abs(lam[0] - 8.0) if dom.params["quarter"] else abs(lam[1] - 3.0)
        if not dom.params["quarter"]:
            # the j = 1 block converges only at first order (sqrt(1 - rho^2) profile),
            # so its error enters with a smaller safety factor
            extra, _ = _biaxial_block(dom, 1)
            lam1, _ = lowest_eigenpairs(dom, z, 1, extra)
            err = max(err, 0.2 * abs(lam1[0] - 3.0))
    elif dom.kind == "TriSphere":
        lam, _ = lowest_eigenpairs(dom, z, 2)
        err = abs(lam[1] - 2.0)
    else:
        lam, _ = lowest_eigenpairs(dom, z, 1)
        err = 1e-6 * max(1.0, abs(lam[0]))
    tol = 10.0 * max(err, 1e-12)
    _ZT_CACHE[key] = tol
    return tol


# ---------------------------------------------------------------------------
# public operations


def _count(eigs: np.ndarray, mult: np.ndarray, zt: float) -> tuple[int, int]:
    neg = int(np.sum(mult[eigs < -zt]))
    nul = int(np.sum(mult[np.abs(eigs) <= zt]))
    return neg, nul


def mode_spectrum(u_radial: Field, pot: Potential, ell_max: int, k: int = 6) -> list[ModeSpectrum]:
    """Per-block radial eigenvalues for a zonal field on SphereRadial(N, n)."""
    dom = u_radial.domain
    if dom.kind != "SphereRadial":
        raise ValidationError("mode_spectrum needs a SphereRadial field", op="mode_spectrum")
    if not 0 <= ell_max <= 10:
        raise ValidationError("ell_max must be in [0, 10]", op="mode_spectrum")
    N = dom.params["N"]
    q = pot.fp(u_radial.values)
    out = []
    for ell in range(ell_max + 1):
        extra, pin = _sphere_block(dom, ell)
        lam, vec = lowest_eigenpairs(dom, q, k, extra, pin)
        out.append(ModeSpectrum(ell, float(ell * (ell + N - 2)), harmonic_multiplicity(ell, N), lam * pot.scale, vec))
    return out


def _kth(vals, mults, k: int) -> float:
    """k-th smallest value counting multiplicities (inf if fewer)."""
    if not vals:
        return np.inf
    order = np.argsort(vals)
    c = np.cumsum(np.asarray(mults)[order])
    j = int(np.searchsorted(c, k))
    return float(np.asarray(vals)[order][j]) if j < c.size else np.inf


def _block_spectrum(dom, q, pot, k, zt, grow):
    """Evaluate blocks in order of their lower bound.

    ``grow(i)`` yields ``(label, mult, extra, pin, angular, bound)`` where
    ``bound`` is a lower bound for every eigenvalue of block ``i`` and all
    later ones (unscaled).  Blocks stop once that bound exceeds both ``zt``
    and the ``k``-th smallest eigenvalue found so far (with multiplicity),
    so the count and the listed eigenvalues are both complete.
    """
    qmin = float(np.min(q))
    modes: list[ModeSpectrum] = []
    all_e, all_m, all_lab, all_v = [], [], [], []
    i = 0
    while i < 200:
        label, mult, extra, pin, ang, bound = grow(i)
        if i >= 2 and (bound + qmin) * pot.scale > max(zt, _kth(all_e, all_m, k)):
            break
        lam, vec = lowest_eigenpairs(dom, q, k, extra, pin)
        lam_s = lam * pot.scale
        modes.append(ModeSpectrum(label, ang, mult, lam_s, vec))
        for j in range(lam.size):
            all_e.append(lam_s[j])
            all_m.append(mult)
            all_lab.append((label, j))
            all_v.append(vec[:, j])
        i += 1
    e = np.array(all_e)
    mlt = np.array(all_m)
    order = np.argsort(e, kind="stable")
    return modes, e[order], mlt[order], [all_lab[j] for j in order], [all_v[j] for j in order]


def spectrum(
    u: Field,
    pot: Potential,
    k: int = 10,
    zero_tol: float | None = None,
    seed: int = 0,
    use_modes: bool = True,
) -> SpectrumReport:
    """Lowest eigenpairs of the linearization, with index and nullity.

    On SphereRadial, CliffordReduced (full) and BiAxial (full) the count is
    taken over all angular blocks whose lower bound is below the zero
    tolerance, so it is the Morse index on the whole sphere.  The listed
    ``eigenvalues`` expand multiplicities and keep the lowest ``k``.
    """
    if k > 50:
        raise ValidationError("k must be <= 50", op="spectrum")
    dom = u.domain
    q = pot.fp(u.values)
    zt = (grid_zero_tol(dom) if zero_tol is None else zero_tol / pot.scale) * pot.scale
    kk = max(k, 4)
    grow = None
    if use_modes and dom.kind == "SphereRadial":
        N = dom.params["N"]

        def grow(i):
            extra, pin = _sphere_block(dom, i)
            ang = float(i * (i + N - 2))
            return i, harmonic_multiplicity(i, N), extra, pin, ang, ang

    elif use_modes and dom.kind == "CliffordReduced" and not dom.params["half"]:
        # (j, k) blocks sorted by j + k, which bounds j^2/cos^2 + k^2/sin^2 from below
        order = sorted(((j, kq) for j in range(60) for kq in range(60)), key=lambda p: (p[0] + p[1], p[0]))

        def grow(i):
            j, kq = order[i]
            extra, pin = _clifford_block(dom, j, kq)
            return (j, kq), _clifford_mult(j, kq), extra, pin, float(j * j + kq * kq), float((j + kq) ** 2)

    elif use_modes and dom.kind == "BiAxial" and not dom.params["quarter"]:

        def grow(i):
            extra, pin = _biaxial_block(dom, i)
            return i, (1 if i == 0 else 2), extra, pin, float(i * i), float(i * i)

    if grow is not None:
        modes, e, mlt, labels, vecs = _block_spectrum(dom, q, pot, kk, zt, grow)
        idx, nul = _count(e, mlt, zt)
        ev, ef, lab = [], [], []
        for val, mm, lb, v in zip(e, mlt, labels, vecs):
            for _ in range(mm):
                if len(ev) < k:
                    ev.append(val)
                    ef.append(Field(v, dom))
                    lab.append(lb)
        return SpectrumReport(np.array(ev), ef, idx, nul, zt, modes, lab)

    lam, vec = lowest_eigenpairs(dom, q, kk, seed=seed)
    lam_s = lam * pot.scale
    # enlarge until the window contains a positive eigenvalue
    while lam_s[-1] <= zt and kk < min(50, dom.laplacian.free.size):
        kk = min(2 * kk, 50, dom.laplacian.free.size)
        lam, vec = lowest_eigenpairs(dom, q, kk, seed=seed)
        lam_s = lam * pot.scale
    idx, nul = _count(lam_s, np.ones(lam_s.size, dtype=int), zt)
    kk2 = min(k, lam_s.size)
    return SpectrumReport(
        lam_s[:kk2], [Field(vec[:, j], dom) for j in range(kk2)], idx, nul, zt, [], list(range(kk2))
    )


def rayleigh_consistency(report: SpectrumReport, u: Field, pot: Potential) -> float:
    """Largest relative mismatch between reported eigenvalues and Rayleigh quotients."""
    dom = u.domain
    q = pot.fp(u.values)
    worst = 0.0
    for lam, phi, lab in zip(report.eigenvalues, report.eigenfields, report.labels):
        extra = None
        if report.modes and isinstance(lab, tuple):
            blk = lab[0]
            if dom.kind == "SphereRadial":
                extra, _ = _sphere_block(dom, blk)
            elif dom.kind == "CliffordReduced":
                extra, _ = _clifford_block(dom, *blk)
            elif dom.kind == "BiAxial":
                extra, _ = _biaxial_block(dom, blk)
        rq = rayleigh_quotient(dom, q, phi.values, extra) * pot.scale
        worst = max(worst, abs(rq - lam) / max(abs(lam), 1e-300 + abs(pot.scale)))
    return worst


def laplace_spectrum(dom: Domain, k: int = 10) -> SpectrumReport:
    """Eigenvalues of ``-Lap`` on the domain (all blocks where available)."""
    from .potential import Potential as _P

    zero = _P(lambda t: 0.0 * t, lambda t: 0.0 * t, lambda t: 0.0 * t, name="zero")
    return spectrum(Field(np.zeros(dom.n_nodes), dom), zero, k=k)


def constant_stability(c: float, pot: Potential, dom: Domain, k: int = 10) -> SpectrumReport:
    """Spectrum of the constant ``c``: ``lambda_k(dom) + f'(c)`` (scaled)."""
    if abs(float(pot.f(c))) > 1e-8 * max(1.0, abs(float(pot.fp(c)))):
        raise ValidationError(f"{c} is not a critical point of F", op="constant_stability")
    return spectrum(Field(np.full(dom.n_nodes, float(c)), dom), pot, k=k)
