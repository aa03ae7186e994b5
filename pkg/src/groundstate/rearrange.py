"""Distribution functions, symmetric decreasing rearrangement and polarization on spheres."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._accel import polarize_kernel
from .errors import AsymmetricMesh, ValidationError
from .field import Field
from .geometry import Domain, reflect

POLAR_MODES = ("permutation", "interpolate", "matching")


@dataclass(frozen=True)
class DistributionFunction:
    """``V(s) = |{u > s}|`` sampled at the distinct field values."""

    breakpoints: np.ndarray
    measures: np.ndarray
    total_volume: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        k = np.searchsorted(self.breakpoints, s, side="right")
        padded = np.concatenate([[self.total_volume], self.measures])
        return padded[k]


@dataclass(frozen=True)
class Halfspace:
    """Closed halfspace ``{x : x . normal >= 0}`` through the origin."""

    normal: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.normal, dtype=float)
        nv = np.linalg.norm(v)
        if v.ndim != 1 or not nv > 0:
            raise ValidationError("halfspace normal must be a nonzero vector", op="Halfspace")
        object.__setattr__(self, "normal", v / nv)

    def flipped(self) -> "Halfspace":
        return Halfspace(-self.normal)

    def contains(self, x) -> np.ndarray:
        return np.asarray(x) @ self.normal >= 0


def _require_sphere(dom: Domain, op: str) -> None:
    if dom.kind not in ("SphereRadial", "TriSphere"):
        raise ValidationError(f"{dom.kind} is not a sphere domain", op=op)


def embed(dom: Domain) -> np.ndarray:
    """Node positions in R^{N+1}; radial grids sit on the (x_1, x_{N+1}) meridian."""
    if dom.kind == "TriSphere":
        return dom.nodes
    N = dom.params["N"]
    th = dom.nodes
    X = np.zeros((th.size, N + 1))
    X[:, 0] = np.sin(th)
    X[:, -1] = np.cos(th)
    return X


def _pole(dom: Domain, z0) -> np.ndarray:
    z = np.asarray(z0, dtype=float).ravel()
    dim = 3 if dom.kind == "TriSphere" else dom.params["N"] + 1
    if z.size != dim or not np.linalg.norm(z) > 0:
        raise ValidationError(f"z0 must be a nonzero vector in R^{dim}", op="symmetrize")
    z = z / np.linalg.norm(z)
    if dom.kind == "SphereRadial" and abs(abs(z[-1]) - 1.0) > 1e-12:
        raise ValidationError("radial grids only admit the poles as centers", op="symmetrize")
    return z


def distribution(u: Field) -> DistributionFunction:
    dom = u.domain
    _require_sphere(dom, "distribution")
    w = dom.volume_weights
    order = np.argsort(u.values, kind="stable")
    vals = u.values[order]
    brk, start = np.unique(vals, return_index=True)
    # mass strictly above each distinct value
    tail = np.concatenate([np.cumsum(w[order][::-1])[::-1], [0.0]])
    counts = np.diff(np.concatenate([start, [vals.size]]))
    above = tail[start + counts]
    return DistributionFunction(brk, above, float(np.sum(w)))


def symmetrize(u: Field, z0) -> Field:
    """Symmetric decreasing rearrangement about ``z0``.

    Nodes are ordered by distance to ``z0`` and receive the weighted quantile
    of the values at the midpoint of their cumulative weight.  Ties in either
    ordering are broken by node index.  On equal-weight grids the result is
    a permutation of the values.
    """
    dom = u.domain
    _require_sphere(dom, "symmetrize")
    z = _pole(dom, z0)
    X = embed(dom)
    d = np.arccos(np.clip(X @ z, -1.0, 1.0))
    w = dom.volume_weights
    by_dist = np.argsort(d, kind="stable")
    by_val = np.argsort(-u.values, kind="stable")
    if np.allclose(w, w[0], rtol=1e-12, atol=0):
        out = np.empty_like(u.values)
        out[by_dist] = u.values[by_val]
        return Field(out, dom)
    cw = np.cumsum(w[by_val])
    mid = np.cumsum(w[by_dist]) - 0.5 * w[by_dist]
    k = np.minimum(np.searchsorted(cw, mid, side="right"), cw.size - 1)
    out = np.empty_like(u.values)
    out[by_dist] = u.values[by_val][k]
    return Field(out, dom)


# ---------------------------------------------------------------------------
# polarization


def _mirror_partner(dom: Domain, H: Halfspace):
    """Node permutation of the reflection in ``dH``, or None if the mesh lacks it."""
    if dom.kind == "SphereRadial":
        nu = H.normal
        if nu.size != dom.params["N"] + 1 or abs(abs(nu[-1]) - 1.0) > 1e-12:
            return None
        x = dom.nodes
        if not np.allclose(x + x[::-1], np.pi, atol=1e-12):
            return None
        return np.arange(x.size)[::-1].copy()
    normals = dom.extra["mirror_normals"]
    hit = np.nonzero(np.abs(np.abs(normals @ H.normal) - 1.0) < 1e-10)[0]
    if hit.size == 0:
        return None
    return dom.extra["mirror_perms"][hit[0]]


def _interpolate_reflected(u: Field, H: Halfspace) -> np.ndarray:
    """Values of ``u o sigma_H`` by linear interpolation on the mesh."""
    dom = u.domain
    if dom.kind == "SphereRadial":
        x = dom.nodes
        return np.interp(np.pi - x, x, u.values)
    X = dom.nodes
    F = dom.extra["faces"]
    Q = reflect(X, H.normal)
    _, near = dom.extra["kdtree"].query(Q)
    star: list[list[int]] = [[] for _ in range(len(X))]
    for fi, tri in enumerate(F):
        for v in tri:
            star[v].append(fi)
    out = np.empty(len(X))
    for i, q in enumerate(Q):
        best, best_val = -np.inf, u.values[near[i]]
        for fi in star[near[i]]:
            a, b, c = X[F[fi]]
            n = np.cross(b - a, c - a)
            # central projection of q onto the face plane
            p = q * (n @ a) / (n @ q)
            T = np.column_stack([b - a, c - a])
            lam, *_ = np.linalg.lstsq(T, p - a, rcond=None)
            bary = np.array([1.0 - lam.sum(), lam[0], lam[1]])
            if bary.min() > best:
                best = bary.min()
                best_val = bary @ u.values[F[fi]]
        out[i] = best_val
    return out


def _matching_partner(dom: Domain, H: Halfspace, z: np.ndarray):
    """Greedy nearest-node bijection between the two sides of ``dH``.

    Each node inside H is paired with a distinct node outside, as close as
    possible to its mirror image.  Pairs are kept only when the inside node
    is strictly closer to ``z`` so that a swap moves larger values toward it.
    """
    X = dom.nodes
    side = X @ H.normal
    ins = np.nonzero(side > 1e-12)[0]
    outs = np.nonzero(side < -1e-12)[0]
    tree = cKDTree(X[outs])
    k = min(8, outs.size)
    dist, j = tree.query(reflect(X[ins], H.normal), k=k)
    dist, j = dist.reshape(ins.size, k), j.reshape(ins.size, k)
    order = np.argsort(dist, axis=None, kind="stable")
    partner = np.full(len(X), -1, dtype=np.int64)
    for flat in order:
        a, c = divmod(int(flat), k)
        i, o = ins[a], outs[j[a, c]]
        if partner[i] < 0 and partner[o] < 0:
            partner[i], partner[o] = o, i
    dz = np.arccos(np.clip(X @ z, -1.0, 1.0))
    inside = np.zeros(len(X), dtype=bool)
    paired = np.nonzero(partner >= 0)[0]
    closer = dz[paired] < dz[partner[paired]]
    inside[paired] = closer
    tie = np.abs(dz[paired] - dz[partner[paired]]) <= 1e-14
    partner[paired[tie]] = -1
    return partner, inside


def polarize(u: Field, H: Halfspace, mode: str = "permutation", z0=None) -> Field:
    """``u_H = max(u, u o sigma_H)`` on H and ``min`` off H.

    ``permutation`` needs a mesh symmetric under sigma_H and is exact.
    ``interpolate`` evaluates ``u o sigma_H`` by linear interpolation.
    ``matching`` pairs nodes across dH by a nearest-node bijection on
    equal-weight grids; values are swapped so the larger one sits nearer to
    ``z0`` (default: the pole of H), which keeps equimeasurability exact.
    """
    if mode not in POLAR_MODES:
        raise ValidationError(f"unknown mode {mode!r}", op="polarize")
    dom = u.domain
    _require_sphere(dom, "polarize")
    dim = 3 if dom.kind == "TriSphere" else dom.params["N"] + 1
    if H.normal.size != dim:
        raise ValidationError(f"normal must live in R^{dim}", op="polarize")
    if mode == "matching":
        if dom.kind != "TriSphere":
            raise ValidationError("matching mode needs an equal-weight mesh", op="polarize")
        z = H.normal if z0 is None else _pole(dom, z0)
        if z @ H.normal <= 0:
            raise ValidationError("z0 must lie inside H", op="polarize")
        partner, inside = _matching_partner(dom, H, z)
        return Field(polarize_kernel(u.values, partner, inside), dom)
    X = embed(dom)
    side = X @ H.normal
    perm = _mirror_partner(dom, H)
    if mode == "permutation":
        if perm is None:
            raise AsymmetricMesh("mesh is not symmetric under this reflection", op="polarize")
        inside = side >= 0
        partner = np.asarray(perm, dtype=np.int64).copy()
        partner[np.abs(side) <= 1e-12] = -1
        return Field(polarize_kernel(u.values, partner, inside), dom)
    refl = u.values[perm] if perm is not None else _interpolate_reflected(u, H)
    out = np.where(side >= 0, np.maximum(u.values, refl), np.minimum(u.values, refl))
    out[np.abs(side) <= 1e-12] = u.values[np.abs(side) <= 1e-12]
    return Field(out, dom)


@dataclass
class PolarizationSequence:
    fields: list[Field]
    distances: list[float]
    normals: list[np.ndarray] = field(repr=False)
    seed: int = 0
    mode: str = "matching"

    def __len__(self) -> int:
        return len(self.fields)

    def __getitem__(self, k) -> Field:
        return self.fields[k]

    def __iter__(self):
        return iter(self.fields)

    @property
    def final(self) -> Field:
        return self.fields[-1]


def _l2(dom: Domain, v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(dom.volume_weights * v * v)))


def polarization_sequence(u: Field, z0, k_max: int, seed: int = 0, mode: str = "matching") -> PolarizationSequence:
    """Polarize ``k_max`` times with random halfspaces containing ``z0``.

    In ``matching`` mode normals are drawn uniformly on the sphere; in
    ``permutation`` mode they are drawn from the mesh's mirror normals.  Each
    normal is oriented toward ``z0``; draws with ``z0`` on the plane are skipped.
    """
    dom = u.domain
    _require_sphere(dom, "polarization_sequence")
    if k_max < 0:
        raise ValidationError("k_max must be nonnegative", op="polarization_sequence")
    z = _pole(dom, z0)
    star = symmetrize(u, z).values
    rng = np.random.default_rng(seed)
    cur = u
    fields, dists, normals = [u], [_l2(dom, u.values - star)], []
    dim = z.size
    pool = dom.extra["mirror_normals"] if (mode == "permutation" and dom.kind == "TriSphere") else None
    for _ in range(k_max):
        if pool is not None:
            nu = pool[rng.integers(len(pool))].copy()
        elif dom.kind == "SphereRadial":
            nu = np.zeros(dim)
            nu[-1] = 1.0
        else:
            nu = rng.standard_normal(dim)
            nu /= np.linalg.norm(nu)
        c = float(nu @ z)
        if abs(c) < 1e-9:
            continue
        nu = nu if c > 0 else -nu
        H = Halfspace(nu)
        cur = polarize(cur, H, mode=mode, z0=z) if mode == "matching" else polarize(cur, H, mode=mode)
        fields.append(cur)
        dists.append(_l2(dom, cur.values - star))
        normals.append(nu)
    return PolarizationSequence(fields, dists, normals, seed, mode)


def is_polarized(u: Field, z0, n_halfspaces: int = 64, seed: int = 0, tol: float = 1e-12) -> bool:
    """True when ``u = u_H`` for all sampled halfspaces containing ``z0``."""
    mode = "matching" if u.domain.kind == "TriSphere" else "permutation"
    seq = polarization_sequence(u, z0, n_halfspaces, seed=seed, mode=mode)
    return all(np.max(np.abs(f.values - u.values)) <= tol for f in seq.fields)


def rearrangement_report(u: Field, z0, pot=None) -> dict:
    """Norm comparisons between ``u`` and its rearrangement."""
    from .field import dirichlet_form, raw_energy

    dom = u.domain
    s = symmetrize(u, z0)
    rep = {
        "l2": _l2(dom, u.values),
        "l2_star": _l2(dom, s.values),
        "grad_l2": float(np.sqrt(max(dirichlet_form(dom, u.values), 0.0))),
        "grad_l2_star": float(np.sqrt(max(dirichlet_form(dom, s.values), 0.0))),
        "distance": _l2(dom, u.values - s.values),
        "relative_distance": _l2(dom, u.values - s.values) / max(_l2(dom, u.values), 1e-300),
    }
    if pot is not None:
        rep["energy"] = raw_energy(dom, u.values, pot) * pot.energy_factor
        rep["energy_star"] = raw_energy(dom, s.values, pot) * pot.energy_factor
    return rep
