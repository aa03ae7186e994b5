"""Discrete fields, the energy functional and its diagnostics."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NoValidDelta, ValidationError
from .geometry import Domain
from .potential import CriticalPointList, Potential


@dataclass(frozen=True, eq=False)
class Field:
    values: np.ndarray
    domain: Domain

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.domain.n_nodes,):
            raise ValidationError(f"field has {v.size} values for {self.domain.n_nodes} nodes", op="Field")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite", op="Field")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, dom: Domain, c: float) -> "Field":
        v = np.full(dom.n_nodes, float(c))
        return cls(v, dom)

    def with_values(self, v) -> "Field":
        return Field(np.asarray(v, dtype=float), self.domain)

    @property
    def u_min(self) -> float:
        return float(self.values.min())

    @property
    def u_max(self) -> float:
        return float(self.values.max())

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.domain.mass * self.values**2)))

    def to_csv(self, path) -> None:
        write_field_csv(self, path)


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    dirichlet_part: float
    potential_part: float
    grad_norm: float

    def to_json(self) -> str:
        return json.dumps(
            {"energy": self.energy, "dirichlet": self.dirichlet_part, "potential": self.potential_part, "grad_norm": self.grad_norm}
        )


@dataclass(frozen=True)
class AprioriBound:
    C: float
    K: float
    d: float
    delta: float
    R0: float
    B0: float
    M0: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PReport:
    values: Field
    argmax: int
    nearest_critical: int
    distance: float
    critical_nodes: np.ndarray


# ---------------------------------------------------------------------------


def dirichlet_form(dom: Domain, v: np.ndarray) -> float:
    """``v.K.v``, the discrete ``int |grad v|^2``."""
    return float(v @ dom.laplacian.stiffness_apply(v))


def raw_energy(dom: Domain, v: np.ndarray, pot: Potential) -> float:
    """Energy in the internal normalization (no Allen-Cahn factor)."""
    return 0.5 * dirichlet_form(dom, v) + float(np.sum(dom.mass * pot.F(v)))


def raw_gradient(dom: Domain, v: np.ndarray, pot: Potential) -> np.ndarray:
    """Nodal gradient ``K v + mass * f(v)`` of :func:`raw_energy`; zero on pinned nodes."""
    g = dom.laplacian.stiffness_apply(v) + dom.mass * pot.f(v)
    if dom.boundary_nodes.size:
        g[dom.boundary_nodes] = 0.0
    return g


def energy(u: Field, pot: Potential) -> EnergyReport:
    """Energy split into Dirichlet and potential parts.

    Allen-Cahn potentials carry ``energy_factor = eps`` so the report is E_eps.
    """
    dom = u.domain
    v = u.values
    s = pot.energy_factor
    dpart = 0.5 * dirichlet_form(dom, v) * s
    ppart = float(np.sum(dom.mass * pot.F(v))) * s
    return EnergyReport(dpart + ppart, dpart, ppart, residual_norm(u, pot) * s)


def residual(u: Field, pot: Potential) -> Field:
    """Nodal ``Lap u - f(u)``, zero on pinned nodes."""
    dom = u.domain
    r = dom.laplacian.apply(u.values) - pot.f(u.values)
    if dom.boundary_nodes.size:
        r[dom.boundary_nodes] = 0.0
    return Field(r, dom)


def residual_norm(u: Field, pot: Potential) -> float:
    r = residual(u, pot).values
    return float(np.sqrt(np.sum(u.domain.mass * r * r)))


def ac_identity_gap(u: Field, pot: Potential) -> float:
    """Relative gap between E_eps(u) and (1/(4 eps)) int (1 - u^4).

    Zero (to round-off) at discrete Allen-Cahn solutions with the double well.
    """
    if pot.eps is None:
        raise ValidationError("identity applies to Allen-Cahn potentials", op="ac_identity_gap")
    E = energy(u, pot).energy
    rhs = float(np.sum(u.domain.mass * (1.0 - u.values**4))) / (4.0 * pot.eps)
    return abs(E - rhs) / abs(E)


# ---------------------------------------------------------------------------
# gradient recovery and the P-function


def gradient_magnitude(u: Field) -> np.ndarray:
    """Nodal |grad u| recovered from the grid."""
    dom = u.domain
    v = u.values
    if dom.nodes.ndim == 1:
        return np.abs(np.gradient(v, dom.nodes))
    if dom.kind == "BiAxial":
        nr, nj = dom.extra["shape"]
        V = v.reshape(nr, nj)
        rho = dom.extra["rho"]
        ur = np.gradient(V, dom.extra["d_rho"], axis=0)
        if dom.params["quarter"]:
            up = np.gradient(V, dom.extra["d_phi"], axis=1)
        else:
            up = (np.roll(V, -1, axis=1) - np.roll(V, 1, axis=1)) / (2.0 * dom.extra["d_phi"])
        g2 = (1.0 - rho[:, None] ** 2) * ur**2 + up**2 / rho[:, None] ** 2
        return np.sqrt(g2).ravel()
    if dom.kind == "TriSphere":
        X = dom.nodes
        F = dom.extra["faces"]
        a, b, c = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
        n = np.cross(b - a, c - a)
        area2 = np.linalg.norm(n, axis=1)
        nh = n / area2[:, None]
        # grad of hat functions: (n x opposite edge) / (2 area)
        g = (
            v[F[:, 0], None] * np.cross(nh, c - b)
            + v[F[:, 1], None] * np.cross(nh, a - c)
            + v[F[:, 2], None] * np.cross(nh, b - a)
        ) / area2[:, None]
        acc = np.zeros_like(X)
        wsum = np.zeros(len(X))
        for k in range(3):
            np.add.at(acc, F[:, k], g * area2[:, None])
            np.add.at(wsum, F[:, k], area2)
        acc /= wsum[:, None]
        acc -= np.sum(acc * X, axis=1)[:, None] * X
        return np.linalg.norm(acc, axis=1)
    raise ValidationError(f"no gradient recovery for {dom.kind}", op="gradient_magnitude")


def node_distance(dom: Domain, i: int, j: np.ndarray) -> np.ndarray:
    """Geodesic distance from node ``i`` to nodes ``j``."""
    j = np.atleast_1d(j)
    if dom.nodes.ndim == 1:
        return np.abs(dom.nodes[j] - dom.nodes[i])
    if dom.kind == "TriSphere":
        X = dom.nodes
        return np.arccos(np.clip(X[j] @ X[i], -1.0, 1.0))
    r, p = dom.nodes[:, 0], dom.nodes[:, 1]
    emb = np.column_stack([np.sqrt(1 - r**2), np.zeros_like(r), r * np.cos(p), r * np.sin(p)])
    return np.arccos(np.clip(emb[j] @ emb[i], -1.0, 1.0))


def _local_minima(dom: Domain, g: np.ndarray) -> np.ndarray:
    A = sp.csr_matrix(dom.laplacian.matrix)
    out = []
    for i in range(g.size):
        nb = A.indices[A.indptr[i] : A.indptr[i + 1]]
        nb = nb[nb != i]
        if nb.size and np.all(g[i] <= g[nb]):
            out.append(i)
    return np.array(out, dtype=np.int64)


def p_function(u: Field, pot: Potential) -> PReport:
    """``P = |grad u|^2 / 2 - F(u)`` with its argmax and nearest critical node of u."""
    dom = u.domain
    g = gradient_magnitude(u)
    P = 0.5 * g**2 - pot.F(u.values)
    crit = _local_minima(dom, g)
    imax = int(np.argmax(P))
    if crit.size == 0:
        crit = np.array([int(np.argmin(g))])
    dist = node_distance(dom, imax, crit)
    k = int(np.argmin(dist))
    return PReport(Field(P, dom), imax, int(crit[k]), float(dist[k]), crit)


# ---------------------------------------------------------------------------
# a-priori bound


def _delta_denominator(delta, d, C):
    return delta * np.log(delta) ** 2 + delta * (delta - 2.0) * d * d * C


def apriori_bound(
    C: float,
    K: float,
    d: float,
    kplus: float,
    kminus: float,
    fmax: float | None = None,
    delta_rule: str = "largest",
) -> AprioriBound:
    """Sup and gradient bound for unstable solutions under the linear lower bound.

    ``delta`` ranges over a logarithmic grid in (0, 1) where the denominator
    ``delta log(delta)^2 + delta (delta - 2) d^2 C`` is positive.  The default
    rule takes the largest such ``delta``; ``delta_rule="max_denominator"``
    maximizes the denominator instead, which gives the smallest ``R0``.  The
    gradient bound keeps the factor 2 of ``P = |grad u|^2/2 - F``:
    ``B0^2 = 2 (|k+ - k-| fmax + C R0 (1 + R0))``.
    """
    if C < 0 or d <= 0 or K < 0:
        raise ValidationError("need C >= 0, K >= 0 and d > 0", op="apriori_bound")
    if kplus < 0 or kminus > 0:
        raise ValidationError("need k- <= 0 <= k+", op="apriori_bound")
    fmax = K if fmax is None else fmax
    grid = 10.0 ** (-np.arange(1, 30001) / 100.0)
    grid = grid[grid > 0]
    D = _delta_denominator(grid, d, C)
    if not np.any(D > 0):
        raise NoValidDelta("no delta in (0,1) makes the denominator positive", op="apriori_bound")
    if delta_rule == "largest":
        i = int(np.nonzero(D > 0)[0][0])  # grid is decreasing
    elif delta_rule == "max_denominator":
        i = int(np.argmax(D))
    else:
        raise ValidationError(f"unknown delta_rule {delta_rule!r}", op="apriori_bound")
    delta, Dm = float(grid[i]), float(D[i])
    t = 2.0 * d * d * C
    R0 = max(kplus + t * (1.0 + kplus) / Dm, abs(kminus) + t * (1.0 + abs(kminus)) / Dm)
    B0 = float(np.sqrt(2.0 * (abs(kplus - kminus) * fmax + C * R0 * (1.0 + R0))))
    M0 = max(abs(kminus), kplus) + d * B0 + B0
    return AprioriBound(float(C), float(K), float(d), delta, float(R0), B0, float(M0))


def unstable_range_report(u: Field, cps: CriticalPointList, pot: Potential | None = None) -> dict:
    """Check that the range of u meets the unstable critical points (item 1)
    and that F on that range stays below their highest level (item 2).

    Item 2 needs ``pot``; without it only item 1 is decided.  When item 1
    fails the report carries ``note="stable, lemma not applicable"``.
    """
    lo, hi = u.u_min, u.u_max
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    item1 = any(lo - tol <= c <= hi + tol for c in cps.unstable)
    out = {"item1": item1, "item2": None, "ok": item1}
    if not item1:
        out["note"] = "stable, lemma not applicable"
        return out
    if pot is not None:
        t = np.unique(np.concatenate([np.linspace(lo, hi, 4001), u.values]))
        top = max(float(pot.F(c)) for c in cps.unstable)
        item2 = float(np.max(pot.F(t))) <= top + 1e-10 * max(1.0, abs(top))
        out["item2"] = bool(item2)
        out["ok"] = bool(item2)
    return out


def unstable_range_check(u: Field, cps: CriticalPointList, pot: Potential | None = None) -> bool:
    return unstable_range_report(u, cps, pot)["ok"]


# ---------------------------------------------------------------------------
# serialization


def write_field_csv(u: Field, path) -> None:
    dom = u.domain
    coords = dom.nodes[:, None] if dom.nodes.ndim == 1 else dom.nodes
    names = {1: ["x"], 2: ["rho", "phi"], 3: ["x", "y", "z"]}[coords.shape[1]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_index", *names, "value"])
        for i, (c, val) in enumerate(zip(coords, u.values)):
            w.writerow([i, *(f"{x:.12e}" for x in c), f"{val:.12e}"])
