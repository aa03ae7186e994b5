"""Epsilon sweeps for Allen-Cahn on S^N: thresholds, solution branches and the energy gap."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BranchLost,
    ConvergenceFailure,
    MaxIterExceeded,
    MissingBranch,
    SingularJacobian,
    ValidationError,
)
from .field import Field, energy, residual_norm
from .flow import dirichlet_positive_solve, first_dirichlet_eigen, half_domain, newton_solve, reflect_odd
from .geometry import Domain, build_biaxial, build_clifford_reduced, build_sphere_radial, sphere_volume
from .potential import Potential, allen_cahn, double_well
from .spectral import laplace_spectrum, spectrum

FAMILIES = ("ground", "clifford", "cross_equators", "constant_zero")
_REFLECTION = {"ground": "equator", "clifford": "clifford", "cross_equators": "cross"}
SEED_AMPLITUDE = 0.05
_COLLAPSE = 1e-3


def default_domain(family: str, N: int = 3, resolution: int | None = None) -> Domain:
    """Full (unreduced) grid on which a family lives."""
    if family in ("ground", "constant_zero"):
        return build_sphere_radial(N, resolution or 400)[0]
    if N != 3:
        raise ValidationError(f"{family} is defined on S^3 only", op="default_domain")
    if family == "clifford":
        return build_clifford_reduced(resolution or 400)[0]
    if family == "cross_equators":
        r = resolution or 32
        return build_biaxial(r, 2 * r)[0]
    raise ValidationError(f"unknown family {family!r}", op="default_domain")


def _w2(pot_or_base: Potential) -> float:
    """W''(0) of the base potential."""
    p = pot_or_base
    return float(p.fp(0.0)) * (p.scale if p.eps is not None else 1.0)


# ---------------------------------------------------------------------------
# thresholds


@dataclass(frozen=True)
class Thresholds:
    eps1: float
    eps2: float
    lambda1: float
    lambda2: float
    eps1_analytic: float | None = None
    eps2_analytic: float | None = None

    def __iter__(self):
        return iter((self.eps1, self.eps2))

    def as_dict(self) -> dict:
        return {
            "eps1": self.eps1,
            "eps2": self.eps2,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "eps1_analytic": self.eps1_analytic,
            "eps2_analytic": self.eps2_analytic,
        }


def _distinct(vals: np.ndarray, rtol: float = 1e-3) -> list[float]:
    out: list[float] = []
    for v in np.sort(vals):
        if not out or abs(v - out[-1]) > rtol * max(1.0, abs(v)):
            out.append(float(v))
    return out


def thresholds(dom: Domain, pot: Potential | None = None) -> Thresholds:
    """``eps_k = sqrt(-W''(0) / lambda_k)`` for the first two nonzero Laplace eigenvalues.

    ``pot`` may be a base potential or its Allen-Cahn rescaling; the double
    well is the default.  Sphere grids also get the closed-form values from
    ``lambda_k = k (k + N - 1)``.
    """
    base = double_well() if pot is None else pot
    w2 = _w2(base)
    if not w2 < 0:
        raise ValidationError("need W''(0) < 0", op="thresholds")
    lam = _distinct(laplace_spectrum(dom, k=20).eigenvalues)
    nonzero = [v for v in lam if v > 1e-6]
    if len(nonzero) < 2:
        raise ValidationError("fewer than two nonzero eigenvalues resolved", op="thresholds")
    l1, l2 = nonzero[0], nonzero[1]
    a1 = a2 = None
    if dom.kind in ("SphereRadial", "TriSphere"):
        N = dom.params.get("N", 2)
        a1 = float(np.sqrt(-w2 / N))
        a2 = float(np.sqrt(-w2 / (2.0 * (N + 1))))
    return Thresholds(float(np.sqrt(-w2 / l1)), float(np.sqrt(-w2 / l2)), l1, l2, a1, a2)


def reduced_threshold(family: str, dom_full: Domain, base: Potential | None = None) -> float:
    """Birth value from the first Dirichlet eigenvalue of the family's fundamental domain."""
    base = double_well() if base is None else base
    lam1, _ = first_dirichlet_eigen(half_domain(dom_full, _REFLECTION[family]))
    return float(np.sqrt(-_w2(base) / lam1))


def solution_exists(family: str, eps: float, dom_full: Domain, base: Potential | None = None) -> bool:
    """Existence of a nonconstant member, decided by the flow alone (no spectral test)."""
    pot = allen_cahn(eps, base)
    half = half_domain(dom_full, _REFLECTION[family])
    try:
        u = dirichlet_positive_solve(half, pot, init_scale=SEED_AMPLITUDE, spectral_check=False)
    except ConvergenceFailure:
        return False
    return u is not None and float(np.max(np.abs(u.values))) > 1e-4


def existence_threshold(
    family: str, dom_full: Domain, lo: float, hi: float, rtol: float = 2e-3, base: Potential | None = None
) -> float:
    """Bisect the existence boundary in ``eps`` between ``lo`` (exists) and ``hi`` (does not)."""
    if not solution_exists(family, lo, dom_full, base):
        raise ValidationError(f"no {family} solution at the lower end {lo}", op="existence_threshold")
    if solution_exists(family, hi, dom_full, base):
        raise ValidationError(f"{family} solution still exists at the upper end {hi}", op="existence_threshold")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if solution_exists(family, mid, dom_full, base):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# branches


@dataclass
class BranchPoint:
    eps: float
    energy: float
    morse_index: int | None
    nullity: int | None
    sup_norm: float
    nodal: dict
    residual: float
    field: Field = field(repr=False)


@dataclass
class Branch:
    family: str
    points: list[BranchPoint]
    domain: Domain = field(repr=False)
    threshold: float | None = None
    absent: list[float] = field(default_factory=list)
    status: str = "complete"

    @property
    def eps(self) -> np.ndarray:
        return np.array([p.eps for p in self.points])

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energy for p in self.points])

    def at(self, eps: float) -> BranchPoint:
        for p in self.points:
            if abs(p.eps - eps) <= 1e-12 * max(1.0, eps):
                return p
        raise MissingBranch(f"{self.family} has no point at eps={eps}", op="Branch.at")

    def to_csv(self, path) -> None:
        certs = symmetry_certificates(self)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "energy", "index", "nullity", "sup_norm", "defect"])
            for p, c in zip(self.points, certs["points"]):
                w.writerow(
                    [f"{p.eps:.12g}", f"{p.energy:.12e}", p.morse_index, p.nullity, f"{p.sup_norm:.12e}", f"{c['defect']:.3e}"]
                )


def _nodal_summary(family: str, u: Field) -> dict:
    dom = u.domain
    v = u.values
    if family == "constant_zero":
        return {"kind": "everywhere"}
    if dom.nodes.ndim == 1:
        x = dom.nodes
        idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) <= 0)[0]
        zeros = []
        for i in idx:
            if v[i] == 0.0:
                zeros.append(float(x[i]))
            elif v[i + 1] != 0.0:
                zeros.append(float(x[i] - v[i] * (x[i + 1] - x[i]) / (v[i + 1] - v[i])))
        zeros = sorted(set(np.round(zeros, 14)))
        return {"kind": "levels", "zeros": [float(z) for z in zeros]}
    return {"kind": "grid", "negative_fraction": float(np.sum(dom.mass[v < 0]) / np.sum(dom.mass))}


def _solve_family(family, pot, half, prev_half, dom_full, tol):
    if prev_half is None:
        _, phi = first_dirichlet_eigen(half)
        uh = dirichlet_positive_solve(half, pot, init=SEED_AMPLITUDE * phi, tol=tol)
    else:
        try:
            uh = newton_solve(Field(prev_half.values, half), pot, tol=tol)
            if np.min(uh.values[half.laplacian.free]) <= 0:
                raise ConvergenceFailure("left the positive cone", op="continue_branch")
            # Newton may slide onto the trivial solution, which is "positive" only by round-off
            if np.max(uh.values) < _COLLAPSE * np.max(prev_half.values):
                raise ConvergenceFailure("collapsed to zero", op="continue_branch")
        except (MaxIterExceeded, SingularJacobian, ConvergenceFailure):
            uh = dirichlet_positive_solve(half, pot, init=prev_half.values, tol=tol)
    if uh is None:
        return None, None
    full = reflect_odd(uh, dom_full, _REFLECTION[family])
    if dom_full.nodes.ndim == 1:
        # polish on the full grid so the symmetry defect is measured, not imposed
        try:
            polished = newton_solve(full, pot, tol=tol)
            if np.max(np.abs(polished.values)) >= _COLLAPSE * np.max(np.abs(full.values)):
                full = polished
        except (MaxIterExceeded, SingularJacobian):
            pass
    return uh, full


def continue_branch(
    family: str,
    eps_start: float,
    eps_end: float,
    steps: int,
    dom: Domain | None = None,
    base: Potential | None = None,
    tol: float = 1e-10,
    with_spectrum: bool = True,
    N: int = 3,
) -> Branch:
    """Natural-parameter continuation from ``eps_start`` down to ``eps_end``.

    The first solution is seeded with a small multiple of the first Dirichlet
    eigenfunction of the family's fundamental domain; later points start
    from the previous solution.  Values of ``eps`` at which the family does
    not exist (by the spectral criterion) are listed in ``absent``; the
    branch records the birth value in ``threshold``.
    """
    if family not in FAMILIES:
        raise ValidationError(f"unknown family {family!r}", op="continue_branch")
    if not (eps_start > eps_end > 0) or steps < 1:
        raise ValidationError("need eps_start > eps_end > 0 and steps >= 1", op="continue_branch")
    dom = default_domain(family, N) if dom is None else dom
    eps_list = np.linspace(eps_start, eps_end, steps + 1)
    base = double_well() if base is None else base
    br = Branch(family, [], dom)

    if family == "constant_zero":
        for eps in eps_list:
            pot = allen_cahn(float(eps), base)
            u = Field.constant(dom, 0.0)
            rep = spectrum(u, pot, k=4) if with_spectrum else None
            br.points.append(
                BranchPoint(
                    float(eps),
                    energy(u, pot).energy,
                    rep.morse_index if rep else None,
                    rep.nullity if rep else None,
                    0.0,
                    _nodal_summary(family, u),
                    residual_norm(u, pot),
                    u,
                )
            )
        return br

    half = half_domain(dom, _REFLECTION[family])
    br.threshold = reduced_threshold(family, dom, base)
    prev = None
    for eps in eps_list:
        pot = allen_cahn(float(eps), base)
        try:
            uh, full = _solve_family(family, pot, half, prev, dom, tol)
        except ConvergenceFailure as exc:
            raise BranchLost(f"{family} lost at eps={eps:.6g}: {exc}", op="continue_branch") from exc
        if full is None:
            if prev is not None:
                br.status = "terminated"
                break
            br.absent.append(float(eps))
            continue
        res = residual_norm(full, pot) * pot.energy_factor
        if not res < max(tol, 1e-9):
            raise BranchLost(f"{family} residual {res:.3e} at eps={eps:.6g}", op="continue_branch")
        rep = spectrum(full, pot, k=6) if with_spectrum else None
        br.points.append(
            BranchPoint(
                float(eps),
                energy(full, pot).energy,
                rep.morse_index if rep else None,
                rep.nullity if rep else None,
                float(np.max(np.abs(full.values))),
                _nodal_summary(family, full),
                res,
                full,
            )
        )
        prev = uh
    if not br.points:
        br.status = "absent"
    return br


def pitchfork_fit(branch: Branch, eps_c: float) -> tuple[float, float]:
    """Fit ``sup|u| = A (eps_c - eps)^beta``; returns ``(beta, A)``."""
    e = branch.eps
    s = np.array([p.sup_norm for p in branch.points])
    keep = (e < eps_c) & (s > 0)
    if keep.sum() < 2:
        raise ValidationError("need two points below eps_c", op="pitchfork_fit")
    beta, logA = np.polyfit(np.log(eps_c - e[keep]), np.log(s[keep]), 1)
    return float(beta), float(np.exp(logA))


# ---------------------------------------------------------------------------
# symmetry certificates


def _defect(family: str, u: Field) -> dict:
    v = u.values
    dom = u.domain
    if family == "constant_zero":
        return {"defect": float(np.max(np.abs(v))), "nodal_defect": 0.0}
    if family in ("ground", "clifford"):
        odd = float(np.max(np.abs(v + v[::-1])))
        mid = 0.5 * (dom.nodes[0] + dom.nodes[-1])
        zeros = _nodal_summary(family, u)["zeros"]
        nd = min((abs(z - mid) for z in zeros), default=np.inf)
        return {"defect": odd, "nodal_defect": float(nd)}
    nr, nj = dom.extra["shape"]
    V = v.reshape(nr, nj)
    q = nj // 4
    return {"defect": float(np.max(np.abs(V + np.roll(V, -q, axis=1)))), "nodal_defect": 0.0}


def symmetry_certificates(branch: Branch) -> dict:
    """Per-point symmetry defects of a branch.

    ground: ``max|u(theta) + u(pi - theta)|`` and the distance of the nodal
    radius from the equator; clifford: ``max|u(s) + u(pi/2 - s)|``;
    cross_equators: ``max|u(rho, phi) + u(rho, phi + pi/2)|``.
    """
    pts = [{"eps": p.eps, **_defect(branch.family, p.field)} for p in branch.points]
    return {
        "family": branch.family,
        "points": pts,
        "max_defect": max((p["defect"] for p in pts), default=0.0),
        "spacing": float(branch.domain.spacing),
    }


# ---------------------------------------------------------------------------
# energy gap


@dataclass
class GapRow:
    eps: float
    a: float
    b_candidate: float | None
    a_family: str
    b_family: str | None

    @property
    def gap(self) -> float | None:
        return None if self.b_candidate is None else self.b_candidate - self.a

    @property
    def degenerate(self) -> bool:
        return self.b_candidate is None


@dataclass
class GapTable:
    rows: list[GapRow]
    is_upper_bound: bool = True
    levels: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epsilon", "a", "b_candidate", "gap", "a_family", "b_family"])
            for r in self.rows:
                w.writerow(
                    [
                        f"{r.eps:.12g}",
                        f"{r.a:.12e}",
                        "" if r.b_candidate is None else f"{r.b_candidate:.12e}",
                        "" if r.gap is None else f"{r.gap:.12e}",
                        r.a_family,
                        r.b_family or "",
                    ]
                )

    def as_dict(self) -> dict:
        return {
            "is_upper_bound": self.is_upper_bound,
            "rows": [
                {
                    "epsilon": r.eps,
                    "a": r.a,
                    "b_candidate": r.b_candidate,
                    "gap": r.gap,
                    "a_family": r.a_family,
                    "b_family": r.b_family,
                    "degenerate": r.degenerate,
                }
                for r in self.rows
            ],
        }


def family_level(family: str, eps: float, dom: Domain | None = None, base: Potential | None = None) -> float | None:
    """Energy of the family's member at ``eps``, or None when it does not exist."""
    if family == "constant_zero":
        return float(sphere_volume(3) / (4.0 * eps)) if dom is None else energy(
            Field.constant(dom, 0.0), allen_cahn(eps, base)
        ).energy
    dom = default_domain(family) if dom is None else dom
    u = solve_member(family, eps, dom, base)
    return None if u is None else energy(u, allen_cahn(eps, base)).energy


def solve_member(family: str, eps: float, dom: Domain, base: Potential | None = None, tol: float = 1e-10) -> Field | None:
    """Single member of a family on its full grid, or None when absent."""
    if family == "constant_zero":
        return Field.constant(dom, 0.0)
    pot = allen_cahn(eps, base)
    _, full = _solve_family(family, pot, half_domain(dom, _REFLECTION[family]), None, dom, tol)
    return full


def gap_table(
    eps_list, N: int = 3, base: Potential | None = None, domains: dict | None = None
) -> GapTable:
    """Lowest and next-lowest computed solution levels above E(+-1) = 0.

    Families searched: ground, constant 0 and, on S^3, clifford and
    cross_equators.  ``b_candidate`` only bounds the true second level from
    above since no exhaustive search is possible.
    """
    domains = dict(domains or {})
    fams = ["ground", "clifford", "cross_equators"] if N == 3 else ["ground"]
    for f in fams:
        domains.setdefault(f, default_domain(f, N))
    rows, levels = [], {}
    for eps in sorted(float(e) for e in eps_list):
        lv: dict[str, float] = {}
        for f in fams:
            val = family_level(f, eps, domains[f], base)
            if val is not None:
                lv[f] = val
        lv["constant_zero"] = energy(Field.constant(domains["ground"], 0.0), allen_cahn(eps, base)).energy
        levels[eps] = lv
        nonconst = {k: v for k, v in lv.items() if k != "constant_zero"}
        if nonconst:
            if "ground" not in nonconst:
                raise MissingBranch(f"no ground state computed at eps={eps}", op="gap_table")
            a_fam = min(nonconst, key=nonconst.get)
            rest = {k: v for k, v in lv.items() if k != a_fam}
            b_fam = min(rest, key=rest.get)
            rows.append(GapRow(eps, lv[a_fam], rest[b_fam], a_fam, b_fam))
        else:
            rows.append(GapRow(eps, lv["constant_zero"], None, "constant_zero", None))
    return GapTable(rows, True, levels)
