"""Acceptance criteria as runnable checks.

Each criterion returns a :class:`CriterionResult`; ``tol_scale`` multiplies
every tolerance so a tightened run reports failures instead of crashing.
Criteria that produce tables also write them as CSV into ``workdir``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import tempfile
import time
import traceback
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import BarrierViolation, GroundstateError


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    value: float | None
    threshold: float | None
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.id:2d} {self.name}: {self.detail}"


def _write_rows(path: Path | None, header, rows) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.12e}" if isinstance(x, float) else x for x in r])


def _s3(n: int = 400):
    from .geometry import build_sphere_radial

    return build_sphere_radial(3, n)[0]


def _ground(dom, eps: float):
    from .bifurcation import solve_member

    return solve_member("ground", eps, dom)


# ---------------------------------------------------------------------------


def c1_eps1(ts, seed, wd):
    from .bifurcation import existence_threshold

    e = existence_threshold("ground", _s3(400), 0.40, 0.70)
    ref = 1.0 / np.sqrt(3.0)
    err = abs(e - ref) / ref
    _write_rows(wd and wd / "c01_eps1.csv", ["estimate", "reference"], [(e, ref)])
    return err <= 0.01 * ts, err, 0.01 * ts, f"eps1 = {e:.6f} vs 1/sqrt(3) = {ref:.6f}, rel err {err:.2e}"


def c2_eps2(ts, seed, wd):
    from .bifurcation import existence_threshold
    from .geometry import build_clifford_reduced

    e = existence_threshold("clifford", build_clifford_reduced(400)[0], 0.30, 0.40)
    ref = 1.0 / (2.0 * np.sqrt(2.0))
    err = abs(e - ref) / ref
    _write_rows(wd and wd / "c02_eps2.csv", ["estimate", "reference"], [(e, ref)])
    return err <= 0.01 * ts, err, 0.01 * ts, f"eps2 = {e:.6f} vs 1/(2 sqrt 2) = {ref:.6f}, rel err {err:.2e}"


def c3_morse(ts, seed, wd):
    from .field import Field
    from .potential import allen_cahn
    from .spectral import grid_zero_tol, spectrum

    dom = _s3(400)
    zt0 = grid_zero_tol(dom) * ts
    p45 = allen_cahn(0.45)
    r0 = spectrum(Field.constant(dom, 0.0), p45, zero_tol=zt0 * p45.scale)
    p4 = allen_cahn(0.4)
    g = _ground(dom, 0.4)
    rg = spectrum(g, p4, zero_tol=zt0 * p4.scale, seed=seed)
    _write_rows(
        wd and wd / "c03_ground_eigenvalues.csv",
        ["k", "eigenvalue"],
        [(i, float(x)) for i, x in enumerate(rg.eigenvalues)],
    )
    ok = r0.morse_index == 5 and rg.morse_index == 1 and rg.nullity == 3
    return ok, None, None, (
        f"constant 0 at eps=0.45: index {r0.morse_index} (want 5); "
        f"ground at eps=0.4: index {rg.morse_index}, nullity {rg.nullity} (want 1, 3)"
    )


def c4_mountain_pass(ts, seed, wd):
    from .field import Field, energy
    from .mountainpass import build_optimal_path, initial_path, minmax_deform, verify_optimal
    from .potential import allen_cahn

    dom = _s3(400)
    pot = allen_cahn(0.4)
    g = _ground(dom, 0.4)
    Eg = energy(g, pot).energy
    seed_field = Field(0.5 * np.cos(dom.nodes), dom)
    r = minmax_deform(initial_path(-1.0, 1.0, seed_field, dom, 33, pot=pot), pot, iters=3000)
    rel = abs(r.level - Eg) / r.level
    chk = verify_optimal(build_optimal_path(g, pot), pot, g)
    _write_rows(wd and wd / "c04_levels.csv", ["minmax_level", "ground_energy"], [(r.level, Eg)])
    ok = rel <= 0.01 * ts and chk.ok
    return ok, rel, 0.01 * ts, (
        f"min-max level {r.level:.6f} vs Newton {Eg:.6f} (rel {rel:.2e}); optimal path check "
        f"{'ok' if chk.ok else 'failed: ' + chk.reason}"
    )


def c5_identity(ts, seed, wd):
    from .bifurcation import solve_member
    from .field import Field, ac_identity_gap, residual_norm
    from .geometry import build_biaxial, build_clifford_reduced
    from .potential import allen_cahn

    s3 = _s3(800)
    cl = build_clifford_reduced(800)[0]
    bx = build_biaxial(48, 96)[0]
    cases = [("ground", s3, e) for e in (0.3, 0.4, 0.5)] + [("clifford", cl, 0.3), ("cross_equators", bx, 0.3)]
    rows, worst = [], 0.0
    for fam, dom, eps in cases:
        pot = allen_cahn(eps)
        u = solve_member(fam, eps, dom)
        gap = ac_identity_gap(u, pot)
        rows.append((fam, eps, gap, residual_norm(u, pot)))
        worst = max(worst, gap)
    z = Field.constant(s3, 0.0)
    gz = ac_identity_gap(z, allen_cahn(0.45))
    rows.append(("constant_zero", 0.45, gz, 0.0))
    worst = max(worst, gz)
    _write_rows(wd and wd / "c05_identity.csv", ["family", "eps", "gap", "residual"], rows)
    return worst <= 1e-4 * ts, worst, 1e-4 * ts, f"largest relative identity gap {worst:.2e} over {len(rows)} solutions"


def c6_gap(ts, seed, wd):
    from .bifurcation import gap_table

    g = gap_table([0.40, 0.45, 0.50, 0.70])
    if wd:
        g.to_csv(wd / "c06_gap.csv")
    rows = {round(r.eps, 6): r for r in g.rows}
    pos = all(rows[e].gap is not None and rows[e].gap > 0 for e in (0.4, 0.45, 0.5))
    deg = rows[0.7].degenerate and rows[0.7].a_family == "constant_zero"
    ref07 = 2 * np.pi**2 / (4 * 0.7)
    a07 = abs(rows[0.7].a - ref07) / ref07
    ok = pos and deg and a07 <= 1e-3 * ts
    gaps = ", ".join(f"{e}: {rows[e].gap:.4f}" for e in (0.4, 0.45, 0.5) if rows[e].gap is not None)
    return ok, min(rows[e].gap or -1 for e in (0.4, 0.45, 0.5)), 0.0, (
        f"gaps {gaps}; eps=0.7 degenerate={deg}, a = {rows[0.7].a:.6f} vs E(0) = {ref07:.6f}"
    )


def c7_dirichlet_balls(ts, seed, wd):
    from .flow import first_dirichlet_eigen
    from .geometry import build_ball_radial

    rows, worst = [], 0.0
    for tau in (np.pi / 3, np.pi / 2, 2 * np.pi / 3):
        dom = build_ball_radial(3, tau, 400, bc="dirichlet", metric="sphere")[0]
        lam, _ = first_dirichlet_eigen(dom)
        ref = (np.pi / tau) ** 2 - 1.0
        err = abs(lam - ref) / ref
        worst = max(worst, err)
        rows.append((tau, lam, ref, err))
    _write_rows(wd and wd / "c07_balls.csv", ["tau", "lambda1", "formula", "rel_err"], rows)
    return worst <= 0.01 * ts, worst, 0.01 * ts, f"largest rel err of lambda1(B_tau) {worst:.2e}"


def _grad(dom, v):
    from .field import dirichlet_form

    return float(np.sqrt(max(dirichlet_form(dom, v), 0.0)))


def c8_rearrangement(ts, seed, wd):
    from .cli import _smooth_field
    from .field import Field
    from .geometry import build_trisphere
    from .rearrange import Halfspace, polarize, symmetrize

    dom = build_trisphere(4)[0]
    w = dom.volume_weights
    X = dom.nodes
    F = dom.extra["faces"]
    h = float(np.max(np.linalg.norm(X[F[:, 0]] - X[F[:, 1]], axis=1)))
    rng = np.random.default_rng(seed)
    normals = dom.extra["mirror_normals"]
    eq_worst = ps_worst = 0.0
    idem = True
    rows = []
    for i in range(100):
        u = Field(_smooth_field(dom, seed * 1000 + i), dom)
        z0 = rng.standard_normal(3)
        z0 /= np.linalg.norm(z0)
        s = symmetrize(u, z0)
        H = Halfspace(normals[i % len(normals)])
        uh = polarize(u, H)
        for phi in (lambda t: t, lambda t: t * t):
            ref = float(np.sum(w * phi(u.values)))
            eq_worst = max(eq_worst, abs(float(np.sum(w * phi(s.values))) - ref), abs(float(np.sum(w * phi(uh.values))) - ref))
        g, gs = _grad(dom, u.values), _grad(dom, s.values)
        # excess of |grad u*| over |grad u| measured in units of the allowance
        allowance = 1e-6 * g + h * g
        ps_worst = max(ps_worst, (gs - g) / allowance)
        idem &= bool(np.array_equal(polarize(uh, H).values, uh.values))
        rows.append((i, g, gs, _grad(dom, uh.values)))
    _write_rows(wd and wd / "c08_polya_szego.csv", ["sample", "grad", "grad_star", "grad_polarized"], rows)
    ok = eq_worst <= 1e-8 * ts and ps_worst <= 1.0 * ts and idem
    return ok, eq_worst, 1e-8 * ts, (
        f"equimeasurability err {eq_worst:.1e}; worst (|grad u*| - |grad u|)/allowance {ps_worst:.3f} "
        f"(mesh term h |grad u|, h = {h:.3f}); idempotent={idem}"
    )


def c9_symmetry(ts, seed, wd):
    from .bifurcation import continue_branch, symmetry_certificates
    from .geometry import build_clifford_reduced

    g = continue_branch("ground", 0.4 + 1e-9, 0.4, 1, dom=_s3(400), with_spectrum=False)
    cg = symmetry_certificates(g)["points"][-1]
    cl = continue_branch("clifford", 0.3 + 1e-9, 0.3, 1, dom=build_clifford_reduced(400)[0], with_spectrum=False)
    cc = symmetry_certificates(cl)["points"][-1]
    cell = float(g.domain.spacing)
    _write_rows(
        wd and wd / "c09_symmetry.csv",
        ["family", "defect", "nodal_defect"],
        [("ground", cg["defect"], cg["nodal_defect"]), ("clifford", cc["defect"], cc["nodal_defect"])],
    )
    ok = cg["defect"] <= 1e-6 * ts and cg["nodal_defect"] <= cell * ts and cc["defect"] <= 1e-6 * ts
    return ok, max(cg["defect"], cc["defect"]), 1e-6 * ts, (
        f"ground oddness {cg['defect']:.1e}, nodal radius offset {cg['nodal_defect']:.1e} (cell {cell:.1e}); "
        f"clifford antisymmetry {cc['defect']:.1e}"
    )


def c10_flow(ts, seed, wd):
    from .field import Field
    from .flow import gradient_flow
    from .potential import allen_cahn

    dom = _s3(400)
    pot = allen_cahn(0.4)
    rng = np.random.default_rng(seed)
    worst_rise, inside, min_gap = 0.0, True, np.inf
    for _ in range(50):
        u0 = Field(rng.uniform(-0.95, 0.95, dom.n_nodes), dom)
        try:
            tr = gradient_flow(u0, pot, dt=0.05, t_end=2.0, barrier=(-1.0, 1.0), keep=1)
        except BarrierViolation:
            inside = False
            continue
        E = np.asarray(tr.energies)
        worst_rise = max(worst_rise, float(np.max(np.diff(E), initial=0.0)))
        # the stored values may round to +-1; the tracked gaps carry the strict inequality
        gaps = np.asarray(tr.barrier_gaps)
        inside &= bool(gaps.size == len(tr.times) - 1 and np.all(gaps > 0))
        inside &= all(np.all(np.abs(s) <= 1.0) for s in tr.snapshots)
        min_gap = min(min_gap, float(gaps.min(initial=np.inf)))
    g = _ground(dom, 0.4)
    tr = gradient_flow(g, pot, dt=0.05, t_end=2.0, barrier=(-1.0, 1.0), tol=0.0)
    drift = float(np.max(np.abs(tr.final.values - g.values)))
    ok = worst_rise <= 0.0 and inside and drift <= 1e-8 * ts
    return ok, drift, 1e-8 * ts, (
        f"largest energy increase {worst_rise:.1e}; iterates inside barrier: {inside} (smallest gap {min_gap:.1e}); stationary drift {drift:.1e}"
    )


def c11_apriori(ts, seed, wd):
    from .field import Field, apriori_bound, gradient_magnitude
    from .mountainpass import initial_path, minmax_deform
    from .potential import allen_cahn, classify_hypothesis, find_critical_points, tilted_a2, truncate_potential

    dom = _s3(400)
    pot = allen_cahn(0.4, tilted_a2())
    cps = find_critical_points(pot)
    hc = classify_hypothesis(pot, cps, 3)
    if hc.tag != "A2":
        return False, None, None, f"potential classified {hc.tag}, not A2"
    fmax = hc.certificate["fmax_on_k_range"]
    b = apriori_bound(hc.C, hc.K, dom.diameter, cps.k_plus, cps.k_minus, fmax)
    seed_field = Field(0.5 * np.cos(dom.nodes), dom)

    def unstable(p):
        r = minmax_deform(initial_path(-1.0, 1.0, seed_field, dom, 33, pot=p), p, iters=3000)
        return r.polished_field

    u = unstable(pot)
    sols = [u] + [Field.constant(dom, c) for c in cps.unstable]
    worst = max(float(np.max(np.abs(s.values)) + np.max(gradient_magnitude(s))) for s in sols)
    M = float(np.ceil(b.M0)) + 1.0
    tp = truncate_potential(pot, cps, M)
    ut = unstable(tp)
    dist = float(np.sqrt(np.sum(dom.mass * (ut.values - u.values) ** 2)))
    _write_rows(
        wd and wd / "c11_apriori.csv", ["C", "K", "delta", "R0", "B0", "M0", "worst_norm", "trunc_l2"],
        [(b.C, b.K, b.delta, b.R0, b.B0, b.M0, worst, dist)],
    )
    ok = worst <= b.M0 and dist <= 1e-6 * ts
    return ok, dist, 1e-6 * ts, (
        f"max ||u||_inf + ||grad u||_inf = {worst:.4f} <= M0 = {b.M0:.2f}: {worst <= b.M0}; "
        f"F* (M = {M:.0f}) solution L2 distance {dist:.1e}"
    )


def c12_determinism(ts, seed, wd):
    ids = [3, 6, 7, 9]
    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            d = Path(tmp) / f"run{k}"
            res = run_criteria(ids=ids, tol_scale=ts, seed=seed, workdir=d)
            write_summary(res, d)
            files = sorted(d.rglob("*.csv"))
            digests.append({f.relative_to(d).as_posix(): hashlib.sha256(f.read_bytes()).hexdigest() for f in files})
    same = digests[0] == digests[1] and len(digests[0]) > 0
    return same, None, None, f"{len(digests[0])} CSV files, byte-identical across two runs: {same}"


CRITERIA = [
    (1, "threshold eps1 on S^3", ("thresholds", "bifurcation"), c1_eps1),
    (2, "threshold eps2 on S^3", ("thresholds", "bifurcation", "clifford"), c2_eps2),
    (3, "Morse data", ("spectral", "morse"), c3_morse),
    (4, "mountain-pass consistency", ("mountainpass", "mpass"), c4_mountain_pass),
    (5, "energy-solution identity", ("identity", "field"), c5_identity),
    (6, "gap table", ("gap", "bifurcation"), c6_gap),
    (7, "Dirichlet eigenvalue of geodesic balls", ("spectral", "geometry"), c7_dirichlet_balls),
    (8, "rearrangement properties", ("rearrange",), c8_rearrangement),
    (9, "symmetry certificates", ("symmetry", "bifurcation"), c9_symmetry),
    (10, "flow contract", ("flow",), c10_flow),
    (11, "a-priori bound and truncation", ("apriori", "potential"), c11_apriori),
    (12, "determinism", ("determinism", "cli"), c12_determinism),
]


def select(ids=None, filter: str | None = None):
    out = []
    for cid, name, tags, fn in CRITERIA:
        if ids is not None and cid not in ids:
            continue
        if filter and not (filter == str(cid) or filter in tags or filter in name):
            continue
        out.append((cid, name, tags, fn))
    return out


def run_criterion(cid: int, tol_scale: float = 1.0, seed: int = 0, workdir=None) -> CriterionResult:
    (_, name, _, fn), = select(ids=[cid])
    wd = Path(workdir) if workdir is not None else None
    if wd is not None:
        wd.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        ok, val, thr, detail = fn(tol_scale, seed, wd)
    except GroundstateError as exc:
        ok, val, thr, detail = False, None, None, f"error: {exc}"
    except Exception as exc:  # report, do not crash the suite
        ok, val, thr, detail = False, None, None, f"unexpected {type(exc).__name__}: {exc} | {traceback.format_exc(limit=2)}"
    return CriterionResult(cid, name, bool(ok), None if val is None else float(val), thr, detail, time.perf_counter() - t0)


def run_criteria(ids=None, filter: str | None = None, tol_scale: float = 1.0, seed: int = 0, workdir=None):
    return [run_criterion(cid, tol_scale, seed, workdir) for cid, *_ in select(ids, filter)]


def write_summary(results, out) -> None:
    """``summary.csv`` (deterministic: no timings) and ``summary.json`` (with timings)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(
        out / "summary.csv",
        ["criterion", "name", "passed"],
        [(r.id, r.name, "pass" if r.passed else "fail") for r in results],
    )
    (out / "summary.json").write_text(json.dumps([asdict(r) for r in results], indent=2, sort_keys=True) + "\n")


def format_table(results) -> str:
    return "\n".join(r.line() for r in results)
