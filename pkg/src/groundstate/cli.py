"""Command-line entry point: ``groundstate <command> [options]``.

Every run writes ``manifest.json`` (inputs, versions, seed, timings) next to
its CSV/JSON outputs.  Exit codes: 0 success, 2 invalid input, 3 solver
failure, 1 when ``reproduce`` finds a failing criterion.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import BACKEND
from .errors import ConfigError, GroundstateError, SolverError, ValidationError
from .config import COMMANDS, RunConfig, load_config, make_config

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _domain(cfg: RunConfig):
    from .geometry import build_domain

    return build_domain(cfg.domain, n=cfg.n, subdiv=cfg.subdiv, n_rho=cfg.n_rho, n_phi=cfg.n_phi)


def _pot(cfg: RunConfig):
    from .potential import allen_cahn, get_potential

    base = get_potential(cfg.potential)
    return (allen_cahn(cfg.eps, base) if cfg.eps is not None else base), base


def _is_odd(pot) -> bool:
    t = np.linspace(0.0, 3.0, 301)
    return bool(np.allclose(pot.f(-t), -pot.f(t), rtol=1e-12, atol=1e-12))


def _family_for(dom) -> str:
    return {"SphereRadial": "ground", "CliffordReduced": "clifford", "BiAxial": "cross_equators"}.get(dom.kind, "ground")


def _outer_minima(pot) -> tuple[float, float]:
    from .potential import find_critical_points

    st = find_critical_points(pot).stable
    if len(st) < 2:
        raise ValidationError("need two stable constants", op="cli")
    return st[0], st[-1]


def _mpass_seed(dom, amp: float = 0.5) -> np.ndarray:
    from .spectral import lowest_eigenpairs

    _, vec = lowest_eigenpairs(dom, np.zeros(dom.n_nodes), 2)
    v = vec[:, 1]
    return amp * v / np.max(np.abs(v))


def _solve_state(cfg: RunConfig, dom, pot, base):
    """Nonconstant solution for the configured family, or None when it does not exist."""
    from .bifurcation import solve_member
    from .mountainpass import initial_path, minmax_deform

    fam = cfg.family if cfg.family != "ground" else _family_for(dom)
    if _is_odd(base):
        return solve_member(fam, cfg.eps, dom, base, tol=cfg.tol)
    lo, hi = _outer_minima(pot)
    p = initial_path(lo, hi, _mpass_seed(dom), dom, cfg.samples, pot=pot)
    r = minmax_deform(p, pot, iters=cfg.iters, tol=cfg.tol)
    return r.polished_field


def _spectrum_json(rep) -> dict:
    return {
        "morse_index": rep.morse_index,
        "nullity": rep.nullity,
        "zero_tol": rep.zero_tol,
        "eigenvalues": [float(x) for x in rep.eigenvalues],
        "labels": [str(x) for x in rep.labels],
    }


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: Path) -> dict:
    from .field import Field, ac_identity_gap, energy
    from .spectral import spectrum

    dom = _domain(cfg)
    pot, base = _pot(cfg)
    u = _solve_state(cfg, dom, pot, base)
    exists = u is not None
    if u is None:
        u = Field.constant(dom, 0.0)
    rep = spectrum(u, pot, k=cfg.k, seed=cfg.seed)
    u.to_csv(out / "field.csv")
    er = energy(u, pot)
    summary = {
        "nonconstant": exists,
        "energy": er.energy,
        "dirichlet": er.dirichlet_part,
        "potential": er.potential_part,
        "residual_norm": er.grad_norm,
        "sup_norm": float(np.max(np.abs(u.values))),
    }
    if exists and pot.eps is not None and base.name == "double_well":
        summary["identity_gap"] = ac_identity_gap(u, pot)
    write_json(out / "spectrum.json", _spectrum_json(rep))
    write_json(out / "solution.json", summary)
    return {"morse_index": rep.morse_index, "nullity": rep.nullity, **summary}


def cmd_flow(cfg: RunConfig, out: Path) -> dict:
    from .field import Field
    from .flow import dt_max, gradient_flow

    dom = _domain(cfg)
    pot, _ = _pot(cfg)
    lo, hi = _outer_minima(pot)
    barrier = None
    if cfg.state.startswith("constant:"):
        u0 = Field.constant(dom, float(cfg.state.split(":", 1)[1]))
    else:
        rng = np.random.default_rng(cfg.seed)
        mid, half = 0.5 * (lo + hi), 0.45 * (hi - lo)
        v = rng.uniform(mid - half, mid + half, dom.n_nodes)
        v[dom.boundary_nodes] = 0.0
        u0 = Field(v, dom)
        barrier = (lo, hi)
    dt = cfg.dt if cfg.dt is not None else dt_max(pot, lo, hi)
    if not np.isfinite(dt):
        dt = 0.1
    tr = gradient_flow(u0, pot, dt=dt, t_end=cfg.t_end, barrier=barrier, tol=cfg.tol)
    tr.to_csv(out / "trace.csv")
    tr.final.to_csv(out / "final.csv")
    res = {
        "stop_reason": tr.stop_reason,
        "steps": len(tr.times) - 1,
        "rejected": tr.rejected,
        "final_energy": tr.energies[-1],
        "final_residual": tr.residuals[-1],
        "barrier": list(barrier) if barrier else None,
    }
    write_json(out / "flow.json", res)
    return res


def cmd_mpass(cfg: RunConfig, out: Path) -> dict:
    from .field import energy
    from .mountainpass import build_optimal_path, initial_path, minmax_deform, verify_optimal

    dom = _domain(cfg)
    pot, _ = _pot(cfg)
    lo, hi = _outer_minima(pot)
    p = initial_path(lo, hi, _mpass_seed(dom), dom, cfg.samples, pot=pot)
    r = minmax_deform(p, pot, iters=cfg.iters, tol=cfg.tol, check_index=True)
    r.path.export(out / "path", pot)
    res = dict(r.summary())
    if r.polished_field is not None:
        r.polished_field.to_csv(out / "peak.csv")
        try:
            op = build_optimal_path(r.polished_field, pot)
            chk = verify_optimal(op, pot, r.polished_field)
            res["optimal_path"] = {"ok": chk.ok, "reason": chk.reason, **chk.details}
            with open(out / "optimal_path.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["t", "energy"])
                for t, e in zip(op.t, op.energies(pot)):
                    w.writerow([f"{t:.12e}", f"{e:.12e}"])
        except GroundstateError as exc:
            res["optimal_path"] = {"ok": False, "reason": str(exc)}
        res["peak_energy_check"] = energy(r.polished_field, pot).energy
    write_json(out / "minmax.json", res)
    return res


def cmd_spectrum(cfg: RunConfig, out: Path) -> dict:
    from .field import Field
    from .spectral import spectrum

    dom = _domain(cfg)
    pot, base = _pot(cfg)
    if cfg.state.startswith("constant:"):
        u = Field.constant(dom, float(cfg.state.split(":", 1)[1]))
    else:
        u = _solve_state(cfg, dom, pot, base)
        if u is None:
            raise ValidationError(f"no nonconstant solution at eps={cfg.eps}", op="spectrum")
    rep = spectrum(u, pot, k=cfg.k, seed=cfg.seed)
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "eigenvalue", "label"])
        for i, (lam, lab) in enumerate(zip(rep.eigenvalues, rep.labels)):
            w.writerow([i, f"{lam:.12e}", lab])
    js = _spectrum_json(rep)
    write_json(out / "spectrum.json", js)
    return {"morse_index": rep.morse_index, "nullity": rep.nullity}


def cmd_rearrange(cfg: RunConfig, out: Path) -> dict:
    from .field import Field
    from .geometry import build_trisphere
    from .rearrange import polarization_sequence, rearrangement_report, symmetrize

    dom = build_trisphere(cfg.subdiv)[0]
    u = Field(_smooth_field(dom, cfg.seed), dom)
    rng = np.random.default_rng(cfg.seed)
    z0 = rng.standard_normal(3)
    z0 /= np.linalg.norm(z0)
    s = symmetrize(u, z0)
    seq = polarization_sequence(u, z0, cfg.k_max, seed=cfg.seed)
    u.to_csv(out / "field.csv")
    s.to_csv(out / "symmetrized.csv")
    seq.final.to_csv(out / "polarized.csv")
    with open(out / "polarization.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "distance"])
        for i, d in enumerate(seq.distances):
            w.writerow([i, f"{d:.12e}"])
    rep = rearrangement_report(u, z0)
    rep["z0"] = z0.tolist()
    rep["final_relative_distance"] = seq.distances[-1] / seq.distances[0] if seq.distances[0] > 0 else 0.0
    write_json(out / "rearrange.json", rep)
    return rep


def _smooth_field(dom, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    X = dom.nodes
    c3 = rng.standard_normal((3, 3, 3))
    c2 = rng.standard_normal((3, 3))
    return np.einsum("ijk,ni,nj,nk->n", c3, X, X, X) + np.einsum("ij,ni,nj->n", c2, X, X) + X @ rng.standard_normal(3)


def cmd_branch(cfg: RunConfig, out: Path) -> dict:
    from .bifurcation import continue_branch, default_domain, symmetry_certificates
    from .potential import get_potential

    fam = cfg.family
    dom = default_domain(fam, resolution=cfg.n if fam in ("ground", "clifford", "constant_zero") else cfg.n_rho)
    br = continue_branch(fam, cfg.eps_start, cfg.eps_end, cfg.steps, dom=dom, base=get_potential(cfg.potential), tol=cfg.tol)
    br.to_csv(out / "branch.csv")
    cert = symmetry_certificates(br)
    write_json(out / "certificates.json", cert)
    res = {
        "family": fam,
        "threshold": br.threshold,
        "absent": br.absent,
        "status": br.status,
        "points": len(br.points),
        "max_defect": cert["max_defect"],
    }
    write_json(out / "branch.json", res)
    return res


def cmd_gap(cfg: RunConfig, out: Path) -> dict:
    from .bifurcation import gap_table
    from .potential import get_potential

    g = gap_table(cfg.eps_list, base=get_potential(cfg.potential))
    g.to_csv(out / "gap.csv")
    js = g.as_dict()
    write_json(out / "gap.json", js)
    return {"rows": len(g.rows), "is_upper_bound": g.is_upper_bound}


def cmd_thresholds(cfg: RunConfig, out: Path) -> dict:
    from .bifurcation import thresholds
    from .potential import get_potential

    th = thresholds(_domain(cfg), get_potential(cfg.potential)).as_dict()
    write_json(out / "thresholds.json", th)
    print(json.dumps(th, sort_keys=True))
    return th


def cmd_reproduce(cfg: RunConfig, out: Path) -> dict:
    from .acceptance import format_table, run_criteria, write_summary

    results = run_criteria(filter=cfg.filter, tol_scale=cfg.tol_scale, seed=cfg.seed, workdir=out / "criteria")
    write_summary(results, out)
    print(format_table(results))
    return {"passed": sum(r.passed for r in results), "total": len(results), "all_passed": all(r.passed for r in results)}


HANDLERS = {
    "solve": cmd_solve,
    "flow": cmd_flow,
    "mpass": cmd_mpass,
    "spectrum": cmd_spectrum,
    "rearrange": cmd_rearrange,
    "branch": cmd_branch,
    "gap": cmd_gap,
    "thresholds": cmd_thresholds,
    "reproduce": cmd_reproduce,
}


def run(cfg: RunConfig) -> int:
    """Execute one validated config; returns the process exit code."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {
        "command": cfg.command,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "versions": {
            "groundstate": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "backend": BACKEND,
        },
    }
    code = EXIT_OK
    try:
        manifest["result"] = HANDLERS[cfg.command](cfg, out)
        if cfg.command == "reproduce" and not manifest["result"]["all_passed"]:
            code = EXIT_FAIL
    except ValidationError as exc:
        manifest["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    except SolverError as exc:
        manifest["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    manifest["timings"] = {"total_seconds": time.perf_counter() - t0}
    manifest["exit_code"] = code
    write_json(out / "manifest.json", manifest)
    return code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file; command-line flags override it")
    common.add_argument("--domain")
    common.add_argument("--potential")
    common.add_argument("--eps", type=float)
    common.add_argument("--eps-start", dest="eps_start", type=float)
    common.add_argument("--eps-end", dest="eps_end", type=float)
    common.add_argument("--steps", type=int)
    common.add_argument("--eps-list", dest="eps_list", type=lambda s: [float(x) for x in s.split(",")])
    common.add_argument("--family")
    common.add_argument("--n", type=int)
    common.add_argument("--subdiv", type=int)
    common.add_argument("--n-rho", dest="n_rho", type=int)
    common.add_argument("--n-phi", dest="n_phi", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-end", dest="t_end", type=float)
    common.add_argument("--samples", type=int)
    common.add_argument("--iters", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--k-max", dest="k_max", type=int)
    common.add_argument("--state")
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--filter")
    common.add_argument("--tol-scale", dest="tol_scale", type=float)
    p = argparse.ArgumentParser(prog="groundstate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"groundstate {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    vals = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    try:
        base = load_config(args.config, args.command) if args.config else {}
        base.update(vals)
        cfg = make_config(base)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
