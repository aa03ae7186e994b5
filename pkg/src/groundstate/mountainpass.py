"""Discrete paths between stable constants, min-max deformation, optimal paths."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .errors import BarrierLost, FlowDidNotReachConstant, NotStableEndpoint, ValidationError
from .field import Field, raw_energy, residual_norm, write_field_csv
from .flow import dt_max, gradient_flow, newton_solve
from .geometry import Domain
from .potential import Potential, find_critical_points
from .spectral import lowest_eigenpairs

MIN_SAMPLES = 17


@dataclass
class Path:
    """Samples ``h(t_j)`` stored row-wise in ``U`` with parameters ``t``."""

    U: np.ndarray
    t: np.ndarray
    endpoints: tuple[float, float]
    domain: Domain

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def samples(self) -> list[Field]:
        return [Field(row, self.domain) for row in self.U]

    def sample_at(self, t: float) -> Field:
        j = int(np.argmin(np.abs(self.t - t)))
        return Field(self.U[j], self.domain)

    def energies(self, pot: Potential) -> np.ndarray:
        return np.array([raw_energy(self.domain, row, pot) for row in self.U]) * pot.energy_factor

    def export(self, directory, pot: Potential) -> None:
        d = FsPath(directory)
        d.mkdir(parents=True, exist_ok=True)
        E = self.energies(pot)
        for j, row in enumerate(self.U):
            write_field_csv(Field(row, self.domain), d / f"sample_{j:03d}.csv")
        manifest = {"t": [float(x) for x in self.t], "energies": [float(e) for e in E], "endpoints": list(self.endpoints)}
        (d / "path.json").write_text(json.dumps(manifest, indent=2))


@dataclass
class MinMaxResult:
    level: float
    argmax_field: Field
    residual_at_peak: float
    iterations: int
    path: Path = field(repr=False)
    max_history: list[float] = field(default_factory=list, repr=False)
    polished_field: Field | None = None
    polished_energy: float | None = None
    polished_residual: float | None = None
    tol: float = 1e-8
    peak_morse_index: int | None = None

    @property
    def converged(self) -> bool:
        if self.residual_at_peak < self.tol:
            return True
        return self.polished_residual is not None and self.polished_residual < self.tol

    @property
    def high_index(self) -> bool:
        """Flag for a peak of Morse index two or more (not corrected)."""
        return self.peak_morse_index is not None and self.peak_morse_index >= 2

    def summary(self) -> dict:
        return {
            "level": self.level,
            "residual_at_peak": self.residual_at_peak,
            "iterations": self.iterations,
            "polished_energy": self.polished_energy,
            "polished_residual": self.polished_residual,
            "peak_morse_index": self.peak_morse_index,
        }


def _check_stable(pot: Potential | None, s: float) -> None:
    if pot is None:
        return
    kind = find_critical_points(pot).kind_of(s)
    if kind != "min":
        raise NotStableEndpoint(f"{s} is not a local minimum of F", op="initial_path")


def initial_path(
    s_minus: float,
    s_plus: float,
    seed: Field | np.ndarray | None,
    dom: Domain,
    m: int,
    pot: Potential | None = None,
) -> Path:
    """Piecewise linear path ``s- -> seed -> s+`` (straight line without seed).

    With ``pot`` given the endpoints are checked to be local minima of F.
    """
    if m < MIN_SAMPLES:
        raise ValidationError(f"need at least {MIN_SAMPLES} samples, got {m}", op="initial_path")
    if not s_minus < s_plus:
        raise ValidationError("need s_minus < s_plus", op="initial_path")
    if seed is not None and m % 2 == 0:
        raise ValidationError("m must be odd so that t = 0 is a sample", op="initial_path")
    _check_stable(pot, s_minus)
    _check_stable(pot, s_plus)
    n = dom.n_nodes
    mid = np.full(n, 0.5 * (s_minus + s_plus)) if seed is None else np.asarray(getattr(seed, "values", seed), float)
    t = np.linspace(-1.0, 1.0, m)
    U = np.empty((m, n))
    for j, tj in enumerate(t):
        if tj <= 0:
            U[j] = (-tj) * s_minus + (1.0 + tj) * mid
        else:
            U[j] = (1.0 - tj) * mid + tj * s_plus
    if seed is not None:
        U[(m - 1) // 2] = mid
    U[0], U[-1] = s_minus, s_plus
    return Path(U, t, (float(s_minus), float(s_plus)), dom)


def _arclength_resample(U: np.ndarray, mass: np.ndarray, m: int) -> np.ndarray:
    d = np.sqrt(np.sum(mass * np.diff(U, axis=0) ** 2, axis=1))
    s = np.concatenate([[0.0], np.cumsum(d)])
    if s[-1] <= 0:
        return U.copy()
    target = np.linspace(0.0, s[-1], m)
    out = np.empty((m, U.shape[1]))
    k = np.clip(np.searchsorted(s, target, side="right") - 1, 0, len(s) - 2)
    w = np.where(d[k] > 0, (target - s[k]) / np.where(d[k] > 0, d[k], 1.0), 0.0)
    out = (1.0 - w)[:, None] * U[k] + w[:, None] * U[k + 1]
    out[0], out[-1] = U[0], U[-1]
    return out


def minmax_deform(
    path: Path,
    pot: Potential,
    iters: int = 2000,
    tol: float = 1e-8,
    dt: float | None = None,
    width: float = 2.0,
    reparam_every: int = 10,
    polish: bool = True,
    check_index: bool = False,
    stall_window: int = 200,
) -> MinMaxResult:
    """Lower the highest part of ``path`` by weighted descent steps.

    Each iteration moves the samples around the current peak by a linearly
    implicit gradient step with Gaussian weights (``width`` in samples),
    with the component along the path tangent removed.  A move that would
    raise a sample's energy is halved a few times and then dropped, so the
    path maximum never increases.  Every ``reparam_every`` iterations the samples are
    redistributed by L2 arclength, kept only if the maximum does not grow.
    ``polish`` runs Newton from the final peak sample as a separate result;
    ``check_index`` records the Morse index of the polished peak.  The loop
    also stops once the maximum has not moved for ``stall_window`` iterations.
    """
    dom = path.domain
    op = dom.laplacian
    free = op.free
    m_ = op.mass
    U = path.U.copy()
    mcount = U.shape[0]
    E = np.array([raw_energy(dom, row, pot) for row in U])
    if dt is None:
        lo, hi = float(U.min()), float(U.max())
        dt = 0.5 * dt_max(pot, min(lo, -1.0), max(hi, 1.0))
        if not np.isfinite(dt):
            dt = 0.1
    solvers: dict[float, object] = {}

    def step(row, h):
        if h not in solvers:
            solvers[h] = op.shifted_solver(h)
        out = row.copy()
        out[free] = solvers[h](m_[free] * (row[free] - h * pot.f(row[free])))
        return out

    history = [float(E.max())]
    it = 0
    res_peak = np.inf
    for it in range(1, iters + 1):
        jstar = int(np.argmax(E[1:-1])) + 1
        if max(E[0], E[-1]) >= E[jstar]:
            raise BarrierLost("an endpoint reached the path maximum", op="minmax_deform")
        res_peak = residual_norm(Field(U[jstar], dom), pot)
        if res_peak < tol:
            break
        for j in range(1, mcount - 1):
            w = np.exp(-(((j - jstar) / width) ** 2))
            if w < 1e-3:
                continue
            h = float(np.round(w * dt, 12))
            move = step(U[j], h) - U[j]
            # drop the component along the path so samples do not slide off the peak
            tau = U[j + 1] - U[j - 1]
            nt = np.sqrt(np.sum(m_ * tau * tau))
            if nt > 0:
                tau /= nt
                move -= np.sum(m_ * move * tau) * tau
            for _ in range(4):
                new = U[j] + move
                En = raw_energy(dom, new, pot)
                if En <= E[j]:
                    U[j], E[j] = new, En
                    break
                move *= 0.5
        if it % reparam_every == 0:
            V = _arclength_resample(U, m_, mcount)
            EV = np.array([raw_energy(dom, row, pot) for row in V])
            if EV.max() <= E.max():
                U, E = V, EV
        cur = float(E.max())
        assert cur <= history[-1] + 1e-12 * max(1.0, abs(history[-1])), "path maximum increased"
        history.append(cur)
        if it >= stall_window and history[-stall_window - 1] - cur <= 1e-12 * max(1.0, abs(cur)):
            break
    jstar = int(np.argmax(E[1:-1])) + 1
    res_peak = residual_norm(Field(U[jstar], dom), pot)
    s = pot.energy_factor
    out_path = Path(U, np.linspace(-1.0, 1.0, mcount), path.endpoints, dom)
    result = MinMaxResult(
        float(E[jstar] * s), Field(U[jstar], dom), float(res_peak * s), it, out_path, [h * s for h in history], tol=tol
    )
    if polish:
        try:
            pf = newton_solve(Field(U[jstar], dom), pot, tol=tol)
            result.polished_field = pf
            result.polished_energy = float(raw_energy(dom, pf.values, pot) * s)
            result.polished_residual = float(residual_norm(pf, pot) * s)
        except Exception:  # polishing is advisory; the min-max result stands on its own
            pass
    if check_index:
        from .spectral import spectrum

        target = result.polished_field if result.polished_field is not None else result.argmax_field
        result.peak_morse_index = spectrum(target, pot, k=4).morse_index
    return result


# ---------------------------------------------------------------------------
# optimal paths


def first_eigenfunction(u: Field, pot: Potential) -> np.ndarray:
    """Positive first eigenfunction of the linearization at ``u``, max norm 1."""
    lam, vec = lowest_eigenpairs(u.domain, pot.fp(u.values), 1)
    phi = vec[:, 0]
    phi = phi * np.sign(np.sum(u.domain.mass * phi))
    return phi / np.max(np.abs(phi))


def _flow_to_constant(start: np.ndarray, dom: Domain, pot: Potential, stable: list[float], keep: int):
    tr = gradient_flow(Field(start, dom), pot, dt=0.25 * min(1.0, dt_max(pot, -2.0, 2.0)), t_end=1e5, tol=1e-9, keep=keep)
    v = tr.final.values
    c = float(np.sum(dom.mass * v) / np.sum(dom.mass))
    near = [s for s in stable if abs(s - c) < 1e-4]
    if not near or np.max(np.abs(v[dom.laplacian.free] - c)) > 1e-4:
        raise FlowDidNotReachConstant(f"flow ended at a nonconstant state (mean {c:.4g})", op="build_optimal_path")
    return tr, near[0]


def build_optimal_path(u: Field, pot: Potential, n_lin: int = 8, max_flow_samples: int = 24) -> Path:
    """Path through ``u`` along its first eigenfunction, closed by gradient flows.

    Near ``u`` the path is ``u + t phi`` for ``|t| <= delta`` with ``delta`` the
    largest power of 1/2 with ``E(u +- delta phi) < E(u) - 1e-10`` on which
    the energy is unimodal and close to a parabola.  The two
    ends are flowed to stable constants.  Parameters are rescaled so that the
    linear part and each flow part are monotone in ``t`` with ``t = 0`` at u.
    """
    dom = u.domain
    phi = first_eigenfunction(u, pot)
    s = pot.energy_factor
    E0 = raw_energy(dom, u.values, pot) * s
    lin_t = np.linspace(-1.0, 1.0, 2 * n_lin + 1)
    delta = None
    for k in range(0, 40):
        d = 2.0**-k
        Ep = raw_energy(dom, u.values + d * phi, pot) * s
        Em = raw_energy(dom, u.values - d * phi, pot) * s
        if not (Ep < E0 - 1e-10 and Em < E0 - 1e-10):
            continue
        # the linear piece must itself peak cleanly at t = 0
        El = np.array([raw_energy(dom, u.values + d * tt * phi, pot) for tt in lin_t]) * s
        up, down = np.diff(El[: n_lin + 1]), np.diff(El[n_lin:])
        fit = np.polyval(np.polyfit(lin_t, El, 2), lin_t)
        if np.all(up > 0) and np.all(down < 0) and np.max(np.abs(fit - El)) < 1e-3 * np.ptp(El):
            delta = d
            break
    if delta is None:
        raise ValidationError("no admissible delta; u looks stable", op="build_optimal_path")
    stable = find_critical_points(pot).stable
    lin = u.values[None, :] + (delta * lin_t)[:, None] * phi[None, :]

    sides = []
    for sign in (-1.0, 1.0):
        tr, c = _flow_to_constant(u.values + sign * delta * phi, dom, pot, stable, keep=1)
        snaps = np.array(tr.snapshots[1:])
        if len(snaps) > max_flow_samples:
            # subsample by arclength so samples spread along the trajectory
            dd = np.sqrt(np.sum(dom.mass * np.diff(snaps, axis=0) ** 2, axis=1))
            cum = np.concatenate([[0.0], np.cumsum(dd)])
            pick = np.unique(np.searchsorted(cum, np.linspace(0, cum[-1], max_flow_samples)).clip(0, len(snaps) - 1))
            snaps = snaps[pick]
        const = np.full((1, dom.n_nodes), c)
        if dom.boundary_nodes.size:
            const[:, dom.boundary_nodes] = u.values[dom.boundary_nodes]
        sides.append((np.vstack([snaps, const]), c))

    # parameters: linear part on [-tau, tau], flows on [tau, 1]
    tau = 0.5
    neg, cneg = sides[0]
    pos, cpos = sides[1]
    t_lin = tau * lin_t
    t_pos = tau + (1.0 - tau) * np.arange(1, len(pos) + 1) / len(pos)
    t_neg = -(tau + (1.0 - tau) * np.arange(1, len(neg) + 1) / len(neg))
    U = np.vstack([neg[::-1], lin, pos])
    t = np.concatenate([t_neg[::-1], t_lin, t_pos])
    return Path(U, t, (cneg, cpos), dom)


@dataclass(frozen=True)
class OptimalCheck:
    ok: bool
    reason: str
    details: dict

    def __bool__(self) -> bool:
        return self.ok


def verify_optimal(path: Path, pot: Potential, u: Field, tol: float = 1e-8) -> OptimalCheck:
    """Check the four defining properties of an optimal path at ``u``.

    a) ``h(0) = u``; b) ``E(h(0)) > E(h(t))`` for every other sample;
    c) a quadratic fits ``E(h(t))`` near 0; d) the fitted curvature is negative.
    ``reason`` lists the failed items, empty when all pass.
    """
    E = path.energies(pot)
    j0 = int(np.argmin(np.abs(path.t)))
    fails = []
    det: dict = {}
    a_err = float(np.max(np.abs(path.U[j0] - u.values))) if abs(path.t[j0]) < 1e-14 else np.inf
    det["h0_error"] = a_err
    if a_err > tol * max(1.0, float(np.max(np.abs(u.values)))):
        fails.append("a")
    others = np.delete(E, j0)
    det["margin"] = float(E[j0] - others.max())
    if not E[j0] > others.max():
        fails.append("b")
    # local window: the five samples each side of t = 0
    lo, hi = max(0, j0 - 5), min(len(E), j0 + 6)
    tt, ee = path.t[lo:hi], E[lo:hi]
    scale = max(float(np.ptp(ee)), 1e-300)
    if tt.size >= 3:
        coef = np.polyfit(tt - path.t[j0], ee, 2)
        fit = np.polyval(coef, tt - path.t[j0])
        rel = float(np.max(np.abs(fit - ee)) / scale) if np.ptp(ee) > 0 else np.inf
        det["fit_rel_residual"] = rel
        det["curvature"] = float(2.0 * coef[0])
        if not rel < 1e-2:
            fails.append("c")
        if not coef[0] < 0:
            fails.append("d")
    else:
        fails += ["c", "d"]
    if 0 < j0 < len(E) - 1:
        h1, h2 = path.t[j0] - path.t[j0 - 1], path.t[j0 + 1] - path.t[j0]
        d2 = 2.0 * ((E[j0 + 1] - E[j0]) / h2 - (E[j0] - E[j0 - 1]) / h1) / (h1 + h2)
        det["second_difference"] = float(d2)
        if not d2 < 0 and "d" not in fails:
            fails.append("d")
    return OptimalCheck(not fails, ",".join(fails), det)
