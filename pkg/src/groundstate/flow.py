"""Gradient flow, Newton's method, positive Dirichlet solves and odd reflection.

The flow is the linearly implicit scheme

    (M + dt K) u_new = M (u - dt f(u))

on free nodes.  With a barrier ``(a, b)`` of stationary constants the step is
capped at ``dt_max / 2`` with ``dt_max = 1 / max_{[a,b]} f'``: then
``u -> u - dt f(u)`` is monotone on ``[a, b]`` and ``(M + dt K)^{-1} M`` is a
nonnegative averaging operator, so iterates stay strictly inside the barrier.
The flow carries the gaps ``b - u`` and ``u - a`` alongside ``u`` and updates
them directly, because near a barrier the gap drops below the resolution of
``u`` itself.  Halving the cap keeps the gaps shrinking geometrically rather
than quadratically.  The cap also guarantees energy decay.  Without a barrier the
step adapts: a step that raises the energy is rejected and ``dt`` halved, and
five accepted steps in a row double it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (
    BarrierViolation,
    ConvergenceFailure,
    InterfaceMismatch,
    MaxIterExceeded,
    SingularJacobian,
    StepStall,
    ValidationError,
)
from .field import Field, raw_energy, residual_norm
from .geometry import Domain, build_ball_radial, build_clifford_reduced
from .potential import Potential


@dataclass
class FlowTrace:
    times: list[float]
    energies: list[float]
    residuals: list[float]
    final: Field
    converged_to_stationary: bool
    rejected: int = 0
    stop_reason: str = ""
    snapshots: list[np.ndarray] = field(default_factory=list, repr=False)
    # smallest distance to the barrier after each accepted step (empty without one)
    barrier_gaps: list[float] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "energy", "residual_norm"])
            for t, e, r in zip(self.times, self.energies, self.residuals):
                w.writerow([f"{t:.12e}", f"{e:.12e}", f"{r:.12e}"])


def dt_max(pot: Potential, lo: float, hi: float, n: int = 2001) -> float:
    """Largest step keeping ``t - dt f(t)`` monotone on ``[lo, hi]``."""
    L = float(np.max(pot.fp(np.linspace(lo, hi, n))))
    return np.inf if L <= 0 else 1.0 / L


_GAP_LIN = 1e-8


def _coupling(op, v: np.ndarray):
    if not op.boundary.size:
        return 0.0
    bv = np.zeros_like(v)
    bv[op.boundary] = v[op.boundary]
    return op.stiffness_apply(bv)[op.free]


def gradient_flow(
    u0: Field,
    pot: Potential,
    dt: float,
    t_end: float,
    barrier: tuple[float, float] | None = None,
    tol: float = 1e-10,
    max_steps: int = 200_000,
    dt_min: float = 1e-14,
    dt_cap: float | None = None,
    keep: int = 0,
) -> FlowTrace:
    """Integrate ``u_t = Lap u - f(u)`` from ``u0`` until ``t_end`` or stationarity.

    Energies are recorded in the reported normalization (``E_eps`` for
    Allen-Cahn).  ``keep > 0`` stores every ``keep``-th accepted state.
    """
    if not dt > 0 or not t_end >= 0:
        raise ValidationError("need dt > 0 and t_end >= 0", op="gradient_flow")
    dom = u0.domain
    op = dom.laplacian
    free = op.free
    m = op.mass
    u = u0.values.copy()
    cap = np.inf if dt_cap is None else float(dt_cap)
    if barrier is not None:
        a, b = map(float, barrier)
        if not (abs(float(pot.f(a))) < 1e-9 * max(1.0, abs(pot.f(0.5 * (a + b)))) and abs(float(pot.f(b))) < 1e-9 * max(1.0, abs(pot.f(0.5 * (a + b))))):
            raise ValidationError("barrier values must be stationary constants", op="gradient_flow")
        if not (np.all(u[free] > a) and np.all(u[free] < b)):
            raise ValidationError("initial field must lie strictly inside the barrier", op="gradient_flow")
        cap = min(cap, 0.5 * dt_max(pot, a, b))
        gb, ga = b - u, u - a
        fpb, fpa = float(pot.fp(b)), float(pot.fp(a))
    dt = min(dt, cap)

    # coupling of free nodes to pinned boundary values
    bvals = np.zeros_like(u)
    bvals[op.boundary] = u[op.boundary]
    bcoup = op.stiffness_apply(bvals)[free] if op.boundary.size else 0.0

    s = pot.energy_factor
    absK = abs(op.matrix)
    E = raw_energy(dom, u, pot)
    r = residual_norm(Field(u, dom), pot)
    times, energies, residuals = [0.0], [E * s], [r]
    snaps = [u.copy()] if keep else []
    gaps: list[float] = []
    solvers: dict[float, object] = {}
    t = 0.0
    streak = rejected = steps = 0
    reason = "t_end"
    while t < t_end - 1e-14 * max(1.0, t_end):
        if r < tol:
            reason = "stationary"
            break
        if steps >= max_steps:
            reason = "max_steps"
            break
        h = min(dt, t_end - t)
        if h not in solvers:
            if len(solvers) > 8:
                solvers.clear()
            solvers[h] = op.shifted_solver(h)
        un = u.copy()
        if barrier is None:
            rhs = m[free] * (u[free] - h * pot.f(u[free])) - h * bcoup
            un[free] = solvers[h](rhs)
        else:
            # solve for the gaps to both barriers: the right-hand sides are
            # nonnegative and the solve preserves sign, so no rounding overshoot
            gbf, gaf = gb[free], ga[free]
            fv = pot.f(u[free])
            # linearize f at the barrier where u cannot resolve the gap
            fv = np.where(gbf < _GAP_LIN, -fpb * gbf, np.where(gaf < _GAP_LIN, fpa * gaf, fv))
            wb = solvers[h](m[free] * (gbf + h * fv) - h * _coupling(op, gb))
            wa = solvers[h](m[free] * (gaf - h * fv) - h * _coupling(op, ga))
            un[free] = np.where(wb <= wa, b - wb, a + wa)
        if not np.all(np.isfinite(un)):
            En = np.inf
        else:
            En = raw_energy(dom, un, pot)
        if En > E:
            # size of the rounding error in the quadratic form, which cancels near constants
            noise = abs(E) + np.abs(un) @ (absK @ np.abs(un)) + float(np.sum(m * np.abs(pot.F(un))))
            if En - E <= 64 * np.finfo(float).eps * noise:
                reason = "roundoff"
                break
            rejected += 1
            dt = 0.5 * h
            streak = 0
            if dt < dt_min:
                raise StepStall(f"dt underflow at t={t:.6g}", op="gradient_flow")
            continue
        if barrier is not None:
            gap = float(min(wb.min(), wa.min())) if wb.size else np.inf
            if not gap > 0:
                raise BarrierViolation(
                    f"iterate left ({a}, {b}) at t={t + h:.6g}: smallest gap {gap:.3g}",
                    op="gradient_flow",
                )
            gb, ga = gb.copy(), ga.copy()
            gb[free], ga[free] = wb, wa
            gaps.append(gap)
        u, E, t = un, En, t + h
        steps += 1
        r = residual_norm(Field(u, dom), pot)
        times.append(t)
        energies.append(E * s)
        residuals.append(r)
        if keep and steps % keep == 0:
            snaps.append(u.copy())
        streak += 1
        if streak >= 5 and h == dt:
            dt = min(2.0 * dt, cap)
            streak = 0
    else:
        reason = "stationary" if r < tol else "t_end"
    return FlowTrace(times, energies, residuals, Field(u, dom), bool(r < tol), rejected, reason, snaps, gaps)


# ---------------------------------------------------------------------------
# Newton


def _jacobian_solver(dom: Domain, q: np.ndarray):
    """Solver for ``(K + diag(mass * q))`` on free nodes, q = f'(u)."""
    op = dom.laplacian
    m = op.mass
    return op.shifted_solver(1.0, extra_diag=m * q - m)


def newton_solve(
    u0: Field, pot: Potential, tol: float = 1e-10, max_iter: int = 50, raise_on_fail: bool = True
) -> Field:
    """Newton's method on ``Lap u - f(u) = 0`` with Armijo backtracking on ``||r||^2``."""
    dom = u0.domain
    op = dom.laplacian
    free = op.free
    m = op.mass
    u = u0.values.copy()

    def resid(v):
        R = -(op.stiffness_apply(v) + m * pot.f(v))
        return R[free] / m[free]

    r = resid(u)
    phi = float(np.sum(m[free] * r * r))
    for it in range(max_iter + 1):
        if np.sqrt(phi) < tol:
            return Field(u, dom)
        if it == max_iter:
            break
        try:
            solve = _jacobian_solver(dom, pot.fp(u))
            step = solve(m[free] * r)
        except RuntimeError as exc:
            raise SingularJacobian(str(exc), op="newton_solve") from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("non-finite Newton step", op="newton_solve")
        alpha = 1.0
        while True:
            trial = u.copy()
            trial[free] += alpha * step
            rt = resid(trial)
            pt = float(np.sum(m[free] * rt * rt))
            if pt <= (1.0 - 1e-4 * alpha) * phi or alpha < 2.0**-30:
                break
            alpha *= 0.5
        if alpha < 2.0**-30 and pt > phi:
            raise SingularJacobian("line search failed", op="newton_solve")
        u, r, phi = trial, rt, pt
    if raise_on_fail:
        raise MaxIterExceeded(f"residual {np.sqrt(phi):.3g} after {max_iter} iterations", op="newton_solve")
    return Field(u, dom)


# ---------------------------------------------------------------------------
# positive Dirichlet solutions


def first_dirichlet_eigen(dom: Domain) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of ``-Lap`` with the domain's pinned nodes; eigenvector > 0, max 1."""
    from .spectral import lowest_eigenpairs

    lam, vec = lowest_eigenpairs(dom, np.zeros(dom.n_nodes), 1)
    phi = vec[:, 0]
    phi = phi * np.sign(phi[np.argmax(np.abs(phi))])
    return float(lam[0]), phi / np.max(phi)


def dirichlet_positive_solve(
    dom: Domain,
    pot: Potential,
    init_scale: float = 0.1,
    init: np.ndarray | None = None,
    tol: float = 1e-10,
    spectral_check: bool = True,
    t_end: float = 1e4,
) -> Field | None:
    """Positive solution of ``Lap u = f(u)`` with ``u = 0`` on the pinned nodes.

    A positive solution exists iff ``lambda_1 + f'(0) < 0`` (for Allen-Cahn:
    ``eps^2 lambda_1 < 1``).  With ``spectral_check`` this criterion decides
    existence and a failed solve raises :class:`ConvergenceFailure`.  Without
    it the answer comes from the flow alone, which is how threshold bisection
    stays independent of the spectral module.
    """
    if dom.boundary_nodes.size == 0:
        raise ValidationError("domain has no Dirichlet boundary", op="dirichlet_positive_solve")
    lam1, phi = first_dirichlet_eigen(dom)
    exists = lam1 + float(pot.fp(0.0)) < 0.0
    if spectral_check and not exists:
        return None
    free = dom.laplacian.free
    if init is None:
        v0 = init_scale * phi
    else:
        v0 = np.asarray(init, dtype=float).copy()
        v0[dom.boundary_nodes] = 0.0
    u0 = Field(v0, dom)
    h0 = dt_max(pot, -1.0, 1.0) if np.isfinite(dt_max(pot, -1.0, 1.0)) else 0.1
    # without the cap, step doubling outruns the slow dynamics near a threshold
    # and hands Newton a state that slides to zero
    tr = gradient_flow(u0, pot, dt=h0, t_end=t_end, tol=1e-6, dt_cap=h0)
    u = tr.final
    amp = float(np.max(np.abs(u.values)))
    if amp < 1e-7:
        if spectral_check:
            raise ConvergenceFailure("flow collapsed to zero although a solution exists", op="dirichlet_positive_solve")
        return None
    try:
        u = newton_solve(u, pot, tol=tol)
    except (MaxIterExceeded, SingularJacobian) as exc:
        raise ConvergenceFailure(f"Newton polish failed: {exc}", op="dirichlet_positive_solve") from exc
    if np.max(np.abs(u.values)) < 1e-7:
        if spectral_check:
            raise ConvergenceFailure("Newton polish collapsed to zero", op="dirichlet_positive_solve")
        return None
    if not np.all(u.values[free] > 0.0):
        raise ConvergenceFailure("solution is not positive", op="dirichlet_positive_solve")
    return u


# ---------------------------------------------------------------------------
# odd reflection

REFLECTIONS = ("equator", "clifford", "cross")


def half_domain(dom_full: Domain, reflection: str) -> Domain:
    """The fundamental domain matching ``dom_full`` node for node."""
    if reflection == "equator":
        if dom_full.kind != "SphereRadial" or dom_full.params["n"] % 2:
            raise ValidationError("equator reflection needs SphereRadial with even n", op="half_domain")
        N, n = dom_full.params["N"], dom_full.params["n"]
        return build_ball_radial(N, np.pi / 2, n // 2, bc="dirichlet", metric="sphere")[0]
    if reflection == "clifford":
        if dom_full.kind != "CliffordReduced":
            raise ValidationError("clifford reflection needs CliffordReduced", op="half_domain")
        return build_clifford_reduced(dom_full.params["n"], half=True)[0]
    if reflection == "cross":
        from .geometry import build_biaxial

        if dom_full.kind != "BiAxial" or dom_full.params["quarter"]:
            raise ValidationError("cross reflection needs the full BiAxial grid", op="half_domain")
        return build_biaxial(dom_full.params["n_rho"], dom_full.params["n_phi"], quarter=True)[0]
    raise ValidationError(f"unknown reflection {reflection!r}", op="half_domain")


def reflect_odd(u_half: Field, dom_full: Domain, reflection: str, tol: float = 1e-8) -> Field:
    """Extend a solution on a fundamental domain to an odd field on ``dom_full``.

    ``equator``: theta -> pi - theta.  ``clifford``: s -> pi/2 - s.
    ``cross``: odd across both {x3 = 0} and {x4 = 0}, i.e. the sign of x3 x4.
    """
    v = u_half.values
    hd = u_half.domain
    if hd.boundary_nodes.size and np.max(np.abs(v[hd.boundary_nodes])) > tol:
        raise InterfaceMismatch("half field does not vanish on the interface", op="reflect_odd")
    if reflection in ("equator", "clifford"):
        n = dom_full.params["n"]
        if v.size != n // 2 + 1 or dom_full.nodes.ndim != 1:
            raise InterfaceMismatch("half grid does not match the full grid", op="reflect_odd")
        out = np.empty(n + 1)
        out[: n // 2 + 1] = v
        out[n // 2 + 1 :] = -v[: n // 2][::-1]
        out[n // 2] = 0.0
        return Field(out, dom_full)
    if reflection == "cross":
        nr, nj = hd.extra["shape"]
        mq = nj - 1
        if dom_full.extra["shape"] != (nr, 4 * mq):
            raise InterfaceMismatch("quarter grid does not match the full grid", op="reflect_odd")
        Q = v.reshape(nr, nj)
        full = np.empty((nr, 4 * mq))
        j = np.arange(4 * mq)
        for jj in j:
            if jj <= mq:
                full[:, jj] = Q[:, jj]
            elif jj <= 2 * mq:
                full[:, jj] = -Q[:, 2 * mq - jj]
            elif jj <= 3 * mq:
                full[:, jj] = Q[:, jj - 2 * mq]
            else:
                full[:, jj] = -Q[:, 4 * mq - jj]
        return Field(full.ravel(), dom_full)
    raise ValidationError(f"unknown reflection {reflection!r}", op="reflect_odd")
