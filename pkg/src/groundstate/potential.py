"""Scalar nonlinearities F with f = F' and f' = F''.

A :class:`Potential` is a frozen bundle of three vectorized callables.  The
Allen-Cahn problem ``eps^2 Lap u - W'(u) = 0`` is handled by :func:`allen_cahn`,
which rescales W by ``1/eps^2`` and records the factors needed to report
``E_eps`` and the ``-eps^2 Lap + W''`` spectrum.  That is the only place where
eps enters the numerics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from .errors import DegenerateCritical, EmptyResult, InvalidM, NoLocalMax, ValidationError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Potential:
    """Energy density F and its first two derivatives.

    ``scale`` multiplies eigenvalues for reporting and ``energy_factor``
    multiplies the discrete energy (both 1 outside the Allen-Cahn layer).
    """

    eval_F: ArrayFn
    eval_f: ArrayFn
    eval_fp: ArrayFn
    search_interval: tuple[float, float] = (-10.0, 10.0)
    name: str = "custom"
    eps: float | None = None
    scale: float = 1.0
    energy_factor: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def F(self, t):
        return self.eval_F(np.asarray(t, dtype=float))

    def f(self, t):
        return self.eval_f(np.asarray(t, dtype=float))

    def fp(self, t):
        return self.eval_fp(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class CriticalPointList:
    points: tuple[tuple[float, str], ...]

    @property
    def c_minus(self) -> float:
        return self.points[0][0]

    @property
    def c_plus(self) -> float:
        return self.points[-1][0]

    @property
    def unstable(self) -> list[float]:
        return [t for t, kind in self.points if kind == "max"]

    @property
    def stable(self) -> list[float]:
        return [t for t, kind in self.points if kind == "min"]

    @property
    def k_minus(self) -> float:
        u = self.unstable
        return min(0.0, u[0]) if u else 0.0

    @property
    def k_plus(self) -> float:
        u = self.unstable
        return max(0.0, u[-1]) if u else 0.0

    def kind_of(self, t: float, tol: float = 1e-6) -> str | None:
        for c, kind in self.points:
            if abs(c - t) <= tol * max(1.0, abs(c)):
                return kind
        return None


@dataclass(frozen=True)
class HypothesisClass:
    tag: str
    K: float
    C: float | None = None
    p: float | None = None
    rho: float | None = None
    R0: float | None = None
    certificate: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# builtin potentials

def double_well() -> Potential:
    """W(u) = (1 - u^2)^2 / 4."""
    return Potential(
        eval_F=lambda t: 0.25 * (1.0 - t * t) ** 2,
        eval_f=lambda t: t * t * t - t,
        eval_fp=lambda t: 3.0 * t * t - 1.0,
        search_interval=(-3.0, 3.0),
        name="double_well",
    )


def neg_quadratic() -> Potential:
    return Potential(
        eval_F=lambda t: -0.5 * t * t,
        eval_f=lambda t: -t,
        eval_fp=lambda t: -np.ones_like(t),
        search_interval=(-5.0, 5.0),
        name="neg_quadratic",
    )


def quartic_decay() -> Potential:
    return Potential(
        eval_F=lambda t: 0.5 * t * t - 0.25 * t**4,
        eval_f=lambda t: t - t**3,
        eval_fp=lambda t: 1.0 - 3.0 * t * t,
        search_interval=(-3.0, 3.0),
        name="quartic_decay",
    )


def _tilted_F(t):
    s = np.sqrt(1.0 + t * t)
    return 0.5 * (-0.5 * t * s + 2.5 * np.arcsinh(t) - 2.0 * t / s + 2.0 * s + 4.0 / s) - 3.0


def _tilted_f(t):
    return (t + 1.0) * t * (t - 1.0) * (2.0 - t) / (2.0 * (1.0 + t * t) ** 1.5)


def _tilted_fp(t):
    # P(t) = -t^4 + 2t^3 + t^2 - 2t, f = P / (2 s^3), s^2 = 1 + t^2
    P = -(t**4) + 2 * t**3 + t**2 - 2 * t
    dP = -4 * t**3 + 6 * t**2 + 2 * t - 2
    q = 1.0 + t * t
    return (dP * q - 3.0 * t * P) / (2.0 * q**2.5)


def tilted_a2() -> Potential:
    """Wells at -1 and 1, hump at 0, and a bottomless side beyond t = 2.

    f(t) = (t+1) t (t-1) (2-t) / (2 (1+t^2)^{3/2}) decays like -t/2, so F
    falls off quadratically for t -> +inf and grows for t -> -inf.  The
    largest critical point t = 2 is a local maximum.
    """
    return Potential(_tilted_F, _tilted_f, _tilted_fp, search_interval=(-5.0, 5.0), name="tilted_a2")


def polynomial_potential(coeffs, name: str = "polynomial", search_interval=(-10.0, 10.0)) -> Potential:
    """F given by coefficients in increasing degree: F(t) = sum c_k t^k."""
    P = Polynomial(np.asarray(coeffs, dtype=float))
    dP = P.deriv()
    ddP = dP.deriv()
    return Potential(
        eval_F=lambda t: P(t),
        eval_f=lambda t: dP(t),
        eval_fp=lambda t: ddP(t),
        search_interval=tuple(search_interval),
        name=name,
        meta={"coeffs": [float(c) for c in P.coef]},
    )


BUILTINS: dict[str, Callable[[], Potential]] = {
    "double_well": double_well,
    "neg_quadratic": neg_quadratic,
    "quartic_decay": quartic_decay,
    "tilted_a2": tilted_a2,
}


def get_potential(name: str) -> Potential:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ValidationError(f"unknown potential {name!r}; builtins are {sorted(BUILTINS)}", op="get_potential")


def allen_cahn(eps: float, base: Potential | None = None) -> Potential:
    """Rescale ``base`` (default: double well) to F = W/eps^2.

    The discrete energy is multiplied by ``energy_factor = eps`` to give E_eps
    and eigenvalues by ``scale = eps^2`` to match ``-eps^2 Lap + W''``.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive", op="allen_cahn")
    W = base if base is not None else double_well()
    inv = 1.0 / eps**2
    return Potential(
        eval_F=lambda t: inv * W.eval_F(t),
        eval_f=lambda t: inv * W.eval_f(t),
        eval_fp=lambda t: inv * W.eval_fp(t),
        search_interval=W.search_interval,
        name=f"allen_cahn[{W.name}]",
        eps=float(eps),
        scale=float(eps**2),
        energy_factor=float(eps),
        meta={"base": W.name},
    )


# ---------------------------------------------------------------------------
# critical points and hypotheses

def find_critical_points(pot: Potential, tol: float = 1e-8, n_scan: int = 10_000) -> CriticalPointList:
    """Sign-change scan of f on the search interval, refined by Brent's method.

    The scan grid is uniform plus geometric in |t|, so long intervals (as
    produced by truncation far out) still resolve critical points near 0.
    """
    lo, hi = pot.search_interval
    t = np.linspace(lo, hi, n_scan + 1)
    big = max(abs(lo), abs(hi))
    if big > 1e-3:
        g = np.geomspace(1e-3, big, n_scan)
        t = np.concatenate([t, g, -g, [0.0]])
        t = np.unique(t[(t >= lo) & (t <= hi)])
    ft = pot.f(t)
    roots: list[float] = []
    for i in np.nonzero(ft == 0.0)[0]:
        roots.append(float(t[i]))
    prod = ft[:-1] * ft[1:]
    for i in np.nonzero(prod < 0.0)[0]:
        r = brentq(lambda x: float(pot.f(x)), t[i], t[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        roots.append(float(r))
    if not roots:
        raise EmptyResult("no sign change of f on the search interval", op="find_critical_points")
    roots.sort()
    points = []
    for r in roots:
        d = float(pot.fp(r))
        if abs(d) < tol:
            raise DegenerateCritical(f"f'({r:.6g}) = {d:.3g}; F is not Morse here", op="find_critical_points")
        if abs(float(pot.f(r))) >= max(tol, 1e-12):
            raise EmptyResult(f"root refinement failed near t={r:.6g}", op="find_critical_points")
        points.append((r, "min" if d > 0 else "max"))
    return CriticalPointList(tuple(points))


def _tail_slope(g_lo: float, g_hi: float, t_lo: float, t_hi: float) -> float:
    if g_lo <= 0 or g_hi <= 0:
        return -np.inf
    return float(np.log(g_hi / g_lo) / np.log(t_hi / t_lo))


def classify_hypothesis(
    pot: Potential, cps: CriticalPointList, N: int, T: float = 1e4, n_scan: int = 10_000
) -> HypothesisClass:
    """Sampled check of the growth hypotheses on F.

    Tails are probed on a log grid up to ``T``.  Growth exponents come from the
    log-log slope of ``-sgn(t) f(t)`` over the last decade.  The returned
    certificate lists the grids and raw numbers behind every constant.
    """
    if not cps.unstable:
        raise NoLocalMax("F has no local maximum", op="classify_hypothesis")
    km, kp = cps.k_minus, cps.k_plus
    seg = np.linspace(km, kp, 2001) if kp > km else np.array([km])
    fmax = float(np.max(np.abs(pot.f(seg))))
    K = max(abs(km), kp, fmax)

    lo, hi = pot.search_interval
    lin = np.linspace(lo, hi, n_scan + 1)
    tail = np.geomspace(1.0, T, 4001)
    grid = np.unique(np.concatenate([lin, tail, -tail]))
    g = -np.sign(grid) * pot.f(grid)
    ratio = g / (1.0 + np.abs(grid))
    slopes = {}
    for side in (1.0, -1.0):
        g1 = -side * float(pot.f(side * T / 10))
        g2 = -side * float(pot.f(side * T))
        slopes["+" if side > 0 else "-"] = _tail_slope(g1, g2, T / 10, T)
    cert = {
        "scan_interval": [float(lo), float(hi)],
        "n_scan": n_scan,
        "tail_T": T,
        "tail_slopes": slopes,
        "k_minus": km,
        "k_plus": kp,
        "fmax_on_k_range": fmax,
    }

    first_kind, last_kind = cps.points[0][1], cps.points[-1][1]
    if first_kind == "min" and last_kind == "min":
        return HypothesisClass("A1", K, certificate=cert)

    linear_ok = all(s <= 1.0 + 0.02 for s in slopes.values())
    if linear_ok:
        C_tail = max((-s * float(pot.f(s * T))) / T for s in (1.0, -1.0))
        C = max(float(np.max(ratio)), C_tail, 0.0)
        cert["C_grid_max"] = float(np.max(ratio))
        cert["C_tail"] = C_tail
        return HypothesisClass("A2", K, C=C, certificate=cert)

    # right-tail data for the superlinear case; the tag needs c- to be a minimum too
    a3 = _a3_tail(pot, N, T, slopes["+"])
    cert.update({"a3_" + k: v for k, v in a3.items()})
    tag = "A3" if (first_kind == "min" and a3["ok"]) else "none"
    return HypothesisClass(tag, K, C=a3.get("C"), p=a3.get("p"), rho=a3.get("rho"), R0=a3.get("R0"), certificate=cert)


def _a3_tail(pot: Potential, N: int, T: float, slope: float) -> dict:
    if not np.isfinite(slope) or slope <= 1.0 + 0.02:
        return {"ok": False, "reason": "f(t)/t does not tend to -inf"}
    p = round(slope + 1.0, 3)
    p_crit = np.inf if N <= 2 else 2.0 * N / (N - 2)
    rho = next(round(k * 0.05, 2) for k in range(1, 11) if k * 0.05 > 1.0 / p + 1e-12)
    t = np.geomspace(1e-3, T, 8001)
    ar = -rho * t * pot.f(t) + pot.F(t) - t * t
    bad = np.nonzero(ar < 0.0)[0]
    R0 = float(t[bad[-1] + 1]) if bad.size else float(t[0])
    if bad.size and bad[-1] + 1 >= t.size:
        return {"ok": False, "p": p, "rho": rho, "reason": "Ambrosetti-Rabinowitz type inequality fails on the tail"}
    # round R0 up to a readable grid value
    R0 = float(np.ceil(R0 * 100) / 100)
    tt = t[t > R0]
    C = float(np.max(-pot.f(tt) / (1.0 + tt ** (p - 1.0))))
    ok = 2.0 < p < p_crit and rho < 0.5
    return {"ok": bool(ok), "p": p, "rho": rho, "R0": R0, "C": max(C, 0.0), "p_critical": p_crit}


# ---------------------------------------------------------------------------
# truncation


def _smoothstep(x):
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


def _smoothstep_d(x):
    return 30.0 * x * x * (1.0 - x) ** 2


_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


def truncate_potential(
    pot: Potential, cps: CriticalPointList, M: float, side: str = "upper", width: float = 1.0
) -> Potential:
    """Replace F beyond ``M`` by a convex quadratic well.

    On ``[M, M + width]`` the derivative is blended as
    ``f* = (1 - s) f + s * 2a (t - c*)`` with ``s`` the quintic smoothstep and
    ``c* = M + width``.  Taking ``a = min|f| / (4 width)`` keeps ``f* < 0``
    before ``c*``, so c* is the only new critical point and F* >= F.  Beyond
    ``c*`` the tail is ``F*(c*) + a (t - c*)^2``.  ``side="lower"`` mirrors
    everything through ``t -> -t`` and truncates below ``M < c-``.
    """
    if side not in ("upper", "lower"):
        raise ValidationError("side must be 'upper' or 'lower'", op="truncate_potential")
    sg = 1.0 if side == "upper" else -1.0
    c_end, kind = (cps.points[-1] if sg > 0 else cps.points[0])
    if kind != "max":
        raise InvalidM(f"extreme critical point {c_end:.6g} is a minimum; nothing to truncate", op="truncate_potential")
    if sg * M <= sg * c_end:
        raise InvalidM(f"M={M} must lie beyond the extreme critical point {c_end:.6g}", op="truncate_potential")
    if not width > 0:
        raise ValidationError("width must be positive", op="truncate_potential")

    # mirrored potential G(x) = F(sg x), g = G', gp = G''
    G = lambda x: pot.F(sg * x)
    g = lambda x: sg * pot.f(sg * x)
    gp = lambda x: pot.fp(sg * x)
    Mx = sg * M
    L = width
    cstar = Mx + L
    mu = float(np.min(np.abs(g(np.linspace(Mx, cstar, 4001)))))
    a = mu / (4.0 * L)
    GM = float(G(Mx))

    def g_star(x):
        x = np.asarray(x, dtype=float)
        xi = np.clip((x - Mx) / L, 0.0, 1.0)
        s = _smoothstep(xi)
        lin = 2.0 * a * (x - cstar)
        out = np.where(x <= Mx, 0.0, (1.0 - s) * g(np.minimum(x, cstar)) + s * lin)
        out = np.where(x >= cstar, lin, out)
        return np.where(x <= Mx, g(x), out)

    def gp_star(x):
        x = np.asarray(x, dtype=float)
        xi = np.clip((x - Mx) / L, 0.0, 1.0)
        s = _smoothstep(xi)
        ds = _smoothstep_d(xi) / L
        xc = np.minimum(x, cstar)
        lin = 2.0 * a * (x - cstar)
        mid = -ds * g(xc) + (1.0 - s) * gp(xc) + ds * lin + s * 2.0 * a
        out = np.where(x >= cstar, 2.0 * a, mid)
        return np.where(x <= Mx, gp(x), out)

    def _blend_integral(x):
        # int_M^x g_star via Gauss-Legendre, x in [M, c*]
        x = np.atleast_1d(x)
        half = 0.5 * (x - Mx)
        nodes = Mx + half[:, None] * (1.0 + _GL_X[None, :])
        return half * (g_star(nodes) @ _GL_W)

    G_cstar = GM + float(_blend_integral(np.array([cstar]))[0])

    def G_star(x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.empty_like(flat)
        left = flat <= Mx
        right = flat >= cstar
        mid = ~(left | right)
        if left.any():
            out[left] = G(flat[left])
        if right.any():
            out[right] = G_cstar + a * (flat[right] - cstar) ** 2
        if mid.any():
            out[mid] = GM + _blend_integral(flat[mid])
        return out.reshape(x.shape) if x.ndim else out[0]

    c_star_t = sg * cstar
    return Potential(
        eval_F=lambda t: G_star(sg * t),
        eval_f=lambda t: sg * g_star(sg * t),
        eval_fp=lambda t: gp_star(sg * t),
        search_interval=(min(pot.search_interval[0], c_star_t - 1.0), max(pot.search_interval[1], c_star_t + 1.0)),
        name=f"{pot.name}*",
        eps=pot.eps,
        scale=pot.scale,
        energy_factor=pot.energy_factor,
        meta={"M": float(M), "c_star": c_star_t, "a": a, "mu": mu, "side": side, "base": pot.name},
    )
