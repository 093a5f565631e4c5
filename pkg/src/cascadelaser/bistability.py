"""Steady-state intensities, stability, hysteresis, and phase diagrams.

Two solver frames are provided. In the rotating-wave frame each mode obeys an
independent cubic in its mean photon number, with the radiation-pressure
shift delta0 - beta*I and the gain-narrowed linewidth kappa/2 -+ Re xi_jj. In
the beyond-rotating-wave frame (drive detunings chosen as delta02 = -delta01
so the coherence-induced intermode terms survive) the two intensities obey a
coupled pair of polynomial equations solved by a cubic-sweep scan with Newton
polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import HBAR
from .cubic import real_cubic_roots
from .errors import AboveLasingThresholdError, SolverError
from .gain_medium import GainCoefficients, atomic_steady_state_linear, xi_coefficients
from .params import SystemParams, derived_quantities

__all__ = [
    "RwaSteadyState", "CoupledSteadyState", "HysteresisTrace",
    "beta_coefficients", "rwa_roots", "rwa_fold_powers", "coupled_roots",
    "trace_hysteresis", "bistability_phase_diagram", "gain_coefficients_for",
]

RESIDUAL_RTOL = 1e-8     # acceptance bound on re-substituted residuals
DEDUP_RTOL = 1e-6


def gain_coefficients_for(p: SystemParams) -> GainCoefficients:
    """Medium coefficients for the current atomic parameters."""
    return xi_coefficients(p.atom, atomic_steady_state_linear(p.atom))


def beta_coefficients(p: SystemParams):
    """Radiation-pressure shift per photon, beta_j = 2 w_mj G_j^2 /
    (gamma_mj^2/4 + w_mj^2)."""
    d = derived_quantities(p)
    b1 = 2.0 * p.mech.omega_m1 * d.G1 ** 2 / (
        p.mech.gamma_m1 ** 2 / 4.0 + p.mech.omega_m1 ** 2)
    b2 = 2.0 * p.mech.omega_m2 * d.G2 ** 2 / (
        p.mech.gamma_m2 ** 2 / 4.0 + p.mech.omega_m2 ** 2)
    return b1, b2


@dataclass(frozen=True)
class RwaSteadyState:
    mode: int
    I: float
    delta_eff: float
    stable: bool


def _eps_squared(p: SystemParams, P, mode):
    kap = p.cavity.kappa1 if mode == 1 else p.cavity.kappa2
    om_L = p.cavity.omega_laser(mode)
    return kap * P / (HBAR * om_L)


def rwa_roots(p: SystemParams, mode: int, P: float, *, delta0=None,
              xi: GainCoefficients | None = None):
    """All steady-state photon numbers of one mode in the rotating-wave frame.

    Expands I |i(delta0 - beta I) + kappa/2 + (-1)^mode xi_mm|^2 = |eps|^2
    into a real cubic. Roots are returned sorted ascending with the slope
    stability criterion applied (the middle of three roots is unstable).

    Raises AboveLasingThresholdError when the medium gain exceeds the cavity
    loss for the requested mode.
    """
    if mode not in (1, 2):
        raise ValueError("mode must be 1 or 2")
    xi = xi if xi is not None else gain_coefficients_for(p)
    xjj = xi.xi11 if mode == 1 else xi.xi22
    sign = -1.0 if mode == 1 else 1.0
    kap = p.cavity.kappa1 if mode == 1 else p.cavity.kappa2
    if delta0 is None:
        delta0 = p.cavity.delta01 if mode == 1 else p.cavity.delta02
    kt = kap / 2.0 + sign * xjj.real
    if kt <= 0:
        raise AboveLasingThresholdError(
            f"mode {mode}: effective damping kappa/2 {'-' if mode == 1 else '+'} "
            f"Re(xi_{mode}{mode}) = {kt:.6g} <= 0; steady state invalid")
    dbar = delta0 + sign * xjj.imag
    beta = beta_coefficients(p)[mode - 1]
    e2 = _eps_squared(p, P, mode)
    if beta == 0.0:
        ivals = [e2 / (kt * kt + dbar * dbar)]
    else:
        roots, _ = real_cubic_roots(beta * beta, -2.0 * dbar * beta,
                                    kt * kt + dbar * dbar, -e2)
        ivals = sorted(float(r) for r in roots[0] if np.isfinite(r) and r >= 0.0)
    out = []
    for i, I in enumerate(ivals):
        # slope of |eps|^2(I); negative slope marks the unstable middle branch
        slope = kt * kt + dbar * dbar - 4.0 * dbar * beta * I + 3.0 * beta ** 2 * I * I
        out.append(RwaSteadyState(mode=mode, I=I,
                                  delta_eff=delta0 - beta * I,
                                  stable=bool(slope >= 0.0)))
    return out


def rwa_fold_powers(p: SystemParams, mode: int, *, delta0=None,
                    xi: GainCoefficients | None = None):
    """Analytic fold (turning-point) powers of the rotating-wave cubic.

    Solves d|eps|^2/dI = 0; returns (P_low, P_high) in watts, or None when
    the mode is monostable at this detuning.
    """
    xi = xi if xi is not None else gain_coefficients_for(p)
    xjj = xi.xi11 if mode == 1 else xi.xi22
    sign = -1.0 if mode == 1 else 1.0
    kap = p.cavity.kappa1 if mode == 1 else p.cavity.kappa2
    if delta0 is None:
        delta0 = p.cavity.delta01 if mode == 1 else p.cavity.delta02
    kt = kap / 2.0 + sign * xjj.real
    dbar = delta0 + sign * xjj.imag
    beta = beta_coefficients(p)[mode - 1]
    if beta == 0.0 or dbar <= 0.0 or dbar * dbar < 3.0 * kt * kt:
        return None
    s = math.sqrt(dbar * dbar - 3.0 * kt * kt)
    I_lo_fold = (2.0 * dbar - s) / (3.0 * beta)   # local max of |eps|^2: fold A
    I_hi_fold = (2.0 * dbar + s) / (3.0 * beta)   # local min: fold B
    om_L = p.cavity.omega_laser(mode)

    def power(I):
        e2 = I * (kt * kt + (dbar - beta * I) ** 2)
        return e2 * HBAR * om_L / kap

    return power(I_hi_fold), power(I_lo_fold)


# --------------------------------------------------------------------------
# Beyond-RWA coupled system
# --------------------------------------------------------------------------

class _CoupledSystem:
    """Residual map of the coupled intensity equations at fixed drive.

    With a = kappa1/2 - Re xi11, c = kappa2/2 + Re xi22,
    b(I1) = delta0 - Im xi11 - beta1 I1, e(I2) = delta0 - Im xi22 + beta2 I2
    and W = xi12 * conj(xi21), the shared response denominator is

        M(b, e) = (a c - b e + Re W)^2 + (a e + b c + Im W)^2

    and the equations read I1 M = |eps|^2 D1(e), I2 M = |eps|^2 D2(b).
    """

    def __init__(self, p: SystemParams, P, delta0, mu, xi=None):
        xi = xi if xi is not None else gain_coefficients_for(p)
        self.xi = xi
        self.a = p.cavity.kappa1 / 2.0 - xi.xi11.real
        self.c = p.cavity.kappa2 / 2.0 + xi.xi22.real
        W = xi.xi12 * np.conj(xi.xi21)
        self.Wr = W.real
        self.Wi = W.imag
        self.b0 = delta0 - xi.xi11.imag
        self.e0 = delta0 - xi.xi22.imag
        self.beta1, self.beta2 = beta_coefficients(p)
        self.mu = mu
        self.eps2 = _eps_squared(p, P, 1)
        self.r12 = xi.xi12
        self.r21 = xi.xi21

    # -- scalar pieces -----------------------------------------------------
    def b_of(self, I1):
        return self.b0 - self.beta1 * I1

    def e_of(self, I2):
        return self.e0 + self.beta2 * I2

    def M(self, b, e):
        t1 = self.a * self.c - b * e + self.Wr
        t2 = self.a * e + b * self.c + self.Wi
        return t1 * t1 + t2 * t2

    def D1(self, e):
        return (self.c + self.mu * self.r12.real) ** 2 \
            + (e + self.mu * self.r12.imag) ** 2

    def D2(self, b):
        return (self.mu * self.a - self.r21.real) ** 2 \
            + (self.mu * b + self.r21.imag) ** 2

    def residuals(self, I1, I2):
        b = self.b_of(I1)
        e = self.e_of(I2)
        M = self.M(b, e)
        return (I1 * M - self.eps2 * self.D1(e),
                I2 * M - self.eps2 * self.D2(b))

    def rel_residuals(self, I1, I2):
        b = self.b_of(I1)
        e = self.e_of(I2)
        M = self.M(b, e)
        f1, f2 = I1 * M - self.eps2 * self.D1(e), I2 * M - self.eps2 * self.D2(b)
        if self.eps2 == 0.0:
            return abs(f1), abs(f2)
        return (abs(f1) / (self.eps2 * self.D1(e)),
                abs(f2) / (self.eps2 * self.D2(b)))

    def jacobian(self, I1, I2):
        b = self.b_of(I1)
        e = self.e_of(I2)
        M = self.M(b, e)
        dMdb = 2.0 * b * (e * e + self.c * self.c) \
            - 2.0 * e * self.Wr + 2.0 * self.c * self.Wi
        dMde = 2.0 * e * (self.a * self.a + b * b) \
            - 2.0 * b * self.Wr + 2.0 * self.a * self.Wi
        dD1de = 2.0 * (e + self.mu * self.r12.imag)
        dD2db = 2.0 * self.mu * (self.mu * b + self.r21.imag)
        J = np.empty((2, 2))
        J[0, 0] = M - self.beta1 * I1 * dMdb
        J[0, 1] = self.beta2 * (I1 * dMde - self.eps2 * dD1de)
        J[1, 0] = -self.beta1 * (I2 * dMdb - self.eps2 * dD2db)
        J[1, 1] = M + self.beta2 * I2 * dMde
        return J

    # -- one-axis cubics (vectorized over the other intensity) --------------
    def cubic_in_I1(self, I2):
        """Coefficients of F1(., I2) as a cubic in I1 (arrays over I2)."""
        e = self.e_of(np.asarray(I2, dtype=float))
        A = e * e + self.c * self.c
        Bb = -2.0 * e * self.Wr + 2.0 * self.c * self.Wi
        Cc = (self.a * self.c + self.Wr) ** 2 + (self.a * e + self.Wi) ** 2
        # M(b) = A b^2 + Bb b + Cc with b = b0 - beta1 I1
        b0, be = self.b0, self.beta1
        c3 = A * be * be
        c2 = -2.0 * A * b0 * be - Bb * be
        c1 = A * b0 * b0 + Bb * b0 + Cc
        return (np.broadcast_to(c3, e.shape), np.broadcast_to(c2, e.shape),
                c1, -self.eps2 * self.D1(e))

    def cubic_in_I2(self, I1):
        b = self.b_of(np.asarray(I1, dtype=float))
        A = self.a * self.a + b * b
        Be = -2.0 * b * self.Wr + 2.0 * self.a * self.Wi
        Cc = (self.a * self.c + self.Wr) ** 2 + (b * self.c + self.Wi) ** 2
        e0, be = self.e0, self.beta2
        c3 = A * be * be
        c2 = 2.0 * A * e0 * be + Be * be
        c1 = A * e0 * e0 + Be * e0 + Cc
        return (np.broadcast_to(c3, b.shape), np.broadcast_to(c2, b.shape),
                c1, -self.eps2 * self.D2(b))

    def newton(self, I1, I2, max_iter=60):
        x = np.array([float(I1), float(I2)])
        for _ in range(max_iter):
            f = np.array(self.residuals(*x))
            try:
                dx = np.linalg.solve(self.jacobian(*x), -f)
            except np.linalg.LinAlgError:
                return None
            lam = 1.0
            f0 = abs(f[0]) + abs(f[1])
            for _ in range(40):
                xn = x + lam * dx
                if xn[0] >= 0 and xn[1] >= 0:
                    fn = self.residuals(*xn)
                    if abs(fn[0]) + abs(fn[1]) < f0:
                        break
                lam *= 0.5
            else:
                return tuple(x)
            x = x + lam * dx
            if np.linalg.norm(lam * dx) <= 1e-13 * (np.linalg.norm(x) + 1.0):
                break
        return tuple(x)


@dataclass(frozen=True)
class CoupledSteadyState:
    I1: float
    I2: float
    residual_norm: float
    stable: bool
    branch_id: int


def _scan_candidates(sys_: _CoupledSystem, grid):
    """Bracket candidates along both one-axis cubic curves (vectorized)."""
    cands = []
    for axis in (1, 2):
        coeffs = sys_.cubic_in_I1(grid) if axis == 1 else sys_.cubic_in_I2(grid)
        roots, counts = real_cubic_roots(*coeffs)
        ok = np.isfinite(roots) & (roots >= 0)
        safe = np.where(ok, roots, 0.0)
        gcol = grid[:, None]
        if axis == 1:
            _, f_other = _vector_residuals(sys_, safe, gcol)
        else:
            f_other, _ = _vector_residuals(sys_, gcol, safe)
        out_resid = np.where(ok, f_other, np.nan)

        same = counts[:-1] == counts[1:]
        v0 = out_resid[:-1, :]
        v1 = out_resid[1:, :]
        hit = (same[:, None] & np.isfinite(v0) & np.isfinite(v1)
               & ((v0 == 0.0) | (v0 * v1 < 0.0)))
        for i, k in zip(*np.nonzero(hit)):
            t = _bisect_branch(sys_, axis, k, grid[i], grid[i + 1])
            if t is not None:
                cands.append(t)
        # count changes mark folds: seed Newton at adjacent-row roots
        for i in np.nonzero(~same)[0]:
            for j in (i, i + 1):
                for k in range(counts[j]):
                    r = roots[j, k]
                    if np.isfinite(r) and r >= 0:
                        cands.append((r, grid[j]) if axis == 1
                                     else (grid[j], r))
    return cands


def _vector_residuals(sys_, I1, I2):
    b = sys_.b0 - sys_.beta1 * I1
    e = sys_.e0 + sys_.beta2 * I2
    M = sys_.M(b, e)
    return (I1 * M - sys_.eps2 * sys_.D1(e),
            I2 * M - sys_.eps2 * sys_.D2(b))


def _bisect_branch(sys_, axis, k, t_lo, t_hi, steps=6):
    """Short bisection along one cubic branch, returning a Newton seed."""
    def eval_at(t):
        coeffs = (sys_.cubic_in_I1(np.array([t])) if axis == 1
                  else sys_.cubic_in_I2(np.array([t])))
        roots, counts = real_cubic_roots(*coeffs)
        if k >= counts[0]:
            return None, None
        r = roots[0, k]
        if not np.isfinite(r) or r < 0:
            return None, None
        if axis == 1:
            f = sys_.residuals(r, t)[1]
        else:
            f = sys_.residuals(t, r)[0]
        return r, f

    r_lo, f_lo = eval_at(t_lo)
    if r_lo is None:
        return None
    lo, hi = t_lo, t_hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        r_m, f_m = eval_at(mid)
        if r_m is None:
            break
        if f_lo == 0.0 or f_lo * f_m <= 0.0:
            hi = mid
        else:
            lo, f_lo, r_lo = mid, f_m, r_m
    t = 0.5 * (lo + hi)
    r_t, _ = eval_at(t)
    if r_t is None:
        r_t = r_lo
        t = lo
    return (r_t, t) if axis == 1 else (t, r_t)


def coupled_roots(p: SystemParams, P: float, delta0: float, mu: float, *,
                  xi: GainCoefficients | None = None, n_grid: int = 500,
                  i_lo: float = 1e-4, i_hi: float = 1e12):
    """All nonnegative steady states of the coupled intensity equations.

    The drive detunings are fixed to delta01 = delta0, delta02 = -delta0 (the
    frame in which the coherence-induced intermode terms are resonant) and
    the second drive amplitude is mu times the first. Candidates come from a
    coarse log-grid scan along both one-axis cubic branches; each candidate
    is polished by a damped 2-D Newton and deduplicated at relative 1e-6.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    sys_ = _CoupledSystem(p, P, delta0, mu, xi=xi)
    if sys_.eps2 == 0.0:
        return [CoupledSteadyState(0.0, 0.0, 0.0, True, 0)]
    grid = np.concatenate([[0.0], np.geomspace(i_lo, i_hi, n_grid)])
    cands = _scan_candidates(sys_, grid)
    roots = []
    for I1, I2 in cands:
        res = sys_.newton(I1, I2)
        if res is None:
            continue
        r1, r2 = sys_.rel_residuals(*res)
        if max(r1, r2) <= RESIDUAL_RTOL and res[0] >= 0 and res[1] >= 0:
            roots.append(res)
    uniq = []
    for r in sorted(roots):
        if not any(abs(r[0] - u[0]) <= DEDUP_RTOL * max(1.0, abs(u[0]))
                   and abs(r[1] - u[1]) <= DEDUP_RTOL * max(1.0, abs(u[1]))
                   for u in uniq):
            uniq.append(r)
    if not uniq:
        raise SolverError(
            f"coupled scan found no roots at P={P!r}, delta0={delta0!r}, "
            f"mu={mu!r}; widen the scan grid (i_lo={i_lo}, i_hi={i_hi})")
    out = []
    for bid, (I1, I2) in enumerate(uniq):
        r1, r2 = sys_.rel_residuals(I1, I2)
        det = float(np.linalg.det(sys_.jacobian(I1, I2)))
        out.append(CoupledSteadyState(I1=I1, I2=I2,
                                      residual_norm=max(r1, r2),
                                      stable=bool(det > 0.0), branch_id=bid))
    return out


# --------------------------------------------------------------------------
# Hysteresis tracing (pseudo-arclength continuation in drive power)
# --------------------------------------------------------------------------

@dataclass
class HysteresisTrace:
    sweep_values: list
    branches: list                 # each: list of (P, I1, I2, stable)
    turning_points: list           # (P, I1, I2)
    topology: dict = field(default_factory=dict)   # mode -> "S"|"ribbon"|"none"


def _power_system(p, delta0, mu, xi):
    """Factory: coupled system with P as a live variable."""
    base = _CoupledSystem(p, 1.0, delta0, mu, xi=xi)
    eps2_per_W = base.eps2

    def at_power(P):
        s = _CoupledSystem.__new__(_CoupledSystem)
        s.__dict__.update(base.__dict__)
        s.eps2 = eps2_per_W * P
        return s
    return at_power, eps2_per_W


class _VisitedSet:
    """Quantized point set for duplicate-branch suppression."""

    def __init__(self, scale_P, rel=1e-2):
        self.rel = rel
        self.scale_P = scale_P
        self.buckets = set()

    def _key(self, x):
        def q(v, s):
            return int(round(v / (self.rel * s)))
        s1 = max(1e-6, abs(x[0]))
        s2 = max(1e-6, abs(x[1]))
        # quantize intensities logarithmically and power linearly
        k1 = int(round(np.log(max(x[0], 1e-30)) / self.rel)) if x[0] > 0 else -10 ** 9
        k2 = int(round(np.log(max(x[1], 1e-30)) / self.rel)) if x[1] > 0 else -10 ** 9
        k3 = q(x[2], self.scale_P)
        return (k1, k2, k3)

    def add(self, x):
        self.buckets.add(self._key(x))

    def __contains__(self, x):
        k1, k2, k3 = self._key(x)
        for d1 in (-1, 0, 1):
            for d2 in (-1, 0, 1):
                for d3 in (-1, 0, 1):
                    if (k1 + d1, k2 + d2, k3 + d3) in self.buckets:
                        return True
        return False


def trace_hysteresis(p: SystemParams, P_range, n_steps: int, delta0: float,
                     mu: float, *, xi: GainCoefficients | None = None,
                     max_points: int = 6000):
    """Trace all steady-state branches over a power window.

    Pseudo-arclength continuation in (I1, I2, P); folds are located by sign
    changes of dP/ds along a branch and refined to 1e-4 relative in P. The
    per-mode ``topology`` compares each mode's intensity at the two outermost
    folds: "ribbon" when the intensity at the low-power fold lies below the
    high-power fold (the anomalous hysteresis), "S" for the conventional
    shape, "none" without a fold pair.
    """
    if n_steps < 50:
        raise ValueError("n_steps must be >= 50")
    P_lo, P_hi = P_range
    if not (0 <= P_lo < P_hi):
        raise ValueError("need 0 <= P_lo < P_hi")
    xi = xi if xi is not None else gain_coefficients_for(p)
    at_power, eps2_per_W = _power_system(p, delta0, mu, xi)
    ladder = list(np.linspace(P_lo, P_hi, n_steps))

    seeds = []
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        P = max(P_lo + frac * (P_hi - P_lo), 1e-4 * P_hi)
        try:
            for r in coupled_roots(p, P, delta0, mu, xi=xi):
                seeds.append((r.I1, r.I2, P))
        except SolverError:
            continue

    scale_P = P_hi

    def F(x):
        s = at_power(x[2])
        return np.array(s.residuals(x[0], x[1]))

    def J23(x):
        s = at_power(x[2])
        J = np.empty((2, 3))
        J[:, :2] = s.jacobian(x[0], x[1])
        b = s.b_of(x[0])
        e = s.e_of(x[1])
        J[0, 2] = -eps2_per_W * s.D1(e)
        J[1, 2] = -eps2_per_W * s.D2(b)
        return J

    def tangent(x, prev=None):
        J = J23(x)
        sc = np.array([max(1.0, abs(x[0])), max(1.0, abs(x[1])), scale_P])
        Js = J * sc[None, :]
        _, _, vt = np.linalg.svd(Js)
        t = vt[-1] * sc
        n = np.linalg.norm(t / sc)
        t = t / n
        if prev is not None and np.dot(t / sc, prev / sc) < 0:
            t = -t
        return t

    def correct(x_pred, t):
        sc = np.array([max(1.0, abs(x_pred[0])), max(1.0, abs(x_pred[1])), scale_P])
        x = x_pred.copy()
        for _ in range(12):
            f = F(x)
            g = np.dot((x - x_pred) / sc, t / sc)
            A = np.vstack([J23(x), (t / sc ** 2)[None, :]])
            try:
                dx = np.linalg.solve(A, -np.array([f[0], f[1], g]))
            except np.linalg.LinAlgError:
                return None
            x = x + dx
            if x[0] < -1e-9 or x[1] < -1e-9 or x[2] < -0.1 * scale_P:
                return None
            if np.linalg.norm(dx / sc) < 1e-12:
                s = at_power(max(x[2], 0.0))
                r1, r2 = s.rel_residuals(max(x[0], 0.0), max(x[1], 0.0))
                if max(r1, r2) < 1e-7:
                    return x
        return None

    branches = []
    folds = []
    visited = _VisitedSet(scale_P)

    for I1s, I2s, Ps in seeds:
        x0 = np.array([I1s, I2s, Ps])
        if x0 in visited:
            continue
        for direction in (+1.0, -1.0):
            x = x0.copy()
            t = tangent(x) * direction
            h = 0.01
            pts = [tuple(x)]
            rejects = 0
            revisits = 0
            for _ in range(max_points):
                x_pred = x + h * t
                x_new = correct(x_pred, t)
                if x_new is None:
                    h *= 0.5
                    rejects += 1
                    if rejects > 30:
                        break
                    continue
                rejects = 0
                revisits = revisits + 1 if x_new in visited else 0
                if revisits > 2:
                    break               # re-tracing an already covered branch
                t_new = tangent(x_new, prev=t)
                if t[2] * t_new[2] < 0:   # fold in power
                    fold = _refine_fold(at_power, eps2_per_W, x, x_new)
                    if fold is not None:
                        folds.append(fold)
                x, t = x_new, t_new
                pts.append(tuple(x))
                visited.add(x)
                h = min(h * 1.3, 0.05)
                if not (P_lo - 0.02 * scale_P <= x[2] <= P_hi + 0.02 * scale_P):
                    break
            if len(pts) > 3:
                branch = []
                for (I1, I2, P) in pts:
                    s = at_power(max(P, 1e-300))
                    det = float(np.linalg.det(s.jacobian(I1, I2)))
                    branch.append((P, I1, I2, bool(det > 0)))
                branches.append(branch)

    # deduplicate folds (refinement reaches ~1e-4 relative in P)
    uniq_folds = []
    for f in sorted(folds):
        if not any(abs(f[0] - u[0]) <= 3e-3 * max(u[0], 1e-300)
                   and abs(f[1] - u[1]) <= 3e-2 * max(1.0, u[1])
                   and abs(f[2] - u[2]) <= 3e-2 * max(1.0, u[2])
                   for u in uniq_folds):
            uniq_folds.append(f)

    topology = {1: "none", 2: "none"}
    if len(uniq_folds) >= 2:
        fold_A = max(uniq_folds, key=lambda f: f[0])
        fold_B = min(uniq_folds, key=lambda f: f[0])
        topology[1] = "ribbon" if fold_B[1] < fold_A[1] else "S"
        topology[2] = "ribbon" if fold_B[2] < fold_A[2] else "S"
    return HysteresisTrace(sweep_values=ladder, branches=branches,
                           turning_points=uniq_folds, topology=topology)


def _refine_fold(at_power, eps2_per_W, x_a, x_b, rtol=1e-4):
    """Refine a fold bracketed by two continuation points.

    The branch is locally parametrized by the intensity coordinate that moves
    most across the bracket; the remaining unknowns (other intensity, power)
    follow from a 2-D Newton solve. The fold is the zero of dP/dI_j along the
    branch, located by bisection.
    """
    j = 0 if abs(x_b[0] - x_a[0]) >= abs(x_b[1] - x_a[1]) else 1
    other = 1 - j
    if abs(x_b[j] - x_a[j]) == 0.0:
        return (0.5 * (x_a[2] + x_b[2]), 0.5 * (x_a[0] + x_b[0]),
                0.5 * (x_a[1] + x_b[1]))

    def solve_at(Ij, guess):
        """Return ((I_other, P), dP/dIj) on the branch at fixed I_j."""
        x = np.array(guess, dtype=float)
        for _ in range(60):
            I1 = Ij if j == 0 else x[0]
            I2 = x[0] if j == 0 else Ij
            s = at_power(max(x[1], 1e-300))
            f = np.array(s.residuals(I1, I2))
            Jfull = s.jacobian(I1, I2)
            b = s.b_of(I1)
            e = s.e_of(I2)
            A = np.empty((2, 2))
            A[:, 0] = Jfull[:, other]
            A[0, 1] = -eps2_per_W * s.D1(e)
            A[1, 1] = -eps2_per_W * s.D2(b)
            try:
                dx = np.linalg.solve(A, -f)
            except np.linalg.LinAlgError:
                return None, None
            x = x + dx
            if np.linalg.norm(dx) <= 1e-13 * (np.linalg.norm(x) + 1.0):
                break
        # implicit-function derivative: A @ (dIother/dIj, dP/dIj) = -dF/dIj
        I1 = Ij if j == 0 else x[0]
        I2 = x[0] if j == 0 else Ij
        s = at_power(max(x[1], 1e-300))
        Jfull = s.jacobian(I1, I2)
        b = s.b_of(I1)
        e = s.e_of(I2)
        A = np.empty((2, 2))
        A[:, 0] = Jfull[:, other]
        A[0, 1] = -eps2_per_W * s.D1(e)
        A[1, 1] = -eps2_per_W * s.D2(b)
        try:
            der = np.linalg.solve(A, -Jfull[:, j])
        except np.linalg.LinAlgError:
            return x, None
        return x, der[1]

    lo, hi = x_a[j], x_b[j]
    g_lo, d_lo = solve_at(lo, (x_a[other], x_a[2]))
    g_hi, d_hi = solve_at(hi, (x_b[other], x_b[2]))
    if g_lo is None or g_hi is None or d_lo is None or d_hi is None:
        return (0.5 * (x_a[2] + x_b[2]), 0.5 * (x_a[0] + x_b[0]),
                0.5 * (x_a[1] + x_b[1]))
    if d_lo * d_hi > 0:
        # derivative did not change sign: pick the flatter end
        g, Ij = (g_lo, lo) if abs(d_lo) < abs(d_hi) else (g_hi, hi)
    else:
        guess = g_lo
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            g_m, d_m = solve_at(mid, guess)
            if g_m is None or d_m is None:
                break
            guess = g_m
            if d_lo * d_m <= 0:
                hi, d_hi = mid, d_m
            else:
                lo, d_lo, g_lo = mid, d_m, g_m
            if abs(hi - lo) <= 1e-7 * max(abs(lo), abs(hi), 1e-300):
                break
        Ij = 0.5 * (lo + hi)
        g, _ = solve_at(Ij, guess)
        if g is None:
            return None
    Io, P = g
    I1 = Ij if j == 0 else Io
    I2 = Io if j == 0 else Ij
    return (float(P), float(I1), float(I2))


# --------------------------------------------------------------------------
# Phase diagrams
# --------------------------------------------------------------------------

def _rwa_row(p, xi, mode, delta0, P_values):
    """One detuning row of the rotating-wave phase diagram (vectorized)."""
    sign = -1.0 if mode == 1 else 1.0
    kap = p.cavity.kappa1 if mode == 1 else p.cavity.kappa2
    xjj = xi.xi11 if mode == 1 else xi.xi22
    kt = kap / 2.0 + sign * xjj.real
    cells = []
    if kt <= 0:
        for P in P_values:
            cells.append(dict(status="error",
                              message="above lasing threshold", n_roots=None))
        return cells
    dbar = delta0 + sign * xjj.imag
    beta = beta_coefficients(p)[mode - 1]
    om_L = p.cavity.omega_laser(mode)
    e2 = kap * np.asarray(P_values) / (HBAR * om_L)
    if beta == 0.0:
        for P, ee in zip(P_values, e2):
            I = ee / (kt * kt + dbar * dbar)
            cells.append(dict(status="ok", n_roots=1, I1_low=I, I1_high=I,
                              fold_P_low=None, fold_P_high=None, topology=None))
        return cells
    roots, counts = real_cubic_roots(
        np.full_like(e2, beta * beta), np.full_like(e2, -2.0 * dbar * beta),
        np.full_like(e2, kt * kt + dbar * dbar), -e2)
    folds = rwa_fold_powers(p, mode, delta0=delta0, xi=xi)
    for i, P in enumerate(P_values):
        nn = int(counts[i])
        rr = [float(r) for r in roots[i] if np.isfinite(r) and r >= 0]
        nn = len(rr)
        if P == 0.0:
            cells.append(dict(status="ok", n_roots=1, I1_low=0.0, I1_high=0.0,
                              fold_P_low=None, fold_P_high=None, topology=None))
            continue
        cell = dict(status="ok", n_roots=nn,
                    I1_low=min(rr) if rr else None,
                    I1_high=max(rr) if rr else None,
                    fold_P_low=None, fold_P_high=None, topology=None)
        if nn >= 3 and folds is not None:
            cell["fold_P_low"], cell["fold_P_high"] = folds
            cell["topology"] = "S"
        cells.append(cell)
    return cells


def _count_roots_quiet(p, P, delta0, mu, xi, n_grid):
    try:
        return len(coupled_roots(p, P, delta0, mu, xi=xi, n_grid=n_grid))
    except SolverError:
        return 0


def _coupled_row(p, xi, delta0, P_values, mu, n_grid=400):
    """One detuning row of the beyond-RWA phase diagram with fold metadata."""
    counts = []
    roots_cache = {}
    for P in P_values:
        if P == 0.0:
            counts.append(1)
            roots_cache[P] = [CoupledSteadyState(0.0, 0.0, 0.0, True, 0)]
            continue
        try:
            rr = coupled_roots(p, P, delta0, mu, xi=xi, n_grid=n_grid)
        except SolverError:
            rr = None
        roots_cache[P] = rr
        counts.append(len(rr) if rr is not None else -1)
    cells = [None] * len(P_values)
    # contiguous multistable runs -> shared fold metadata
    i = 0
    while i < len(P_values):
        if counts[i] is None or counts[i] < 3:
            i += 1
            continue
        j = i
        while j + 1 < len(P_values) and counts[j + 1] >= 3:
            j += 1
        P_left = P_values[i - 1] if i > 0 else 0.0
        P_right = P_values[j + 1] if j + 1 < len(P_values) else P_values[j]
        edge_grid = max(150, n_grid // 2)
        lo = _bisect_count_edge(p, delta0, mu, xi, P_left, P_values[i],
                                want_high=True, n_grid=edge_grid)
        hi = _bisect_count_edge(p, delta0, mu, xi, P_values[j], P_right,
                                want_high=False, n_grid=edge_grid)
        topo = _classify_run(p, delta0, mu, xi, lo, hi, n_grid)
        for k in range(i, j + 1):
            rr = roots_cache[P_values[k]]
            cells[k] = dict(status="ok", n_roots=counts[k],
                            I1_low=min(r.I1 for r in rr),
                            I1_high=max(r.I1 for r in rr),
                            fold_P_low=lo, fold_P_high=hi, topology=topo)
        i = j + 1
    for k, P in enumerate(P_values):
        if cells[k] is not None:
            continue
        rr = roots_cache[P]
        if rr is None:
            cells[k] = dict(status="error", message="scan found no roots",
                            n_roots=None)
        else:
            cells[k] = dict(status="ok", n_roots=counts[k],
                            I1_low=min(r.I1 for r in rr),
                            I1_high=max(r.I1 for r in rr),
                            fold_P_low=None, fold_P_high=None, topology=None)
    return cells


def _bisect_count_edge(p, delta0, mu, xi, P_out, P_in, want_high, n_grid,
                       iters=9):
    """Bisect the power at which the root count crosses 3."""
    lo, hi = (P_out, P_in)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        n = _count_roots_quiet(p, mid, delta0, mu, xi, n_grid)
        if n >= 3:
            hi = mid
        else:
            lo = mid
    edge = hi if want_high else lo
    return edge if want_high else 0.5 * (lo + hi)


def _classify_run(p, delta0, mu, xi, P_lo_fold, P_hi_fold, n_grid):
    """Per-mode-1 topology of a multistable run from its fold intensities."""
    try:
        span = P_hi_fold - P_lo_fold
        rA = coupled_roots(p, P_hi_fold - 1e-3 * span, delta0, mu,
                           xi=xi, n_grid=n_grid)
        rB = coupled_roots(p, P_lo_fold + 1e-3 * span, delta0, mu,
                           xi=xi, n_grid=n_grid)
    except SolverError:
        return None
    if len(rA) < 3 or len(rB) < 3:
        return None

    def merging_pair(rr):
        s = sorted(rr, key=lambda r: r.I1)
        gaps = [abs(s[k + 1].I1 - s[k].I1) for k in range(len(s) - 1)]
        k = int(np.argmin(gaps))
        return 0.5 * (s[k].I1 + s[k + 1].I1)

    I1_A = merging_pair(rA)
    I1_B = merging_pair(rB)
    return "ribbon" if I1_B < I1_A else "S"


def _phase_row_worker(payload):
    """Top-level row worker so phase diagrams can parallelize over rows."""
    p, xi, frame, mode, d0, P_vals, mu, n_grid = payload
    if frame == "rwa":
        return _rwa_row(p, xi, mode, d0, P_vals)
    return _coupled_row(p, xi, d0, P_vals, mu, n_grid=n_grid)


def bistability_phase_diagram(p: SystemParams, delta0_range, P_range,
                              grid=(60, 60), *, frame="beyond-rwa", mode=1,
                              mu=None, n_grid=400, jobs=1):
    """Root-count phase diagram over (detuning, power).

    Returns a SweepResult whose cells carry the root count and, for
    multistable cells, the fold powers and hysteresis topology. Cell order is
    row-major in (delta0, P). Per-cell solver errors are recorded in the cell
    status, never raised.
    """
    from .sweep import AxisSpec, SweepResult, run_rows_parallel
    if grid[0] < 16 or grid[1] < 16:
        raise ValueError("grid must be at least 16x16")
    if frame not in ("rwa", "beyond-rwa"):
        raise ValueError("frame must be 'rwa' or 'beyond-rwa'")
    if mu is None:
        mu = p.cavity.mu if p.cavity.mu is not None else 1.0
    delta_vals = list(np.linspace(delta0_range[0], delta0_range[1], grid[0]))
    P_vals = list(np.linspace(P_range[0], P_range[1], grid[1]))
    xi = gain_coefficients_for(p)

    payloads = [(p, xi, frame, mode, d0, P_vals, mu, n_grid)
                for d0 in delta_vals]
    rows = run_rows_parallel(_phase_row_worker, payloads, jobs=jobs,
                             payloads=payloads, worker=_phase_row_worker)
    cells = []
    for i, d0 in enumerate(delta_vals):
        for j, P in enumerate(P_vals):
            cell = dict(rows[i][j])
            cell["axis_values"] = (d0, P)
            cell["indices"] = (i, j)
            cells.append(cell)
    axes = [AxisSpec(path="delta0_rad_s", start=delta0_range[0],
                     stop=delta0_range[1], count=grid[0], scale="linear"),
            AxisSpec(path="P_W", start=P_range[0], stop=P_range[1],
                     count=grid[1], scale="linear")]
    return SweepResult(axes=axes, evaluator="bistability",
                       columns=["n_roots", "I1_low", "I1_high",
                                "fold_P_low", "fold_P_high", "topology"],
                       cells=cells,
                       meta={"frame": frame, "mode": mode, "mu": mu})
