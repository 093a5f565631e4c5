"""Mirror-mirror entanglement via adiabatic elimination of the cavity modes.

At drive detunings delta_j = -omega_mj the cavity fields follow the mirrors
adiabatically (kappa >> gamma_m) and can be eliminated, leaving two coupled
mechanical modes with effective damping Gamma_j, cross couplings G12/G21
proportional to the two-photon-coherence coefficients xi12/xi21, and mixed
optical/thermal noise. The stationary quadrature covariance solves the
Lyapunov equation R V + V R^T = -D; entanglement is quantified by the
logarithmic negativity of the two-mode Gaussian state.

Quadratures are normalized so the vacuum variance is 1/2 and a thermal
mirror decoupled from the light settles at variance n + 1/2; the diffusion
entries are assembled accordingly (see README "Diffusion-matrix convention").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import HBAR
from .errors import EliminationError, UnphysicalCovarianceError, ValidationError
from .gain_medium import (GainCoefficients, NoiseStrengths,
                          atomic_steady_state_linear, noise_strengths,
                          xi_coefficients)
from .params import SystemParams, derived_quantities, thermal_occupation

__all__ = [
    "EffectiveMechParams", "CovarianceMatrix", "EntanglementResult",
    "effective_mech_params", "drift_matrix", "diffusion_matrix", "is_stable",
    "solve_lyapunov", "logarithmic_negativity", "entangle", "entanglement_sweep",
    "SWEEP_AXES",
]


@dataclass(frozen=True)
class EffectiveMechParams:
    """Reduced mechanical model after cavity elimination."""

    Gamma1: float
    Gamma2: float
    G12: float
    G21: float
    K: float
    u1: float
    u2: float
    v1: float
    v2: float
    kappa1p: float
    kappa2p: float
    calG1: float
    calG2: float
    I1: float
    I2: float


def effective_mech_params(p: SystemParams,
                          xi: GainCoefficients) -> EffectiveMechParams:
    """Effective damping, mirror-mirror couplings, and noise-mixing weights.

    The intracavity operating intensities are the unique rotating-wave steady
    states at effective detuning delta_j = -omega_mj (where the bistability
    collapses); the drive phases are chosen so the many-photon couplings
    calG_j = G_j sqrt(|<a_j>|) are real.
    """
    if p.atom.Delta1 != 0.0 or p.atom.Delta2 != 0.0:
        raise ValidationError(
            "atom.Delta1",
            "entanglement computations require Delta1 = Delta2 = 0 "
            "(the noise correlations are derived for real xi)")
    x11, x12, x21, x22 = (z.real for z in xi.as_tuple())
    k1 = p.cavity.kappa1
    k2 = p.cavity.kappa2
    k1p = k1 - 2.0 * x11
    k2p = k2 + 2.0 * x22
    if k1p <= 0.0:
        raise EliminationError(
            f"kappa1' = kappa1 - 2 Re(xi11) = {k1p:.6g} <= 0 (above lasing "
            "threshold); adiabatic elimination invalid")
    if k2p <= 0.0:
        raise EliminationError(
            f"kappa2' = kappa2 + 2 Re(xi22) = {k2p:.6g} <= 0; adiabatic "
            "elimination invalid")
    K = k1p * k2p + 4.0 * x12 * x21
    if K <= 0.0:
        raise EliminationError(
            f"K = kappa1' kappa2' + 4 xi12 xi21 = {K:.6g} <= 0; adiabatic "
            "elimination invalid")
    d = derived_quantities(p)
    I1 = d.eps1 ** 2 / ((k1 / 2.0 - x11) ** 2 + p.mech.omega_m1 ** 2)
    I2 = d.eps2 ** 2 / ((k2 / 2.0 + x22) ** 2 + p.mech.omega_m2 ** 2)
    calG1 = d.G1 * math.sqrt(math.sqrt(I1))
    calG2 = d.G2 * math.sqrt(math.sqrt(I2))
    Gb1 = 4.0 * calG1 ** 2 * k2p / K
    Gb2 = 4.0 * calG2 ** 2 * k1p / K
    return EffectiveMechParams(
        Gamma1=p.mech.gamma_m1 + Gb1,
        Gamma2=p.mech.gamma_m2 + Gb2,
        G12=4.0 * x12 * calG1 * calG2 / K,
        G21=4.0 * x21 * calG1 * calG2 / K,
        K=K,
        u1=4.0 * x21 * calG2 / K,
        u2=2.0 * calG2 * k1p / K,
        v1=2.0 * calG1 * k2p / K,
        v2=4.0 * x12 * calG1 / K,
        kappa1p=k1p, kappa2p=k2p,
        calG1=calG1, calG2=calG2, I1=I1, I2=I2)


def drift_matrix(e: EffectiveMechParams) -> np.ndarray:
    """4x4 drift over (dq1, dp1, dq2, dp2): damped quadratures with the
    coherence-induced cross couplings in the fixed sign pattern."""
    return np.array([
        [-e.Gamma1 / 2.0, 0.0, -e.G12, 0.0],
        [0.0, -e.Gamma1 / 2.0, 0.0, e.G12],
        [e.G21, 0.0, -e.Gamma2 / 2.0, 0.0],
        [0.0, -e.G21, 0.0, -e.Gamma2 / 2.0],
    ])


def diffusion_matrix(p: SystemParams, e: EffectiveMechParams,
                     ns: NoiseStrengths, *, paper_literal=False) -> np.ndarray:
    """Symmetrized diffusion matrix of the reduced mechanical model.

    Default assembly: the optical-noise combinations are divided by two and
    the thermal terms enter as gamma_m (2n+1)/2, which pins the decoupled
    thermal fixture V = diag(n+1/2, ...) exactly. ``paper_literal=True``
    switches to the unreduced printed combinations (asymmetric thermal
    factors and the kappa22 u1 v1 cross term) for sensitivity checks.
    """
    n1 = thermal_occupation(p.mech.omega_m1, p.mech.T1)
    n2 = thermal_occupation(p.mech.omega_m2, p.mech.T2)
    k11, k22, b12 = ns.kappa11, ns.kappa22, ns.beta12
    u1, u2, v1, v2 = e.u1, e.u2, e.v1, e.v2
    if paper_literal:
        A1 = (k11 * v1 ** 2 + k22 * v2 ** 2 - 2.0 * b12 * v1 * v2
              + p.mech.gamma_m1 * (2.0 * n1 + 1.0))
        A2 = (k11 * u1 ** 2 + k22 * u2 ** 2 + 2.0 * b12 * u1 * u2
              + p.mech.gamma_m2 * (2.0 * n2 + 1.0) / 2.0)
        A3 = (b12 * (u1 * v2 - u2 * v1) + k22 * u2 * v2 - k22 * u1 * v1)
    else:
        A1 = (k11 * v1 ** 2 + k22 * v2 ** 2 - 2.0 * b12 * v1 * v2) / 2.0 \
            + p.mech.gamma_m1 * (2.0 * n1 + 1.0) / 2.0
        A2 = (k11 * u1 ** 2 + k22 * u2 ** 2 + 2.0 * b12 * u1 * u2) / 2.0 \
            + p.mech.gamma_m2 * (2.0 * n2 + 1.0) / 2.0
        A3 = (b12 * (u1 * v2 - u2 * v1) + k22 * u2 * v2 - k11 * u1 * v1) / 2.0
    return np.array([
        [A1, 0.0, A3, 0.0],
        [0.0, A1, 0.0, -A3],
        [A3, 0.0, A2, 0.0],
        [0.0, -A3, 0.0, A2],
    ])


def is_stable(R: np.ndarray) -> bool:
    """True iff all eigenvalues of the drift matrix have negative real part.

    Uses the analytic block form: the spectrum pairs into two 2x2 blocks with
    trace -(Gamma1+Gamma2)/2 and determinant Gamma1 Gamma2 / 4 + G12 G21.
    """
    Gamma1 = -2.0 * R[0, 0]
    Gamma2 = -2.0 * R[2, 2]
    G12 = -R[0, 2]
    G21 = R[2, 0]
    return bool(Gamma1 + Gamma2 > 0.0
                and Gamma1 * Gamma2 / 4.0 + G12 * G21 > 0.0)


@dataclass(frozen=True)
class CovarianceMatrix:
    """Stationary 4x4 quadrature covariance with 2x2 block accessors."""

    V: np.ndarray
    residual: float
    ill_conditioned: bool = False

    @property
    def V_A(self):
        return self.V[:2, :2]

    @property
    def V_B(self):
        return self.V[2:, 2:]

    @property
    def V_AB(self):
        return self.V[:2, 2:]

    def is_physical(self, tol=1e-10):
        """Heisenberg check V + i Omega_s / 2 >= 0."""
        Om = np.array([[0, 1, 0, 0], [-1, 0, 0, 0],
                       [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)
        H = self.V + 0.5j * Om
        w = np.linalg.eigvalsh(H)
        return bool(w.min() >= -tol * max(1.0, abs(w).max()))


def solve_lyapunov(R: np.ndarray, D: np.ndarray) -> CovarianceMatrix:
    """Solve R V + V R^T = -D for the symmetric stationary covariance.

    Uses the dense vectorized form (kron(I,R) + kron(R,I)) vec(V) = -vec(D),
    then symmetrizes. Requires a stable drift; an ill-conditioned system
    (estimate > 1e12) is flagged on the result rather than raised.
    """
    if not is_stable(R):
        raise EliminationError("drift matrix is not stable; no stationary "
                               "covariance exists")
    I4 = np.eye(4)
    A = np.kron(I4, R) + np.kron(R, I4)
    V = np.linalg.solve(A, -np.asarray(D, dtype=float).reshape(-1)).reshape(4, 4)
    V = 0.5 * (V + V.T)
    resid = np.abs(R @ V + V @ R.T + D).max()
    dnorm = max(np.abs(D).max(), 1e-300)
    return CovarianceMatrix(V=V, residual=float(resid / dnorm),
                            ill_conditioned=bool(np.linalg.cond(A) > 1e12))


@dataclass(frozen=True)
class EntanglementResult:
    E_N: float
    Lambda: float
    sigma: float
    stable: bool = True


def logarithmic_negativity(V, *, stable=True) -> EntanglementResult:
    """Logarithmic negativity of a two-mode Gaussian state.

    Lambda is the smallest symplectic eigenvalue of the partially transposed
    covariance, Lambda = 2^{-1/2} [sigma - sqrt(sigma^2 - 4 det V)]^{1/2}
    with sigma = det V_A + det V_B - 2 det V_AB, and E_N = max(0, -ln 2 Lambda).
    """
    Vm = V.V if isinstance(V, CovarianceMatrix) else np.asarray(V, dtype=float)
    if not np.allclose(Vm, Vm.T, rtol=1e-10, atol=0.0):
        raise UnphysicalCovarianceError("covariance matrix is not symmetric")
    det_A = float(np.linalg.det(Vm[:2, :2]))
    det_B = float(np.linalg.det(Vm[2:, 2:]))
    det_AB = float(np.linalg.det(Vm[:2, 2:]))
    det_V = float(np.linalg.det(Vm))
    sigma = det_A + det_B - 2.0 * det_AB
    disc = sigma * sigma - 4.0 * det_V
    tol = 1e-12 * max(1.0, sigma * sigma)
    if disc < -tol:
        raise UnphysicalCovarianceError(
            f"sigma^2 - 4 det V = {disc:.6g} < 0 beyond tolerance "
            f"(det V_A={det_A:.6g}, det V_B={det_B:.6g}, "
            f"det V_AB={det_AB:.6g}, det V={det_V:.6g})")
    disc = max(disc, 0.0)
    lam_sq_arg = sigma - math.sqrt(disc)
    if lam_sq_arg <= 0.0:
        raise UnphysicalCovarianceError(
            f"smallest symplectic eigenvalue is not real "
            f"(sigma - sqrt(disc) = {lam_sq_arg:.6g} <= 0; det V_A={det_A:.6g}, "
            f"det V_B={det_B:.6g}, det V_AB={det_AB:.6g})")
    Lam = math.sqrt(lam_sq_arg / 2.0)
    return EntanglementResult(E_N=max(0.0, -math.log(2.0 * Lam)),
                              Lambda=Lam, sigma=sigma, stable=stable)


def entangle(p: SystemParams, *, paper_literal=False):
    """Full chain from system parameters to an entanglement verdict.

    Returns ``(result, effective, covariance)``; ``result.stable`` is False
    (with E_N unset to None semantics handled by callers) when the reduced
    drift is unstable.
    """
    steady = atomic_steady_state_linear(p.atom)
    xi = xi_coefficients(p.atom, steady)
    ns = noise_strengths(p, xi)
    eff = effective_mech_params(p, xi)
    R = drift_matrix(eff)
    D = diffusion_matrix(p, eff, ns, paper_literal=paper_literal)
    if not is_stable(R):
        return EntanglementResult(E_N=float("nan"), Lambda=float("nan"),
                                  sigma=float("nan"), stable=False), eff, None
    V = solve_lyapunov(R, D)
    res = logarithmic_negativity(V, stable=True)
    return res, eff, V


# --------------------------------------------------------------------------
# Parameter sweeps
# --------------------------------------------------------------------------

SWEEP_AXES = {
    "P1": ["cavity.P1"],
    "P2": ["cavity.P2"],
    "P_common": ["cavity.P1", "cavity.P2"],
    "eta": ["atom.eta"],
    "Omega": ["atom.Omega"],
    "T_common": ["mech.T1", "mech.T2"],
    "N_common": ["cavity.N1", "cavity.N2"],
}


def _entanglement_cell(p: SystemParams, paper_literal=False):
    """Per-cell record for sweep output; never raises."""
    try:
        res, eff, V = entangle(p, paper_literal=paper_literal)
    except Exception as exc:  # per-cell errors are recorded, not fatal
        return dict(status="error", message=f"{type(exc).__name__}: {exc}")
    row = dict(Gamma1=eff.Gamma1, Gamma2=eff.Gamma2,
               G12=eff.G12, G21=eff.G21)
    if not res.stable:
        row.update(status="unstable", stable=False)
        return row
    row.update(stable=True, E_N=res.E_N, Lambda=res.Lambda)
    if not V.is_physical():
        row["status"] = "unphysical"
        row["unphysical"] = True
    else:
        row["status"] = "ok"
    return row


def entanglement_sweep(p: SystemParams, axes, ranges, grid, *,
                       paper_literal=False, scales=None, jobs=1):
    """Grid sweep of E_N over one or two named axes.

    ``axes`` is a sequence of names from SWEEP_AXES, ``ranges`` matching
    (start, stop) pairs, ``grid`` matching point counts. Unstable cells are
    marked with status "unstable" and carry no numeric E_N.
    """
    from .sweep import AxisSpec, SweepSpec, run_sweep
    axes = list(axes)
    if not 1 <= len(axes) <= 2:
        raise ValidationError("axes", "need one or two sweep axes")
    for a in axes:
        if a not in SWEEP_AXES:
            raise ValidationError("axes", f"unknown axis {a!r}; "
                                  f"known: {sorted(SWEEP_AXES)}")
    ranges = list(ranges)
    grid = [grid] if isinstance(grid, int) else list(grid)
    scales = scales or ["linear"] * len(axes)
    axis_specs = [AxisSpec(path=a, start=r[0], stop=r[1], count=n, scale=s)
                  for a, r, n, s in zip(axes, ranges, grid, scales)]
    spec = SweepSpec(axes=axis_specs, evaluator="entanglement",
                     base=p, options={"paper_literal": paper_literal},
                     jobs=jobs)
    return run_sweep(spec)
