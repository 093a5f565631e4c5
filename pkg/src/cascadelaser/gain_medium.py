"""Atomic steady state and intermode gain/coupling coefficients.

The gain medium is an ensemble of cascade three-level atoms injected at rate
r_a in a superposition of the top and bottom levels (parametrized by eta) and
optionally driven on the two-photon transition with amplitude Omega. After
adiabatic elimination of the fast atomic variables the medium acts on the two
cavity modes through four complex coefficients xi_ij: xi11 is gain for mode 1,
xi22 absorption for mode 2, and xi12/xi21 couple mode 1 to the conjugate of
mode 2 (the two-photon-coherence channel).

The zeroth-order atomic steady state is obtained by a small linear solve of
the population/coherence rate equations; that solve is the single source of
truth (the corresponding closed-form expressions are used only as independent
oracles in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateParametersError
from .params import AtomParams, SystemParams

__all__ = ["AtomicSteadyState", "GainCoefficients", "NoiseStrengths",
           "atomic_steady_state_linear", "xi_coefficients", "noise_strengths"]


@dataclass(frozen=True)
class AtomicSteadyState:
    """Zeroth-order (in the atom-field coupling) atomic steady state.

    The rho_* fields are the steady-state ensemble values per unit cavity
    density operator; Z_* are the same quantities rescaled by d/r_a so that
    rho_lk = (r_a/d) Z_lk.
    """

    Z_aa: float
    Z_cc: float
    Z_ac: complex
    d: float
    chi: float
    rho_aa: float
    rho_cc: float
    rho_ac: complex


def atomic_steady_state_linear(p: AtomParams) -> AtomicSteadyState:
    """Solve the stationary population/coherence equations.

    Unknowns are (rho_aa, rho_cc, Re rho_ac, Im rho_ac) with rho_bb = 0 and
    the injection terms r_a * rho_lk(0) as inhomogeneities:

        0 = r_a rho_aa0 + Omega Re(rho_ac)            - gamma_a rho_aa
        0 = r_a rho_cc0 - Omega Re(rho_ac)            - gamma_c rho_cc
        0 = r_a rho_ac0 + (Omega/2)(rho_cc - rho_aa)
                        - [gamma_ac + i(Delta1+Delta2)] rho_ac
    """
    D = p.Delta1 + p.Delta2
    Om = p.Omega
    A = np.array([
        [-p.gamma_a, 0.0, Om, 0.0],
        [0.0, -p.gamma_c, -Om, 0.0],
        [-Om / 2.0, Om / 2.0, -p.gamma_ac, D],
        [0.0, 0.0, -D, -p.gamma_ac],
    ])
    b = -p.r_a * np.array([p.rho_aa0, p.rho_cc0, p.rho_ac0, 0.0])
    try:
        rho_aa, rho_cc, x, y = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise DegenerateParametersError(
            "stationary atomic equations are singular (all decay rates zero?)")
    chi = p.gamma_ac ** 2 + D ** 2
    d = (p.gamma_a * p.gamma_c * chi
         + Om ** 2 * p.gamma_ac * (p.gamma_a + p.gamma_c) / 2.0)
    if d == 0.0:
        raise DegenerateParametersError("normalizer d vanished")
    scale = d / p.r_a if p.r_a > 0 else 0.0
    rho_ac = complex(x, y)
    return AtomicSteadyState(
        Z_aa=rho_aa * scale, Z_cc=rho_cc * scale, Z_ac=rho_ac * scale,
        d=d, chi=chi, rho_aa=rho_aa, rho_cc=rho_cc, rho_ac=rho_ac)


@dataclass(frozen=True)
class GainCoefficients:
    """The four medium coefficients and the resonance denominator Upsilon."""

    xi11: complex
    xi12: complex
    xi21: complex
    xi22: complex
    Upsilon: complex

    def as_tuple(self):
        return (self.xi11, self.xi12, self.xi21, self.xi22)


def xi_coefficients(p: AtomParams, s: AtomicSteadyState) -> GainCoefficients:
    """Adiabatic elimination of the single-photon coherences.

    The stationary equations for (rho_ab, rho_cb) form a 2x2 complex linear
    system; solving it per field-operator placeholder (a1 and a2-dagger)
    yields the coefficients of the reduced cavity master equation:

        -i g1 rho_ab = xi11 a1 + xi12 a2dag
         i g2 rho_bc = xi22 a2 + xi21 a1dag
    """
    Om = p.Omega
    Upsilon = ((p.gamma_ab + 1j * p.Delta1) * (p.gamma_bc - 1j * p.Delta2)
               + Om ** 2 / 4.0)
    if Upsilon == 0:
        raise DegenerateParametersError("Upsilon vanished")
    rho_aa, rho_cc = s.rho_aa, s.rho_cc
    rho_ac = s.rho_ac
    rho_ca = np.conj(rho_ac)
    M = np.array([[p.gamma_ab + 1j * p.Delta1, -Om / 2.0],
                  [Om / 2.0, p.gamma_bc - 1j * p.Delta2]], dtype=complex)
    rhs = np.array([[1j * p.g1 * rho_aa, 1j * p.g2 * rho_ac],
                    [1j * p.g1 * rho_ca, 1j * p.g2 * rho_cc]], dtype=complex)
    try:
        coef = np.linalg.solve(M, rhs)   # rows: (rho_ab, rho_cb); cols: (a1, a2dag)
    except np.linalg.LinAlgError:
        raise DegenerateParametersError("adiabatic 2x2 system is singular")
    xi11 = -1j * p.g1 * coef[0, 0]
    xi12 = -1j * p.g1 * coef[0, 1]
    # rho_bc = rho_cb^dagger swaps the operator placeholders a1 -> a1dag etc.
    xi21 = 1j * p.g2 * np.conj(coef[1, 0])
    xi22 = 1j * p.g2 * np.conj(coef[1, 1])
    return GainCoefficients(xi11=complex(xi11), xi12=complex(xi12),
                            xi21=complex(xi21), xi22=complex(xi22),
                            Upsilon=complex(Upsilon))


@dataclass(frozen=True)
class NoiseStrengths:
    """Symmetrized quadrature noise strengths of the cavity-field inputs."""

    kappa11: float
    kappa22: float
    beta12: float


def noise_strengths(p: SystemParams, xi: GainCoefficients) -> NoiseStrengths:
    """kappa_jj = [kappa_j (2N_j + 1) + 2 Re xi_jj] / 2 and the intermode
    correlation beta12 = Re(xi12 + xi21) / 2."""
    k11 = (p.cavity.kappa1 * (2.0 * p.cavity.N1 + 1.0)
           + 2.0 * xi.xi11.real) / 2.0
    k22 = (p.cavity.kappa2 * (2.0 * p.cavity.N2 + 1.0)
           + 2.0 * xi.xi22.real) / 2.0
    b12 = (xi.xi12 + xi.xi21).real / 2.0
    return NoiseStrengths(kappa11=k11, kappa22=k22, beta12=b12)
