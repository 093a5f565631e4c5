"""Physical parameters, unit conventions, presets, and derived quantities.

All frequencies, rates, and detunings are stored as angular frequencies in
rad/s. Config documents may express values as ``{value, unit}`` pairs; the
plain frequency units (Hz, kHz, MHz, GHz) convert without a 2*pi factor,
``two_pi_*`` units apply one. The built-in presets write every "2pi x"
quantity through the two_pi units, including the gain-medium rates gamma and
r_a (see README for why that convention is load-bearing).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, asdict

from .constants import HBAR, K_B, C_LIGHT, TWO_PI
from .errors import ValidationError, UnknownPresetError

__all__ = [
    "AtomParams", "CavityParams", "MechParams", "SystemParams",
    "DerivedQuantities", "load_params", "loads", "derived_quantities",
    "thermal_occupation", "parse_quantity", "parse_override_value",
    "apply_overrides", "serialize", "PRESETS", "preset_names",
    "preset_citation", "UNIT_FACTORS",
]

# Unit -> multiplicative factor to SI (rad/s for rates, m/kg/K/W otherwise).
UNIT_FACTORS = {
    "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9,
    "rad_s": 1.0,
    "two_pi_Hz": TWO_PI, "two_pi_kHz": TWO_PI * 1e3,
    "two_pi_MHz": TWO_PI * 1e6, "two_pi_GHz": TWO_PI * 1e9,
    "nm": 1e-9, "um": 1e-6, "m": 1.0,
    "ng": 1e-12, "kg": 1.0,
    "K": 1.0,
    "pW": 1e-12, "mW": 1e-3, "W": 1.0,
}


def parse_quantity(value):
    """Convert a config value to SI. Accepts a bare number or a
    ``{"value": x, "unit": u}`` pair."""
    if isinstance(value, dict):
        try:
            x = float(value["value"])
            unit = value["unit"]
        except KeyError as exc:
            raise ValidationError("quantity", f"missing key {exc} in {value!r}")
        if unit not in UNIT_FACTORS:
            raise ValidationError(
                "unit", f"unknown unit {unit!r}; known: {sorted(UNIT_FACTORS)}")
        return x * UNIT_FACTORS[unit]
    return float(value)


_OVERRIDE_RE = re.compile(
    r"^\s*(?P<twopi>2pi\s*\*\s*)?(?P<num>[-+0-9.eE]+)\s*(?P<unit>[A-Za-z_]*)\s*$")


def parse_override_value(text):
    """Parse the CLI micro-syntax ``[2pi*]<number>[unit]``, e.g. ``2pi*1.5MHz``
    or ``0.6pW`` or ``-3e5``."""
    m = _OVERRIDE_RE.match(text)
    if not m:
        raise ValidationError("override", f"cannot parse value {text!r}")
    x = float(m.group("num"))
    if m.group("twopi"):
        x *= TWO_PI
    unit = m.group("unit")
    if unit:
        if unit not in UNIT_FACTORS:
            raise ValidationError(
                "override", f"unknown unit {unit!r} in {text!r}")
        x *= UNIT_FACTORS[unit]
    return x


def _check(cond, fieldname, message):
    if not cond:
        raise ValidationError(fieldname, message)


@dataclass(frozen=True)
class AtomParams:
    """Three-level cascade gain medium. Rates in rad/s, eta dimensionless."""

    g1: float
    g2: float
    Omega: float
    gamma_a: float
    gamma_b: float
    gamma_c: float
    gamma_ab: float
    gamma_bc: float
    gamma_ac: float
    r_a: float
    eta: float
    Delta1: float = 0.0
    Delta2: float = 0.0

    def validate(self):
        _check(self.g1 > 0, "atom.g1", "must be > 0")
        _check(self.g2 > 0, "atom.g2", "must be > 0")
        for name in ("Omega", "gamma_a", "gamma_b", "gamma_c",
                     "gamma_ab", "gamma_bc", "gamma_ac", "r_a"):
            _check(getattr(self, name) >= 0, f"atom.{name}", "must be >= 0")
        _check(-1.0 <= self.eta <= 1.0, "atom.eta", "must lie in [-1, 1]")

    @property
    def rho_aa0(self):
        return (1.0 - self.eta) / 2.0

    @property
    def rho_cc0(self):
        return (1.0 + self.eta) / 2.0

    @property
    def rho_ac0(self):
        return math.sqrt(max(0.0, 1.0 - self.eta * self.eta)) / 2.0


@dataclass(frozen=True)
class CavityParams:
    """Doubly-resonant cavity and its two drive lasers."""

    kappa1: float
    kappa2: float
    lambda1: float
    lambda2: float
    L1: float
    L2: float
    P1: float
    P2: float
    delta01: float = 0.0
    delta02: float = 0.0
    N1: float = 0.0
    N2: float = 0.0
    mu: float | None = None

    def validate(self):
        for name in ("kappa1", "kappa2"):
            _check(getattr(self, name) > 0, f"cavity.{name}", "must be > 0")
        for name in ("lambda1", "lambda2", "L1", "L2"):
            _check(getattr(self, name) > 0, f"cavity.{name}", "must be > 0")
        for name in ("P1", "P2", "N1", "N2"):
            _check(getattr(self, name) >= 0, f"cavity.{name}", "must be >= 0")
        if self.mu is not None:
            _check(self.mu >= 0, "cavity.mu", "must be >= 0")
            p2 = self.p2_from_mu()
            if self.P2 > 0:
                _check(abs(self.P2 - p2) <= 1e-6 * max(self.P2, p2),
                       "cavity.P2",
                       f"inconsistent with mu={self.mu}: derived P2={p2!r}")

    def omega_laser(self, mode):
        lam = self.lambda1 if mode == 1 else self.lambda2
        return TWO_PI * C_LIGHT / lam

    def p2_from_mu(self):
        """P2 implied by |eps2| = mu |eps1|."""
        return (self.mu ** 2 * self.P1 * (self.kappa1 / self.kappa2)
                * (self.lambda1 / self.lambda2))


@dataclass(frozen=True)
class MechParams:
    """Movable end mirrors treated as damped harmonic oscillators."""

    omega_m1: float
    omega_m2: float
    gamma_m1: float
    gamma_m2: float
    m1: float
    m2: float
    T1: float = 0.0
    T2: float = 0.0

    def validate(self):
        for name in ("omega_m1", "omega_m2", "m1", "m2"):
            _check(getattr(self, name) > 0, f"mech.{name}", "must be > 0")
        for name in ("gamma_m1", "gamma_m2", "T1", "T2"):
            _check(getattr(self, name) >= 0, f"mech.{name}", "must be >= 0")


@dataclass(frozen=True)
class SystemParams:
    atom: AtomParams
    cavity: CavityParams
    mech: MechParams
    preset: str | None = None

    def validate(self):
        self.atom.validate()
        self.cavity.validate()
        self.mech.validate()
        return self

    def to_dict(self):
        d = {"atom": asdict(self.atom), "cavity": asdict(self.cavity),
             "mech": asdict(self.mech)}
        if self.preset:
            d["preset_origin"] = self.preset
        return d

    def replace(self, **dotted):
        """Return a copy with dotted-path fields replaced,
        e.g. replace(**{"cavity.P1": 1e-12})."""
        secs = {"atom": dict(asdict(self.atom)),
                "cavity": dict(asdict(self.cavity)),
                "mech": dict(asdict(self.mech))}
        for path, value in dotted.items():
            try:
                sec, name = path.split(".")
            except ValueError:
                raise ValidationError(path, "override path must be section.field")
            if sec not in secs or name not in secs[sec]:
                raise ValidationError(path, "no such parameter")
            secs[sec][name] = value
        return SystemParams(atom=AtomParams(**secs["atom"]),
                            cavity=CavityParams(**secs["cavity"]),
                            mech=MechParams(**secs["mech"]),
                            preset=self.preset)


def thermal_occupation(omega_m, T):
    """Mean phonon number of a bath at temperature T; exactly 0 at T = 0."""
    if T <= 0.0:
        return 0.0
    return 1.0 / math.expm1(HBAR * omega_m / (K_B * T))


def _bath_temperature(omega_m, n):
    """Temperature giving mean occupation n (preset helper)."""
    if n <= 0:
        return 0.0
    return HBAR * omega_m / (K_B * math.log1p(1.0 / n))


@dataclass(frozen=True)
class DerivedQuantities:
    G1: float
    G2: float
    eps1: float
    eps2: float
    n1: float
    n2: float
    nu1: float
    nu2: float


def derived_quantities(p: SystemParams) -> DerivedQuantities:
    """Optomechanical couplings, drive amplitudes, thermal occupations and
    cavity frequencies. The cavity frequency is approximated by the drive
    laser frequency (relative error below 1e-8 for the detunings used here).
    """
    nu1 = p.cavity.omega_laser(1)
    nu2 = p.cavity.omega_laser(2)
    G1 = (nu1 / p.cavity.L1) * math.sqrt(HBAR / (p.mech.m1 * p.mech.omega_m1))
    G2 = (nu2 / p.cavity.L2) * math.sqrt(HBAR / (p.mech.m2 * p.mech.omega_m2))
    eps1 = math.sqrt(p.cavity.kappa1 * p.cavity.P1 / (HBAR * nu1))
    eps2 = math.sqrt(p.cavity.kappa2 * p.cavity.P2 / (HBAR * nu2))
    n1 = thermal_occupation(p.mech.omega_m1, p.mech.T1)
    n2 = thermal_occupation(p.mech.omega_m2, p.mech.T2)
    return DerivedQuantities(G1=G1, G2=G2, eps1=eps1, eps2=eps2,
                             n1=n1, n2=n2, nu1=nu1, nu2=nu2)


# --------------------------------------------------------------------------
# Presets
#
# Every preset reproduces one operating point of the two-mode cascade-laser
# optomechanical system. The gain-medium rates gamma, r_a and the drive Omega
# are read with a 2*pi factor; the mirror masses are *effective* values
# calibrated so that each family of operating points exhibits its documented
# behaviour at the documented power scale (the nominal 145 ng mass together
# with the printed cavity geometry cannot reach pW-scale bistability or
# mW-scale entanglement thresholds; see README "Parameter conventions").
# --------------------------------------------------------------------------

_GAMMA = TWO_PI * 3.4e6          # common atomic decay/dephasing rate
_RA = TWO_PI * 1.6e6             # atom injection rate
_OMEGA_M = TWO_PI * 3e6
_GAMMA_M = TWO_PI * 60.0
_MASS_BISTABLE = 1.45e-16        # kg, effective (bistability operating points)
_MASS_ENTANGLE = 2.5e-12         # kg, effective (entanglement operating points)
_N100_TEMP = _bath_temperature(_OMEGA_M, 100.0)


def _base(g, Omega_over_gamma, eta, kappa1, kappa2, P1, P2, mass, T, N,
          mu=None, delta01=0.0, delta02=0.0):
    atom = dict(g1=g, g2=g, Omega=Omega_over_gamma * _GAMMA,
                gamma_a=_GAMMA, gamma_b=_GAMMA, gamma_c=_GAMMA,
                gamma_ab=_GAMMA, gamma_bc=_GAMMA, gamma_ac=_GAMMA,
                r_a=_RA, eta=eta, Delta1=0.0, Delta2=0.0)
    cavity = dict(kappa1=kappa1, kappa2=kappa2,
                  lambda1=810e-9, lambda2=1024e-9,
                  L1=112e-6, L2=88.6e-6, P1=P1, P2=P2,
                  delta01=delta01, delta02=delta02, N1=N, N2=N, mu=mu)
    mech = dict(omega_m1=_OMEGA_M, omega_m2=_OMEGA_M,
                gamma_m1=_GAMMA_M, gamma_m2=_GAMMA_M,
                m1=mass, m2=mass, T1=T, T2=T)
    return {"atom": atom, "cavity": cavity, "mech": mech}


_K215 = TWO_PI * 215e3
_K430 = TWO_PI * 430e3

PRESETS = {
    "fig2": dict(
        _base(TWO_PI * 4e6, 10.0, -1.0, _K215, _K215,
              P1=1e-12, P2=1e-12, mass=_MASS_BISTABLE, T=0.0, N=0.0),
        citation=("single-mode (rotating-wave) bistability operating point: "
                  "atoms injected in the upper level (eta=-1), strong atomic "
                  "drive Omega=10*gamma, equal cavity linewidths"),
    ),
    "fig3": dict(
        _base(TWO_PI * 4e6, 10.0, +1.0, _K215, _K215,
              P1=1e-12, P2=None, mass=_MASS_BISTABLE, T=0.0, N=0.0, mu=0.1),
        citation=("coupled-mode (beyond rotating-wave) bistability operating "
                  "point: atoms injected in the lower level (eta=+1), "
                  "Omega=10*gamma, drive-amplitude ratio mu=0.1"),
    ),
    "fig5": dict(
        _base(TWO_PI * 2.5e6, 6.0, -1.0, _K215, _K430,
              P1=50e-3, P2=50e-3, mass=_MASS_ENTANGLE, T=_N100_TEMP, N=1.0),
        citation=("mirror-mirror entanglement vs drive powers: mixed "
                  "injected+driven coherence (eta=-1, Omega=6*gamma), "
                  "kappa2=2*kappa1, 100 thermal phonons, 1 thermal photon"),
    ),
    "fig6": dict(
        _base(TWO_PI * 2.5e6, 0.0, 0.0, _K215, _K430,
              P1=200e-3, P2=200e-3, mass=_MASS_ENTANGLE, T=_N100_TEMP, N=1.0),
        citation=("entanglement from injected coherence only (Omega=0), "
                  "initial atomic state eta swept, P=200 mW"),
    ),
    "fig8": dict(
        _base(TWO_PI * 2.5e6, 4.5, -1.0, _K215, _K430,
              P1=80e-3, P2=80e-3, mass=_MASS_ENTANGLE, T=_N100_TEMP, N=1.0),
        citation=("entanglement from driven coherence only (eta=-1), drive "
                  "amplitude Omega swept, P=80 mW"),
    ),
    "fig9": dict(
        _base(TWO_PI * 2.5e6, 4.5, -1.0, _K215, _K430,
              P1=200e-3, P2=200e-3, mass=_MASS_ENTANGLE, T=0.0, N=0.0),
        citation=("temperature robustness of the driven-coherence "
                  "entanglement (eta=-1), P=200 mW, zero-temperature baths"),
    ),
}


def preset_names():
    return sorted(PRESETS)


def preset_citation(name):
    if name not in PRESETS:
        raise UnknownPresetError(name, PRESETS)
    return PRESETS[name]["citation"]


_REQUIRED = {
    "atom": [f.name for f in AtomParams.__dataclass_fields__.values()],
    "cavity": [f.name for f in CavityParams.__dataclass_fields__.values()],
    "mech": [f.name for f in MechParams.__dataclass_fields__.values()],
}
_OPTIONAL = {"atom": {"Delta1", "Delta2"},
             "cavity": {"delta01", "delta02", "N1", "N2", "mu"},
             "mech": {"T1", "T2"}}


def load_params(config) -> SystemParams:
    """Build a validated SystemParams from a config mapping.

    The config may name a ``preset`` and/or provide ``atom``/``cavity``/
    ``mech`` sections whose fields override the preset. Numeric fields accept
    bare SI numbers or ``{value, unit}`` pairs. When ``mu`` is given and P2
    is absent, P2 is derived from P1 and mu.
    """
    if not isinstance(config, dict):
        raise ValidationError("config", "expected a mapping")
    sections = {"atom": {}, "cavity": {}, "mech": {}}
    preset = config.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise UnknownPresetError(preset, PRESETS)
        for sec in sections:
            sections[sec].update(PRESETS[preset][sec])
    for sec in sections:
        for key, raw in config.get(sec, {}).items():
            if key not in _REQUIRED[sec]:
                raise ValidationError(f"{sec}.{key}", "no such parameter")
            sections[sec][key] = None if raw is None else parse_quantity(raw)
    for sec, names in _REQUIRED.items():
        for name in names:
            if name not in sections[sec] and name not in _OPTIONAL[sec]:
                raise ValidationError(f"{sec}.{name}", "missing required field")
    cav = sections["cavity"]
    if cav.get("mu") is not None and cav.get("P2") is None:
        tmp = CavityParams(**{**cav, "P2": 0.0})
        cav["P2"] = tmp.p2_from_mu()
    p = SystemParams(atom=AtomParams(**sections["atom"]),
                     cavity=CavityParams(**sections["cavity"]),
                     mech=MechParams(**sections["mech"]),
                     preset=preset)
    p.validate()
    return p


def loads(text: str) -> SystemParams:
    """Parse a JSON config document."""
    return load_params(json.loads(text))


def apply_overrides(p: SystemParams, overrides) -> SystemParams:
    """Apply ``path=value[unit]`` override strings, then re-validate."""
    parsed = {}
    for item in overrides:
        path, _, value = item.partition("=")
        if not _ or not path:
            raise ValidationError("override", f"expected path=value, got {item!r}")
        parsed[path.strip()] = parse_override_value(value)
    q = p.replace(**parsed)
    q.validate()
    return q


def serialize(p: SystemParams) -> str:
    """JSON round-trip form (plain SI floats, 17 significant digits)."""
    return json.dumps(p.to_dict(), indent=2, default=float)
