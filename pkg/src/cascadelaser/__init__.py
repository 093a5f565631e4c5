"""Steady states, optical bistability, and mirror-mirror entanglement of a
two-mode cascade-laser optomechanical system."""

from .params import (AtomParams, CavityParams, MechParams, SystemParams,
                     DerivedQuantities, load_params, loads, derived_quantities,
                     thermal_occupation, PRESETS, preset_names, serialize)
from .gain_medium import (AtomicSteadyState, GainCoefficients, NoiseStrengths,
                          atomic_steady_state_linear, xi_coefficients,
                          noise_strengths)
from .bistability import (RwaSteadyState, CoupledSteadyState, HysteresisTrace,
                          beta_coefficients, rwa_roots, rwa_fold_powers,
                          coupled_roots, trace_hysteresis,
                          bistability_phase_diagram)
from .entanglement import (EffectiveMechParams, CovarianceMatrix,
                           EntanglementResult, effective_mech_params,
                           drift_matrix, diffusion_matrix, is_stable,
                           solve_lyapunov, logarithmic_negativity, entangle,
                           entanglement_sweep)
from .sweep import AxisSpec, SweepSpec, SweepResult, run_sweep, write_result
from . import errors

__version__ = "0.1.0"
