"""Minimal-THD switching-pattern synthesis for three-phase PWM inverters.

Core pipeline: a free-parameter vector (the independent switching instants)
expands through exact three-phase symmetry relations to a full pattern; the
phase-current response has a closed piecewise-exponential form; the harmonic
residual energy is minimized by an SQP solver subject to a fundamental
amplitude equality, optional selective-harmonic-elimination equalities and
minimum-gap inequalities.  An exact-stepping ODE oracle cross-validates every
closed form.
"""

__version__ = "0.1.0"

from .errors import (DomainError, InfeasiblePatternError, ModulationRangeError,
                     PatternError, PwmOptError, SeedError, SolverError,
                     UndefinedThdError)
from .objective import (ObjectiveReport, SolverConfig, e2_scaled,
                        fundamental_constraint_residual, monotonicity_slacks,
                        objective_gradient, objective_report, she_residuals)
from .optimizer import OptimizationResult, optimize, optimize_with_she
from .oracle import SampledWaveforms, integrate, steady_state_error
from .params import InverterParams, derive_params, params_from_alpha
from .patterns import (FreePattern, PatternDiagnostics, SwitchingPattern,
                       expand_pattern, extract_free, line_voltage, n_free,
                       relation_residuals, validate_pattern)
from .response import (PiecewiseWaveform, SegmentCoeffs, eval_vra, eval_vrab,
                       phase_currents, phase_waveform, segment_coeffs)
from .spectrum import (HarmonicSpectrum, current_harmonics,
                       current_spectrum_complete, thd, thd_timedomain,
                       voltage_harmonics)
from .svpwm import SvpwmSpec, project_to_symmetry, raw_svpwm_edges, \
    svpwm_pattern, svpwm_seed

__all__ = [
    "DomainError", "InfeasiblePatternError", "ModulationRangeError",
    "PatternError", "PwmOptError", "SeedError", "SolverError",
    "UndefinedThdError",
    "InverterParams", "derive_params", "params_from_alpha",
    "FreePattern", "SwitchingPattern", "PatternDiagnostics", "expand_pattern",
    "extract_free", "line_voltage", "n_free", "relation_residuals",
    "validate_pattern",
    "SegmentCoeffs", "PiecewiseWaveform", "segment_coeffs", "eval_vrab",
    "eval_vra", "phase_currents", "phase_waveform",
    "HarmonicSpectrum", "voltage_harmonics", "current_harmonics", "thd",
    "thd_timedomain", "current_spectrum_complete",
    "ObjectiveReport", "SolverConfig", "e2_scaled",
    "fundamental_constraint_residual", "she_residuals",
    "monotonicity_slacks", "objective_gradient", "objective_report",
    "OptimizationResult", "optimize", "optimize_with_she",
    "SampledWaveforms", "integrate", "steady_state_error",
    "SvpwmSpec", "svpwm_pattern", "svpwm_seed", "project_to_symmetry",
    "raw_svpwm_edges",
]
