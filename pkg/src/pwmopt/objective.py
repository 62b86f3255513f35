"""Closed-form objective, its analytic gradient, and the constraint residuals.

The objective is the scaled squared-residual energy of the per-phase resistor
voltage against the target fundamental,

    E2_scaled(theta) = int_0^(1/2) [v_R,a(beta) - V_rm sin(2 pi beta - phi - pi/6)]^2 dbeta,

linked to the current-domain error energy by E2 = (T/R^2) * E2_scaled.
Gradients are assembled from the same per-segment closed forms (finite
differences are a test oracle only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasiblePatternError
from .params import InverterParams
from .patterns import (ONE_SIXTH, ONE_THIRD, FreePattern, SwitchingPattern,
                       expand_pattern, expansion_map)
from .response import (coeffs_for_pattern, phase_waveform, residual_energy,
                       segment_residual_integrals)
from .spectrum import thd_timedomain

DEFAULT_TAU = 1e-4


@dataclass(frozen=True)
class SolverConfig:
    """Constraint and convergence settings for the optimizer."""

    tau: float = DEFAULT_TAU
    she_orders: tuple = ()
    kkt_tol: float = 1e-8
    eq_tol: float = 1e-8
    step_tol: float = 1e-12
    max_iter: int = 500

    def __post_init__(self):
        if self.tau <= 0.0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "she_orders", tuple(int(m) for m in self.she_orders))
        for m in self.she_orders:
            _check_she_order(m)


@dataclass(frozen=True)
class ObjectiveReport:
    """Objective value and constraint residuals for one pattern."""

    e2_scaled: float
    e2: float
    i_f: float
    thd_i: float
    fundamental_residual: float
    she_residuals: dict = field(default_factory=dict)
    monotonicity_slacks: np.ndarray = None
    min_gap: float = 0.0


def _check_she_order(m: int):
    if m % 2 == 0 or m % 3 == 0 or m < 5:
        raise DomainError(
            f"SHE order {m} rejected: orders must be odd, not divisible by three and >= 5 "
            "(even and triplen orders are already absent by symmetry)"
        )


def e2_scaled(fp: FreePattern, params: InverterParams) -> float:
    """Objective value; raises InfeasiblePatternError off the monotone set."""
    sp = expand_pattern(fp)
    pw = phase_waveform(coeffs_for_pattern(sp, params))
    return residual_energy(pw, params.v_rm, params.ref_phase)


def _grad_over_instants(instants: np.ndarray, alpha: float, v0: float,
                        pw, cross) -> np.ndarray:
    """d(E2_scaled)/d(beta_j) for the full instant vector.

    The waveform is continuous, so moving-breakpoint boundary terms cancel and
    the derivative reduces to 2 * int g * (d v_R,a / d beta_j) dbeta.  On each
    merged segment that partial is a single exponential A_(s,j) e^(-alpha
    (beta-x_s)); combined with the precomputed cross integrals the gradient is
    2 * A^T cross.  Indicator masks keep every exponent non-positive.
    """
    u = pw.breakpoints[:-1][:, None]
    mu = pw.midpoints[:, None]
    m = instants[None, :]
    denom = 1.0 + np.exp(-alpha / 2.0)
    sgn = np.where(np.arange(1, len(instants) + 1) % 2 == 1, -1.0, 1.0)[None, :]

    def masked_exp(arg, ind):
        return np.where(ind, np.exp(np.where(ind, arg, -np.inf)), 0.0)

    d1 = alpha * v0 * sgn * (masked_exp(alpha * (m - u), m < mu)
                             - np.exp(alpha * (m - u - 0.5)) / denom)
    direct = (pw.midpoints < ONE_SIXTH)[:, None]
    ind2 = np.where(direct, m < mu + ONE_THIRD, m < mu - ONE_SIXTH)
    arg2 = np.where(direct, alpha * (m - u - ONE_THIRD), alpha * (m - u + ONE_SIXTH))
    tail = np.where(direct, np.exp(alpha * (m - u - ONE_THIRD - 0.5)),
                    np.exp(alpha * (m - u - ONE_THIRD))) / denom
    d2 = alpha * v0 * sgn * (masked_exp(arg2, ind2) - tail)
    d2 = np.where(direct, d2, -d2)  # reflection sign of the shifted copy
    a = (d1 - d2) / 3.0
    return 2.0 * (a * cross[:, None]).sum(axis=0)


def e2_scaled_grad(fp: FreePattern, params: InverterParams):
    """(E2_scaled, gradient over theta) via the chain rule through the expansion."""
    sp = expand_pattern(fp)
    pw = phase_waveform(coeffs_for_pattern(sp, params))
    integral, cross = segment_residual_integrals(pw, params.v_rm, params.ref_phase)
    grad_beta = _grad_over_instants(sp.beta, params.alpha, params.v0, pw, cross)
    m, _, _ = expansion_map(fp.p)
    return float(integral.sum()), m.T @ grad_beta


def objective_gradient(fp: FreePattern, params: InverterParams) -> np.ndarray:
    """Gradient of e2_scaled with respect to the free parameters."""
    return e2_scaled_grad(fp, params)[1]


def fundamental_constraint_residual(sp: SwitchingPattern | np.ndarray,
                                    params: InverterParams) -> float:
    """(2 V0 / pi) * sum_j (-1)^(j+1) cos(2 pi beta_j) - V_m, in volts."""
    beta = sp.beta if isinstance(sp, SwitchingPattern) else np.asarray(sp, dtype=float)
    j = np.arange(1, len(beta) + 1)
    sgn = np.where(j % 2 == 1, 1.0, -1.0)
    return float((2.0 * params.v0 / np.pi) * np.sum(sgn * np.cos(2.0 * np.pi * beta))
                 - params.v_m)


def fundamental_constraint_grad_beta(beta: np.ndarray, params: InverterParams) -> np.ndarray:
    j = np.arange(1, len(beta) + 1)
    sgn = np.where(j % 2 == 1, 1.0, -1.0)
    return -(4.0 * params.v0) * sgn * np.sin(2.0 * np.pi * beta)


def she_residuals(sp: SwitchingPattern | np.ndarray, orders) -> np.ndarray:
    """Per-order residuals sum_j (-1)^j cos(2 pi m beta_j); zero iff order m absent."""
    beta = sp.beta if isinstance(sp, SwitchingPattern) else np.asarray(sp, dtype=float)
    j = np.arange(1, len(beta) + 1)
    sgn = np.where(j % 2 == 1, -1.0, 1.0)  # (-1)^j
    out = []
    for m in orders:
        _check_she_order(int(m))
        out.append(float(np.sum(sgn * np.cos(2.0 * np.pi * m * beta))))
    return np.array(out)


def she_residual_grad_beta(beta: np.ndarray, order: int) -> np.ndarray:
    j = np.arange(1, len(beta) + 1)
    sgn = np.where(j % 2 == 1, -1.0, 1.0)
    return -2.0 * np.pi * order * sgn * np.sin(2.0 * np.pi * order * beta)


def monotonicity_slacks(fp_or_sp, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Slacks beta_(j+1) - beta_j - tau over all 6P+1 gaps (ends included).

    Evaluated on the expanded pattern; the feasible set is exactly
    {all slacks >= 0}.
    """
    if isinstance(fp_or_sp, FreePattern):
        m, off, _ = expansion_map(fp_or_sp.p)
        beta = m @ fp_or_sp.theta + off
    else:
        beta = fp_or_sp.beta
    return np.diff(np.concatenate([[0.0], beta, [0.5]])) - tau


def objective_report(fp: FreePattern, params: InverterParams,
                     config: SolverConfig | None = None) -> ObjectiveReport:
    """Assemble the full report (objective, THD, constraint residuals) for fp."""
    config = config or SolverConfig()
    sp = expand_pattern(fp)
    e2s = e2_scaled(fp, params)
    thd_i, i_f = thd_timedomain(sp, params)
    slacks = monotonicity_slacks(fp, config.tau)
    residuals = she_residuals(sp, config.she_orders) if config.she_orders else np.zeros(0)
    return ObjectiveReport(
        e2_scaled=e2s,
        e2=e2s * params.t / params.r ** 2,
        i_f=i_f,
        thd_i=thd_i,
        fundamental_residual=fundamental_constraint_residual(sp, params),
        she_residuals=dict(zip(config.she_orders, residuals.tolist())),
        monotonicity_slacks=slacks,
        min_gap=float(slacks.min() + config.tau),
    )
