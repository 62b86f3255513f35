"""Independent time-stepping oracle for the per-phase circuit equations.

Validates every closed-form result by integrating L di/dt + R i = drive from
zero initial current.  Within each constant-drive interval the step is the
exact exponential solution, so the oracle has no truncation error and the
only approximation is the finite burn-in (the transient decays by e^-alpha
per period).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .params import InverterParams
from .patterns import ONE_THIRD, SwitchingPattern, line_voltage

MIN_STEPS = 1 << 12
#: Burn-in: smallest n with e^(-alpha n / 2) below 1e-12, capped.
BURN_IN_CAP = 200


@dataclass(frozen=True)
class SampledWaveforms:
    """One steady-state period of oracle waveforms on a uniform grid."""

    grid: np.ndarray       # scaled times, power-of-two count
    i_a: np.ndarray
    i_b: np.ndarray
    i_c: np.ndarray
    v_o: np.ndarray        # load-star potential, zero states resolved to 000
    drift: float           # max abs change between the last two periods


def burn_in_periods(alpha: float) -> int:
    return min(BURN_IN_CAP, max(1, math.ceil(2.0 * 12.0 * math.log(10.0) / alpha)))


def _drive_levels(sp: SwitchingPattern, mids: np.ndarray, v0: float):
    """Per-phase drive voltages (each (v_xy + v_xz)/3) at segment midpoints."""
    vab = line_voltage(sp, mids, "ab", v0)
    vbc = line_voltage(sp, mids, "bc", v0)
    vca = line_voltage(sp, mids, "ca", v0)
    drive_a = (vab - vca) / 3.0   # (v_ab + v_ac)/3
    drive_b = (vbc - vab) / 3.0
    drive_c = (vca - vbc) / 3.0
    return drive_a, drive_b, drive_c, vab, vbc, vca


def integrate(sp: SwitchingPattern, params: InverterParams,
              steps_per_period: int = MIN_STEPS,
              n_periods: int | None = None) -> SampledWaveforms:
    """Integrate all three phases over n_periods and return the last period.

    Switching instants are honored exactly as step boundaries; uniform grid
    samples coincide with boundaries so no interpolation happens anywhere.
    """
    if steps_per_period < MIN_STEPS or steps_per_period & (steps_per_period - 1):
        raise DomainError(
            f"steps_per_period must be a power of two >= {MIN_STEPS}, got {steps_per_period}"
        )
    if n_periods is None:
        n_periods = burn_in_periods(params.alpha) + 1
    if n_periods < 1:
        raise DomainError("n_periods must be >= 1")

    events = np.concatenate([sp.beta, sp.beta + 0.5,
                             (sp.beta - ONE_THIRD) % 1.0,
                             (sp.beta + 0.5 - ONE_THIRD) % 1.0])
    grid = np.arange(steps_per_period) / steps_per_period
    bounds = np.unique(np.concatenate([events % 1.0, grid, [0.0, 1.0]]))
    mids = 0.5 * (bounds[:-1] + bounds[1:])
    da, db, dc, vab, vbc, vca = _drive_levels(sp, mids, params.v0)
    targets = np.stack([da, db, dc]) / params.r
    decay = np.exp(-params.alpha * np.diff(bounds))
    sample_idx = np.searchsorted(bounds, grid)

    state = np.zeros(3)
    vals = np.empty((3, len(bounds)))
    out = None
    drift = math.inf
    for _ in range(n_periods):
        prev = out
        vals[:, 0] = state
        for seg in range(len(mids)):
            state = targets[:, seg] + (state - targets[:, seg]) * decay[seg]
            vals[:, seg + 1] = state
        out = vals[:, sample_idx].copy()
        if prev is not None:
            drift = float(np.abs(out - prev).max())

    # Canonical leg potentials: line voltages fix the legs up to the shared
    # zero state; resolving to 000 gives one representative v_o.
    vab_g = line_voltage(sp, grid, "ab", params.v0)
    vbc_g = line_voltage(sp, grid, "bc", params.v0)
    vca_g = line_voltage(sp, grid, "ca", params.v0)
    x_a = -vca_g  # v_ac
    x_b = vbc_g
    x_c = np.zeros_like(x_a)
    mn = np.minimum(np.minimum(x_a, x_b), x_c)
    v_o = ((x_a - mn) + (x_b - mn) + (x_c - mn)) / 3.0
    return SampledWaveforms(grid=grid, i_a=out[0], i_b=out[1], i_c=out[2],
                            v_o=v_o, drift=drift)


def integrate_single(instants, alpha: float, v0: float, r: float,
                     steps_per_period: int = MIN_STEPS,
                     n_periods: int | None = None):
    """Oracle for the single line-to-line equation L di/dt + R i = v_ab.

    Accepts a generic strictly increasing instant list in (0, 1/2); used to
    validate the segment-coefficient solve in isolation.  Returns (grid, i).
    """
    inst = np.asarray(instants, dtype=float)
    if n_periods is None:
        n_periods = min(BURN_IN_CAP, max(1, math.ceil(2.0 * 12.0 * math.log(10.0) / alpha))) + 1
    grid = np.arange(steps_per_period) / steps_per_period
    bounds = np.unique(np.concatenate([inst, inst + 0.5, grid, [0.0, 1.0]]))
    mids = 0.5 * (bounds[:-1] + bounds[1:])
    half = mids % 1.0 >= 0.5
    bb = np.where(half, mids % 1.0 - 0.5, mids % 1.0)
    level = (np.searchsorted(inst, bb, side="right") % 2).astype(float)
    drive = np.where(half, -level, level) * v0
    target = drive / r
    decay = np.exp(-alpha * np.diff(bounds))
    sample_idx = np.searchsorted(bounds, grid)
    state = 0.0
    vals = np.empty(len(bounds))
    for _ in range(n_periods):
        vals[0] = state
        for seg in range(len(mids)):
            state = target[seg] + (state - target[seg]) * decay[seg]
            vals[seg + 1] = state
    return grid, vals[sample_idx]


def steady_state_error(sp: SwitchingPattern, params: InverterParams,
                       steps_per_period: int = MIN_STEPS) -> float:
    """Max abs deviation between the oracle i_a and the closed-form i_a."""
    from .response import coeffs_for_pattern, eval_vra

    waves = integrate(sp, params, steps_per_period)
    coeffs = coeffs_for_pattern(sp, params)
    analytic = eval_vra(coeffs, waves.grid) / params.r
    return float(np.abs(waves.i_a - analytic).max())
