"""Carrier-based space-vector PWM: baseline patterns and optimizer seeds.

Construction: symmetric (zero-state-centered) space-vector modulation with a
triangle carrier of 3P periods per fundamental period, valley-aligned at
t = 0, and regular sampling at the center of every switching half-period
T_s = T/(6P).  Min/max common-mode injection centers the zero states.  With
this alignment the resulting v_ab edge list satisfies the half-wave,
quarter-wave and translational symmetries exactly (up to rounding), i.e. it
lands on the symmetry manifold by construction; each T_s carries exactly one
v_ab pulse.

The duty mapping is m_index = V_m/V0 (the injected references then peak at
m_index in half-bus units), so the linear range is m_index < 1.  Regular
sampling biases the realized fundamental by a fraction of a percent, so seeds
are calibrated by a short fixed-point iteration on the measured fundamental.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModulationRangeError, PatternError, SeedError
from .params import InverterParams
from .patterns import FreePattern, SwitchingPattern, expand_pattern, expansion_map
from .spectrum import voltage_harmonics

_CALIBRATION_ROUNDS = 4


@dataclass(frozen=True)
class SvpwmSpec:
    """Carrier-based modulation command.

    alignment shifts the sampling phase in half-period units; 0 is the
    symmetric (quarter-wave preserving) alignment.  Nonzero values are only
    useful as a symmetry-breaking control in validation.
    """

    p: int
    m_index: float
    alignment: float = 0.0

    def __post_init__(self):
        if not (isinstance(self.p, int) and self.p >= 1 and self.p % 2 == 1):
            raise PatternError(f"pulse count P must be odd, got {self.p!r}")
        if not 0.0 < self.m_index < 1.0:
            raise ModulationRangeError(
                f"m_index = {self.m_index!r} outside the linear range (0, 1)"
            )


def raw_svpwm_edges(spec: SvpwmSpec) -> np.ndarray:
    """The 6P scaled v_ab edge instants on (0, 1/2) before projection."""
    p = spec.p
    ts = 1.0 / (6 * p)
    k = np.arange(3 * p)
    centers = (k + 0.5 + spec.alignment) * ts
    ang = 2.0 * np.pi * centers - np.pi / 6.0
    amp = spec.m_index / math.sqrt(3.0)  # phase reference in V0 units
    refs = np.stack([np.sin(ang), np.sin(ang - 2.0 * np.pi / 3.0),
                     np.sin(ang + 2.0 * np.pi / 3.0)]) * amp
    cm = -(refs.max(axis=0) + refs.min(axis=0)) / 2.0
    u = (refs + cm) * 2.0  # pole references in half-bus units
    if np.abs(u).max() >= 1.0:
        raise ModulationRangeError(
            f"injected reference peaks at {np.abs(u).max():.4f} >= 1; "
            "pattern would drop pulses"
        )
    ua, ub = u[0], u[1]
    up_slope = k % 2 == 0  # valley at t=0: even half-periods ramp upward
    first = np.where(up_slope, (1.0 + ub) * 0.5, (1.0 - ua) * 0.5)
    second = np.where(up_slope, (1.0 + ua) * 0.5, (1.0 - ub) * 0.5)
    edges = (k[:, None] + np.stack([first, second], axis=1)) * ts
    return edges.ravel()


def project_to_symmetry(raw_beta, p: int):
    """Least-squares projection of a raw 6P edge list onto the symmetry manifold.

    The expansion matrix has disjoint column supports, so the projection is an
    exact per-parameter weighted average.  Returns (FreePattern, displacement)
    where displacement is the max absolute instant correction.  Raises
    SeedError for a wrong count or a non-monotone projected sequence.
    """
    raw = np.asarray(raw_beta, dtype=float)
    if raw.ndim != 1 or len(raw) != 6 * p:
        raise SeedError(f"expected {6 * p} instants for P = {p}, got {raw.shape}")
    if np.any(np.diff(raw) <= 0.0):
        raise SeedError("raw edge list is not strictly increasing")
    m, off, _ = expansion_map(p)
    resid = raw - off
    theta = (m.T @ resid) / np.sum(m * m, axis=0)
    projected = m @ theta + off
    displacement = float(np.abs(projected - raw).max())
    if np.any(np.diff(projected) <= 0.0) or projected[0] <= 0.0 or projected[-1] >= 0.5:
        raise SeedError(
            f"projected edge list is not a valid pattern (displacement {displacement:.3e})"
        )
    return FreePattern(p=p, theta=theta), displacement


def svpwm_pattern(spec: SvpwmSpec, params: InverterParams) -> SwitchingPattern:
    """Full SVPWM switching pattern, projected onto the symmetry manifold."""
    fp, _ = project_to_symmetry(raw_svpwm_edges(spec), spec.p)
    return expand_pattern(fp)


def svpwm_seed(params: InverterParams, calibrate: bool = True):
    """Calibrated SVPWM seed for the optimizer.

    Fixed-point iteration scales m_index until the measured fundamental of the
    generated pattern equals V_m; without calibration the nominal mapping is
    within about one percent.  Returns (FreePattern, SvpwmSpec).
    """
    m_index = params.m_index
    if not 0.0 < m_index < 1.0:
        raise ModulationRangeError(
            f"V_m/V0 = {m_index:.4f} outside the carrier-based linear range (0, 1)"
        )
    spec = SvpwmSpec(p=params.p, m_index=m_index)
    if calibrate:
        for _ in range(_CALIBRATION_ROUNDS):
            edges = raw_svpwm_edges(spec)
            v1 = voltage_harmonics(edges, params.v0, 1).fundamental
            m_new = spec.m_index * params.v_m / v1
            if not 0.0 < m_new < 1.0:
                raise ModulationRangeError(
                    f"calibrated m_index = {m_new:.4f} left the linear range"
                )
            spec = SvpwmSpec(p=params.p, m_index=m_new)
    fp, _ = project_to_symmetry(raw_svpwm_edges(spec), spec.p)
    return fp, spec
