"""Electrical operating point and the derived dimensionless quantities.

Scaled time beta = t/T is the canonical representation everywhere in this
package; absolute seconds appear only at I/O boundaries.  A single
dimensionless parameter alpha = R*T/L, together with the modulation ratio
V_m/V0, fixes the whole scaled optimization problem.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import DomainError, ModulationRangeError, PatternError

TWO_PI = 2.0 * math.pi

#: Fundamental amplitude of a full square wave, in units of V0.  No pulse
#: pattern can exceed it, so it bounds the realizable V_m.
SQUARE_WAVE_LIMIT = 4.0 / math.pi

#: Above V_m = V0 the carrier-based baseline leaves its linear range;
#: optimization may still be attempted, so this only triggers a warning.
LINEAR_RANGE_LIMIT = 1.0


@dataclass(frozen=True)
class InverterParams:
    """Inverter electrical parameters plus derived quantities (SI units)."""

    v0: float
    r: float
    l: float
    f: float
    i_m: float
    p: int
    # derived
    t: float
    omega: float
    alpha: float
    phi: float
    v_m: float
    f_sw: float

    @property
    def m_index(self) -> float:
        """Modulation ratio V_m / V0."""
        return self.v_m / self.v0

    @property
    def v_rm(self) -> float:
        """Amplitude of the scaled reference voltage R * i_m (volts)."""
        return self.v_m / (math.sqrt(3.0) * math.hypot(1.0, TWO_PI / self.alpha))

    @property
    def ref_phase(self) -> float:
        """Phase lag of the reference fundamental: sin(2*pi*beta - ref_phase)."""
        return self.phi + math.pi / 6.0

    def impedance(self, n: int) -> float:
        """Per-phase impedance magnitude at harmonic order n (ohms)."""
        return math.hypot(self.r, n * self.omega * self.l)


def derive_params(v0: float, r: float, l: float, f: float, i_m: float, p: int) -> InverterParams:
    """Build an InverterParams from the raw electrical inputs.

    Raises DomainError for non-positive inputs, PatternError for even p and
    ModulationRangeError when the implied V_m exceeds the square-wave bound.
    """
    for name, val in (("v0", v0), ("r", r), ("l", l), ("f", f), ("i_m", i_m)):
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise DomainError(f"{name} must be a positive finite number, got {val!r}")
    if not (isinstance(p, int) and p >= 1 and p % 2 == 1):
        raise PatternError(f"p must be an odd natural number, got {p!r}")

    t = 1.0 / f
    omega = TWO_PI * f
    alpha = r * t / l
    phi = math.atan2(TWO_PI, alpha)  # tan(phi) = omega*L/R = 2*pi/alpha
    v_m = math.sqrt(3.0) * i_m * math.hypot(r, omega * l)
    if v_m > SQUARE_WAVE_LIMIT * v0:
        raise ModulationRangeError(
            f"target fundamental V_m = {v_m:.2f} V exceeds the square-wave bound "
            f"{SQUARE_WAVE_LIMIT * v0:.2f} V for V0 = {v0:.2f} V"
        )
    if v_m > LINEAR_RANGE_LIMIT * v0:
        warnings.warn(
            f"V_m = {v_m:.2f} V exceeds the linear modulation range of V0 = {v0:.2f} V; "
            "the carrier-based seed is unavailable above V_m = V0",
            stacklevel=2,
        )
    return InverterParams(
        v0=float(v0), r=float(r), l=float(l), f=float(f), i_m=float(i_m), p=p,
        t=t, omega=omega, alpha=alpha, phi=phi, v_m=v_m, f_sw=6.0 * p * f,
    )


def params_from_alpha(alpha: float, vm_over_v0: float, p: int,
                      v0: float = 300.0, f: float = 60.0) -> InverterParams:
    """Build params from (alpha, V_m/V0) directly.

    R is fixed at 1 ohm and L, I_m are synthesized; all scaled outputs then
    depend only on (alpha, V_m/V0, p).
    """
    if not (isinstance(alpha, (int, float)) and math.isfinite(alpha) and alpha > 0):
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    if not (isinstance(vm_over_v0, (int, float)) and 0 < vm_over_v0):
        raise DomainError(f"vm_over_v0 must be positive, got {vm_over_v0!r}")
    r = 1.0
    t = 1.0 / f
    l = r * t / alpha
    v_m = vm_over_v0 * v0
    i_m = v_m / (math.sqrt(3.0) * math.hypot(r, TWO_PI * f * l))
    return derive_params(v0, r, l, f, i_m, p)
