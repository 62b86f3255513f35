"""Closed-form piecewise-exponential steady-state response to a PWM drive.

Between switching instants the scaled resistor voltage v_R,ab = R*i_ab obeys

    (1/alpha) * dv/dbeta + v = drive level (0 or V0),

so each segment is v = B_k * exp(-alpha*beta) + offset_k, with the B_k fixed
by current continuity and the anti-periodic boundary v(1/2) = -v(0).

Numerical form: raw B_k coefficients contain exp(alpha*beta_k) factors that
overflow for large alpha, so segments are stored by their left-edge values
b_k = B_(k+1) * exp(-alpha * x_k), which are bounded by the physical response.
Every exponent evaluated anywhere in this module is <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PatternError
from .params import InverterParams
from .patterns import ONE_SIXTH, ONE_THIRD, SwitchingPattern

_MERGE_TOL = 1e-13


@dataclass(frozen=True)
class SegmentCoeffs:
    """Per-segment exponential coefficients of the scaled response v_R,ab.

    Segment k spans (x_k, x_(k+1)) with x = (0, beta_1, .., beta_2N, 1/2);
    on it the response is edge_values[k] * exp(-alpha*(beta - x_k)) +
    offsets[k].
    """

    instants: np.ndarray
    alpha: float
    v0: float
    edge_values: np.ndarray
    offsets: np.ndarray

    @property
    def x(self) -> np.ndarray:
        """Left segment edges (0, beta_1, ..., beta_2N)."""
        return np.concatenate([[0.0], self.instants])

    @property
    def B(self) -> np.ndarray:
        """Raw coefficients B_1..B_(2N+1).  May overflow to inf for large alpha."""
        with np.errstate(over="ignore"):
            return self.edge_values * np.exp(self.alpha * self.x)


def segment_coeffs(instants, alpha: float, v0: float) -> SegmentCoeffs:
    """Solve the continuity/boundary system for a generic instant list.

    Accepts any strictly increasing instants in (0, 1/2) (an even count is not
    required for the math, but patterns always supply 2N of them).  An empty
    list yields the zero response.
    """
    inst = np.asarray(instants, dtype=float)
    if inst.ndim != 1:
        raise PatternError("instants must be a 1-d sequence")
    if len(inst) and (inst[0] <= 0.0 or inst[-1] >= 0.5 or np.any(np.diff(inst) <= 0.0)):
        raise PatternError("instants must be strictly increasing inside (0, 1/2)")
    n2 = len(inst)
    signs = np.where(np.arange(1, n2 + 1) % 2 == 1, -1.0, 1.0)  # (-1)^j
    denom = 1.0 + np.exp(-alpha / 2.0)
    b = np.empty(n2 + 1)
    # b_0 = B_1 = -e^(-alpha/2) * V0 * sum_j (-1)^j e^(alpha*beta_j) / denom,
    # computed with the exponent shifted by -1/2 so it never overflows.
    b[0] = -v0 * float(np.sum(signs * np.exp(alpha * (inst - 0.5)))) / denom
    x = np.concatenate([[0.0], inst])
    for j in range(1, n2 + 1):
        b[j] = b[j - 1] * np.exp(-alpha * (x[j] - x[j - 1])) + v0 * signs[j - 1]
    offsets = np.where(np.arange(n2 + 1) % 2 == 1, float(v0), 0.0)
    b.setflags(write=False)
    offsets.setflags(write=False)
    inst = inst.copy()
    inst.setflags(write=False)
    return SegmentCoeffs(instants=inst, alpha=float(alpha), v0=float(v0),
                         edge_values=b, offsets=offsets)


def coeffs_for_pattern(sp: SwitchingPattern, params: InverterParams) -> SegmentCoeffs:
    return segment_coeffs(sp.beta, params.alpha, params.v0)


def eval_vrab(coeffs: SegmentCoeffs, beta):
    """Scaled resistor voltage v_R,ab(beta); anti-periodic extension to [0, 1)."""
    beta = np.asarray(beta, dtype=float) % 1.0
    neg = beta >= 0.5
    bb = np.where(neg, beta - 0.5, beta)
    k = np.searchsorted(coeffs.instants, bb, side="right")
    x = coeffs.x
    val = coeffs.edge_values[k] * np.exp(-coeffs.alpha * (bb - x[k])) + coeffs.offsets[k]
    out = np.where(neg, -val, val)
    return out if out.ndim else float(out)


def eval_vra(coeffs: SegmentCoeffs, beta):
    """Scaled per-phase resistor voltage v_R,a = (v_R,ab(beta) - v_R,ab(beta+1/3))/3."""
    beta = np.asarray(beta, dtype=float)
    return (eval_vrab(coeffs, beta) - eval_vrab(coeffs, beta + ONE_THIRD)) / 3.0


def phase_currents(sp: SwitchingPattern, params: InverterParams, beta):
    """Steady-state phase currents (i_a, i_b, i_c) at scaled times beta."""
    coeffs = coeffs_for_pattern(sp, params)
    beta = np.asarray(beta, dtype=float)
    i_a = eval_vra(coeffs, beta) / params.r
    i_b = eval_vra(coeffs, beta - ONE_THIRD) / params.r
    i_c = eval_vra(coeffs, beta - 2.0 * ONE_THIRD) / params.r
    return i_a, i_b, i_c


@dataclass(frozen=True)
class PiecewiseWaveform:
    """v_R,a on (0, 1/2) as segments c*exp(-alpha*(beta-x_s)) + d.

    Breakpoints merge the pattern's instants with those of the 1/3-shifted
    copy; the waveform is continuous and anti-periodic with half period 1/2.
    """

    breakpoints: np.ndarray   # x_0 = 0 < ... < x_S = 1/2
    exp_at_left: np.ndarray   # c_s, one per segment
    offsets: np.ndarray       # d_s
    alpha: float

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.breakpoints[:-1] + self.breakpoints[1:])

    def eval(self, beta):
        beta = np.asarray(beta, dtype=float) % 1.0
        neg = beta >= 0.5
        bb = np.where(neg, beta - 0.5, beta)
        s = np.clip(np.searchsorted(self.breakpoints, bb, side="right") - 1,
                    0, len(self.offsets) - 1)
        val = self.exp_at_left[s] * np.exp(-self.alpha * (bb - self.breakpoints[s])) \
            + self.offsets[s]
        out = np.where(neg, -val, val)
        return out if out.ndim else float(out)


def phase_waveform(coeffs: SegmentCoeffs) -> PiecewiseWaveform:
    """Build the merged-breakpoint representation of v_R,a from v_R,ab."""
    inst = coeffs.instants
    alpha = coeffs.alpha
    cand = np.concatenate([
        [0.0, 0.5, ONE_SIXTH],
        inst,
        inst[inst > ONE_THIRD] - ONE_THIRD,
        inst[inst < ONE_THIRD] + ONE_SIXTH,
    ])
    pts = np.sort(cand)
    keep = [0.0]
    for q in pts[1:]:
        if q - keep[-1] > _MERGE_TOL:
            keep.append(float(q))
    keep[-1] = 0.5
    xs = np.array(keep)
    u = xs[:-1]
    mu = 0.5 * (u + xs[1:])
    x = coeffs.x
    bvals = coeffs.edge_values
    offs = coeffs.offsets

    k1 = np.searchsorted(inst, mu)
    c1 = bvals[k1] * np.exp(-alpha * (u - x[k1]))
    d1 = offs[k1]
    direct = mu < ONE_SIXTH            # shifted copy evaluated at beta + 1/3
    yu = np.where(direct, u + ONE_THIRD, u - ONE_SIXTH)
    ymu = np.where(direct, mu + ONE_THIRD, mu - ONE_SIXTH)
    k2 = np.searchsorted(inst, ymu)
    c2 = bvals[k2] * np.exp(-alpha * (yu - x[k2]))
    d2 = offs[k2]
    sig = np.where(direct, 1.0, -1.0)  # anti-periodic reflection past 1/6
    c = (c1 - sig * c2) / 3.0
    d = (d1 - sig * d2) / 3.0
    for arr in (xs, c, d):
        arr.setflags(write=False)
    return PiecewiseWaveform(breakpoints=xs, exp_at_left=c, offsets=d, alpha=alpha)


def segment_residual_integrals(pw: PiecewiseWaveform, amp: float, psi: float):
    """Closed-form per-segment integrals of the squared sinusoid residual.

    For g(beta) = c*exp(-alpha*(beta-u)) + d - amp*sin(2*pi*beta - psi)
    returns (I, K) with I_s = int g^2 dbeta and K_s = int g * exp(-alpha*(beta-u)) dbeta
    over each segment; the K_s are the building blocks of the objective
    gradient.  Antiderivatives are elementary; all exponents are <= 0.
    """
    two_pi = 2.0 * np.pi
    alpha = pw.alpha
    u = pw.breakpoints[:-1]
    w = pw.breakpoints[1:]
    c = pw.exp_at_left
    d = pw.offsets
    h = w - u
    e1 = -np.expm1(-alpha * h)        # 1 - e^(-alpha h)
    e2 = -np.expm1(-2.0 * alpha * h)
    eh = np.exp(-alpha * h)
    su, cu = np.sin(two_pi * u - psi), np.cos(two_pi * u - psi)
    sw, cw = np.sin(two_pi * w - psi), np.cos(two_pi * w - psi)
    den = alpha * alpha + two_pi * two_pi
    j = (alpha * su + two_pi * cu - eh * (alpha * sw + two_pi * cw)) / den
    integral = (c * c * e2 / (2.0 * alpha) + 2.0 * c * d * e1 / alpha + d * d * h
                + amp * amp * (h / 2.0 - (sw * cw - su * cu) / (2.0 * two_pi))
                - 2.0 * amp * c * j - amp * d * (cu - cw) / np.pi)
    cross = c * e2 / (2.0 * alpha) + d * e1 / alpha - amp * j
    return integral, cross


def residual_energy(pw: PiecewiseWaveform, amp: float, psi: float) -> float:
    """int_0^(1/2) [v_R,a(beta) - amp*sin(2*pi*beta - psi)]^2 dbeta, exactly."""
    integral, _ = segment_residual_integrals(pw, amp, psi)
    return float(integral.sum())
