"""Exact Fourier-series harmonics of line voltages and phase currents, THD.

All spectra are exact series of the ideal waveforms (no windowing, no
leakage).  Conventions: component n is amp * sin(2*pi*n*beta + phase); the
line voltage of a half-wave-symmetric pattern has even orders exactly zero,
and the phase current of the shift-defined three-phase system has triplen
orders exactly zero.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UndefinedThdError
from .params import InverterParams
from .patterns import SwitchingPattern
from .response import coeffs_for_pattern, phase_waveform, residual_energy

#: Relative spectral-tail energy at which harmonic sums are considered complete.
TAIL_TOL = 1e-10
_N_MAX_CAP = 1 << 21


@dataclass(frozen=True)
class HarmonicSpectrum:
    """Harmonic amplitudes and phases for orders 1..n_max."""

    orders: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    n_max: int

    def amp(self, n: int) -> float:
        if not 1 <= n <= self.n_max:
            raise DomainError(f"order {n} outside 1..{self.n_max}")
        return float(self.amplitude[n - 1])

    @property
    def fundamental(self) -> float:
        return float(self.amplitude[0])


_CHUNK = 8192


def _voltage_sin_cos(beta: np.ndarray, v0: float, orders: np.ndarray):
    """Sine/cosine series coefficients of v_ab for the given (odd) orders."""
    j = np.arange(1, len(beta) + 1)
    sgn = np.where(j % 2 == 1, 1.0, -1.0)  # (-1)^(j+1)
    an = np.empty(len(orders))
    bn = np.empty(len(orders))
    for lo in range(0, len(orders), _CHUNK):
        sel = slice(lo, min(lo + _CHUNK, len(orders)))
        ang = 2.0 * np.pi * orders[sel, None] * beta[None, :]
        bn[sel] = (2.0 * v0 / (np.pi * orders[sel])) * (np.cos(ang) @ sgn)
        an[sel] = (2.0 * v0 / (np.pi * orders[sel])) * (np.sin(ang) @ (-sgn))
    return an, bn


def voltage_harmonics(sp: SwitchingPattern | np.ndarray, v0: float, n_max: int) -> HarmonicSpectrum:
    """Line-voltage (v_ab) spectrum up to order n_max.

    Half-wave symmetry makes even orders exactly zero; odd orders come from
    the closed-form edge sums.  Accepts a raw instant array as well as a
    pattern.
    """
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    beta = sp.beta if isinstance(sp, SwitchingPattern) else np.asarray(sp, dtype=float)
    orders = np.arange(1, n_max + 1)
    odd = orders[orders % 2 == 1]
    an = np.zeros(n_max)
    bn = np.zeros(n_max)
    a_odd, b_odd = _voltage_sin_cos(beta, v0, odd.astype(float))
    an[odd - 1] = a_odd
    bn[odd - 1] = b_odd
    amp = np.hypot(an, bn)
    phase = np.where(amp > 0.0, np.arctan2(an, bn), 0.0)
    return HarmonicSpectrum(orders=orders, amplitude=amp, phase=phase, n_max=n_max)


def _three_phase_factor(n: int) -> complex:
    """(1 - e^(i*2*pi*n/3)) / 3, taken branch-exactly so triplens are zero."""
    r = n % 3
    if r == 0:
        return 0.0 + 0.0j
    if r == 1:
        return cmath.rect(1.0 / math.sqrt(3.0), -math.pi / 6.0)
    return cmath.rect(1.0 / math.sqrt(3.0), math.pi / 6.0)


def current_harmonics(vspec: HarmonicSpectrum, params: InverterParams) -> HarmonicSpectrum:
    """Phase-current (i_a) spectrum from a line-voltage spectrum.

    Per order: divide by the series R-L impedance and apply the three-phase
    superposition factor; orders divisible by three vanish identically.
    """
    n = vspec.orders
    amp = np.zeros_like(vspec.amplitude)
    phase = np.zeros_like(vspec.phase)
    for i, order in enumerate(n):
        fac = _three_phase_factor(int(order))
        if fac == 0 or vspec.amplitude[i] == 0.0:
            continue
        z = complex(params.r, order * params.omega * params.l)
        c = vspec.amplitude[i] * cmath.exp(1j * vspec.phase[i]) / z * fac
        amp[i] = abs(c)
        phase[i] = cmath.phase(c)
    return HarmonicSpectrum(orders=n.copy(), amplitude=amp, phase=phase, n_max=vspec.n_max)


def thd(spec: HarmonicSpectrum) -> float:
    """Total harmonic distortion: sqrt(sum_(n>=2) amp_n^2) / amp_1."""
    if spec.fundamental == 0.0:
        raise UndefinedThdError("THD undefined: fundamental amplitude is zero")
    return float(np.sqrt(np.sum(spec.amplitude[1:] ** 2)) / spec.fundamental)


def _as_beta(sp) -> np.ndarray:
    return sp.beta if isinstance(sp, SwitchingPattern) else np.asarray(sp, dtype=float)


def fundamental_current(sp: SwitchingPattern | np.ndarray, params: InverterParams):
    """Exact fundamental of i_a as (amplitude, phase) in the sin convention."""
    vspec = voltage_harmonics(sp, params.v0, 1)
    ispec = current_harmonics(vspec, params)
    return ispec.fundamental, float(ispec.phase[0])


def harmonic_energy_total(sp: SwitchingPattern | np.ndarray, params: InverterParams) -> float:
    """sum_(n>=2) I_n^2 computed exactly from the time-domain residual.

    Equals 4/T times the squared-residual energy of i_a against its own exact
    fundamental (amplitude and phase from the order-1 series).
    """
    from .response import segment_coeffs

    i_f, ph = fundamental_current(sp, params)
    pw = phase_waveform(segment_coeffs(_as_beta(sp), params.alpha, params.v0))
    e_scaled = residual_energy(pw, params.r * i_f, -ph)
    return 4.0 * e_scaled / params.r ** 2


def thd_timedomain(sp: SwitchingPattern | np.ndarray, params: InverterParams):
    """(THD_I, I_f) with the harmonic energy taken from the exact residual.

    Independent of any series truncation; agrees with the spectral thd() as
    n_max grows.
    """
    i_f, ph = fundamental_current(sp, params)
    if i_f == 0.0:
        raise UndefinedThdError("THD undefined: fundamental amplitude is zero")
    total = harmonic_energy_total(sp, params)
    return float(math.sqrt(max(total, 0.0)) / i_f), float(i_f)


def default_n_max(n_instants: int) -> int:
    """Initial truncation order: sideband clusters sit near multiples of 6P
    (= the instant count per half period), so start at 10x that."""
    return max(300, 10 * n_instants)


def current_spectrum_complete(sp: SwitchingPattern | np.ndarray, params: InverterParams,
                              tail_tol: float = TAIL_TOL):
    """Current spectrum extended until the relative tail energy is below tail_tol.

    The tail is measured against the exact total harmonic energy from the
    time-domain residual, so the stopping rule needs no heuristics.  Returns
    (spectrum, tail) where tail is the achieved relative tail energy.
    """
    beta = _as_beta(sp)
    total = harmonic_energy_total(beta, params)
    n_max = default_n_max(len(beta))
    while True:
        ispec = current_harmonics(voltage_harmonics(beta, params.v0, n_max), params)
        partial = float(np.sum(ispec.amplitude[1:] ** 2))
        tail = abs(total - partial) / total if total > 0.0 else 0.0
        if tail < tail_tol or n_max >= _N_MAX_CAP:
            return ispec, tail
        n_max *= 2
