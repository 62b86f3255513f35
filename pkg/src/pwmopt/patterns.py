"""Switching-pattern data model and the three-phase symmetry algebra.

A half-period of the line voltage v_ab is described by 6P strictly increasing
scaled instants beta_1..beta_6P in (0, 1/2), grouped into three pulse groups
of P pulses each:

    p-group: beta_1..beta_2P      (first sixth of the period)
    q-group: beta_2P+1..beta_4P   (second sixth)
    r-group: beta_4P+1..beta_6P   (third sixth)

Quarter-wave symmetry ties the r-group to the p-group; the KVL structure of
the three line voltages ties the q-group to the p-group and additionally pairs
p-group instants among themselves.  With P odd this leaves (3P-1)/2
independent instants.

Free-parameter layout (documented contract, verified by tests):
for l = 1..P the mutually paired p-group instants are

    l odd:  (2l,   2P-2l+2)  with beta_i + beta_j = 1/6,
    l even: (2l-1, 2P-2l+1)  with beta_i + beta_j = 1/6.

At l = (P+1)/2 the pair degenerates to a single self-paired instant (index
P or P+1 depending on the parity of (P+1)/2) fixed at 1/12.  The free vector
theta keeps the LOWER index of every pair plus all unpaired p-group instants,
ordered by ascending p-group index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InfeasiblePatternError, PatternError

ONE_SIXTH = 1.0 / 6.0
ONE_THIRD = 1.0 / 3.0
SELF_PAIRED_VALUE = 1.0 / 12.0


def n_free(p: int) -> int:
    """Number of independent instants for P = p (odd)."""
    return (3 * p - 1) // 2


def _check_p(p) -> int:
    if not (isinstance(p, (int, np.integer)) and p >= 1 and p % 2 == 1):
        raise PatternError(f"pulse count P must be an odd natural number, got {p!r}")
    return int(p)


@lru_cache(maxsize=None)
def p_group_structure(p: int):
    """Classify p-group indices 1..2P as free, mirrored or fixed.

    Returns (kind, free) where kind maps a non-free index to ("mirror", src)
    or ("fixed",), and free lists the free indices ascending.
    """
    p = _check_p(p)
    kind = {}
    for l in range(1, p + 1):
        if l % 2 == 1:
            i, j = 2 * l, 2 * p - 2 * l + 2
        else:
            i, j = 2 * l - 1, 2 * p - 2 * l + 1
        if i == j:
            kind[i] = ("fixed",)
        elif i < j:
            kind[j] = ("mirror", i)
    free = tuple(i for i in range(1, 2 * p + 1) if i not in kind)
    return kind, free


@lru_cache(maxsize=None)
def expansion_map(p: int):
    """Affine map beta = M @ theta + offset for the full 6P instant vector.

    Every instant depends on at most one free parameter with coefficient +-1,
    so the columns of M have disjoint supports (used by the least-squares
    projection).  Returns (M, offset, free) with M of shape (6P, (3P-1)/2).
    """
    p = _check_p(p)
    kind, free = p_group_structure(p)
    pos = {idx: t for t, idx in enumerate(free)}
    m = np.zeros((6 * p, n_free(p)))
    off = np.zeros(6 * p)

    def p_affine(i):
        if i in pos:
            return pos[i], 1.0, 0.0
        entry = kind[i]
        if entry[0] == "fixed":
            return None, 0.0, SELF_PAIRED_VALUE
        col, coef, const = p_affine(entry[1])
        return col, -coef, ONE_SIXTH - const

    def put(row, col, coef, const):
        if col is not None:
            m[row - 1, col] = coef
        off[row - 1] = const

    for i in range(1, 2 * p + 1):
        put(i, *p_affine(i))
    for l in range(1, p + 1):
        ia = 2 * p - (2 * l - 2)
        ib = 2 * p - (2 * l - 1)
        ca, aa, da = p_affine(ia)
        cb, ab, db = p_affine(ib)
        if l % 2 == 1:
            c1, a1, d1 = p_affine(2 * l - 1)
            put(2 * p + 2 * l - 1, c1, a1, d1 + ONE_SIXTH)
            put(2 * p + 2 * l, cb, -ab, ONE_THIRD - db)
        else:
            put(2 * p + 2 * l - 1, ca, -aa, ONE_THIRD - da)
            c2, a2, d2 = p_affine(2 * l)
            put(2 * p + 2 * l, c2, a2, d2 + ONE_SIXTH)
        put(4 * p + 2 * l - 1, ca, -aa, 0.5 - da)
        put(4 * p + 2 * l, cb, -ab, 0.5 - db)
    m.setflags(write=False)
    off.setflags(write=False)
    return m, off, free


@dataclass(frozen=True)
class FreePattern:
    """The (3P-1)/2 independent scaled instants plus the pulse count."""

    p: int
    theta: np.ndarray

    def __post_init__(self):
        p = _check_p(self.p)
        theta = np.asarray(self.theta, dtype=float).copy()
        theta.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 1 or len(theta) != n_free(p):
            raise PatternError(
                f"theta must have length (3P-1)/2 = {n_free(p)} for P = {p}, got {theta.shape}"
            )
        if np.any(theta <= 0.0) or np.any(theta >= 0.5):
            raise PatternError("free instants must lie strictly inside (0, 1/2)")


@dataclass(frozen=True)
class SwitchingPattern:
    """Full scaled switching-instant sequence beta_1..beta_6P.

    Construction checks shape and the (0, 1/2) range; strict monotonicity and
    the symmetry relations are checked by expand_pattern / validate_pattern so
    that diagnostics can still be produced for broken sequences.
    """

    p: int
    beta: np.ndarray

    def __post_init__(self):
        p = _check_p(self.p)
        beta = np.asarray(self.beta, dtype=float).copy()
        beta.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "beta", beta)
        if beta.ndim != 1 or len(beta) != 6 * p:
            raise PatternError(f"beta must have length 6P = {6 * p}, got {beta.shape}")
        if beta[0] <= 0.0 or beta[-1] >= 0.5:
            raise PatternError("instants must lie strictly inside (0, 1/2)")

    @property
    def gaps(self) -> np.ndarray:
        """All 6P+1 gaps including the implied endpoints beta_0=0, beta_6P+1=1/2."""
        return np.diff(np.concatenate([[0.0], self.beta, [0.5]]))


@dataclass(frozen=True)
class PatternDiagnostics:
    """Outcome of validate_pattern."""

    monotonic: bool
    min_gap: float
    symmetry_residuals: np.ndarray
    kvl_ok: bool
    valid: bool


def expand_pattern(fp: FreePattern) -> SwitchingPattern:
    """Expand free parameters to the full 6P instants via the symmetry algebra.

    Raises InfeasiblePatternError when the expansion is not strictly
    increasing (reporting the first violated gap).
    """
    m, off, _ = expansion_map(fp.p)
    beta = m @ fp.theta + off
    full = np.concatenate([[0.0], beta, [0.5]])
    gaps = np.diff(full)
    bad = np.nonzero(gaps <= 0.0)[0]
    if len(bad):
        j = int(bad[0])
        raise InfeasiblePatternError(
            f"expanded instants not strictly increasing: gap {j} "
            f"(beta_{j} -> beta_{j + 1}) is {gaps[j]:.3e}",
            first_violation=j,
        )
    return SwitchingPattern(p=fp.p, beta=beta)


def extract_free(sp: SwitchingPattern) -> FreePattern:
    """Read the free parameters back off a full pattern (exact round trip)."""
    _, _, free = expansion_map(sp.p)
    return FreePattern(p=sp.p, theta=sp.beta[np.array(free) - 1])


def relation_residuals(p: int, beta: np.ndarray) -> np.ndarray:
    """Absolute residuals of all symmetry relation families on a full sequence.

    Five relations per pulse index l (two r-group reflections, two q-group
    links, one intra-p pairing), evaluated in scaled time.
    """
    p = _check_p(p)
    b = np.concatenate([[np.nan], np.asarray(beta, dtype=float)])
    res = []
    for l in range(1, p + 1):
        ia = 2 * p - (2 * l - 2)
        ib = 2 * p - (2 * l - 1)
        res.append(b[4 * p + 2 * l - 1] - (0.5 - b[ia]))
        res.append(b[4 * p + 2 * l] - (0.5 - b[ib]))
        if l % 2 == 1:
            res.append(b[2 * p + 2 * l - 1] - (b[2 * l - 1] + ONE_SIXTH))
            res.append(b[2 * p + 2 * l] - (ONE_THIRD - b[ib]))
            res.append(b[2 * l] + b[ia] - ONE_SIXTH)
        else:
            res.append(b[2 * p + 2 * l - 1] - (ONE_THIRD - b[ia]))
            res.append(b[2 * p + 2 * l] - (b[2 * l] + ONE_SIXTH))
            res.append(b[2 * l - 1] + b[ib] - ONE_SIXTH)
    return np.abs(np.array(res))


def line_voltage(sp: SwitchingPattern, beta, pair: str = "ab", v0: float = 1.0):
    """Line-voltage level at scaled time beta: one of -v0, 0, +v0.

    Levels are taken on half-open [rise, fall) intervals so the function is
    total.  The bc and ca voltages are the ab voltage shifted by -1/3 and
    +1/3 respectively.
    """
    shift = {"ab": 0.0, "bc": -ONE_THIRD, "ca": ONE_THIRD}
    if pair not in shift:
        raise PatternError(f"pair must be one of 'ab', 'bc', 'ca', got {pair!r}")
    b = (np.asarray(beta, dtype=float) + shift[pair]) % 1.0
    neg = b >= 0.5
    bb = np.where(neg, b - 0.5, b)
    k = np.searchsorted(sp.beta, bb, side="right")
    level = (k % 2).astype(float)
    out = np.where(neg, -level, level) * v0
    return out if out.ndim else float(out)


def validate_pattern(sp: SwitchingPattern, tau: float = 1e-4,
                     kvl_samples: int = 10_000,
                     symmetry_tol: float = 1e-12) -> PatternDiagnostics:
    """Diagnose monotonicity, symmetry residuals and the KVL sum of a pattern.

    The pattern is declared valid iff the minimum gap is >= tau and every
    symmetry residual is <= symmetry_tol.  KVL is checked pointwise on a
    uniform grid (switching instants themselves are measure zero and the
    levels are exact, so the sum is exactly zero for symmetric patterns).
    """
    gaps = sp.gaps
    min_gap = float(gaps.min())
    monotonic = bool(np.all(gaps > 0.0))
    residuals = relation_residuals(sp.p, sp.beta)
    grid = (np.arange(kvl_samples) + 0.5) / kvl_samples
    kvl = (line_voltage(sp, grid, "ab") + line_voltage(sp, grid, "bc")
           + line_voltage(sp, grid, "ca"))
    kvl_ok = bool(np.max(np.abs(kvl)) == 0.0)
    valid = monotonic and min_gap >= tau and bool(np.all(residuals <= symmetry_tol))
    return PatternDiagnostics(
        monotonic=monotonic, min_gap=min_gap, symmetry_residuals=residuals,
        kvl_ok=kvl_ok, valid=valid,
    )
