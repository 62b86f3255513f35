"""Run orchestration shared by the HTTP service and the CLI.

A RunConfig describes one experiment (electrical point or scaled point, pulse
counts, constraints, solver settings); the run_* functions execute it and
return JSON-ready dictionaries.  Everything here is deterministic for a fixed
config and seed; wall-clock timings are returned separately so records can be
compared byte for byte.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DomainError, InfeasiblePatternError, PwmOptError, SeedError
from .objective import SolverConfig, monotonicity_slacks, objective_report
from .optimizer import optimize
from .oracle import steady_state_error
from .params import InverterParams, derive_params, params_from_alpha
from .patterns import (FreePattern, expand_pattern, extract_free, n_free,
                       relation_residuals, validate_pattern)
from .response import coeffs_for_pattern, eval_vra, phase_currents
from .spectrum import (current_harmonics, current_spectrum_complete,
                       fundamental_current, harmonic_energy_total, thd,
                       thd_timedomain, voltage_harmonics)
from .svpwm import project_to_symmetry, raw_svpwm_edges, svpwm_seed
from .objective import e2_scaled, objective_gradient

SCHEMA_VERSION = 1


class ConfigError(PwmOptError, ValueError):
    """A run configuration is malformed or inconsistent."""


@dataclass
class RunConfig:
    """One experiment manifest.  Exactly one of (r, l) or (alpha, vm_over_v0)
    families must be provided; v0 and f apply to both."""

    schema_version: int = SCHEMA_VERSION
    v0: float = 300.0
    f: float = 60.0
    r: float | None = None
    l: float | None = None
    i_m: float | None = None
    alpha: float | None = None
    vm_over_v0: float | None = None
    p: tuple = (7,)
    she_orders: tuple = ()
    tau: float = 1e-4
    kkt_tol: float = 1e-8
    eq_tol: float = 1e-8
    step_tol: float = 1e-12
    max_iter: int = 500
    multistart: int = 0
    seed: int = 0
    n_report: int = 49
    waveform_samples: int = 4096
    out_dir: str = "runs"
    inject_fault: str = ""

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        self.p = tuple(int(x) for x in (self.p if isinstance(self.p, (tuple, list)) else [self.p]))
        if not self.p:
            raise ConfigError("at least one pulse count p is required")
        self.she_orders = tuple(int(x) for x in self.she_orders)
        scaled_mode = self.alpha is not None or self.vm_over_v0 is not None
        electrical_mode = self.r is not None or self.l is not None or self.i_m is not None
        if scaled_mode and electrical_mode:
            raise ConfigError("give either (r, l, i_m) or (alpha, vm_over_v0), not both")
        if scaled_mode:
            if self.alpha is None or self.vm_over_v0 is None:
                raise ConfigError("scaled mode needs both alpha and vm_over_v0")
        else:
            missing = [k for k in ("r", "l", "i_m") if getattr(self, k) is None]
            if missing:
                raise ConfigError(f"electrical mode needs r, l and i_m (missing {missing})")
        for k in ("v0", "f", "tau"):
            if not (isinstance(getattr(self, k), (int, float)) and getattr(self, k) > 0):
                raise ConfigError(f"{k} must be positive")

    @property
    def scaled_mode(self) -> bool:
        return self.alpha is not None

    def params_for(self, p: int) -> InverterParams:
        if self.scaled_mode:
            return params_from_alpha(self.alpha, self.vm_over_v0, p, v0=self.v0, f=self.f)
        return derive_params(self.v0, self.r, self.l, self.f, self.i_m, p)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tau=self.tau, she_orders=self.she_orders,
                            kkt_tol=self.kkt_tol, eq_tol=self.eq_tol,
                            step_tol=self.step_tol, max_iter=self.max_iter)

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------- config file

_INT_KEYS = {"schema_version", "max_iter", "multistart", "seed", "n_report",
             "waveform_samples"}
_LIST_KEYS = {"p", "she_orders"}
_STR_KEYS = {"out_dir", "inject_fault"}


def parse_config_text(text: str) -> dict:
    """Parse the plain `key = value` manifest format (see README)."""
    data: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _STR_KEYS:
            data[key] = value
        elif key in _LIST_KEYS:
            data[key] = tuple(int(v) for v in value.split(",") if v.strip()) if value else ()
        elif key in _INT_KEYS:
            data[key] = int(value)
        else:
            data[key] = float(value) if value.lower() not in ("none", "") else None
    return data


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f_ in fields(cfg):
        val = getattr(cfg, f_.name)
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        lines.append(f"{f_.name} = {val if val is not None else 'none'}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------- helpers

def _seconds(beta: np.ndarray, params: InverterParams):
    return [float(b) * params.t for b in beta]


def _pattern_summary(sp, params: InverterParams, config: SolverConfig) -> dict:
    fp = extract_free(sp)
    rep = objective_report(fp, params, config)
    return {
        "thd_pct": rep.thd_i * 100.0,
        "i_f_amps": rep.i_f,
        "e2_scaled_v2": rep.e2_scaled,
        "e2_a2s": rep.e2,
        "fundamental_residual_v": rep.fundamental_residual,
        "she_residuals": {str(k): v for k, v in rep.she_residuals.items()},
        "min_gap_scaled": rep.min_gap,
        "instants_scaled": [float(b) for b in sp.beta],
        "instants_seconds": _seconds(sp.beta, params),
    }


def _harmonic_table(sp_base, sp_opt, params: InverterParams, n_report: int) -> list:
    v_base = voltage_harmonics(sp_base, params.v0, n_report)
    i_base = current_harmonics(v_base, params)
    v_opt = voltage_harmonics(sp_opt, params.v0, n_report)
    i_opt = current_harmonics(v_opt, params)
    i_f = i_opt.fundamental
    rows = []
    for n in range(1, n_report + 1):
        rows.append({
            "order": n,
            "v_svpwm_volts": v_base.amp(n),
            "i_svpwm_amps": i_base.amp(n),
            "v_opt_volts": v_opt.amp(n),
            "i_opt_amps": i_opt.amp(n),
            "i_opt_pct_of_fundamental": 100.0 * i_opt.amp(n) / i_f if i_f else 0.0,
        })
    return rows


def sample_waveforms(sp, params: InverterParams, samples: int) -> dict:
    """Analytic steady-state waveforms on a uniform grid (for CSV export)."""
    from .patterns import line_voltage

    grid = np.arange(samples) / samples
    coeffs = coeffs_for_pattern(sp, params)
    i_a, i_b, i_c = phase_currents(sp, params, grid)
    return {
        "beta": grid.tolist(),
        "t_seconds": (grid * params.t).tolist(),
        "v_ab_volts": np.asarray(line_voltage(sp, grid, "ab", params.v0)).tolist(),
        "i_a_amps": np.asarray(i_a).tolist(),
        "i_b_amps": np.asarray(i_b).tolist(),
        "i_c_amps": np.asarray(i_c).tolist(),
    }


def _inputs_dict(cfg: RunConfig, p: int) -> dict:
    return {
        "schema_version": cfg.schema_version,
        "v0": cfg.v0, "f": cfg.f, "r": cfg.r, "l": cfg.l, "i_m": cfg.i_m,
        "alpha": cfg.alpha, "vm_over_v0": cfg.vm_over_v0, "p": p,
        "she_orders": list(cfg.she_orders), "tau": cfg.tau,
        "kkt_tol": cfg.kkt_tol, "eq_tol": cfg.eq_tol, "step_tol": cfg.step_tol,
        "max_iter": cfg.max_iter, "multistart": cfg.multistart, "seed": cfg.seed,
    }


def _derived_dict(params: InverterParams) -> dict:
    return {
        "alpha": params.alpha, "t_seconds": params.t, "omega_rad_s": params.omega,
        "phi_rad": params.phi, "v_m_volts": params.v_m, "v_rm_volts": params.v_rm,
        "m_index": params.m_index, "f_sw_hz": params.f_sw,
    }


# ---------------------------------------------------------------------- runs

def run_optimize_single(cfg: RunConfig, p: int) -> dict:
    """Optimize one pulse count; returns {status, record, timings}."""
    t0 = time.perf_counter()
    params = cfg.params_for(p)
    solver = cfg.solver_config()
    fp0, spec = svpwm_seed(params)
    seeds = [fp0]
    rng_note = None
    if cfg.multistart > 0:
        rng = np.random.default_rng(cfg.seed)
        scale = 0.25 * float(min(monotonicity_slacks(fp0, 0.0).min(), 1.0 / (24 * p)))
        rng_note = {"seed": cfg.seed, "jitter_scale": scale, "starts": cfg.multistart}
        for _ in range(cfg.multistart):
            cand = fp0.theta + rng.normal(0.0, scale, size=fp0.theta.shape)
            try:
                cand_fp = FreePattern(p=p, theta=cand)
            except PwmOptError:
                continue
            if monotonicity_slacks(cand_fp, cfg.tau).min() >= 0.0:
                seeds.append(cand_fp)
    best = None
    best_idx = 0
    for idx, seed_fp in enumerate(seeds):
        result = optimize(seed_fp, params, solver)
        if best is None or (result.converged and not best.converged) or (
                result.converged == best.converged
                and result.final_report.e2_scaled < best.final_report.e2_scaled):
            best, best_idx = result, idx
    result = best
    sp0 = expand_pattern(fp0)
    sp1 = expand_pattern(result.final_fp)
    base = _pattern_summary(sp0, params, solver)
    opt = _pattern_summary(sp1, params, solver)
    opt.update({
        "theta": [float(v) for v in result.final_fp.theta],
        "kkt_residual": result.kkt_residual,
        "iterations": result.iterations,
        "converged": result.converged,
        "method": result.method,
        "message": result.message,
        "objective_history": [float(v) for v in result.objective_history],
    })
    record = {
        "schema_version": SCHEMA_VERSION,
        "inputs": _inputs_dict(cfg, p),
        "derived": _derived_dict(params),
        "svpwm": base,
        "optimized": opt,
        "improvement": (base["thd_pct"] - opt["thd_pct"]) / base["thd_pct"],
        "harmonics": _harmonic_table(sp0, sp1, params, cfg.n_report),
        "svpwm_m_index": spec.m_index,
    }
    if rng_note:
        rng_note["chosen_start"] = best_idx
        record["multistart"] = rng_note
    status = "ok" if result.converged else "not_converged"
    return {"status": status, "record": record,
            "timings": {"seconds": time.perf_counter() - t0}}


def run_optimize(cfg: RunConfig) -> dict:
    if len(cfg.p) != 1:
        raise ConfigError("optimize expects exactly one pulse count; use sweep for lists")
    return run_optimize_single(cfg, cfg.p[0])


def run_sweep(cfg: RunConfig) -> dict:
    """One optimization per configured pulse count; rows run concurrently."""
    t0 = time.perf_counter()

    def one(p):
        try:
            return run_optimize_single(cfg, p)
        except PwmOptError as exc:
            return {"status": "error", "error": f"{type(exc).__name__}: {exc}",
                    "record": None, "timings": None}

    with ThreadPoolExecutor(max_workers=min(len(cfg.p), 8)) as pool:
        rows = list(pool.map(one, cfg.p))
    table = []
    for p, row in zip(cfg.p, rows):
        if row["record"] is None:
            table.append({"p": p, "error": row["error"]})
            continue
        rec = row["record"]
        table.append({
            "p": p,
            "f_sw_hz": rec["derived"]["f_sw_hz"],
            "l_henries": rec["inputs"]["l"],
            "thd_svpwm_pct": rec["svpwm"]["thd_pct"],
            "thd_opt_pct": rec["optimized"]["thd_pct"],
            "improvement_pct": 100.0 * rec["improvement"],
            "status": row["status"],
        })
    worst = "ok"
    if any(r["status"] == "error" for r in rows):
        worst = "error"
    elif any(r["status"] == "not_converged" for r in rows):
        worst = "not_converged"
    return {"status": worst, "rows": rows, "table": table,
            "timings": {"seconds": time.perf_counter() - t0}}


def run_svpwm(cfg: RunConfig) -> dict:
    """Baseline-only report (no optimization)."""
    if len(cfg.p) != 1:
        raise ConfigError("svpwm expects exactly one pulse count")
    t0 = time.perf_counter()
    p = cfg.p[0]
    params = cfg.params_for(p)
    solver = cfg.solver_config()
    fp, spec = svpwm_seed(params)
    sp = expand_pattern(fp)
    raw = raw_svpwm_edges(spec)
    _, displacement = project_to_symmetry(raw, p)
    diag = validate_pattern(sp, cfg.tau)
    record = {
        "schema_version": SCHEMA_VERSION,
        "inputs": _inputs_dict(cfg, p),
        "derived": _derived_dict(params),
        "svpwm": _pattern_summary(sp, params, solver),
        "m_index": spec.m_index,
        "projection_displacement": displacement,
        "pattern_valid": diag.valid,
        "harmonics": _harmonic_table(sp, sp, params, cfg.n_report),
    }
    return {"status": "ok", "record": record,
            "timings": {"seconds": time.perf_counter() - t0}}


def run_analyze(cfg: RunConfig, instants) -> dict:
    """Spectrum and THD of a user-supplied scaled instant list."""
    t0 = time.perf_counter()
    beta = np.asarray(list(instants), dtype=float)
    if beta.ndim != 1 or len(beta) < 2:
        raise ConfigError("analyze needs at least two instants")
    if np.any(np.diff(beta) <= 0) or beta[0] <= 0.0 or beta[-1] >= 0.5:
        raise ConfigError("instants must be strictly increasing inside (0, 1/2)")
    p_equiv = len(beta) // 6 if len(beta) % 6 == 0 and (len(beta) // 6) % 2 == 1 else None
    params = cfg.params_for(p_equiv if p_equiv is not None else 1)
    thd_td, i_f = thd_timedomain(beta, params)
    spec, tail = current_spectrum_complete(beta, params)
    vspec = voltage_harmonics(beta, params.v0, cfg.n_report)
    ispec = current_harmonics(vspec, params)
    sym = None
    if p_equiv is not None:
        sym = float(relation_residuals(p_equiv, beta).max())
    record = {
        "schema_version": SCHEMA_VERSION,
        "inputs": _inputs_dict(cfg, p_equiv if p_equiv is not None else 0),
        "derived": _derived_dict(params),
        "n_instants": len(beta),
        "instants_scaled": [float(b) for b in beta],
        "thd_pct": thd_td * 100.0,
        "thd_spectral_pct": thd(spec) * 100.0,
        "i_f_amps": i_f,
        "spectral_tail": tail,
        "spectrum_n_max": spec.n_max,
        "fundamental_v1_volts": voltage_harmonics(beta, params.v0, 1).fundamental,
        "max_symmetry_residual": sym,
        "harmonics": [
            {"order": n, "v_volts": vspec.amp(n), "i_amps": ispec.amp(n)}
            for n in range(1, cfg.n_report + 1)
        ],
    }
    return {"status": "ok", "record": record,
            "timings": {"seconds": time.perf_counter() - t0}}


# ------------------------------------------------------------------ validate

def _feasible_jitter(fp0: FreePattern, rng, scale: float, tau: float):
    for _ in range(200):
        cand = fp0.theta + rng.normal(0.0, scale, size=fp0.theta.shape)
        if np.all(cand > 0) and np.all(cand < 0.5):
            fp = FreePattern(p=fp0.p, theta=cand)
            if monotonicity_slacks(fp, tau).min() >= 0.0:
                return fp
    return fp0


def run_validate(cfg: RunConfig) -> dict:
    """Cross-validation battery: oracle agreement, symmetry, Parseval, gradients.

    cfg.inject_fault = 'symmetry' deliberately breaks one instant before the
    symmetry check (negative control); any failing check makes the overall
    status 'failed'.
    """
    t0 = time.perf_counter()
    checks = []
    rng = np.random.default_rng(cfg.seed)

    def add(name, measured, threshold, passed=None):
        ok = bool(measured <= threshold) if passed is None else bool(passed)
        checks.append({"name": name, "measured": float(measured),
                       "threshold": float(threshold), "passed": ok})

    p_list = cfg.p if cfg.p != (7,) else (5, 7)
    for p in p_list:
        base = params_from_alpha(150.0, 0.78, p, v0=cfg.v0, f=cfg.f)
        fp0, _ = svpwm_seed(base)
        add(f"free_parameter_count_p{p}", abs(len(fp0.theta) - n_free(p)), 0)
        beta = expand_pattern(fp0).beta
        if cfg.inject_fault == "symmetry":
            beta = beta.copy()
            beta[1] += 1e-3
        add(f"symmetry_residuals_p{p}", relation_residuals(p, beta).max(), 1e-12)
        sp = expand_pattern(fp0)
        diag = validate_pattern(sp, cfg.tau)
        add(f"kvl_p{p}", 0.0 if diag.kvl_ok else 1.0, 0.0)
        rt = extract_free(sp)
        add(f"round_trip_p{p}", np.abs(rt.theta - fp0.theta).max(), 0.0)
        for alpha in (90.0, 150.0, 450.0):
            params = params_from_alpha(alpha, 0.78, p, v0=cfg.v0, f=cfg.f)
            fp = _feasible_jitter(fp0, rng, 1e-3, cfg.tau)
            err = steady_state_error(expand_pattern(fp), params)
            add(f"oracle_agreement_p{p}_a{int(alpha)}", err,
                1e-8 * params.v0 / params.r)
        params = params_from_alpha(150.0, 0.78, p, v0=cfg.v0, f=cfg.f)
        fp = _feasible_jitter(fp0, rng, 1e-3, cfg.tau)
        sp = expand_pattern(fp)
        e2s = e2_scaled(fp, params)
        i_f, _ = fundamental_current(sp, params)
        spec, tail = current_spectrum_complete(sp, params)
        harm = float(np.sum(spec.amplitude[1:] ** 2))
        e2_pars = ((i_f - params.i_m) ** 2 + harm) * params.t / 4.0
        e2_abs = e2s * params.t / params.r ** 2
        add(f"parseval_p{p}", abs(e2_abs - e2_pars) / e2_abs, 1e-6)
        add(f"spectral_tail_p{p}", tail, 1e-10)
        val, grad = e2s, objective_gradient(fp, params)
        fd = np.zeros_like(grad)
        h = 1e-7
        for i in range(len(grad)):
            up = fp.theta.copy(); up[i] += h
            dn = fp.theta.copy(); dn[i] -= h
            fd[i] = (e2_scaled(FreePattern(p=p, theta=up), params)
                     - e2_scaled(FreePattern(p=p, theta=dn), params)) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-12)
        add(f"gradient_fd_p{p}", rel.max(), 1e-5)
    failed = [c["name"] for c in checks if not c["passed"]]
    return {"status": "ok" if not failed else "failed",
            "checks": checks, "failed": failed,
            "timings": {"seconds": time.perf_counter() - t0}}
