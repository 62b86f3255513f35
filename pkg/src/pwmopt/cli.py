"""Command-line front end: a thin client of the HTTP service.

By default requests are dispatched to the service in-process (ASGI transport,
no sockets); --server redirects them to a running instance.  All file output
happens client-side.

Exit codes: 0 ok, 2 usage/config error, 3 infeasible seed, 4 not converged,
5 validation failure.
"""

from __future__ import annotations

import asyncio
import csv
import json
import sys
from pathlib import Path

import click
import httpx

from .errors import PwmOptError
from .runner import (ConfigError, RunConfig, SCHEMA_VERSION, parse_config_text,
                     sample_waveforms)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SEED = 3
EXIT_NOT_CONVERGED = 4
EXIT_VALIDATION = 5

_STATUS_CODES = {
    "ok": EXIT_OK,
    "seed_infeasible": EXIT_SEED,
    "not_converged": EXIT_NOT_CONVERGED,
    "failed": EXIT_VALIDATION,
    "error": EXIT_NOT_CONVERGED,
}


def _request(server: str | None, path: str, payload: dict) -> dict:
    """POST to a remote server or to the in-process app."""
    if server:
        with httpx.Client(base_url=server, timeout=3600.0) as client:
            resp = client.post(path, json=payload)
    else:
        from .service import app

        async def go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport, timeout=3600.0,
                                         base_url="http://pwmopt.local") as client:
                return await client.post(path, json=payload)

        resp = asyncio.run(go())
    if resp.status_code in (400, 422):
        detail = resp.json().get("detail", resp.text)
        raise ConfigError(f"rejected by service: {detail}")
    resp.raise_for_status()
    return resp.json()


def _build_config(config_path, **overrides) -> dict:
    data: dict = {}
    if config_path:
        data = parse_config_text(Path(config_path).read_text())
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    data.setdefault("schema_version", SCHEMA_VERSION)
    RunConfig.from_mapping({k: v for k, v in data.items() if k != "out_dir"}
                           | ({"out_dir": data["out_dir"]} if "out_dir" in data else {}))
    return data


def _parse_int_list(_ctx, _param, value):
    if value is None:
        return None
    try:
        return [int(v) for v in str(value).split(",") if v.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from exc


def _common_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True),
                     help="Run manifest file (key = value lines)."),
        click.option("--p", "p", callback=_parse_int_list, default=None,
                     help="Pulses per group; comma list for sweeps."),
        click.option("--l", "l", type=float, default=None, help="Load inductance (H)."),
        click.option("--r", "r", type=float, default=None, help="Load resistance (ohms)."),
        click.option("--f", "f", type=float, default=None, help="Fundamental frequency (Hz)."),
        click.option("--v0", "v0", type=float, default=None, help="DC bus voltage (V)."),
        click.option("--im", "i_m", type=float, default=None,
                     help="Target fundamental current amplitude (A)."),
        click.option("--alpha", "alpha", type=float, default=None,
                     help="Dimensionless R*T/L (scaled mode)."),
        click.option("--vm-ratio", "vm_over_v0", type=float, default=None,
                     help="V_m/V0 for scaled mode."),
        click.option("--she", "she_orders", callback=_parse_int_list, default=None,
                     help="Harmonic orders to eliminate, e.g. 5,7."),
        click.option("--tau", "tau", type=float, default=None,
                     help="Minimum scaled gap between instants."),
        click.option("--out", "out_dir", type=click.Path(), default=None,
                     help="Output directory (default: runs)."),
        click.option("--seed", "seed", type=int, default=None,
                     help="RNG seed for optional multistart."),
        click.option("--multistart", "multistart", type=int, default=None,
                     help="Number of jittered extra starts (0 = off)."),
        click.option("--server", "server", default=None,
                     help="Base URL of a running service; default is in-process."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_waveforms_csv(path: Path, record: dict, instants_key: str, samples: int):
    from .params import derive_params, params_from_alpha
    from .patterns import SwitchingPattern

    inputs = record["inputs"]
    p = inputs["p"]
    if inputs.get("alpha") is not None:
        params = params_from_alpha(inputs["alpha"], inputs["vm_over_v0"], p,
                                   v0=inputs["v0"], f=inputs["f"])
    else:
        params = derive_params(inputs["v0"], inputs["r"], inputs["l"],
                               inputs["f"], inputs["i_m"], p)
    sp = SwitchingPattern(p=p, beta=record[instants_key]["instants_scaled"])
    waves = sample_waveforms(sp, params, samples)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(waves.keys())
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in zip(*(waves[c] for c in cols)):
            writer.writerow([repr(v) for v in row])


def _finish(status: str):
    code = _STATUS_CODES.get(status, EXIT_NOT_CONVERGED)
    if code:
        click.echo(f"status: {status}", err=True)
    sys.exit(code)


@click.group()
@click.version_option()
def main():
    """Synthesize and analyze minimal-distortion three-phase PWM patterns."""


@main.command()
@_common_options
def optimize(config_path, server, out_dir, **overrides):
    """Optimize the switching pattern for one pulse count."""
    try:
        data = _build_config(config_path, **overrides)
        out = Path(out_dir or data.get("out_dir", "runs"))
        data.pop("out_dir", None)
        resp = _request(server, "/optimize", data)
    except (ConfigError, PwmOptError) as exc:
        raise click.UsageError(str(exc))
    if resp.get("record"):
        rec = resp["record"]
        p = rec["inputs"]["p"]
        _write_json(out / f"optimize_P{p}.json", resp)
        _write_waveforms_csv(out / f"waveforms_P{p}.csv", rec, "optimized",
                             data.get("waveform_samples", 4096))
        click.echo(f"P={p}: THD {rec['svpwm']['thd_pct']:.2f}% -> "
                   f"{rec['optimized']['thd_pct']:.2f}% "
                   f"({100 * rec['improvement']:.2f}% improvement); wrote {out}/")
    elif resp.get("error"):
        click.echo(resp["error"], err=True)
    _finish(resp["status"])


@main.command()
@_common_options
def sweep(config_path, server, out_dir, **overrides):
    """Optimize every pulse count in the list and tabulate the results."""
    try:
        data = _build_config(config_path, **overrides)
        out = Path(out_dir or data.get("out_dir", "runs"))
        data.pop("out_dir", None)
        if len(data.get("p", []) or []) < 1:
            raise ConfigError("sweep needs a non-empty p list")
        resp = _request(server, "/sweep", data)
    except (ConfigError, PwmOptError) as exc:
        raise click.UsageError(str(exc))
    out.mkdir(parents=True, exist_ok=True)
    table = resp["table"]
    with (out / "sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "f_sw_hz", "l_henries", "thd_svpwm_pct",
                         "thd_opt_pct", "improvement_pct", "status"])
        for row in table:
            writer.writerow([row.get(k, "") for k in
                             ("p", "f_sw_hz", "l_henries", "thd_svpwm_pct",
                              "thd_opt_pct", "improvement_pct", "status")])
    for row, full in zip(table, resp["rows"]):
        if full.get("record"):
            _write_json(out / f"optimize_P{row['p']}.json", full)
        line = (f"P={row['p']}: {row.get('thd_svpwm_pct', float('nan')):.2f}% -> "
                f"{row.get('thd_opt_pct', float('nan')):.2f}%"
                if "thd_svpwm_pct" in row else f"P={row['p']}: {row.get('error')}")
        click.echo(line)
    click.echo(f"wrote {out}/sweep.csv")
    _finish(resp["status"])


@main.command()
@_common_options
def svpwm(config_path, server, out_dir, **overrides):
    """Generate and report the carrier-based baseline pattern only."""
    try:
        data = _build_config(config_path, **overrides)
        out = Path(out_dir or data.get("out_dir", "runs"))
        data.pop("out_dir", None)
        resp = _request(server, "/svpwm", data)
    except (ConfigError, PwmOptError) as exc:
        raise click.UsageError(str(exc))
    if resp.get("record"):
        rec = resp["record"]
        p = rec["inputs"]["p"]
        _write_json(out / f"svpwm_P{p}.json", resp)
        _write_waveforms_csv(out / f"svpwm_waveforms_P{p}.csv", rec, "svpwm",
                             data.get("waveform_samples", 4096))
        click.echo(f"P={p}: SVPWM THD {rec['svpwm']['thd_pct']:.2f}%; wrote {out}/")
    _finish(resp["status"])


@main.command()
@click.option("--instants", "instants_path", type=click.Path(exists=True), required=True,
              help="Text file with one scaled instant per line.")
@_common_options
def analyze(config_path, server, out_dir, instants_path, **overrides):
    """Spectrum and THD of an explicit switching-instant list."""
    try:
        values = [float(line) for line in Path(instants_path).read_text().split()]
        data = _build_config(config_path, **overrides)
        out = Path(out_dir or data.get("out_dir", "runs"))
        data.pop("out_dir", None)
        resp = _request(server, "/analyze", {"config": data, "instants": values})
    except ValueError as exc:
        raise click.UsageError(f"bad instants file: {exc}")
    except (ConfigError, PwmOptError) as exc:
        raise click.UsageError(str(exc))
    if resp.get("record"):
        _write_json(out / "analyze.json", resp)
        rec = resp["record"]
        click.echo(f"THD {rec['thd_pct']:.3f}%  I_f {rec['i_f_amps']:.4f} A; wrote {out}/analyze.json")
    _finish(resp["status"])


@main.command()
@click.option("--inject-fault", "inject_fault", type=click.Choice(["", "symmetry"]),
              default=None, help="Deliberately break a check (negative control).")
@_common_options
def validate(config_path, server, out_dir, inject_fault, **overrides):
    """Run the numerical cross-validation battery."""
    try:
        data = _build_config(config_path, **overrides)
        if inject_fault is not None:
            data["inject_fault"] = inject_fault
        out = Path(out_dir or data.get("out_dir", "runs"))
        data.pop("out_dir", None)
        resp = _request(server, "/validate", data)
    except (ConfigError, PwmOptError) as exc:
        raise click.UsageError(str(exc))
    _write_json(out / "validate.json", resp)
    for check in resp["checks"]:
        mark = "pass" if check["passed"] else "FAIL"
        click.echo(f"[{mark}] {check['name']}: {check['measured']:.3e} "
                   f"(threshold {check['threshold']:.3e})")
    _finish(resp["status"])


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("pwmopt.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
