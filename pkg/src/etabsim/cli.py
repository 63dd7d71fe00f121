"""Command-line front end: run, compare, verify.

Config files are flat ``key = value`` text with three sections,
``[system]``, ``[gains]``, ``[sim]``. Keys mirror the GainConfig and
SimConfig field names. Unknown keys are rejected with their line number.
Exit codes: 0 success, 1 runtime abort, 2 config rejection.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, EtabsimError, UsageError
from .model import SYSTEM_REGISTRY, GainConfig
from .sim import Controller1Params, SimConfig, run
from .verify import run_all

_SYSTEM_KEYS = {"name", "closed_forms"}
_GAIN_KEYS = {"k", "Gamma", "gamma_rho", "gamma_delta", "eps_omega", "xi",
              "gamma_u", "theta_hat0", "rho_hat0", "delta_hat0"}
_SIM_KEYS = {"T", "h", "controller", "x0", "diagnostics", "demo_delta_law",
             "decimation", "guard", "m", "m_bar", "eps", "sigma_leak"}


def parse_config(path):
    """Parse the flat sectioned config; returns {section: {key: (value, line)}}."""
    sections = {"system": {}, "gains": {}, "sim": {}}
    allowed = {"system": _SYSTEM_KEYS, "gains": _GAIN_KEYS, "sim": _SIM_KEYS}
    current = None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw!r}", line=lineno)
        if current is None:
            raise ConfigError("key outside any section", line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in allowed[current]:
            raise ConfigError(f"unknown key {key!r} in [{current}]", line=lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        sections[current][key] = (val, lineno)
    return sections


def _as_float(val, lineno):
    try:
        return float(val)
    except ValueError:
        raise ConfigError(f"expected a number, got {val!r}", line=lineno) from None


def _as_floats(val, lineno):
    return [_as_float(p, lineno) for p in val.split(",")]


def _as_bool(val, lineno):
    low = val.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {val!r}", line=lineno)


def build_from_config(cfg, decimate=None):
    """Instantiate (spec, truth, gains, simcfg) from a parsed config."""
    sys_sec, gain_sec, sim_sec = cfg["system"], cfg["gains"], cfg["sim"]
    name = sys_sec.get("name", ("demo", 0))[0]
    if name not in SYSTEM_REGISTRY:
        line = sys_sec.get("name", (None, 0))[1]
        raise ConfigError(
            f"unknown system {name!r}; registered: {sorted(SYSTEM_REGISTRY)}",
            line=line or None)
    kwargs = {}
    if "closed_forms" in sys_sec:
        val, lineno = sys_sec["closed_forms"]
        kwargs["closed_forms"] = _as_bool(val, lineno)
    try:
        spec, truth, gains = SYSTEM_REGISTRY[name](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"system {name!r} rejected options: {exc}") from None

    overrides = {}
    for key, (val, lineno) in gain_sec.items():
        if key in ("k", "theta_hat0"):
            overrides[key] = _as_floats(val, lineno)
        elif key == "Gamma":
            vals = _as_floats(val, lineno)
            if len(vals) == 1:
                overrides[key] = vals[0] * np.eye(spec.q)
            elif len(vals) == spec.q * spec.q:
                overrides[key] = np.array(vals).reshape(spec.q, spec.q)
            else:
                raise ConfigError(
                    f"Gamma needs 1 or {spec.q * spec.q} entries, got {len(vals)}",
                    line=lineno)
        else:
            overrides[key] = _as_float(val, lineno)
    if overrides:
        gains = dataclasses.replace(gains, **overrides)

    sim_kwargs = {}
    c1 = {}
    for key, (val, lineno) in sim_sec.items():
        if key in ("T", "h", "guard"):
            sim_kwargs[key] = _as_float(val, lineno)
        elif key == "decimation":
            sim_kwargs[key] = int(_as_float(val, lineno))
        elif key == "x0":
            sim_kwargs[key] = _as_floats(val, lineno)
        elif key == "diagnostics":
            sim_kwargs[key] = _as_bool(val, lineno)
        elif key in ("controller", "demo_delta_law"):
            sim_kwargs[key] = val
        elif key in ("m", "m_bar", "eps", "sigma_leak"):
            c1[key] = _as_float(val, lineno)
    if c1:
        sim_kwargs["controller1_params"] = Controller1Params(**c1)
    if decimate is not None:
        sim_kwargs["decimation"] = decimate
    simcfg = SimConfig(**sim_kwargs)
    gains.validate_direction(spec.control_direction)
    return spec, truth, gains, simcfg


def _write_events(log, path):
    with open(path, "w", newline="") as fh:
        fh.write("t_k,u_e\n")
        for t, u in log.events:
            fh.write(f"{t:.17g},{u:.17g}\n")


def _summary_lines(result):
    zen = result.zeno
    lines = [
        "final_state = " + " ".join(f"{v:.17g}" for v in result.final_state),
        f"event_count = {result.events.count}",
        f"min_interval = {zen.min_interval if zen.min_interval is not None else 'n/a'}",
        f"mean_interval = {zen.mean_interval if zen.mean_interval is not None else 'n/a'}",
        f"terminal_dtheta = {result.terminal_dtheta:.17g}",
    ]
    if result.diagnostics is not None:
        lines.append(f"max_bound_violation = {result.diagnostics.max_violation:.17g}")
    else:
        lines.append("max_bound_violation = n/a")
    return lines


def _write_manifest(outdir, config_path, cfg, simcfg, gains, runtime):
    lines = [f"artifact_version = {__version__}",
             f"config = {config_path}",
             f"output_dir = {outdir}",
             f"wall_clock_seconds = {runtime:.3f}",
             "",
             "[resolved]"]
    lines.append(f"T = {simcfg.T!r}")
    lines.append(f"h = {simcfg.h!r}")
    lines.append(f"controller = {simcfg.controller}")
    lines.append(f"x0 = {list(simcfg.x0)!r}")
    lines.append(f"demo_delta_law = {simcfg.demo_delta_law}")
    lines.append(f"decimation = {simcfg.decimation}")
    lines.append(f"k = {list(gains.k)!r}")
    lines.append(f"Gamma = {gains.Gamma.tolist()!r}")
    for fieldname in ("gamma_rho", "gamma_delta", "eps_omega", "xi", "gamma_u",
                      "rho_hat0", "delta_hat0"):
        lines.append(f"{fieldname} = {getattr(gains, fieldname)!r}")
    lines.append(f"theta_hat0 = {gains.theta_hat0.tolist()!r}")
    (Path(outdir) / "manifest.txt").write_text("\n".join(lines) + "\n")


def cmd_run(args):
    cfg = parse_config(args.config)
    spec, truth, gains, simcfg = build_from_config(cfg, decimate=args.decimate)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = run(spec, truth, gains, simcfg)
    runtime = time.perf_counter() - t0
    result.trace.to_csv(outdir / "trace.csv")
    _write_events(result.events, outdir / "events.csv")
    (outdir / "summary.txt").write_text("\n".join(_summary_lines(result)) + "\n")
    _write_manifest(outdir, args.config, cfg, simcfg, gains, runtime)
    print(f"run complete: {result.events.count} events, "
          f"final |x| = {np.linalg.norm(result.final_state[:spec.n]):.3e} "
          f"({runtime:.1f} s)")
    return 0


def cmd_compare(args):
    cfg = parse_config(args.config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    failed = False
    for kind in ("proposed", "baseline", "controller1"):
        spec, truth, gains, simcfg = build_from_config(cfg, decimate=args.decimate)
        simcfg = dataclasses.replace(simcfg, controller=kind)
        try:
            result = run(spec, truth, gains, simcfg)
        except EtabsimError as exc:
            print(f"{kind}: aborted: {exc}", file=sys.stderr)
            rows.append((kind, "aborted", "n/a", "n/a"))
            failed = True
            continue
        result.trace.to_csv(outdir / f"trace_{kind}.csv")
        _write_events(result.events, outdir / f"events_{kind}.csv")
        term_x = float(np.linalg.norm(result.final_state[:spec.n]))
        rows.append((kind, str(result.events.count),
                     f"{term_x:.6e}", f"{result.terminal_dtheta:.6e}"))
    header = f"{'controller':<12} {'events':>8} {'terminal_x':>14} {'terminal_dtheta':>16}"
    lines = [header]
    for r in rows:
        lines.append(f"{r[0]:<12} {r[1]:>8} {r[2]:>14} {r[3]:>16}")
    table = "\n".join(lines)
    (outdir / "comparison_summary.txt").write_text(table + "\n")
    print(table)
    return 1 if failed else 0


def cmd_verify(args):
    results = run_all(seed=args.seed)
    failed = [r for r in results if not r[1]]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} (seed {args.seed})")
    return 1 if failed else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="etabsim",
        description="Adaptive event-triggered backstepping simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one controller from a config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--decimate", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run all three controllers")
    p_cmp.add_argument("config")
    p_cmp.add_argument("--out", default="out")
    p_cmp.add_argument("--decimate", type=int, default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify", help="run the invariant sweeps")
    p_ver.add_argument("--seed", type=int, default=12345)
    p_ver.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EtabsimError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
