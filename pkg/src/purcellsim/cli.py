"""Command-line surface.

Subcommands
-----------
simulate        run a preset or config end to end and write artifacts
analyze         run estimators over an existing time-tag file
preset-list     list the built-in presets
render-sequence tabulate a pulse sequence timeline
purcell         cavity Purcell arithmetic (mode volumes, lifetimes)

Exit codes: 0 success; 2 bad usage, config or parameter validation;
1 runtime failures (I/O, malformed input files).

The default output directory is the config's, unless --out-dir or the
PURCELLSIM_OUT_DIR environment variable overrides it.
"""

import argparse
import os
import sys
from dataclasses import replace

from .cavity import lifetime_to_purcell, purcell_to_lifetime
from .constants import VERSION
from .errors import ConfigError, ValidationError
from .modeprofile import default_profile, summarize
from .pipeline import (
    analyze_stream,
    build_cavity,
    build_pulse_sequence,
    execute,
)
from .presets import PRESETS, preset
from .pulses import render_timeline
from .report import render_report, write_table_atomic
from .runconfig import RunConfig, load_config, render_config

OUT_DIR_ENV = "PURCELLSIM_OUT_DIR"


def _add_config_args(p: argparse.ArgumentParser, preset_required: bool) -> None:
    p.add_argument("--preset", help="built-in preset name (see preset-list)")
    p.add_argument("--config", help="path to a run-config file")
    p.add_argument("--seed", type=int, help="override the root seed")
    p.add_argument("--cycles", type=int, help="override the cycle count")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument(
        "--format", choices=("csv", "binary"), help="time-tag artifact format"
    )
    p.add_argument(
        "--workers", type=int, default=1, help="worker threads for sweeps"
    )
    p.set_defaults(preset_required=preset_required)


def _resolve_config(args) -> RunConfig:
    if args.config and args.preset:
        raise ConfigError("give either --preset or --config, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    elif getattr(args, "preset_required", False):
        raise ConfigError("one of --preset or --config is required")
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
    if args.cycles is not None:
        if args.cycles < 1:
            raise ConfigError("--cycles must be at least 1")
        cfg = replace(cfg, run=replace(cfg.run, cycles=args.cycles))
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV)
    if out_dir and (args.out_dir or cfg.output.directory == "."):
        cfg = replace(cfg, output=replace(cfg.output, directory=out_dir))
    if args.format:
        cfg = replace(cfg, output=replace(cfg.output, format=args.format))
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    report, out = execute(cfg, workers=args.workers)
    sys.stdout.write(render_report(report))
    for name, path in out.paths.items():
        print(f"artifact {name}: {path}", file=sys.stderr)
    return 0


def _cmd_analyze(args) -> int:
    cfg = _resolve_config(args)
    report, out = analyze_stream(cfg, args.input)
    sys.stdout.write(render_report(report))
    for name, path in out.paths.items():
        print(f"artifact {name}: {path}", file=sys.stderr)
    return 0


def _cmd_preset_list(_args) -> int:
    width = max(len(name) for name in PRESETS)
    for name, (_builder, description) in PRESETS.items():
        print(f"{name:<{width}}  {description}")
    return 0


def _cmd_render_sequence(args) -> int:
    cfg = _resolve_config(args)
    seq = build_pulse_sequence(cfg)
    print(f"period_us = {seq.period_us:g}")
    print(f"pump_windows = {'; '.join(f'{a:g}:{b:g}' for a, b in seq.pump_windows)}")
    print(
        "detector_windows = "
        + "; ".join(f"{a:g}:{b:g}" for a, b in seq.detector_windows)
    )
    for a, b, v in seq.voltage_segments:
        print(f"voltage_segment = {a:g}:{b:g} at {v:g} V")
    table = render_timeline(seq, n_samples=args.samples)
    path = os.path.join(
        cfg.output.directory, f"{cfg.output.basename}_timeline.csv"
    )
    os.makedirs(cfg.output.directory, exist_ok=True)
    write_table_atomic(
        path,
        ["t_us", "pump", "gate", "target_v", "effective_v"],
        table.tolist(),
    )
    print(f"timeline written to {path}")
    return 0


def _cmd_purcell(args) -> int:
    if args.t_wg_us is not None and args.t_cav_us is not None:
        p = lifetime_to_purcell(args.t_wg_us, args.t_cav_us)
        print(f"purcell_factor = {p:.10g}")
        return 0
    if args.t_wg_us is not None and args.purcell is not None:
        t = purcell_to_lifetime(args.t_wg_us, args.purcell)
        print(f"lifetime_us = {t:.10g}")
        return 0
    cfg = _resolve_config(args)
    cavity = build_cavity(cfg)
    summary = summarize(default_profile(), cavity)
    print(f"lambda0_nm = {cavity.lambda0_nm:g}")
    print(f"q_factor = {cavity.q_factor:g}")
    print(f"kappa_ghz = {cavity.linewidth_ghz:.10g}")
    print(f"v_mode_um3 = {summary.v_mode_um3:.10g}")
    print(f"v_eff_um3 = {summary.v_eff_um3:.10g}")
    print(f"p_max = {summary.p_max:.10g}")
    print(f"p_avg = {summary.p_avg:.10g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="purcellsim",
        description="Stochastic simulator and analysis toolkit for "
        "Purcell-enhanced single-ion emission in a tunable nanocavity.",
    )
    parser.add_argument("--version", action="version", version=f"purcellsim {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a preset or config end to end")
    _add_config_args(p_sim, preset_required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_an = sub.add_parser("analyze", help="run estimators over a time-tag file")
    p_an.add_argument("input", help="time-tag file (CSV or binary)")
    _add_config_args(p_an, preset_required=False)
    p_an.set_defaults(func=_cmd_analyze)

    p_list = sub.add_parser("preset-list", help="list built-in presets")
    p_list.set_defaults(func=_cmd_preset_list)

    p_seq = sub.add_parser("render-sequence", help="tabulate a pulse sequence")
    _add_config_args(p_seq, preset_required=True)
    p_seq.add_argument("--samples", type=int, default=2000)
    p_seq.set_defaults(func=_cmd_render_sequence)

    p_pur = sub.add_parser("purcell", help="Purcell and mode-volume arithmetic")
    _add_config_args(p_pur, preset_required=False)
    p_pur.add_argument("--t-wg-us", type=float, help="baseline lifetime in us")
    p_pur.add_argument("--t-cav-us", type=float, help="enhanced lifetime in us")
    p_pur.add_argument("--purcell", type=float, help="Purcell factor to convert")
    p_pur.set_defaults(func=_cmd_purcell)

    p_show = sub.add_parser("show-config", help="print a preset or config file")
    _add_config_args(p_show, preset_required=True)
    p_show.set_defaults(func=_cmd_show_config)

    return parser


def _cmd_show_config(args) -> int:
    cfg = _resolve_config(args)
    sys.stdout.write(render_config(cfg))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
