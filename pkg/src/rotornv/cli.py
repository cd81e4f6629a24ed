"""Command-line front end.

Subcommands: simulate-rabi, simulate-echo, simulate-image, simulate-readout,
compile-seq, fit, dump-config.  The experiment configuration comes from
``--config`` (or the ROTORNV_CONFIG environment variable) with
``--set section.key=value`` overrides; every output file carries the config
hash and seed in its header, and identical config + seed reproduce files
byte for byte.

Exit codes: 0 success, 2 validation/usage error, 3 runtime failure,
4 fit did not converge.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import photophysics, pipeline, seqlang
from .config import ExperimentConfig, apply_overrides, config_from_dict, load_config
from .errors import FitError, SequenceError, ValidationError
from .estimation import EchoFitModel, fit_echo, fit_rabi
from .imaging import ScanGrid

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_NOT_CONVERGED = 4

CONFIG_ENV_VAR = "ROTORNV_CONFIG"


def _load_effective_config(args) -> ExperimentConfig:
    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    cfg = load_config(path) if path else config_from_dict({})
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg = apply_overrides(cfg, [f"seed={args.seed}"])
    return cfg


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _parse_scan(text: str) -> np.ndarray:
    """Scan values: either 'start:stop:n' (inclusive linspace) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"scan {text!r} must be start:stop:n or a comma list")
        start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValidationError("scan point count must be >= 1")
        return np.linspace(start, stop, n)
    return np.array([float(v) for v in text.split(",") if v.strip() != ""])


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate_rabi(args) -> int:
    cfg = _load_effective_config(args)
    durations = _parse_scan(args.durations)
    data, meta = pipeline.simulate_rabi_scan(
        cfg,
        durations,
        pulse_at=args.pulse_at,
        shots_per_point=args.shots,
    )
    text = pipeline.format_dataset(
        ("duration_us", "signal", "sigma"),
        (data.tau_us, data.signal, data.sigma),
        meta,
        cfg,
        cfg.seed,
    )
    _write(args.output, text)
    return EXIT_OK


def cmd_simulate_echo(args) -> int:
    cfg = _load_effective_config(args)
    taus = _parse_scan(args.tau)
    data, meta = pipeline.simulate_echo_scan(
        cfg,
        taus,
        ideal_pulses=not args.finite_pulses,
        shots_per_point=args.shots,
    )
    text = pipeline.format_dataset(
        ("tau_us", "signal", "sigma"),
        (data.tau_us, data.signal, data.sigma),
        meta,
        cfg,
        cfg.seed,
    )
    _write(args.output, text)
    return EXIT_OK


def cmd_simulate_image(args) -> int:
    cfg = _load_effective_config(args)
    grid = ScanGrid(
        x_range_um=(args.x_min, args.x_max),
        y_range_um=(args.y_min, args.y_max),
        step_um=args.step,
        dwell_ms=args.dwell_ms,
        plane=args.plane,
    )
    emitters = None
    if args.emitters:
        from .imaging import Emitter, EmitterSet

        ems = []
        for part in args.emitters.split(";"):
            vals = [float(v) for v in part.split(",")]
            if len(vals) == 2:
                vals.append(cfg.beam.peak_counts_stationary_cps)
            ems.append(Emitter((vals[0], vals[1], 0.0), vals[2]))
        emitters = EmitterSet(tuple(ems))
    image, summaries = pipeline.simulate_image(
        cfg, grid, emitters=emitters, stationary=args.stationary
    )
    _write(args.output, pipeline.format_image(image, cfg, cfg.seed, csv=args.format == "csv"))
    for i, s in enumerate(summaries):
        if "error" in s:
            print(f"# spot {i}: centre ({s['center_x_um']:.3f}, {s['center_y_um']:.3f}) um, "
                  f"fit failed: {s['error']}", file=sys.stderr)
        else:
            print(
                f"# spot {i}: centre ({s['center_x_um']:.3f}, {s['center_y_um']:.3f}) um, "
                f"sigma_radial {s['sigma_radial_um']:.4f} um, "
                f"sigma_azimuthal {s['sigma_azimuthal_um']:.4f} um",
                file=sys.stderr,
            )
    return EXIT_OK


def cmd_simulate_readout(args) -> int:
    cfg = _load_effective_config(args)
    initial = (
        photophysics.LevelPopulations.ms1()
        if args.initial == "ms1"
        else photophysics.LevelPopulations.ms0()
    )
    trace = photophysics.simulate_readout(
        initial,
        cfg.geometry,
        cfg.beam,
        cfg.rates,
        t_pulse_us=cfg.strobe.t_pulse_us,
        turn_on_offset_us=cfg.protocol.turn_on_offset_us,
        shots=args.shots,
        seed=cfg.seed,
        bin_width_us=cfg.protocol.bin_width_us,
    )
    meta = {"kind": "readout-trace", "initial": args.initial, "shots": trace.shots}
    text = pipeline.format_dataset(
        ("bin_start_us", "counts"),
        (trace.bin_starts_us, trace.counts.astype(float)),
        meta,
        cfg,
        cfg.seed,
    )
    _write(args.output, text)
    return EXIT_OK


def cmd_compile_seq(args) -> int:
    cfg = _load_effective_config(args)
    if args.seq == "-":
        text = sys.stdin.read()
    else:
        with open(args.seq, "r", encoding="utf-8") as fh:
            text = fh.read()
    prog = seqlang.parse_sequence(text)
    cal = seqlang.build_calibration(
        cfg.geometry, cfg.field_cfg, cfg.protocol.base_rabi_mhz, cfg.protocol.n_cal_angles
    )
    timeline = seqlang.compile_timeline(
        prog,
        cfg.geometry,
        cal,
        t_phi_us=args.t_phi,
        allow_multi_period=args.allow_multi_period,
    )
    _write(args.output, timeline.format_records() + "\n")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_effective_config(args)
    data, _meta = pipeline.read_echo_dataset(args.dataset)
    if args.model == "echo":
        model = EchoFitModel(constants=cfg.constants, f_rot_hz=cfg.geometry.f_rot_hz)
        result = fit_echo(data, model, b_max=args.b_max, max_iter=args.max_iter)
    else:
        result = fit_rabi(data, max_iter=args.max_iter)
    _write(args.output, result.as_text() + "\n")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_dump_config(args) -> int:
    cfg = _load_effective_config(args)
    _write(args.output, cfg.dump_json() + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotornv",
        description="Simulate and fit quantum measurements of an NV qubit in a rotating diamond.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"config JSON path (or ${CONFIG_ENV_VAR})")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config value (repeatable)",
    )
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("-o", "--output", default="-", help="output path ('-' = stdout)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-rabi", parents=[common], help="Rabi duration scan")
    p.add_argument("--durations", default="0.0:1.1:40", help="us scan: start:stop:n or list")
    p.add_argument("--pulse-at", choices=("start", "half"), default="start")
    p.add_argument("--shots", type=int, default=None, help="repetitions per point")
    p.set_defaults(func=cmd_simulate_rabi)

    p = sub.add_parser("simulate-echo", parents=[common], help="spin-echo fringe scan")
    p.add_argument("--tau", default="2.0:21.0:16", help="us scan: start:stop:n or list")
    p.add_argument("--finite-pulses", action="store_true", help="use finite calibrated pulses")
    p.add_argument("--shots", type=int, default=None)
    p.set_defaults(func=cmd_simulate_echo)

    p = sub.add_parser("simulate-image", parents=[common], help="strobed confocal raster")
    p.add_argument("--x-min", type=float, default=6.0)
    p.add_argument("--x-max", type=float, default=14.0)
    p.add_argument("--y-min", type=float, default=-4.0)
    p.add_argument("--y-max", type=float, default=4.0)
    p.add_argument("--step", type=float, default=0.15)
    p.add_argument("--dwell-ms", type=float, default=200.0)
    p.add_argument("--stationary", action="store_true")
    p.add_argument("--plane", choices=("xy", "xz"), default="xy",
                   help="lateral scan or qualitative depth slice")
    p.add_argument("--format", choices=("grid", "csv"), default="grid")
    p.add_argument("--emitters", help="x,y[,cps];x,y[,cps] (default: configured pair)")
    p.set_defaults(func=cmd_simulate_image)

    p = sub.add_parser("simulate-readout", parents=[common], help="single transit trace")
    p.add_argument("--initial", choices=("ms0", "ms1"), default="ms0")
    p.add_argument("--shots", type=int, default=200_000)
    p.set_defaults(func=cmd_simulate_readout)

    p = sub.add_parser("compile-seq", parents=[common], help="compile a sequence file")
    p.add_argument("seq", help="sequence file path ('-' = stdin)")
    p.add_argument("--t-phi", type=float, default=0.0, help="trigger-to-strobe delay, us")
    p.add_argument("--allow-multi-period", action="store_true")
    p.set_defaults(func=cmd_compile_seq)

    p = sub.add_parser("fit", parents=[common], help="fit a dataset file")
    p.add_argument("dataset", help="columnar dataset path")
    p.add_argument("--model", choices=("echo", "rabi"), default="echo")
    p.add_argument("--b-max", type=float, default=0.5, help="fringe amplitude search bound, G")
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dump-config", parents=[common], help="print the effective config")
    p.set_defaults(func=cmd_dump_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, SequenceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
