"""End-to-end measurement pipelines: sequence -> spin -> readout -> contrast.

Each scan point runs the coherent sequence simulation, converts the final
spin state into expected early-window photon counts through the transit
readout model, Poisson-samples signal and reference windows, and records
the normalised ratio with its shot-noise standard error.  The reference
window is collected one revolution later with the NV repumped to the
bright state, matching the experimental normalisation, so signal and
reference are statistically independent.

Expected window counts are linear in the initial populations (the rate
equations are linear), so the bright/dark responses are integrated once
per configuration and mixed per point.

Echo scans apply the nuclear-bath collapse-revival envelope to the
coherent fringe; by default pulses are the zero-duration calibrated
rotations (per-angle pulse calibration is assumed to achieve its target),
with ``ideal_pulses=False`` switching to finite calibrated rectangles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import photophysics, seqlang, spindyn
from .config import ExperimentConfig
from .errors import ValidationError
from .estimation import EchoDataset
from .imaging import EmitterSet, ScanGrid, StrobedImage, fit_spot_width, render_image


@dataclass(frozen=True)
class WindowResponse:
    """Expected early-window counts per shot for bright/dark initial spin."""

    n_bright: float
    n_dark: float

    @property
    def contrast(self) -> float:
        return 1.0 - self.n_dark / self.n_bright

    def expected(self, p_ms1) -> np.ndarray:
        p = np.asarray(p_ms1, dtype=float)
        return (1.0 - p) * self.n_bright + p * self.n_dark


def window_response(cfg: ExperimentConfig) -> WindowResponse:
    """Integrate the transit readout once per spin basis state."""
    pro = cfg.protocol
    n = {}
    for name, initial in (
        ("bright", photophysics.LevelPopulations.ms0()),
        ("dark", photophysics.LevelPopulations.ms1()),
    ):
        n[name] = photophysics.expected_window_counts(
            cfg.geometry,
            cfg.beam,
            cfg.rates,
            cfg.strobe.t_pulse_us,
            pro.turn_on_offset_us,
            pro.readout_window_us,
            initial,
        )
    if n["bright"] <= 0:
        raise ValidationError("readout window collects no light; check beam/rates")
    return WindowResponse(n_bright=n["bright"], n_dark=n["dark"])


def sample_ratio(
    p_ms1: float, resp: WindowResponse, shots: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Poisson-sample signal and reference windows; return (ratio, sigma)."""
    s = int(rng.poisson(resp.expected(p_ms1) * shots))
    r = int(rng.poisson(resp.n_bright * shots))
    s_eff, r_eff = max(s, 1), max(r, 1)
    ratio = s_eff / r_eff
    sigma = ratio * math.sqrt(1.0 / s_eff + 1.0 / r_eff)
    return ratio, sigma


# ---------------------------------------------------------------------------
# echo scan


def echo_population(
    cfg: ExperimentConfig, tau_us: float, ideal_pulses: bool = True
) -> float:
    """P(m_S = -1) at readout after a tau echo, bath envelope applied."""
    g, f, c = cfg.geometry, cfg.field_cfg, cfg.constants
    if tau_us >= g.t_rot_us:
        raise ValidationError(
            f"tau_us = {tau_us} not below the rotation period {g.t_rot_us:.4f} us: "
            "readout would precede sequence end"
        )
    if ideal_pulses:
        timeline = seqlang.ideal_echo_timeline(tau_us, g.t_rot_us, cfg.strobe.t_pulse_us)
    else:
        cal = seqlang.build_calibration(g, f, cfg.protocol.base_rabi_mhz, cfg.protocol.n_cal_angles)
        prog = seqlang.parse_sequence(
            seqlang.echo_program(tau_us, g, cal, cfg.strobe.t_pulse_us)
        )
        timeline = seqlang.compile_timeline(prog, g, cal)
    traj = spindyn.simulate_sequence(timeline, g, f, c)
    z = traj[-1][1].bloch[2]
    env = spindyn.c13_envelope(echo_params_from_config(cfg), c, tau_us)
    return 0.5 * (1.0 - z * env)


def echo_params_from_config(cfg: ExperimentConfig) -> spindyn.EchoParams:
    return spindyn.EchoParams.from_experiment(
        cfg.geometry,
        cfg.field_cfg,
        t2_us=cfg.protocol.t2_us,
        envelope_exponent=cfg.protocol.envelope_exponent,
    )


def simulate_echo_scan(
    cfg: ExperimentConfig,
    tau_list,
    ideal_pulses: bool = True,
    shots_per_point: int | None = None,
    seed: int | None = None,
) -> tuple[EchoDataset, dict]:
    """Echo fringe dataset (tau_us, signal, sigma) with Poisson error bars."""
    tau = np.asarray(sorted(float(t) for t in tau_list), dtype=float)
    if tau.size == 0:
        raise ValidationError("tau_list is empty")
    shots = shots_per_point if shots_per_point is not None else cfg.protocol.shots_per_point
    seed = cfg.seed if seed is None else seed
    resp = window_response(cfg)
    signal = np.empty(tau.size)
    sigma = np.empty(tau.size)
    for i, t in enumerate(tau):
        p1 = echo_population(cfg, t, ideal_pulses=ideal_pulses)
        rng = np.random.default_rng([seed, 17, i])
        signal[i], sigma[i] = sample_ratio(p1, resp, shots, rng)
    meta = {
        "kind": "echo-scan",
        "shots_per_point": shots,
        "ideal_pulses": ideal_pulses,
        "window_contrast": resp.contrast,
        "n_bright_per_shot": resp.n_bright,
    }
    return EchoDataset(tau, signal, sigma), meta


# ---------------------------------------------------------------------------
# Rabi scan


def rabi_population_pipeline(
    cfg: ExperimentConfig,
    duration_us: float,
    pulse_at: str = "start",
) -> float:
    """P(m_S = -1) after a single variable pulse at t = 0 or t = T_rot/2."""
    g, f, c = cfg.geometry, cfg.field_cfg, cfg.constants
    cal = seqlang.build_calibration(g, f, cfg.protocol.base_rabi_mhz, cfg.protocol.n_cal_angles)
    if pulse_at == "start":
        text = seqlang.rabi_program(duration_us, g, cfg.strobe.t_pulse_us, pulse_at_us=0.0)
    elif pulse_at == "half":
        text = seqlang.rabi_program(
            duration_us,
            g,
            cfg.strobe.t_pulse_us,
            pulse_at_us=g.t_rot_us / 2.0,
            prepend_pi=True,
        )
    else:
        raise ValidationError("pulse_at must be 'start' or 'half'")
    prog = seqlang.parse_sequence(text)
    timeline = seqlang.compile_timeline(prog, g, cal)
    traj = spindyn.simulate_sequence(timeline, g, f, c)
    return traj[-1][1].population_ms1


def simulate_rabi_scan(
    cfg: ExperimentConfig,
    durations_us,
    pulse_at: str = "start",
    shots_per_point: int | None = None,
    seed: int | None = None,
) -> tuple[EchoDataset, dict]:
    """Rabi dataset (duration_us, signal, sigma) through the full pipeline."""
    durations = np.asarray(sorted(float(d) for d in durations_us), dtype=float)
    if durations.size == 0:
        raise ValidationError("durations_us is empty")
    shots = shots_per_point if shots_per_point is not None else cfg.protocol.shots_per_point
    seed = cfg.seed if seed is None else seed
    resp = window_response(cfg)
    signal = np.empty(durations.size)
    sigma = np.empty(durations.size)
    for i, d in enumerate(durations):
        p1 = rabi_population_pipeline(cfg, d, pulse_at=pulse_at)
        rng = np.random.default_rng([seed, 29, i])
        signal[i], sigma[i] = sample_ratio(p1, resp, shots, rng)
    meta = {
        "kind": "rabi-scan",
        "pulse_at": pulse_at,
        "shots_per_point": shots,
        "window_contrast": resp.contrast,
    }
    return EchoDataset(durations, signal, sigma), meta


# ---------------------------------------------------------------------------
# imaging


def default_emitters(cfg: ExperimentConfig, separation_um: float = 3.6) -> EmitterSet:
    """Two emitters on the configured orbit, a chord ``separation_um`` apart."""
    r = cfg.geometry.r_nv_um
    if r <= 0:
        return EmitterSet.single(0.0, 0.0, cfg.beam.peak_counts_stationary_cps)
    dphi = 2.0 * math.asin(min(separation_um / (2.0 * r), 1.0))
    b = cfg.beam.peak_counts_stationary_cps
    from .imaging import Emitter

    return EmitterSet(
        (
            Emitter((r, 0.0, 0.0), b),
            Emitter((r * math.cos(dphi), r * math.sin(dphi), 0.0), b),
        )
    )


def strobed_center_um(
    cfg: ExperimentConfig, emitter_position_um, t_phi_us: float | None = None
) -> tuple[float, float]:
    """Where an emitter appears in a strobed image (trigger position rotated by t_phi)."""
    t_phi = cfg.strobe.t_phi_us if t_phi_us is None else t_phi_us
    ang = 2.0 * math.pi * cfg.geometry.f_rot_hz * t_phi * 1e-6
    x, y = emitter_position_um[0], emitter_position_um[1]
    return (
        x * math.cos(ang) - y * math.sin(ang),
        x * math.sin(ang) + y * math.cos(ang),
    )


def simulate_image(
    cfg: ExperimentConfig,
    grid: ScanGrid,
    emitters: EmitterSet | None = None,
    stationary: bool = False,
    seed: int | None = None,
) -> tuple[StrobedImage, list[dict]]:
    """Render a strobed image and fit the width of every emitter's spot."""
    emitters = emitters if emitters is not None else default_emitters(cfg)
    seed = cfg.seed if seed is None else seed
    image = render_image(
        grid,
        emitters,
        cfg.geometry,
        cfg.strobe,
        seed=seed,
        stationary=stationary,
        max_pixels=cfg.protocol.max_image_pixels,
    )
    summaries = []
    for e in emitters.emitters:
        center = (
            (e.position_um[0], e.position_um[1])
            if stationary
            else strobed_center_um(cfg, e.position_um)
        )
        entry = {"center_x_um": center[0], "center_y_um": center[1]}
        try:
            sr, sa = fit_spot_width(image, center)
            entry.update(sigma_radial_um=sr, sigma_azimuthal_um=sa)
        except Exception as exc:  # keep the image even if one spot fit fails
            entry.update(error=str(exc))
        summaries.append(entry)
    return image, summaries


# ---------------------------------------------------------------------------
# dataset / image file formats


def format_dataset(
    names: tuple[str, ...], columns, meta: dict, cfg: ExperimentConfig, seed: int
) -> str:
    lines = ["# rotornv-dataset v1"]
    for key in sorted(meta):
        lines.append(f"# {key}: {meta[key]}")
    lines.append(f"# config_sha256: {cfg.sha256()}")
    lines.append(f"# seed: {seed}")
    lines.append("# columns: " + " ".join(names))
    cols = [np.asarray(c) for c in columns]
    for row in zip(*cols):
        lines.append(" ".join(f"{v:.9g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> tuple[list[str], np.ndarray, dict]:
    """Parse a columnar dataset; malformed rows are reported with line numbers."""
    names: list[str] = []
    meta: dict = {}
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("columns:"):
                names = body.split(":", 1)[1].split()
            elif ":" in body:
                key, _, val = body.partition(":")
                meta[key.strip()] = val.strip()
            continue
        parts = line.split()
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: malformed data row {line!r}") from exc
        if names and len(parts) != len(names):
            raise ValidationError(
                f"line {lineno}: expected {len(names)} columns, got {len(parts)}"
            )
    if not rows:
        raise ValidationError("dataset contains no data rows")
    return names, np.asarray(rows, dtype=float), meta


def read_echo_dataset(path: str) -> tuple[EchoDataset, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        names, rows, meta = parse_dataset(fh.read())
    if rows.shape[1] < 3:
        raise ValidationError(f"{path}: expected 3 columns (tau/duration, signal, sigma)")
    order = np.argsort(rows[:, 0])
    rows = rows[order]
    return EchoDataset(rows[:, 0], rows[:, 1], rows[:, 2]), meta


def format_image(
    image: StrobedImage, cfg: ExperimentConfig, seed: int, csv: bool = False
) -> str:
    sep = "," if csv else " "
    lines = ["# rotornv-image v1"]
    lines.append(f"# x_min_um: {image.x_um[0]:.9g}")
    lines.append(f"# x_max_um: {image.x_um[-1]:.9g}")
    lines.append(f"# y_min_um: {image.y_um[0]:.9g}")
    lines.append(f"# y_max_um: {image.y_um[-1]:.9g}")
    lines.append(f"# step_um: {image.x_um[1] - image.x_um[0]:.9g}" if image.x_um.size > 1 else "# step_um: 0")
    lines.append(f"# plane: {image.meta.get('plane', 'xy')}")
    lines.append(f"# t_phi_us: {image.meta.get('t_phi_us', 0.0):.9g}")
    lines.append(f"# t_pulse_us: {image.meta.get('t_pulse_us', 0.0):.9g}")
    lines.append(f"# duty_cycle: {image.duty_cycle:.9g}")
    lines.append(f"# stationary: {image.meta.get('stationary', False)}")
    lines.append(f"# config_sha256: {cfg.sha256()}")
    lines.append(f"# seed: {seed}")
    lines.append("# rows: y ascending; columns: x ascending; integer counts")
    for row in image.counts:
        lines.append(sep.join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"
