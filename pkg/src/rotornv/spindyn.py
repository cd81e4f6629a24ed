"""Coherent two-level spin dynamics for the rotating NV qubit.

The qubit is the m_S = 0 <-> m_S = -1 pair, represented by a Bloch vector
with +z = m_S = 0 (bright) and -z = m_S = -1 (dark).  Microwave pulses are
rotations about a tilted axis set by the drive amplitude, phase and
detuning; free evolution is precession about z at the instantaneous
detuning.  With the microwave tuned to the rotation-averaged transition,
the free detuning is gamma_e times the AC field of :func:`geometry.effective_field`
plus an optional constant hook for externally injected shifts.

Frequencies are linear (MHz), times are microseconds, so a resonant pulse
of duration 1/(2 Omega) is a pi rotation.  All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ValidationError
from .geometry import TWO_PI, PhysicalConstants
from .seqlang import PulseTimeline, validate_timeline


@dataclass(frozen=True, eq=False)
class SpinState:
    """Bloch vector of the m_S = 0 / -1 pseudo-spin; pure states have |bloch| = 1."""

    bloch: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.bloch, dtype=float)
        if vec.shape != (3,):
            raise ValidationError("bloch must be a 3-vector")
        if np.linalg.norm(vec) > 1.0 + 1e-9:
            raise ValidationError("bloch vector norm exceeds 1")
        object.__setattr__(self, "bloch", vec)

    @classmethod
    def ms0(cls) -> "SpinState":
        return cls(np.array([0.0, 0.0, 1.0]))

    @classmethod
    def ms1(cls) -> "SpinState":
        return cls(np.array([0.0, 0.0, -1.0]))

    @property
    def population_ms0(self) -> float:
        return 0.5 * (1.0 + self.bloch[2])

    @property
    def population_ms1(self) -> float:
        return 0.5 * (1.0 - self.bloch[2])


@dataclass(frozen=True)
class PulseSpec:
    """Constant-amplitude rectangular microwave pulse in the rotating frame."""

    start_us: float = 0.0
    duration_us: float = 0.0
    rabi_freq_mhz: float = 0.0
    detuning_mhz: float = 0.0
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.duration_us < 0:
            raise ValidationError("duration_us must be non-negative")
        if self.rabi_freq_mhz < 0:
            raise ValidationError("rabi_freq_mhz must be non-negative")


@dataclass(frozen=True)
class EchoParams:
    """Everything the closed-form echo fringe model needs.

    ``b_perp_gauss`` is the AC-field amplitude B0 sin(theta_nv) sin(theta_b);
    ``b0_gauss`` is the full bias magnitude, which only enters through the
    nuclear-bath revival time.  ``collapse_width_frac`` and
    ``collapse_floor`` shape the phenomenological collapse between revivals.
    """

    b_perp_gauss: float = 0.088
    phi0_rad: float = 0.0
    f_rot_hz: float = 3333.33
    t2_us: float = 350.0
    contrast: float = 1.0
    envelope_exponent: float = 4.0
    b0_gauss: float = 6.2
    collapse_width_frac: float = 0.1
    collapse_floor: float = 0.02

    def __post_init__(self):
        if self.b_perp_gauss < 0:
            raise ValidationError("b_perp_gauss must be non-negative")
        if not self.t2_us > 0:
            raise ValidationError("t2_us must be positive")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValidationError("contrast must lie in [0, 1]")

    @classmethod
    def from_experiment(cls, g, f, t2_us=350.0, contrast=1.0, **kw) -> "EchoParams":
        return cls(
            b_perp_gauss=geometry.eac_amplitude(g, f),
            phi0_rad=geometry.fringe_phase_offset(g, f),
            f_rot_hz=g.f_rot_hz,
            t2_us=t2_us,
            contrast=contrast,
            b0_gauss=f.b0_gauss,
            **kw,
        )


# ---------------------------------------------------------------------------
# elementary rotations


def rabi_population(t_us, omega_mhz: float, delta_mhz: float = 0.0):
    """P(m_S = -1) after driving the bright state for ``t_us``.

    Generalised Rabi formula with linear frequencies:
    (O^2/(O^2+D^2)) sin^2(pi sqrt(O^2+D^2) t).
    """
    if omega_mhz < 0:
        raise ValidationError("omega_mhz must be non-negative")
    t = np.asarray(t_us, dtype=float)
    gen_sq = omega_mhz**2 + delta_mhz**2
    if gen_sq == 0.0:
        out = np.zeros_like(t)
    else:
        out = (omega_mhz**2 / gen_sq) * np.sin(math.pi * math.sqrt(gen_sq) * t) ** 2
    return float(out) if np.isscalar(t_us) else out


def rotate_bloch(vec: np.ndarray, axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Right-handed Rodrigues rotation of ``vec`` about unit ``axis``."""
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return c * vec + s * np.cross(axis, vec) + (1.0 - c) * np.dot(axis, vec) * axis


def apply_pulse(state: SpinState, pulse: PulseSpec) -> SpinState:
    """Exact constant-(Omega, Delta) two-level rotation of the Bloch vector."""
    gen = math.hypot(pulse.rabi_freq_mhz, pulse.detuning_mhz)
    if gen == 0.0 or pulse.duration_us == 0.0:
        return SpinState(state.bloch.copy())
    axis = (
        np.array(
            [
                pulse.rabi_freq_mhz * math.cos(pulse.phase_rad),
                pulse.rabi_freq_mhz * math.sin(pulse.phase_rad),
                pulse.detuning_mhz,
            ]
        )
        / gen
    )
    return SpinState(rotate_bloch(state.bloch, axis, TWO_PI * gen * pulse.duration_us))


def apply_ideal_rotation(state: SpinState, angle_rad: float, phase_rad: float = 0.0) -> SpinState:
    """Instantaneous rotation by ``angle_rad`` about the in-plane axis at ``phase_rad``."""
    axis = np.array([math.cos(phase_rad), math.sin(phase_rad), 0.0])
    return SpinState(rotate_bloch(state.bloch, axis, angle_rad))


# ---------------------------------------------------------------------------
# echo closed forms


def echo_phase(p: EchoParams, c: PhysicalConstants, tau_us):
    """Phase difference between the two free halves of a tau spin echo, in rad.

    Closed form of the echo-weighted integral of the AC field, first half
    counting positive:

        phi(tau) = (2 pi gamma_e b_perp / w) [2 sin(w tau/2 + phi0)
                                              - sin(phi0) - sin(w tau + phi0)]

    with w = 2 pi f_rot in rad/us.
    """
    tau = np.asarray(tau_us, dtype=float)
    if np.any(tau < 0):
        raise ValidationError("tau_us must be non-negative")
    w = TWO_PI * p.f_rot_hz * 1e-6  # rad/us
    pref = TWO_PI * c.gamma_e_mhz_per_g * p.b_perp_gauss / w
    out = pref * (
        2.0 * np.sin(w * tau / 2.0 + p.phi0_rad)
        - math.sin(p.phi0_rad)
        - np.sin(w * tau + p.phi0_rad)
    )
    return float(out) if np.isscalar(tau_us) else out


def c13_revival_time_us(b0_gauss: float, c: PhysicalConstants) -> float:
    """First nuclear-bath contrast revival, 2 / (gamma_13C * B0), in us."""
    if b0_gauss <= 0:
        raise ValidationError("b0_gauss must be positive")
    return 2e3 / (c.gamma_c13_khz_per_g * b0_gauss)


def c13_envelope(p: EchoParams, c: PhysicalConstants, tau_us):
    """Phenomenological collapse-revival envelope of the echo contrast.

    Unity at tau = 0, Gaussian collapse dips centred between revivals
    (odd multiples of tau_R / 2), full revivals at integer multiples of
    tau_R = 2/(gamma_13C B0), all damped by exp[-(tau/T2)^p].  Only the
    revival position and the T2 damping are treated as quantitative; the
    dip shape is a modelling choice.
    """
    tau = np.asarray(tau_us, dtype=float)
    if np.any(tau < 0):
        raise ValidationError("tau_us must be non-negative")
    tau_r = c13_revival_time_us(p.b0_gauss, c)
    width = p.collapse_width_frac * tau_r
    half = tau_r / 2.0
    m_max = int(np.ceil(float(np.max(tau, initial=0.0)) / half)) + 3
    dips = np.zeros_like(tau)
    for m in range(-m_max, m_max + 1):
        if m % 2 == 0:
            continue  # dips sit at odd multiples of tau_r/2 only
        dips += np.exp(-((tau - m * half) ** 2) / (2.0 * width**2))
    comb = 1.0 - (1.0 - p.collapse_floor) * np.clip(dips, 0.0, 1.0)
    damp = np.exp(-((tau / p.t2_us) ** p.envelope_exponent))
    out = comb * damp
    return float(out) if np.isscalar(tau_us) else out


def echo_signal(p: EchoParams, c: PhysicalConstants, tau_us):
    """Echo readout probability 1/2 + (contrast/2) envelope(tau) cos(phi(tau))."""
    out = 0.5 + 0.5 * p.contrast * c13_envelope(p, c, tau_us) * np.cos(
        echo_phase(p, c, tau_us)
    )
    return float(out) if np.isscalar(tau_us) else out


# ---------------------------------------------------------------------------
# timeline simulation


def free_phase(
    g: geometry.RotorGeometry,
    f: geometry.FieldConfig,
    c: PhysicalConstants,
    t0_us: float,
    t1_us: float,
    extra_detuning_mhz: float = 0.0,
) -> float:
    """Precession angle 2 pi * integral of the detuning over [t0, t1] us.

    The AC part integrates in closed form; ``extra_detuning_mhz`` is the
    constant hook (deliberate offsets, rotation-induced shifts injected by
    the caller).
    """
    w = TWO_PI * g.f_rot_hz * 1e-6
    phi0 = geometry.fringe_phase_offset(g, f)
    b_perp = geometry.eac_amplitude(g, f)
    integral_g_us = b_perp * (math.sin(w * t1_us + phi0) - math.sin(w * t0_us + phi0)) / w
    return TWO_PI * (
        c.gamma_e_mhz_per_g * integral_g_us + extra_detuning_mhz * (t1_us - t0_us)
    )


def _free_evolve(state, g, f, c, t0_us, t1_us, extra):
    if t1_us == t0_us:
        return state
    ang = free_phase(g, f, c, t0_us, t1_us, extra)
    return SpinState(rotate_bloch(state.bloch, np.array([0.0, 0.0, 1.0]), ang))


def simulate_sequence(
    timeline: PulseTimeline,
    g: geometry.RotorGeometry,
    f: geometry.FieldConfig,
    c: PhysicalConstants,
    initial: SpinState | None = None,
    extra_detuning_mhz: float = 0.0,
) -> list[tuple[float, SpinState]]:
    """Evolve a spin through a compiled timeline; returns (time, state) at boundaries.

    Free precession between events uses the exact closed-form integral of
    the time-dependent Zeeman projection (relative to the rotation-averaged
    microwave frequency).  Microwave events apply the constant-Omega
    rotation with Omega from the event payload and the detuning evaluated
    at the pulse centre; zero-duration target events apply the exact target
    rotation (the perfectly calibrated limit).  Laser events are recorded
    as boundaries but do not alter the coherent state; optical dynamics are
    handled by the photophysics layer.
    """
    validate_timeline(timeline)
    events = sorted(timeline.events, key=lambda e: (e.start_us, e.channel))

    # laser boundaries may not fall strictly inside a microwave pulse
    for lz in (e for e in events if e.channel == "laser"):
        for mw in (e for e in events if e.channel == "mw" and e.duration_us > 0):
            for t in (lz.start_us, lz.end_us):
                if mw.start_us < t < mw.end_us:
                    raise ValidationError(
                        f"laser boundary of {lz.describe()} falls inside {mw.describe()}"
                    )

    state = initial if initial is not None else SpinState.ms0()
    t = 0.0
    traj: list[tuple[float, SpinState]] = [(0.0, state)]
    for ev in events:
        if ev.start_us < t - 1e-12:
            raise ValidationError(
                f"event {ev.describe()} starts before the running time {t:.6f} us"
            )
        state = _free_evolve(state, g, f, c, t, ev.start_us, extra_detuning_mhz)
        t = ev.start_us
        traj.append((t, state))
        if ev.channel == "mw":
            payload = ev.payload
            if payload is None:
                raise ValidationError(f"mw event {ev.describe()} has no payload")
            if ev.duration_us == 0.0:
                fraction = payload.rotation_fraction
                if fraction is not None:
                    # zero-duration target events are perfectly calibrated rotations;
                    # a zero-length explicit pulse is just the identity
                    state = apply_ideal_rotation(state, TWO_PI * fraction, payload.phase_rad)
            else:
                t_mid = ev.start_us + ev.duration_us / 2.0
                delta = (
                    c.gamma_e_mhz_per_g * geometry.effective_field(g, f, t_mid * 1e-6)
                    + extra_detuning_mhz
                )
                state = apply_pulse(
                    state,
                    PulseSpec(
                        start_us=ev.start_us,
                        duration_us=ev.duration_us,
                        rabi_freq_mhz=payload.rabi_freq_mhz,
                        detuning_mhz=delta,
                        phase_rad=payload.phase_rad,
                    ),
                )
            t = ev.end_us
            traj.append((t, state))
        else:
            # laser: advance through the window with free evolution only
            state = _free_evolve(state, g, f, c, t, ev.end_us, extra_detuning_mhz)
            t = ev.end_us
            traj.append((t, state))
    return traj
