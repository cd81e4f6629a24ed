"""Textual pulse-sequence language and its compiler to rotation-locked timelines.

The language is deliberately small and line-based: sequences in this
experiment are short and fixed-shape, and good diagnostics beat
expressiveness.  One statement per line (or several separated by ``;``),
``#`` starts a comment.  Times are anchored to the rotation trigger edge,
which is the implicit t = 0 of every program; an explicit ``trigger``
statement may appear at most once.

Statements::

    param tau = 60 us          # named quantity (units: ns, us, MHz, deg)
    trigger                    # optional, marks the single anchor
    mw pi at 0us               # target-angle pulse, duration from calibration
    mw pi/2 at tau phase 90deg
    mw 0.25us at 5us           # explicit-duration pulse
    wait 150us                 # advance the cursor
    laser 2us at 300us

A statement without ``at`` is placed at the running cursor; ``at`` times and
durations may reference a previously defined ``param``.  Parsing either
returns a complete program or raises with the full diagnostic list (line and
column positions); partial programs are never produced.

Compilation resolves ``pi``/``pi/2`` targets to durations 1/(2 Omega) and
1/(4 Omega) using a per-angle Rabi calibration table, shifts every event by
the trigger-to-strobe delay ``t_phi`` and validates channel-wise
non-overlap.  Event times are plain floats in microseconds; compilation is a
fixed arithmetic path, so identical inputs produce identical timelines.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import geometry
from .errors import CompileError, Diagnostic, ParseError, ValidationError

TIME_UNITS = {"ns": 1e-3, "us": 1.0}  # to microseconds
ALL_UNITS = ("ns", "us", "MHz", "deg")

_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")


# ---------------------------------------------------------------------------
# program representation


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: str

    def __str__(self) -> str:
        return f"{self.value!r}{self.unit}"

    @property
    def is_time(self) -> bool:
        return self.unit in TIME_UNITS

    def to_us(self) -> float:
        if not self.is_time:
            raise ValidationError(f"quantity {self} is not a time")
        return self.value * TIME_UNITS[self.unit]

    def to_rad(self) -> float:
        if self.unit != "deg":
            raise ValidationError(f"quantity {self} is not an angle")
        return math.radians(self.value)


# A duration/time slot holds either a literal Quantity or a param name.
Operand = Union[Quantity, str]


@dataclass(frozen=True)
class TriggerStmt:
    def __str__(self) -> str:
        return "trigger"


@dataclass(frozen=True)
class WaitStmt:
    duration: Operand

    def __str__(self) -> str:
        return f"wait {self.duration}"


@dataclass(frozen=True)
class LaserStmt:
    duration: Operand
    at: Optional[Operand] = None

    def __str__(self) -> str:
        s = f"laser {self.duration}"
        if self.at is not None:
            s += f" at {self.at}"
        return s


@dataclass(frozen=True)
class MwStmt:
    target: Optional[str] = None  # "pi" | "pi/2"
    duration: Optional[Operand] = None
    phase: Optional[Operand] = None
    at: Optional[Operand] = None

    def __str__(self) -> str:
        s = f"mw {self.target if self.target else self.duration}"
        if self.phase is not None:
            s += f" phase {self.phase}"
        if self.at is not None:
            s += f" at {self.at}"
        return s


Statement = Union[TriggerStmt, WaitStmt, LaserStmt, MwStmt]


@dataclass(frozen=True)
class SequenceProgram:
    params: tuple[tuple[str, Quantity], ...]
    statements: tuple[Statement, ...]

    @property
    def param_map(self) -> dict[str, Quantity]:
        return dict(self.params)

    def __str__(self) -> str:
        lines = [f"param {name} = {q.value!r} {q.unit}" for name, q in self.params]
        lines += [str(s) for s in self.statements]
        return "\n".join(lines)


def format_program(prog: SequenceProgram) -> str:
    """Canonical text form; ``parse_sequence(format_program(p)) == p``."""
    return str(prog)


# ---------------------------------------------------------------------------
# parser


class _Token:
    __slots__ = ("text", "line", "col")

    def __init__(self, text: str, line: int, col: int):
        self.text = text
        self.line = line
        self.col = col


def _tokenize_statement(seg: str, line_no: int, col0: int) -> list[_Token]:
    return [
        _Token(m.group(0), line_no, col0 + m.start() + 1)
        for m in re.finditer(r"\S+", seg)
    ]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.diags: list[Diagnostic] = []
        self.params: list[tuple[str, Quantity]] = []
        self.param_names: set[str] = set()
        self.statements: list[Statement] = []
        self.trigger_seen = False

    def error(self, msg: str, tok: Optional[_Token] = None, line=0, col=0):
        if tok is not None:
            line, col = tok.line, tok.col
        self.diags.append(Diagnostic(msg, line, col))

    # --- quantity / operand parsing

    def _take_quantity(self, toks: list[_Token], i: int, ctx: str):
        """Parse a literal quantity starting at toks[i]; returns (Quantity|None, next_i)."""
        tok = toks[i]
        m = _NUMBER_RE.match(tok.text)
        if not m:
            self.error(f"expected a number in {ctx}, got {tok.text!r}", tok)
            return None, i + 1
        num_text = m.group(0)
        rest = tok.text[len(num_text):]
        if rest == "":
            # unit may be the following token
            if i + 1 < len(toks) and toks[i + 1].text in ALL_UNITS:
                rest = toks[i + 1].text
                i += 1
            else:
                self.error(
                    f"missing unit on {num_text!r} in {ctx} (expected one of {', '.join(ALL_UNITS)})",
                    tok,
                )
                return None, i + 1
        if rest not in ALL_UNITS:
            self.error(f"unknown unit {rest!r} in {ctx}", tok)
            return None, i + 1
        q = Quantity(float(num_text), rest)
        if q.is_time and q.value < 0:
            self.error(f"negative duration {q} in {ctx}", tok)
            return None, i + 1
        return q, i + 1

    def _take_operand(self, toks: list[_Token], i: int, ctx: str, time_only=True):
        """Literal quantity or param reference."""
        tok = toks[i]
        if re.match(r"^[A-Za-z_]\w*$", tok.text) and tok.text not in ALL_UNITS:
            if tok.text not in self.param_names:
                self.error(f"unknown parameter {tok.text!r} in {ctx}", tok)
                return None, i + 1
            q = dict(self.params)[tok.text]
            if time_only and not q.is_time:
                self.error(
                    f"parameter {tok.text!r} has unit {q.unit}, expected a time, in {ctx}",
                    tok,
                )
                return None, i + 1
            return tok.text, i + 1
        q, i = self._take_quantity(toks, i, ctx)
        if q is not None and time_only and not q.is_time:
            self.error(f"expected a time in {ctx}, got unit {q.unit!r}", toks[i - 1])
            return None, i
        return q, i

    def _take_at(self, toks: list[_Token], i: int, ctx: str):
        """Optional trailing 'phase <q>' / 'at <operand>' clauses (mw only uses phase)."""
        at = None
        phase = None
        while i < len(toks):
            tok = toks[i]
            if tok.text == "at":
                if i + 1 >= len(toks):
                    self.error("'at' requires a time", tok)
                    return at, phase, len(toks)
                at, i = self._take_operand(toks, i + 1, f"'at' of {ctx}")
            elif tok.text == "phase":
                if i + 1 >= len(toks):
                    self.error("'phase' requires an angle", tok)
                    return at, phase, len(toks)
                phase, i = self._take_operand(
                    toks, i + 1, f"'phase' of {ctx}", time_only=False
                )
                if isinstance(phase, Quantity) and phase.unit != "deg":
                    self.error(f"phase must be in deg, got {phase.unit!r}", tok)
                    phase = None
                elif isinstance(phase, str):
                    q = dict(self.params)[phase]
                    if q.unit != "deg":
                        self.error(f"phase parameter {phase!r} must be in deg", tok)
                        phase = None
            else:
                self.error(f"unexpected token {tok.text!r} after {ctx}", tok)
                i += 1
        return at, phase, i

    # --- statements

    def _parse_statement(self, toks: list[_Token]):
        head = toks[0]
        kw = head.text
        if kw == "param":
            if len(toks) < 4 or toks[2].text != "=":
                self.error("param syntax is: param <name> = <value><unit>", head)
                return
            name = toks[1].text
            if not re.match(r"^[A-Za-z_]\w*$", name):
                self.error(f"invalid parameter name {name!r}", toks[1])
                return
            q, i = self._take_quantity(toks, 3, f"param {name!r}")
            if i < len(toks):
                self.error(f"unexpected token {toks[i].text!r} after param", toks[i])
            if q is None:
                return
            if name in self.param_names:
                self.error(f"duplicate parameter {name!r}", toks[1])
                return
            self.params.append((name, q))
            self.param_names.add(name)
        elif kw == "trigger":
            if len(toks) > 1:
                self.error("trigger takes no arguments", toks[1])
            if self.trigger_seen:
                self.error("duplicate trigger anchor (exactly one allowed)", head)
                return
            self.trigger_seen = True
            self.statements.append(TriggerStmt())
        elif kw == "wait":
            if len(toks) < 2:
                self.error("wait requires a duration", head)
                return
            dur, i = self._take_operand(toks, 1, "wait")
            if i < len(toks):
                self.error(f"unexpected token {toks[i].text!r} after wait", toks[i])
            if dur is not None:
                self.statements.append(WaitStmt(dur))
        elif kw == "laser":
            if len(toks) < 2:
                self.error("laser requires a duration", head)
                return
            dur, i = self._take_operand(toks, 1, "laser")
            at, phase, _ = self._take_at(toks, i, "laser")
            if phase is not None:
                self.error("laser does not take a phase", head)
            if dur is not None:
                self.statements.append(LaserStmt(dur, at))
        elif kw == "mw":
            if len(toks) < 2:
                self.error("mw requires a target angle (pi, pi/2) or a duration", head)
                return
            target = None
            dur = None
            if toks[1].text in ("pi", "pi/2"):
                target = toks[1].text
                i = 2
            else:
                dur, i = self._take_operand(toks, 1, "mw")
                if dur is None:
                    return
            at, phase, _ = self._take_at(toks, i, "mw")
            self.statements.append(MwStmt(target, dur, phase, at))
        else:
            self.error(f"unknown keyword {kw!r}", head)

    def parse(self) -> SequenceProgram:
        for line_no, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.split("#", 1)[0]
            col = 0
            for seg in line.split(";"):
                toks = _tokenize_statement(seg, line_no, col)
                col += len(seg) + 1
                if toks:
                    self._parse_statement(toks)
        if not self.statements and not self.params:
            self.error("empty program")
        if self.diags:
            raise ParseError(self.diags)
        return SequenceProgram(tuple(self.params), tuple(self.statements))


def parse_sequence(text: str) -> SequenceProgram:
    """Parse program text; raises :class:`ParseError` with all diagnostics on failure."""
    if not isinstance(text, str):
        raise ParseError([Diagnostic("input must be UTF-8 text")])
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# calibration


@dataclass(frozen=True)
class CalibrationTable:
    """Effective Rabi frequency (MHz) vs rotation angle (deg, in [0, 360)).

    Lookup interpolates linearly in Omega with periodic wraparound; the
    sampled coupling is smooth, so dense tables converge quickly.
    """

    angles_deg: tuple[float, ...]
    rabi_mhz: tuple[float, ...]

    def __post_init__(self):
        if len(self.angles_deg) != len(self.rabi_mhz) or not self.angles_deg:
            raise ValidationError("calibration table must pair angles with frequencies")
        if any(not (0.0 <= a < 360.0) for a in self.angles_deg):
            raise ValidationError("calibration angles must lie in [0, 360)")
        if any(not r > 0 for r in self.rabi_mhz):
            raise ValidationError("calibrated Rabi frequencies must be positive")

    def rabi_at(self, angle_deg: float) -> float:
        a = float(angle_deg) % 360.0
        xs = np.asarray(self.angles_deg)
        ys = np.asarray(self.rabi_mhz)
        order = np.argsort(xs)
        xs, ys = xs[order], ys[order]
        # periodic extension for wraparound interpolation
        xs_ext = np.concatenate([xs, [xs[0] + 360.0]])
        ys_ext = np.concatenate([ys, [ys[0]]])
        return float(np.interp(a, xs_ext, ys_ext))


def build_calibration(
    g: geometry.RotorGeometry,
    f: geometry.FieldConfig,
    base_rabi_mhz: float,
    n_angles: int,
) -> CalibrationTable:
    """Per-angle Rabi table: base_rabi * coupling(angle) / max coupling.

    The best-coupled sampled angle gets exactly ``base_rabi_mhz``.  A zero
    coupling anywhere means the pulse cannot be tuned at that angle and is
    reported as an error.
    """
    if n_angles < 1:
        raise ValidationError("n_angles must be >= 1")
    angles = np.arange(n_angles) * (360.0 / n_angles)
    times_s = angles / (360.0 * g.f_rot_hz)
    coupling = np.atleast_1d(geometry.mw_coupling(g, f, times_s))
    cmax = float(np.max(coupling))
    if cmax <= 0.0:
        raise ValidationError("microwave coupling vanishes at every sampled angle")
    bad = np.nonzero(coupling <= 0.0)[0]
    if bad.size:
        raise ValidationError(
            f"zero microwave coupling at rotation angle {angles[bad[0]]:.3f} deg: untunable pulse"
        )
    rabi = base_rabi_mhz * coupling / cmax
    return CalibrationTable(tuple(angles.tolist()), tuple(rabi.tolist()))


# ---------------------------------------------------------------------------
# timeline


@dataclass(frozen=True)
class MwPayload:
    rabi_freq_mhz: float
    phase_rad: float = 0.0
    target: Optional[str] = None  # "pi" | "pi/2" | None
    angle_deg: float = 0.0

    @property
    def rotation_fraction(self) -> Optional[float]:
        return {"pi": 0.5, "pi/2": 0.25}.get(self.target)


@dataclass(frozen=True)
class TimelineEvent:
    channel: str  # "laser" | "mw"
    start_us: float
    duration_us: float
    payload: Optional[MwPayload] = None

    @property
    def end_us(self) -> float:
        return self.start_us + self.duration_us

    def describe(self) -> str:
        extra = ""
        if self.payload is not None and self.payload.target:
            extra = f" ({self.payload.target})"
        return f"{self.channel}{extra} [{self.start_us:.6f}, {self.end_us:.6f}] us"


@dataclass(frozen=True)
class PulseTimeline:
    events: tuple[TimelineEvent, ...]

    def channel_events(self, channel: str) -> list[TimelineEvent]:
        return [e for e in self.events if e.channel == channel]

    def to_records(self) -> list[dict]:
        rows = []
        for e in self.events:
            row = {
                "channel": e.channel,
                "start_ns": e.start_us * 1e3,
                "duration_ns": e.duration_us * 1e3,
            }
            if e.payload is not None:
                row.update(
                    rabi_freq_mhz=e.payload.rabi_freq_mhz,
                    phase_rad=e.payload.phase_rad,
                    target=e.payload.target or "",
                    angle_deg=e.payload.angle_deg,
                )
            rows.append(row)
        return rows

    def format_records(self) -> str:
        lines = ["# channel start_ns duration_ns payload"]
        for row in self.to_records():
            payload = ""
            if "rabi_freq_mhz" in row:
                payload = (
                    f" rabi_mhz={row['rabi_freq_mhz']:.9g}"
                    f" phase_rad={row['phase_rad']:.9g}"
                    f" target={row['target'] or '-'}"
                    f" angle_deg={row['angle_deg']:.9g}"
                )
            lines.append(
                f"{row['channel']} {row['start_ns']:.9g} {row['duration_ns']:.9g}{payload}"
            )
        return "\n".join(lines)


def validate_timeline(timeline: PulseTimeline) -> None:
    """Check channel-wise strict ordering and non-overlap; raises naming both events."""
    by_channel: dict[str, list[TimelineEvent]] = {}
    for e in timeline.events:
        if e.start_us < 0 or e.duration_us < 0:
            raise ValidationError(f"event {e.describe()} has negative time")
        by_channel.setdefault(e.channel, []).append(e)
    for channel, evs in by_channel.items():
        evs = sorted(evs, key=lambda e: e.start_us)
        for a, b in zip(evs, evs[1:]):
            # zero-duration events are points; a point can still land inside a span
            if b.start_us < a.end_us - 1e-12:
                raise ValidationError(
                    f"overlapping {channel} events: {a.describe()} and {b.describe()}"
                )


def _resolve_us(operand: Operand, params: dict[str, Quantity]) -> float:
    q = params[operand] if isinstance(operand, str) else operand
    return q.to_us()


def _resolve_rad(operand: Optional[Operand], params: dict[str, Quantity]) -> float:
    if operand is None:
        return 0.0
    q = params[operand] if isinstance(operand, str) else operand
    return q.to_rad()


def compile_timeline(
    prog: SequenceProgram,
    g: geometry.RotorGeometry,
    cal: CalibrationTable,
    t_phi_us: float = 0.0,
    allow_multi_period: bool = False,
) -> PulseTimeline:
    """Compile a program against a Rabi calibration into an event timeline.

    Target-angle pulses take their duration from the calibration at the
    rotation angle of the pulse start (program time); ``t_phi_us`` then
    translates the whole timeline.  Overlap on a channel is a compile error
    that names both events.
    """
    params = prog.param_map
    cursor = 0.0
    events: list[TimelineEvent] = []
    diags: list[Diagnostic] = []

    for stmt in prog.statements:
        if isinstance(stmt, TriggerStmt):
            continue
        if isinstance(stmt, WaitStmt):
            cursor += _resolve_us(stmt.duration, params)
            continue
        start = cursor if stmt.at is None else _resolve_us(stmt.at, params)
        if isinstance(stmt, LaserStmt):
            dur = _resolve_us(stmt.duration, params)
            events.append(TimelineEvent("laser", start, dur))
        else:  # MwStmt
            angle = (360.0 * g.f_rot_hz * start * 1e-6) % 360.0
            omega = cal.rabi_at(angle)
            if omega <= 0.0:
                diags.append(
                    Diagnostic(f"zero Rabi frequency at rotation angle {angle:.3f} deg")
                )
                continue
            if stmt.target is not None:
                fraction = 0.5 if stmt.target == "pi" else 0.25
                dur = fraction / omega
            else:
                dur = _resolve_us(stmt.duration, params)
            payload = MwPayload(
                rabi_freq_mhz=omega,
                phase_rad=_resolve_rad(stmt.phase, params),
                target=stmt.target,
                angle_deg=angle,
            )
            events.append(TimelineEvent("mw", start, dur, payload))
        cursor = events[-1].end_us

    if diags:
        raise CompileError(diags)

    shifted = tuple(
        TimelineEvent(e.channel, e.start_us + t_phi_us, e.duration_us, e.payload)
        for e in sorted(events, key=lambda e: (e.start_us, e.channel))
    )
    timeline = PulseTimeline(shifted)
    try:
        validate_timeline(timeline)
    except ValidationError as exc:
        raise CompileError([Diagnostic(str(exc))]) from exc

    if not allow_multi_period:
        limit = g.t_rot_us + t_phi_us + 1e-9
        for e in shifted:
            if e.start_us > limit:
                raise CompileError(
                    [
                        Diagnostic(
                            f"event {e.describe()} starts after one rotation period "
                            f"({g.t_rot_us:.3f} us); pass allow_multi_period to permit this"
                        )
                    ]
                )
    return timeline


# ---------------------------------------------------------------------------
# canned sequences


def ideal_echo_timeline(tau_us: float, t_rot_us: float, t_pulse_us: float = 2.0) -> PulseTimeline:
    """pi/2 - tau/2 - pi - tau/2 - pi/2 with instantaneous calibrated rotations.

    Zero-duration target events: the simulator applies the exact target
    rotation, which is the calibrated-pulse model with pulse-length effects
    switched off.  The readout laser fires when the NV completes the turn.
    """
    if tau_us < 0:
        raise ValidationError("tau_us must be non-negative")
    mk = lambda t, target: TimelineEvent(
        "mw", t, 0.0, MwPayload(rabi_freq_mhz=1.0, target=target)
    )
    events = (
        mk(0.0, "pi/2"),
        mk(tau_us / 2.0, "pi"),
        mk(tau_us, "pi/2"),
        TimelineEvent("laser", t_rot_us, t_pulse_us),
    )
    return PulseTimeline(events)


def echo_program(
    tau_us: float,
    g: geometry.RotorGeometry,
    cal: CalibrationTable,
    t_pulse_us: float = 2.0,
) -> str:
    """Program text for a finite-pulse echo: pi centred at tau/2, last pi/2 ending at tau."""
    if tau_us <= 0:
        raise ValidationError("tau_us must be positive")

    def dur_at(start_us, fraction):
        angle = (360.0 * g.f_rot_hz * start_us * 1e-6) % 360.0
        return fraction / cal.rabi_at(angle)

    # durations depend weakly on the start angle; a few passes settle them
    start_pi, start_last = tau_us / 2.0, tau_us
    for _ in range(3):
        d_pi = dur_at(start_pi, 0.5)
        d_last = dur_at(start_last, 0.25)
        start_pi = tau_us / 2.0 - d_pi / 2.0
        start_last = tau_us - d_last
    if start_pi < dur_at(0.0, 0.25):
        raise ValidationError(f"tau_us={tau_us} too short to fit the echo pulses")
    return "\n".join(
        [
            "mw pi/2 at 0us",
            f"mw pi at {float(start_pi)!r}us",
            f"mw pi/2 at {float(start_last)!r}us",
            f"laser {float(t_pulse_us)!r}us at {float(g.t_rot_us)!r}us",
        ]
    )


def rabi_program(
    duration_us: float,
    g: geometry.RotorGeometry,
    t_pulse_us: float = 2.0,
    pulse_at_us: float = 0.0,
    prepend_pi: bool = False,
) -> str:
    """Program text for a Rabi scan point: one variable pulse, then strobed readout."""
    lines = []
    if prepend_pi:
        lines.append("mw pi at 0us")
    lines.append(f"mw {float(duration_us)!r}us at {float(pulse_at_us)!r}us")
    lines.append(f"laser {float(t_pulse_us)!r}us at {float(g.t_rot_us)!r}us")
    return "\n".join(lines)
