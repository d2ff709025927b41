"""Persistence: trace/peak CSV formats, oscilloscope ingestion, manifests.

All writers are deterministic (same value, same bytes) and all readers
reject rather than coerce; NaN or infinite values never enter silently.
Traces are stored with 13 significant digits so peaks survive the
roundtrip well inside the tolerances used by the acceptance suite, and
peak values use shortest-roundtrip formatting (bit-exact roundtrip).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acquisition import Trace
from .attacks import (
    DEFAULT_CMOS,
    DEFAULT_DT,
    DEFAULT_ENCRYPTIONS_PER_TRACE,
    DEFAULT_N_TRACES,
    DEFAULT_SIKE_ITERATIONS,
    DEFAULT_SPIKE,
    DEFAULT_THERMAL,
    AttackEnv,
)
from .microbench import ConstLoop, HdLoop, HwtLoop, MicrobenchSpec
from .power import CmosParams, ThermalParams
from .spike import PeakSample, SpikeParams

TRACE_HEADER = "time_s,voltage_v"
PEAKS_HEADER = "run_id,label,peak_v"

# strict readers allow 1 ppm timestamp jitter; oscilloscope dumps get 0.1%
UNIFORM_REL_TOL = 1e-6
SCOPE_REL_TOL = 1e-3


class TraceParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line


class ManifestError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def write_trace(trace: Trace, destination) -> None:
    lines = [TRACE_HEADER]
    dt = trace.dt_s
    for i, v in enumerate(trace.samples):
        lines.append(f"{_fmt(i * dt)},{_fmt(v)}")
    Path(destination).write_text("\n".join(lines) + "\n", newline="\n")


def _parse_float(cell: str, what: str, line: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise TraceParseError(f"non-numeric {what}: {cell!r}", line) from None
    if not math.isfinite(value):
        raise TraceParseError(f"non-finite {what}: {cell!r}", line)
    return value


def _check_uniform(times: list[float], rel_tol: float, first_data_line: int) -> float:
    if len(times) < 2:
        raise TraceParseError("need at least 2 samples to reconstruct dt")
    dt0 = times[1] - times[0]
    if dt0 <= 0:
        raise TraceParseError("non-monotone time", first_data_line + 1)
    for i in range(1, len(times) - 1):
        step = times[i + 1] - times[i]
        if step <= 0:
            raise TraceParseError("non-monotone time", first_data_line + i + 1)
        if abs(step - dt0) > rel_tol * dt0:
            raise TraceParseError("non-uniform sampling", first_data_line + i)
    return dt0


def read_trace(source) -> Trace:
    """Strict reader for the trace CSV format written by :func:`write_trace`."""
    raw = Path(source).read_text()
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != TRACE_HEADER:
        raise TraceParseError(f"malformed header, expected {TRACE_HEADER!r}", 1)

    times: list[float] = []
    volts: list[float] = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.rstrip("\r").split(",")
        if len(cells) != 2:
            raise TraceParseError(f"expected 2 columns, got {len(cells)}", i)
        times.append(_parse_float(cells[0], "time", i))
        volts.append(_parse_float(cells[1], "voltage", i))

    dt0 = _check_uniform(times, UNIFORM_REL_TOL, first_data_line=2)
    return Trace(dt0, np.array(volts, dtype=np.float64))


def read_oscilloscope_csv(source) -> Trace:
    """Tolerant reader for raw oscilloscope dumps.

    Skips leading comment/header lines (starting with '#' or containing no
    digits), ignores any column past the second, and accepts mild
    timestamp jitter.
    """
    raw = Path(source).read_text()
    times: list[float] = []
    volts: list[float] = []
    first_data_line = None
    for i, line in enumerate(raw.split("\n"), start=1):
        text = line.strip()
        if not text:
            continue
        if first_data_line is None:
            if text.startswith("#") or not any(ch.isdigit() for ch in text):
                continue
            first_data_line = i
        cells = [c.strip() for c in text.split(",")]
        if len(cells) < 2:
            raise TraceParseError("fewer than 2 numeric columns", i)
        times.append(_parse_float(cells[0], "time", i))
        volts.append(_parse_float(cells[1], "voltage", i))

    if not times:
        raise TraceParseError("no samples")
    dt0 = _check_uniform(times, SCOPE_REL_TOL, first_data_line=first_data_line)
    return Trace(dt0, np.array(volts, dtype=np.float64))


def write_peaks(peaks, destination) -> None:
    rows = [PEAKS_HEADER]
    seen: set[int] = set()
    for p in peaks:
        if p.seed_index in seen:
            raise ValueError(f"duplicate run_id {p.seed_index}")
        seen.add(p.seed_index)
        if "," in p.label:
            raise ValueError(f"label may not contain a comma: {p.label!r}")
        rows.append(f"{p.seed_index},{p.label},{p.value!r}")
    Path(destination).write_text("\n".join(rows) + "\n", newline="\n")


def read_peaks(source) -> list[PeakSample]:
    raw = Path(source).read_text()
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != PEAKS_HEADER:
        raise TraceParseError(f"malformed header, expected {PEAKS_HEADER!r}", 1)
    peaks = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.rstrip("\r").split(",")
        if len(cells) != 3:
            raise TraceParseError(f"expected 3 columns, got {len(cells)}", i)
        try:
            run_id = int(cells[0])
        except ValueError:
            raise TraceParseError(f"non-integer run_id: {cells[0]!r}", i) from None
        value = _parse_float(cells[2], "peak_v", i)
        peaks.append(PeakSample(value=value, label=cells[1], seed_index=run_id))
    return peaks


# ---------------------------------------------------------------------------
# Experiment manifests


@dataclass(frozen=True)
class ExperimentManifest:
    """Everything needed to reproduce a run byte for byte."""

    master_seed: int
    cmos: CmosParams
    thermal: ThermalParams
    spike: SpikeParams
    dt: float
    n_traces: int
    encryptions_per_trace: int
    sike_iterations: int
    victim: MicrobenchSpec | None = None
    created_at: str = "1970-01-01T00:00:00Z"

    def env(self) -> AttackEnv:
        return AttackEnv(
            cmos=self.cmos, thermal=self.thermal, spike=self.spike,
            dt=self.dt, master_seed=self.master_seed, n_traces=self.n_traces,
        )


def default_manifest(master_seed: int, victim: MicrobenchSpec | None = None) -> ExperimentManifest:
    return ExperimentManifest(
        master_seed=master_seed,
        cmos=DEFAULT_CMOS,
        thermal=DEFAULT_THERMAL,
        spike=DEFAULT_SPIKE,
        dt=DEFAULT_DT,
        n_traces=DEFAULT_N_TRACES,
        encryptions_per_trace=DEFAULT_ENCRYPTIONS_PER_TRACE,
        sike_iterations=DEFAULT_SIKE_ITERATIONS,
        victim=victim,
    )


_VICTIM_KINDS = {
    "const_loop": (ConstLoop, ("loop_itr", "hwt_value")),
    "hwt_loop": (HwtLoop, ("hwt_value_loop", "hwt_value", "loop_itr")),
    "hd_loop": (HdLoop, ("shift_value", "hwt_value", "loop_itr")),
}

_INT_KEYS = {
    "master_seed",
    "attack.n_traces",
    "attack.encryptions_per_trace",
    "attack.sike_iterations",
}
_FLOAT_KEYS = {
    "cmos.v_dd", "cmos.i_leak_scale", "cmos.theta_leak",
    "cmos.alpha_hwt", "cmos.alpha_hd", "cmos.p_short",
    "thermal.c_th", "thermal.r_th", "thermal.t_amb",
    "spike.beta0", "spike.beta_ctx", "spike.beta_res", "spike.sigma_noise",
    "attack.dt",
}
_STR_KEYS = {"created_at"}
_REQUIRED_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def write_manifest(manifest: ExperimentManifest, destination) -> None:
    m = manifest
    pairs: list[tuple[str, str]] = [
        ("master_seed", str(m.master_seed)),
        ("created_at", m.created_at),
        ("cmos.v_dd", repr(m.cmos.v_dd)),
        ("cmos.i_leak_scale", repr(m.cmos.i_leak_scale)),
        ("cmos.theta_leak", repr(m.cmos.theta_leak)),
        ("cmos.alpha_hwt", repr(m.cmos.alpha_hwt)),
        ("cmos.alpha_hd", repr(m.cmos.alpha_hd)),
        ("cmos.p_short", repr(m.cmos.p_short)),
        ("thermal.c_th", repr(m.thermal.c_th)),
        ("thermal.r_th", repr(m.thermal.r_th)),
        ("thermal.t_amb", repr(m.thermal.t_amb)),
        ("spike.beta0", repr(m.spike.beta0)),
        ("spike.beta_ctx", repr(m.spike.beta_ctx)),
        ("spike.beta_res", repr(m.spike.beta_res)),
        ("spike.sigma_noise", repr(m.spike.sigma_noise)),
        ("attack.dt", repr(m.dt)),
        ("attack.n_traces", str(m.n_traces)),
        ("attack.encryptions_per_trace", str(m.encryptions_per_trace)),
        ("attack.sike_iterations", str(m.sike_iterations)),
    ]
    if m.victim is not None:
        for kind, (cls, fields) in _VICTIM_KINDS.items():
            if isinstance(m.victim, cls):
                pairs.append(("victim.kind", kind))
                pairs.extend((f"victim.{f}", str(getattr(m.victim, f))) for f in fields)
                break
        else:
            raise ManifestError(f"unsupported victim type: {type(m.victim).__name__}")
    Path(destination).write_text(
        "\n".join(f"{k} = {v}" for k, v in pairs) + "\n", newline="\n"
    )


def read_manifest(source) -> ExperimentManifest:
    values: dict[str, str] = {}
    for i, line in enumerate(Path(source).read_text().split("\n"), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ManifestError(f"malformed line {i}: {text!r}")
        key, _, value = text.partition("=")
        key, value = key.strip(), value.strip()
        known = key in _REQUIRED_KEYS or key == "victim.kind" or key.startswith("victim.")
        if not known:
            raise ManifestError(f"unknown key: {key}")
        if key in values:
            raise ManifestError(f"duplicate key: {key}")
        values[key] = value

    for key in sorted(_REQUIRED_KEYS):
        if key not in values:
            raise ManifestError(f"missing key: {key}")

    def _int(key: str) -> int:
        try:
            return int(values[key])
        except ValueError:
            raise ManifestError(f"invalid integer for {key}: {values[key]!r}") from None

    def _float(key: str) -> float:
        try:
            out = float(values[key])
        except ValueError:
            raise ManifestError(f"invalid number for {key}: {values[key]!r}") from None
        if not math.isfinite(out):
            raise ManifestError(f"non-finite value for {key}")
        return out

    victim = None
    victim_keys = {k for k in values if k.startswith("victim.")}
    if victim_keys:
        if "victim.kind" not in values:
            raise ManifestError("missing key: victim.kind")
        kind = values["victim.kind"]
        if kind not in _VICTIM_KINDS:
            raise ManifestError(f"unknown victim.kind: {kind!r}")
        cls, fields = _VICTIM_KINDS[kind]
        expected = {"victim.kind"} | {f"victim.{f}" for f in fields}
        extra = victim_keys - expected
        if extra:
            raise ManifestError(f"unknown key: {sorted(extra)[0]}")
        missing = expected - victim_keys
        if missing:
            raise ManifestError(f"missing key: {sorted(missing)[0]}")
        victim = cls(**{f: _int(f"victim.{f}") for f in fields})

    return ExperimentManifest(
        master_seed=_int("master_seed"),
        cmos=CmosParams(
            v_dd=_float("cmos.v_dd"),
            i_leak_scale=_float("cmos.i_leak_scale"),
            theta_leak=_float("cmos.theta_leak"),
            alpha_hwt=_float("cmos.alpha_hwt"),
            alpha_hd=_float("cmos.alpha_hd"),
            p_short=_float("cmos.p_short"),
        ),
        thermal=ThermalParams(
            c_th=_float("thermal.c_th"),
            r_th=_float("thermal.r_th"),
            t_amb=_float("thermal.t_amb"),
        ),
        spike=SpikeParams(
            beta0=_float("spike.beta0"),
            beta_ctx=_float("spike.beta_ctx"),
            beta_res=_float("spike.beta_res"),
            sigma_noise=_float("spike.sigma_noise"),
        ),
        dt=_float("attack.dt"),
        n_traces=_int("attack.n_traces"),
        encryptions_per_trace=_int("attack.encryptions_per_trace"),
        sike_iterations=_int("attack.sike_iterations"),
        victim=victim,
        created_at=values["created_at"],
    )
