"""Synthesis of the sleep-induced context-switch power spike.

The spike amplitude combines two signatures linearly: the context-switch
signature (Hamming weight of the register contents saved at the switch)
and the residual signature (chip temperature above ambient, left behind
by the previously executed workload), plus Gaussian measurement noise:

    amplitude = beta0 + beta_ctx * sum_hwt(regs) + beta_res * (T - T_amb) + eps

``run_experiment`` repeats a victim run many times with per-repetition
RNG streams derived from the master seed, so the resulting peak sequence
is reproducible regardless of evaluation order or parallel schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import Trace
from .microbench import ConstLoop, HdLoop, HwtLoop, RegisterSnapshot, execute
from .power import CmosParams, ThermalParams, ThermalState, simulate_thermal
from .streams import stream


@dataclass(frozen=True)
class SpikeParams:
    beta0: float        # baseline spike amplitude (V)
    beta_ctx: float     # amplitude per register one-bit (V/bit)
    beta_res: float     # amplitude per kelvin above ambient (V/K)
    sigma_noise: float  # Gaussian measurement noise std (V)

    def __post_init__(self):
        if self.beta0 <= 0 or self.beta_ctx <= 0 or self.beta_res <= 0:
            raise ValueError("beta0, beta_ctx and beta_res must be > 0")
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be >= 0")


@dataclass(frozen=True)
class PeakSample:
    """One extracted spike amplitude."""

    value: float
    label: str = ""
    seed_index: int = 0

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("peak value must be finite")


def spike_amplitude(
    snap: RegisterSnapshot,
    th: ThermalState,
    tp: ThermalParams,
    sp: SpikeParams,
    rng: np.random.Generator,
) -> float:
    """Spike amplitude for one context switch.

    The noise draw is taken from ``rng`` even when sigma_noise is zero,
    keeping stream consumption identical across noise settings.
    """
    if th.t < tp.t_amb:
        raise ValueError("thermal state below ambient; spike model expects t >= t_amb")
    eps = rng.normal()
    return (
        sp.beta0
        + sp.beta_ctx * snap.total_hwt()
        + sp.beta_res * (th.t - tp.t_amb)
        + sp.sigma_noise * eps
    )


def synthesize_trace(
    pre_power: np.ndarray,
    spike_v: float,
    dt: float,
    samples_per_step: int,
    rng: np.random.Generator,
    *,
    gain_v_per_w: float = 1.0,
    floor_v: float = 0.0,
    sigma_noise: float = 0.0,
    floor_samples: int = 24,
) -> Trace:
    """Build a full synthetic trace around a spike of height ``spike_v``.

    Each power step maps to ``samples_per_step`` body samples through an
    affine power-to-voltage map, followed by the single-sample spike and a
    quiet sleep floor of at least 20 samples at ``floor_v`` (callers
    typically pass beta0/2).  An empty power series yields spike + floor
    only.
    """
    if samples_per_step < 1:
        raise ValueError("samples_per_step must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if floor_samples < 20:
        raise ValueError("sleep floor must be >= 20 samples")
    body = np.repeat(gain_v_per_w * np.asarray(pre_power, dtype=np.float64), samples_per_step)
    floor = np.full(floor_samples, floor_v, dtype=np.float64)
    samples = np.concatenate([body, [float(spike_v)], floor])
    if sigma_noise > 0:
        samples = samples + sigma_noise * rng.normal(size=len(samples))
    return Trace(dt / samples_per_step, samples)


def spike_index(pre_power_len: int, samples_per_step: int) -> int:
    """Index of the spike sample in a trace built by ``synthesize_trace``."""
    return pre_power_len * samples_per_step


def _is_microbench(victim) -> bool:
    return isinstance(victim, (ConstLoop, HwtLoop, HdLoop))


def run_experiment(
    victim,
    n_traces: int,
    master_seed: int,
    *,
    cmos: CmosParams,
    thermal: ThermalParams,
    spike_params: SpikeParams,
    dt: float,
    t0: float | None = None,
    label: str = "",
) -> list[PeakSample]:
    """Measure ``n_traces`` spike amplitudes of a victim.

    Repetition ``i`` draws from the stream derived from
    ``(master_seed, i)``; the victim consumes that stream first (if it is
    stochastic), then the amplitude noise.  Microbench victims are
    deterministic, so their profile and thermal trajectory are computed
    once and only the noise varies per repetition; the output is bitwise
    identical to running the victim inside the loop.
    """
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")

    peaks: list[PeakSample] = []
    if _is_microbench(victim):
        profile, snap = execute(victim)
        state, _ = simulate_thermal(profile, cmos, thermal, dt, t0)
        for i in range(n_traces):
            g = stream(master_seed, i)
            amp = spike_amplitude(snap, state, thermal, spike_params, g)
            peaks.append(PeakSample(amp, label, i))
    else:
        for i in range(n_traces):
            g = stream(master_seed, i)
            profile, snap = victim.run(g)
            state, _ = simulate_thermal(profile, cmos, thermal, dt, t0)
            amp = spike_amplitude(snap, state, thermal, spike_params, g)
            peaks.append(PeakSample(amp, label, i))
    return peaks
