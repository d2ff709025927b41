"""CMOS power decomposition and lumped RC thermal network.

Total chip power is modeled as dynamic switching power (linear in the
number of one-bits written and bits toggled per step), a
temperature-dependent leakage term, and a constant baseline term.
Temperature follows a first-order RC network driven by total power.
Because leakage grows with temperature, power and temperature form a
feedback loop that converges to a stable operating point; the elevated
temperature left behind by a workload is what carries its residual
signature into the following context-switch spike.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class CmosParams:
    """Electrical parameters of the simulated chip.

    ``theta_leak`` is the activation temperature of the leakage
    exponential: I_leak(T) = i_leak_scale * T^2 * exp(-theta_leak / T).
    Degenerate values (``theta_leak = 0`` or ``i_leak_scale = 0``) are
    allowed for controlled experiments with the leakage path disabled.
    """

    v_dd: float            # supply voltage (V)
    i_leak_scale: float    # leakage prefactor (A/K^2), >= 0
    theta_leak: float      # leakage activation temperature (K), >= 0
    alpha_hwt: float       # dynamic power per written one-bit (W/bit)
    alpha_hd: float        # dynamic power per toggled bit (W/bit)
    p_short: float = 0.0   # constant short-circuit/baseline power (W)

    def __post_init__(self):
        if self.v_dd <= 0:
            raise ValueError("v_dd must be > 0")
        if self.alpha_hwt <= 0 or self.alpha_hd <= 0:
            raise ValueError("alpha_hwt and alpha_hd must be > 0")
        if self.i_leak_scale < 0 or self.theta_leak < 0:
            raise ValueError("i_leak_scale and theta_leak must be >= 0")
        if self.p_short < 0:
            raise ValueError("p_short must be >= 0")


@dataclass(frozen=True)
class ThermalParams:
    c_th: float   # thermal capacitance (J/K)
    r_th: float   # thermal resistance to ambient (K/W)
    t_amb: float  # ambient temperature (K)

    def __post_init__(self):
        if self.c_th <= 0 or self.r_th <= 0 or self.t_amb <= 0:
            raise ValueError("thermal parameters must be strictly positive")

    @property
    def tau(self) -> float:
        """RC time constant (s), also the explicit-Euler stability bound."""
        return self.c_th * self.r_th


@dataclass(frozen=True)
class ThermalState:
    t: float  # chip temperature (K)

    def __post_init__(self):
        if not (self.t > 0):
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class ActivitySample:
    """Switching activity of one simulation step."""

    hwt_bits: int  # one-bits written this step
    hd_bits: int   # bits toggled this step

    def __post_init__(self):
        if self.hwt_bits < 0 or self.hd_bits < 0:
            raise ValueError("activity counts must be >= 0")


@dataclass(frozen=True)
class ActivityProfile:
    """Per-step activity emitted by a victim run, one entry per step."""

    hwt_bits: np.ndarray
    hd_bits: np.ndarray

    def __post_init__(self):
        hwt = np.asarray(self.hwt_bits, dtype=np.int64)
        hd = np.asarray(self.hd_bits, dtype=np.int64)
        if hwt.ndim != 1 or hd.ndim != 1 or hwt.shape != hd.shape:
            raise ValueError("hwt_bits and hd_bits must be 1-d arrays of equal length")
        if len(hwt) and (hwt.min() < 0 or hd.min() < 0):
            raise ValueError("activity counts must be >= 0")
        hwt.setflags(write=False)
        hd.setflags(write=False)
        object.__setattr__(self, "hwt_bits", hwt)
        object.__setattr__(self, "hd_bits", hd)

    def __len__(self) -> int:
        return len(self.hwt_bits)

    def samples(self):
        for w, d in zip(self.hwt_bits, self.hd_bits):
            yield ActivitySample(int(w), int(d))

    def total_hwt(self) -> int:
        return int(self.hwt_bits.sum())

    def total_hd(self) -> int:
        return int(self.hd_bits.sum())

    @classmethod
    def from_samples(cls, samples: Iterable[ActivitySample]) -> "ActivityProfile":
        samples = list(samples)
        return cls(
            np.array([s.hwt_bits for s in samples], dtype=np.int64),
            np.array([s.hd_bits for s in samples], dtype=np.int64),
        )


def dynamic_power(sample: ActivitySample, params: CmosParams) -> float:
    """Switching power of one step, linear in both activity counts."""
    return params.alpha_hwt * sample.hwt_bits + params.alpha_hd * sample.hd_bits


def leakage_power(t, params: CmosParams):
    """Leakage power at temperature ``t`` (K), strictly increasing in t.

    Accepts a scalar or an ndarray of temperatures.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("temperature must be > 0")
    out = params.v_dd * params.i_leak_scale * t * t * np.exp(-params.theta_leak / t)
    return float(out) if out.ndim == 0 else out


def total_power(sample: ActivitySample, t: float, params: CmosParams) -> float:
    return dynamic_power(sample, params) + leakage_power(t, params) + params.p_short


def thermal_step(state: ThermalState, p_total: float, tp: ThermalParams, dt: float) -> ThermalState:
    """One explicit-Euler step of the RC network.

    Requires 0 < dt < c_th * r_th so the update contracts toward the
    instantaneous equilibrium t_amb + p_total * r_th.
    """
    _check_dt(dt, tp)
    t = state.t
    t_next = t + (dt / tp.c_th) * (p_total - (t - tp.t_amb) / tp.r_th)
    return ThermalState(t_next)


def _check_dt(dt: float, tp: ThermalParams) -> None:
    if not (0 < dt < tp.tau):
        raise ValueError(f"dt must satisfy 0 < dt < c_th*r_th = {tp.tau:g}, got {dt:g}")


def simulate_thermal(
    activity,
    cp: CmosParams,
    tp: ThermalParams,
    dt: float,
    t0: float | None = None,
) -> tuple[ThermalState, np.ndarray]:
    """Fold the thermal step over an activity sequence.

    ``activity`` is an :class:`ActivityProfile` or an iterable of
    :class:`ActivitySample`.  Leakage is recomputed from the updated
    temperature at every step, which closes the power-thermal feedback
    loop.  Returns the final state and the per-step total power series.
    """
    _check_dt(dt, tp)
    t = tp.t_amb if t0 is None else float(t0)
    if t <= 0:
        raise ValueError("t0 must be > 0")

    if isinstance(activity, ActivityProfile):
        hwt, hd = activity.hwt_bits, activity.hd_bits
    else:
        prof = ActivityProfile.from_samples(activity)
        hwt, hd = prof.hwt_bits, prof.hd_bits

    powers = np.empty(len(hwt), dtype=np.float64)
    scale = dt / tp.c_th
    for i in range(len(hwt)):
        p_dyn = cp.alpha_hwt * hwt[i] + cp.alpha_hd * hd[i]
        p = p_dyn + leakage_power(t, cp) + cp.p_short
        powers[i] = p
        t = t + scale * (p - (t - tp.t_amb) / tp.r_th)
    return ThermalState(t), powers


def simulate_thermal_batch(
    hwt_bits: np.ndarray,
    hd_bits: np.ndarray | None,
    cp: CmosParams,
    tp: ThermalParams,
    dt: float,
    t0: float | None = None,
) -> np.ndarray:
    """Vectorized thermal simulation of many runs in lockstep.

    ``hwt_bits`` (and optionally ``hd_bits``) have shape (n_runs, n_steps);
    returns the n_runs final temperatures.  Row i equals
    ``simulate_thermal`` applied to run i.
    """
    _check_dt(dt, tp)
    hwt = np.asarray(hwt_bits, dtype=np.float64)
    if hwt.ndim != 2:
        raise ValueError("hwt_bits must be 2-d (runs, steps)")
    p_dyn = cp.alpha_hwt * hwt
    if hd_bits is not None:
        p_dyn = p_dyn + cp.alpha_hd * np.asarray(hd_bits, dtype=np.float64)

    t_start = tp.t_amb if t0 is None else float(t0)
    if t_start <= 0:
        raise ValueError("t0 must be > 0")
    t = np.full(hwt.shape[0], t_start, dtype=np.float64)
    scale = dt / tp.c_th
    vi = cp.v_dd * cp.i_leak_scale
    for s in range(hwt.shape[1]):
        leak = vi * t * t * np.exp(-cp.theta_leak / t)
        p = p_dyn[:, s] + leak + cp.p_short
        t = t + scale * (p - (t - tp.t_amb) / tp.r_th)
    return t
