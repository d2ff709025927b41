"""Trace signal processing: smoothing, peak extraction, summary statistics.

The same pipeline is applied to synthetic traces and to ingested
oscilloscope dumps.  The whole attack surface reduces to scalar peak
amplitudes, so the operations here are deliberately small: a causal
running mean, an argmax, and histogram density estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Trace:
    """Uniformly sampled voltage time series."""

    dt_s: float
    samples: np.ndarray

    def __post_init__(self):
        if not (self.dt_s > 0):
            raise ValueError("dt_s must be > 0")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("samples must be 1-d")
        if len(s) and not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Density:
    """Normalized histogram over peak amplitudes."""

    bin_edges: np.ndarray
    probabilities: np.ndarray  # per-bin densities (1/V)

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if len(edges) != len(probs) + 1:
            raise ValueError("need len(bin_edges) == len(probabilities) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly ascending")
        integral = float(np.sum(probs * np.diff(edges)))
        if abs(integral - 1.0) > 1e-9:
            raise ValueError(f"density must integrate to 1, got {integral!r}")
        edges.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "probabilities", probs)


def smooth(trace: Trace, window: int) -> Trace:
    """Causal running mean with a shrinking warm-up.

    output[i] = mean(samples[max(0, i-window+1) ..= i]); length and
    sampling interval are preserved.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    x = trace.samples
    n = len(x)
    if n == 0 or window == 1:
        return Trace(trace.dt_s, x)
    # direct convolution keeps each output an exact mean of <= window terms
    sums = np.convolve(x, np.ones(window), mode="full")[:n]
    counts = np.minimum(np.arange(1, n + 1), window)
    out = sums / counts
    # window means lie in [min, max] mathematically; clip float overshoot
    np.clip(out, x.min(), x.max(), out=out)
    return Trace(trace.dt_s, out)


def find_peak(trace: Trace) -> tuple[int, float]:
    """Index and value of the maximum sample (first occurrence on ties)."""
    if len(trace) == 0:
        raise ValueError("cannot find peak of an empty trace")
    idx = int(np.argmax(trace.samples))
    return idx, float(trace.samples[idx])


def _peak_values(peaks) -> np.ndarray:
    vals = [p.value if hasattr(p, "value") else float(p) for p in peaks]
    return np.asarray(vals, dtype=np.float64)


def mean_peak(peaks) -> float:
    """Arithmetic mean of a non-empty collection of peak amplitudes."""
    vals = _peak_values(peaks)
    if len(vals) == 0:
        raise ValueError("cannot take the mean of zero peaks")
    return float(np.mean(vals))


def density(peaks, n_bins: int) -> Density:
    """Equal-width histogram over [min, max], normalized to integrate to 1."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    vals = _peak_values(peaks)
    if len(np.unique(vals)) < 2:
        raise ValueError("degenerate support: need at least 2 distinct peak values")
    probs, edges = np.histogram(vals, bins=n_bins, density=True)
    return Density(edges, probs)


def separation(a, b) -> float:
    """Signed difference of class means, mean_peak(a) - mean_peak(b)."""
    return mean_peak(a) - mean_peak(b)
