"""End-to-end analyses: ladder key recovery, AES last-round recovery,
and workload fingerprinting.

Two complementary strategies are implemented.  The proof-of-concept
ladder attack forces the context switch right after the ladder, so the
register snapshot itself carries the anomaly (zeros vs. random words) and
a simple threshold on mean peak amplitude classifies each bit.  The
sequential attack and the AES attack trigger the switch only at the end
of the victim, so the secret leaks through the residual signature alone:
less computation (zero rounds, or a lower-weight target byte) leaves the
chip measurably cooler.

All measurements derive their RNG streams from (master_seed, tag, ...),
making every report a deterministic function of (true key, env).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .aes import expand_key, invert_key_schedule
from .microbench import (
    BYTE_HWT,
    ConstLoop,
    HdLoop,
    HwtLoop,
    MicrobenchSpec,
    RegisterSnapshot,
    encode_hwt,
)
from .power import CmosParams, ThermalParams, simulate_thermal_batch
from .sike import CraftedCiphertext, SikeKey, decapsulate_profile
from .spike import PeakSample, SpikeParams, run_experiment
from .streams import derive_seed, stream

# Documented default calibration.  The CMOS/thermal values put the chip in
# a gently driven regime (time constant 5 s, sub-kelvin excursions); the
# spike gains are chosen so that every paper-anchored ordering holds with
# clear margin at desk scale.  sigma_noise is half the full context-switch
# dynamic range (27 registers x 64 bits), so single traces overlap heavily
# but a few hundred averaged traces separate cleanly.
DEFAULT_CMOS = CmosParams(
    v_dd=5.0, i_leak_scale=1e-9, theta_leak=600.0,
    alpha_hwt=1e-5, alpha_hd=1e-5, p_short=0.05,
)
DEFAULT_THERMAL = ThermalParams(c_th=1.0, r_th=5.0, t_amb=300.0)

CTX_RANGE_BITS = 27 * 64
DEFAULT_BETA_CTX = 1e-4
DEFAULT_SIGMA_NOISE = 0.5 * DEFAULT_BETA_CTX * CTX_RANGE_BITS
DEFAULT_SPIKE = SpikeParams(
    beta0=0.2, beta_ctx=DEFAULT_BETA_CTX, beta_res=400.0,
    sigma_noise=DEFAULT_SIGMA_NOISE,
)
DEFAULT_DT = 0.5
DEFAULT_N_TRACES = 200
DEFAULT_ENCRYPTIONS_PER_TRACE = 2000
DEFAULT_SIKE_ITERATIONS = 4

# Register state the victim wrapper leaves behind when the switch happens
# at the end of the program (residual-dominant attacks); guess-independent.
EPILOGUE_SNAPSHOT = RegisterSnapshot.filled(encode_hwt(32))
_EPILOGUE_HWT = EPILOGUE_SNAPSHOT.total_hwt()


class InconsistencyError(RuntimeError):
    """Raised when measurements land in a branch the leakage model forbids."""


@dataclass(frozen=True)
class AttackEnv:
    """Parameter bundle shared by all attacks."""

    cmos: CmosParams
    thermal: ThermalParams
    spike: SpikeParams
    dt: float
    master_seed: int
    n_traces: int

    def __post_init__(self):
        if not (0 < self.dt < self.thermal.tau):
            raise ValueError("dt must satisfy 0 < dt < c_th*r_th")
        if self.n_traces < 1:
            raise ValueError("n_traces must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")


def default_env(master_seed: int, **overrides) -> AttackEnv:
    kwargs = dict(
        cmos=DEFAULT_CMOS,
        thermal=DEFAULT_THERMAL,
        spike=DEFAULT_SPIKE,
        dt=DEFAULT_DT,
        master_seed=master_seed,
        n_traces=DEFAULT_N_TRACES,
    )
    kwargs.update(overrides)
    return AttackEnv(**kwargs)


@dataclass(frozen=True)
class SikeAttackReport:
    recovered: SikeKey
    bit_means: tuple  # one (mean_value_1, mean_value_2 or None) per bit t = 1..L-1
    sep_limit: float
    traces_used: int
    mode: str

    def __post_init__(self):
        if len(self.bit_means) != len(self.recovered) - 1:
            raise ValueError("need one mean entry per recovered bit t >= 1")


@dataclass(frozen=True)
class ByteScan:
    """Per-target-byte scan over all 256 guesses."""

    means: np.ndarray
    chosen: int
    margin: float

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        if means.shape != (256,):
            raise ValueError("need one mean per guess")
        if self.chosen != int(np.argmin(means)):
            raise ValueError("chosen guess must have the minimal mean")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)


@dataclass(frozen=True)
class AesAttackReport:
    scans: dict[int, ByteScan]
    round10: dict[int, int]
    master_key: bytes | None
    traces_used: int
    encryptions_per_trace: int


# ---------------------------------------------------------------------------
# Ladder (SIKE-style) attacks


def _sike_peaks(
    true_key: SikeKey,
    c: CraftedCiphertext,
    env: AttackEnv,
    iterations: int,
    ladder_snapshot: bool,
    tag: tuple,
    noise_tag: tuple | None = None,
) -> np.ndarray:
    """Measure n_traces spike amplitudes for one crafted ciphertext.

    ``ladder_snapshot`` selects where the switch happens: right after the
    ladder (snapshot carries the anomaly) or at the end of the wrapper
    program (fixed epilogue registers, residual signature only).  When
    ``noise_tag`` is given, measurement noise comes from its own stream so
    that two hypotheses can share the victim stream (common random
    numbers) while keeping independent instrument noise.
    """
    rounds = len(true_key) + 1
    n = env.n_traces
    hwt = np.empty((n, iterations * rounds), dtype=np.float64)
    ctx = np.empty(n, dtype=np.float64)
    eps = np.empty(n, dtype=np.float64)
    for i in range(n):
        g = stream(env.master_seed, *tag, i)
        profile, snap = decapsulate_profile(true_key, c, rounds, iterations, g)
        hwt[i] = profile.hwt_bits
        ctx[i] = snap.total_hwt() if ladder_snapshot else _EPILOGUE_HWT
        g_eps = g if noise_tag is None else stream(env.master_seed, *noise_tag, i)
        eps[i] = g_eps.normal()
    temps = simulate_thermal_batch(hwt, None, env.cmos, env.thermal, env.dt)
    sp = env.spike
    return (
        sp.beta0
        + sp.beta_ctx * ctx
        + sp.beta_res * (temps - env.thermal.t_amb)
        + sp.sigma_noise * eps
    )


def calibrate_poc_band(env: AttackEnv, key_length: int) -> tuple[float, float]:
    """Class means (anomalous, non-anomalous) at the hardest bit.

    The anomalous class mean rises toward the non-anomalous one as the
    target bit approaches the end of the key (fewer zeroed rounds), so the
    band is measured at t = L-1 where the separation is smallest.
    """
    if key_length < 2:
        raise ValueError("key_length must be >= 2")
    t = key_length - 1
    prefix = (0,) * t
    probe = CraftedCiphertext(t, prefix, 1)
    key_anom = SikeKey(prefix[:-1] + (0, 1))
    key_non = SikeKey((0,) * key_length)
    m_anom = float(np.mean(_sike_peaks(key_anom, probe, env, 1, True, ("sike-poc-cal", 0))))
    m_non = float(np.mean(_sike_peaks(key_non, probe, env, 1, True, ("sike-poc-cal", 1))))
    if not m_anom < m_non:
        raise InconsistencyError("calibration classes did not separate")
    return m_anom, m_non


def sike_poc_attack(
    true_key: SikeKey,
    env: AttackEnv,
    threshold: float | None = None,
) -> SikeAttackReport:
    """Threshold-classified bit-by-bit recovery, switch right after the ladder.

    For each bit t >= 1 the crafted ciphertext guesses the flip of the
    previously recovered bit; an anomalously low mean peak means the flip
    was correct.  Bit 0 is fixed to 0 by convention.
    """
    band = calibrate_poc_band(env, len(true_key))
    if threshold is None:
        threshold = 0.5 * (band[0] + band[1])
    elif not (band[0] < threshold < band[1]):
        raise ValueError(
            f"threshold {threshold!r} outside the calibrated band ({band[0]!r}, {band[1]!r})"
        )

    bits = [0]
    means = []
    n_bits = len(true_key)
    for t in range(1, n_bits):
        guess = 1 - bits[t - 1]
        c = CraftedCiphertext(t, tuple(bits), guess)
        m = float(np.mean(_sike_peaks(true_key, c, env, 1, True, ("sike-poc", t))))
        means.append((m, None))
        bits.append(guess if m < threshold else bits[t - 1])

    return SikeAttackReport(
        recovered=SikeKey(tuple(bits)),
        bit_means=tuple(means),
        sep_limit=float(threshold),
        traces_used=(n_bits - 1) * env.n_traces,
        mode="poc-threshold",
    )


def default_probe_key(n_bits: int) -> SikeKey:
    """Probe key with both adjacent-equal and adjacent-differing pairs,
    ending on a differing pair so calibration sees the smallest gap."""
    if n_bits < 4:
        raise ValueError("probe key needs at least 4 bits")
    bits = [(i // 2) % 2 for i in range(n_bits)]
    bits[-1] = 1 - bits[-2]
    return SikeKey(tuple(bits))


def _two_hypothesis_means(
    key: SikeKey, known_bits: Sequence[int], t: int, env: AttackEnv,
    iterations: int, tag: str,
) -> tuple[float, float]:
    """Mean peak for both guesses of bit t.

    The two hypotheses share the victim stream (the decapsulation
    intermediates differ only through the anomaly zeroing), isolating the
    anomaly's thermal deficit; noise streams stay per-hypothesis.
    """
    prev = known_bits[t - 1]
    m = []
    for hyp, guess in ((1, 1 - prev), (2, prev)):
        c = CraftedCiphertext(t, tuple(known_bits[:t]), guess)
        amps = _sike_peaks(
            key, c, env, iterations, False,
            (tag, t), noise_tag=(tag + "-noise", t, hyp),
        )
        m.append(float(np.mean(amps)))
    return m[0], m[1]


def calibrate_sep_limit(
    env: AttackEnv,
    probe_key: SikeKey,
    iterations: int = DEFAULT_SIKE_ITERATIONS,
) -> float:
    """Half the minimum observed anomalous/non-anomalous mean gap.

    Runs both hypotheses over every bit of a known probe key and takes the
    smallest gap among the bits where the anomaly fires.  The probe must
    contain at least one adjacent differing pair and one equal pair.
    """
    bits = probe_key.bits
    pairs = [(bits[t - 1], bits[t]) for t in range(1, len(bits))]
    if not any(a != b for a, b in pairs) or not any(a == b for a, b in pairs):
        raise ValueError("probe key needs both differing and equal adjacent pairs")

    gaps = []
    for t in range(1, len(bits)):
        if bits[t] == bits[t - 1]:
            continue
        m1, m2 = _two_hypothesis_means(probe_key, bits, t, env, iterations, "sike-cal")
        gaps.append(m2 - m1)
    min_gap = min(gaps)
    if min_gap <= 0:
        raise InconsistencyError("calibration found no positive anomaly gap")
    return 0.5 * min_gap


def sike_attack(
    true_key: SikeKey,
    env: AttackEnv,
    sep_limit: float | None = None,
    iterations: int = DEFAULT_SIKE_ITERATIONS,
) -> SikeAttackReport:
    """Sequential two-hypothesis recovery with the switch after decapsulation.

    Per bit t, hypothesis 1 guesses K[t] = !K[t-1] and hypothesis 2
    guesses K[t] = K[t-1]; each crafts a ciphertext and measures the mean
    peak over n_traces runs of ``iterations`` amplified decapsulations.
    Means in the same range mean no anomaly fired (bits equal); a lower
    first mean means hypothesis 1 triggered the anomaly (bits differ).
    The remaining branch, mean_1 - mean_2 >= sep_limit, cannot occur under
    the leakage model and raises :class:`InconsistencyError`.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if sep_limit is None:
        sep_limit = calibrate_sep_limit(env, default_probe_key(len(true_key)), iterations)
    if sep_limit <= 0:
        raise ValueError("sep_limit must be > 0")

    bits = [0]
    means = []
    n_bits = len(true_key)
    for t in range(1, n_bits):
        m1, m2 = _two_hypothesis_means(true_key, bits, t, env, iterations, "sike-seq")
        means.append((m1, m2))
        if abs(m1 - m2) < sep_limit:
            bits.append(bits[t - 1])
        elif m2 - m1 >= sep_limit:
            bits.append(1 - bits[t - 1])
        else:
            raise InconsistencyError(
                f"bit {t}: mean_1 exceeds mean_2 by >= sep_limit, which the anomaly "
                "model cannot produce; re-measure with a fresh seed"
            )

    return SikeAttackReport(
        recovered=SikeKey(tuple(bits)),
        bit_means=tuple(means),
        sep_limit=float(sep_limit),
        traces_used=2 * (n_bits - 1) * env.n_traces,
        mode="sequential",
    )


# ---------------------------------------------------------------------------
# AES last-round attack


def _aes_guess_stats(
    true_key: bytes, env: AttackEnv, target: int, enc_per_trace: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-guess mean temperature rise (K) and mean unit noise draw.

    The same base ciphertext stream is shared by all 256 guesses (common
    random numbers), so the other 15 bytes contribute identical activity
    and only the target byte's weight moves the thermal mean.  Activity is
    computed through the last-round identity
    HWT(ShiftRows_out[j]) = HWT(C[j] XOR k10[j]), counted twice for the
    SubBytes and ShiftRows appearances.
    """
    rk = expand_key(true_key)
    k10 = np.frombuffer(rk.round10, dtype=np.uint8)
    n = env.n_traces
    amb = env.thermal.t_amb

    cts = stream(env.master_seed, "aes-ct", target).integers(
        0, 256, size=(n, enc_per_trace, 16), dtype=np.uint8
    )
    hw = BYTE_HWT[cts ^ k10].astype(np.int64)
    base = 2 * (hw.sum(axis=2) - hw[:, :, target])  # everything except the target byte

    deltas = 2 * BYTE_HWT[np.arange(256, dtype=np.uint8) ^ k10[target]].astype(np.int64)
    rise_by_delta = {}
    for d in np.unique(deltas):
        temps = simulate_thermal_batch(
            (base + int(d)).astype(np.float64), None, env.cmos, env.thermal, env.dt
        )
        rise_by_delta[int(d)] = float(np.mean(temps - amb))
    rise = np.array([rise_by_delta[int(d)] for d in deltas])

    noise = np.array([
        float(np.mean(stream(env.master_seed, "aes-noise", target, g).normal(size=n)))
        for g in range(256)
    ])
    return rise, noise


def _scan_from_stats(env: AttackEnv, rise: np.ndarray, noise: np.ndarray,
                     sigma: float) -> ByteScan:
    sp = env.spike
    means = sp.beta0 + sp.beta_ctx * _EPILOGUE_HWT + sp.beta_res * rise + sigma * noise
    order = np.argsort(means, kind="stable")
    chosen = int(order[0])
    margin = float(means[order[1]] - means[order[0]])
    return ByteScan(means=means, chosen=chosen, margin=margin)


def aes_attack(
    true_key: bytes,
    env: AttackEnv,
    targets: Sequence[int],
    encryptions_per_trace: int = DEFAULT_ENCRYPTIONS_PER_TRACE,
) -> AesAttackReport:
    """Chosen-plaintext recovery of round-10 key bytes.

    Per target byte and guess, plaintexts are generated by decrypting
    random ciphertexts whose target byte is pinned to the guess; running
    ``encryptions_per_trace`` of them heats the chip in proportion to the
    byte's weight, and the guess with the minimal mean peak (weight zero
    at the ShiftRows output) is the key byte.  When all 16 bytes are
    targeted, the master key is recovered by inverting the key schedule.
    """
    targets = sorted(set(int(t) for t in targets))
    if not targets or targets[0] < 0 or targets[-1] > 15:
        raise ValueError("targets must be a non-empty subset of 0..15")
    if encryptions_per_trace < 1:
        raise ValueError("encryptions_per_trace must be >= 1")

    scans: dict[int, ByteScan] = {}
    round10: dict[int, int] = {}
    for t in targets:
        rise, noise = _aes_guess_stats(true_key, env, t, encryptions_per_trace)
        scan = _scan_from_stats(env, rise, noise, env.spike.sigma_noise)
        scans[t] = scan
        round10[t] = scan.chosen

    master = None
    if len(targets) == 16:
        master = invert_key_schedule(bytes(round10[t] for t in range(16)))

    return AesAttackReport(
        scans=scans,
        round10=round10,
        master_key=master,
        traces_used=len(targets) * 256 * env.n_traces,
        encryptions_per_trace=encryptions_per_trace,
    )


def aes_noise_sweep(
    true_key: bytes,
    env: AttackEnv,
    targets: Sequence[int],
    encryptions_per_trace: int,
    sigma_scales: Sequence[float],
) -> dict[float, dict[int, dict]]:
    """Per-byte recovery outcome at swept noise levels.

    Reuses the thermal statistics across levels (the temperature does not
    depend on sigma) and scales the same unit noise draws, so the sweep
    isolates the effect of the noise floor.  For each scale and byte the
    entry records the chosen guess, the rank of the true byte among the
    256 means (0 = recovered), and bottom-5 membership.
    """
    targets = sorted(set(int(t) for t in targets))
    k10 = expand_key(true_key).round10
    out: dict[float, dict[int, dict]] = {}
    stats = {
        t: _aes_guess_stats(true_key, env, t, encryptions_per_trace) for t in targets
    }
    for scale in sigma_scales:
        sigma = scale * env.spike.sigma_noise
        per_byte = {}
        for t in targets:
            rise, noise = stats[t]
            scan = _scan_from_stats(env, rise, noise, sigma)
            order = np.argsort(scan.means, kind="stable")
            rank = int(np.nonzero(order == k10[t])[0][0])
            per_byte[t] = {
                "chosen": scan.chosen,
                "rank_of_true": rank,
                "recovered": scan.chosen == k10[t],
                "in_bottom5": rank < 5,
            }
        out[float(scale)] = per_byte
    return out


def aes_level1_separations(
    true_key: bytes,
    env: AttackEnv,
    encryptions_per_trace: int = 500,
    target_positions: Sequence[int] = (0, 5, 10, 15),
) -> dict[str, float]:
    """Mean peaks for the three four-byte scenarios: random, zeros, ones.

    Four last-round byte positions are forced to 0x00, 0xFF, or fresh
    random values per encryption while the other twelve bytes share one
    common random stream across scenarios.  Fixed bytes never toggle
    between encryptions, so the random scenario carries extra switching
    activity on top of its average weight; all-zeros additionally loses
    the weight itself.  The resulting mean ordering is
    zeros < ones <= random, with the zeros gap strictly largest.
    """
    targets = sorted(set(int(p) for p in target_positions))
    if len(targets) != 4 or targets[0] < 0 or targets[-1] > 15:
        raise ValueError("need 4 distinct byte positions in 0..15")
    others = [p for p in range(16) if p not in targets]
    n = env.n_traces
    amb = env.thermal.t_amb
    sp = env.spike

    common = stream(env.master_seed, "aes-l1-common").integers(
        0, 256, size=(n, encryptions_per_trace, len(others)), dtype=np.uint8
    )
    hw_common = BYTE_HWT[common].astype(np.int64).sum(axis=2)
    hd_common = BYTE_HWT[common[:, 1:, :] ^ common[:, :-1, :]].astype(np.int64).sum(axis=2)
    hd_common = np.concatenate([np.zeros((n, 1), dtype=np.int64), hd_common], axis=1)

    means: dict[str, float] = {}
    for idx, scenario in enumerate(("random", "zeros", "ones")):
        if scenario == "random":
            tb = stream(env.master_seed, "aes-l1-rand").integers(
                0, 256, size=(n, encryptions_per_trace, 4), dtype=np.uint8
            )
        else:
            value = 0x00 if scenario == "zeros" else 0xFF
            tb = np.full((n, encryptions_per_trace, 4), value, dtype=np.uint8)
        hw_t = BYTE_HWT[tb].astype(np.int64).sum(axis=2)
        hd_t = BYTE_HWT[tb[:, 1:, :] ^ tb[:, :-1, :]].astype(np.int64).sum(axis=2)
        hd_t = np.concatenate([np.zeros((n, 1), dtype=np.int64), hd_t], axis=1)

        hwt = 2 * (hw_common + hw_t)
        hd = 2 * (hd_common + hd_t)
        temps = simulate_thermal_batch(hwt, hd, env.cmos, env.thermal, env.dt)
        eps = stream(env.master_seed, "aes-l1-noise", idx).normal(size=n)
        amps = (
            sp.beta0 + sp.beta_ctx * _EPILOGUE_HWT
            + sp.beta_res * (temps - amb) + sp.sigma_noise * eps
        )
        means[scenario] = float(np.mean(amps))
    return means


# ---------------------------------------------------------------------------
# Workload fingerprinting


def workload_fingerprint(labeled_peaks: Mapping[str, Sequence], observed) -> str:
    """Nearest-centroid classification over mean peak amplitude."""
    if len(labeled_peaks) < 2:
        raise ValueError("need at least 2 labeled classes")
    observed = list(observed)
    if not observed:
        raise ValueError("observed peak set is empty")

    def _mean(peaks) -> float:
        vals = [p.value if isinstance(p, PeakSample) else float(p) for p in peaks]
        if not vals:
            raise ValueError("every class needs at least one peak")
        return float(np.mean(vals))

    obs = _mean(observed)
    best = min(sorted(labeled_peaks), key=lambda lbl: abs(_mean(labeled_peaks[lbl]) - obs))
    return best


def default_workloads() -> dict[str, MicrobenchSpec]:
    """Six synthetic workload classes with distinct power footprints."""
    return {
        "idle": ConstLoop(loop_itr=100, hwt_value=8),
        "int8": HwtLoop(hwt_value_loop=8, hwt_value=8, loop_itr=100),
        "int32": HwtLoop(hwt_value_loop=32, hwt_value=32, loop_itr=100),
        "int64": HwtLoop(hwt_value_loop=64, hwt_value=64, loop_itr=100),
        "shift5": HdLoop(shift_value=5, hwt_value=16, loop_itr=100),
        "shift20": HdLoop(shift_value=20, hwt_value=48, loop_itr=100),
    }


def fingerprint_confusion(
    classes: Mapping[str, MicrobenchSpec],
    env: AttackEnv,
    trials_per_class: int = 17,
    observed_per_trial: int = 50,
    train_per_class: int | None = None,
) -> tuple[list[str], np.ndarray, float, list[tuple[str, str]]]:
    """Confusion matrix of the nearest-centroid fingerprint.

    Returns (labels, matrix, accuracy, flagged) where ``matrix[i, j]``
    counts trials of true class i classified as j, and ``flagged`` lists
    class pairs whose centroids are too close to separate at the trial
    size (statistically indistinguishable).
    """
    labels = list(classes)
    if len(labels) < 2:
        raise ValueError("need at least 2 classes")
    n_train = train_per_class if train_per_class is not None else env.n_traces

    kw = dict(cmos=env.cmos, thermal=env.thermal, spike_params=env.spike, dt=env.dt)
    training = {
        lbl: run_experiment(classes[lbl], n_train,
                            derive_seed(env.master_seed, "wl-train", lbl),
                            label=lbl, **kw)
        for lbl in labels
    }

    matrix = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for i, lbl in enumerate(labels):
        for k in range(trials_per_class):
            observed = run_experiment(classes[lbl], observed_per_trial,
                                      derive_seed(env.master_seed, "wl-trial", lbl, k),
                                      label=lbl, **kw)
            pred = workload_fingerprint(training, observed)
            matrix[i, labels.index(pred)] += 1

    accuracy = float(np.trace(matrix)) / float(matrix.sum())

    centroids = {lbl: float(np.mean([p.value for p in training[lbl]])) for lbl in labels}
    min_gap = 4.0 * env.spike.sigma_noise / np.sqrt(observed_per_trial)
    flagged = [
        (a, b)
        for ai, a in enumerate(labels)
        for b in labels[ai + 1 :]
        if abs(centroids[a] - centroids[b]) < min_gap
    ]
    return labels, matrix, accuracy, flagged
