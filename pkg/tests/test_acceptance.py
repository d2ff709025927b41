"""Acceptance suite: one test per release criterion.

Each test prints a PASS line with the measured evidence so a plain
``pytest -s tests/test_acceptance.py`` doubles as the acceptance report.
Absolute voltages are synthetic; every criterion checks orderings,
identities or tolerances, not hardware magnitudes.
"""

import time
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from spikelab.acquisition import Trace, density, find_peak, smooth
from spikelab.aes import decrypt, encrypt, expand_key, invert_key_schedule
from spikelab.attacks import (
    DEFAULT_N_TRACES,
    DEFAULT_SIGMA_NOISE,
    aes_attack,
    aes_level1_separations,
    aes_noise_sweep,
    default_env,
    default_workloads,
    fingerprint_confusion,
    sike_attack,
    sike_poc_attack,
)
from spikelab.cli import EXIT_OK, main
from spikelab.microbench import HdLoop, execute
from spikelab.power import (
    ActivitySample,
    CmosParams,
    ThermalParams,
    ThermalState,
    dynamic_power,
    leakage_power,
    simulate_thermal,
    thermal_step,
    total_power,
)
from spikelab.sike import SikeKey
from spikelab.spike import SpikeParams
from spikelab.streams import stream

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
NOISELESS = SpikeParams(beta0=0.2, beta_ctx=1e-4, beta_res=400.0, sigma_noise=0.0)


def _sweep_rows(tmp_path, experiment, seed, traces):
    out = tmp_path / experiment
    code = main([
        "model-sweep", "--experiment", experiment, "--seed", str(seed),
        "--traces", str(traces), "--out", str(out),
    ])
    assert code == EXIT_OK
    rows = []
    for line in (out / f"{experiment}.csv").read_text().strip().split("\n")[1:]:
        x, label, mean, n = line.split(",")
        rows.append((int(x), label, float(mean), int(n)))
    return rows


def test_criterion_01_fig7_register_hwt_ordering(tmp_path):
    t0 = time.monotonic()
    n = 1000
    rows = _sweep_rows(tmp_path, "fig7", seed=1001, traces=n)
    means = [r[2] for r in rows]
    se = DEFAULT_SIGMA_NOISE / np.sqrt(n)
    gaps = [b - a for a, b in zip(means, means[1:])]
    assert all(g > 0 for g in gaps), "means must increase strictly with register HWT"
    # standard error of a mean difference
    assert all(g > 3 * se * np.sqrt(2) for g in gaps)
    elapsed = time.monotonic() - t0
    assert elapsed < 60
    print(f"\nPASS criterion 1: register-HWT sweep strictly increasing, "
          f"min gap {min(gaps):.4f} V vs 3*SE {3 * se * np.sqrt(2):.4f} V, {elapsed:.1f}s")


def test_criterion_02_fig9_loop_hwt_ordering(tmp_path):
    rows = _sweep_rows(tmp_path, "fig9", seed=1002, traces=1000)
    labels = sorted({r[1] for r in rows})
    assert len(labels) == 5
    for label in labels:
        series = sorted((r[0], r[2]) for r in rows if r[1] == label)
        means = [m for _, m in series]
        assert all(b > a for a, b in zip(means, means[1:])), label
    print(f"\nPASS criterion 2: processed-data HWT sweep increasing at every "
          f"fixed register HWT ({len(labels)} series x 5 points)")


def test_criterion_03_fig11_shift_ordering_and_hd_oracle(tmp_path):
    rows = _sweep_rows(tmp_path, "fig11", seed=1003, traces=1000)
    series = sorted((r[0], r[2]) for r in rows)
    means = [m for _, m in series]
    assert all(b > a for a, b in zip(means, means[1:]))
    # microbench oracle: per write the toggle count is exactly 4 * shift
    for shift, _ in series:
        profile, _ = execute(HdLoop(shift_value=shift, hwt_value=32, loop_itr=3))
        assert profile.hd_bits[1] == 24 * 4 * shift
        assert profile.hd_bits[1] // 24 == 4 * shift
    print("\nPASS criterion 3: shift sweep increasing; per-write HD = 4*shift exact")


def test_criterion_04_fig13_iteration_ordering_hot_above_cold(tmp_path):
    rows = _sweep_rows(tmp_path, "fig13", seed=1004, traces=1000)
    by_label = {}
    for x, label, mean, _ in rows:
        by_label.setdefault(label, {})[x] = mean
    for label, series in by_label.items():
        means = [series[x] for x in sorted(series)]
        assert all(b > a for a, b in zip(means, means[1:])), label
    for family in ("hw", "hd"):
        hot, cold = by_label[f"{family}_hot"], by_label[f"{family}_cold"]
        assert all(hot[x] > cold[x] for x in hot), family
    print("\nPASS criterion 4: mean peak increasing with iterations; "
          "hot task above cold task at every grid point (hw and hd families)")


def test_criterion_05_thermal_fixed_point_and_cooling():
    cp = CmosParams(v_dd=5.0, i_leak_scale=1e-9, theta_leak=600.0,
                    alpha_hwt=1e-5, alpha_hd=1e-5, p_short=0.05)
    tp = ThermalParams(c_th=1.0, r_th=5.0, t_amb=300.0)
    sample = ActivitySample(25 * 64, 0)
    p_dyn = dynamic_power(sample, cp)

    def residual(t):
        return t - tp.t_amb - tp.r_th * (p_dyn + leakage_power(t, cp) + cp.p_short)

    t_star = brentq(residual, tp.t_amb, tp.t_amb + 50.0, xtol=1e-12)
    state, _ = simulate_thermal([sample] * 500, cp, tp, 0.5)
    rel = abs(state.t - t_star) / t_star
    assert rel <= 0.005
    assert abs((state.t - tp.t_amb) - (t_star - tp.t_amb)) <= 0.005 * (t_star - tp.t_amb)

    cp0 = CmosParams(v_dd=5.0, i_leak_scale=0.0, theta_leak=0.0,
                     alpha_hwt=1e-5, alpha_hd=1e-5, p_short=0.0)
    st = ThermalState(315.0)
    prev = st.t
    for _ in range(400):
        st = thermal_step(st, total_power(ActivitySample(0, 0), st.t, cp0), tp, 0.5)
        assert st.t <= prev and st.t >= tp.t_amb
        prev = st.t
    assert abs(st.t - tp.t_amb) < 1e-6
    print(f"\nPASS criterion 5: steady state {state.t:.6f} K vs root-finder "
          f"{t_star:.6f} K (rel {rel:.2e}); cooling monotone to ambient within 1e-6 K")


def test_criterion_06_acquisition_pipeline():
    h = 0.37
    x = np.zeros(400)
    x[200] = h
    out = smooth(Trace(1e-6, x), 10)
    assert out.samples.max() == h / 10

    rng = stream(1006)
    checked = 0
    for _ in range(10_000):
        samples = rng.normal(size=100)
        idx, val = find_peak(Trace(1e-6, samples))
        best_i, best_v = 0, samples[0]
        for i, v in enumerate(samples):
            if v > best_v:
                best_i, best_v = i, v
        assert (idx, val) == (best_i, best_v)
        checked += 1

    d = density(rng.normal(size=5000), 20)
    integral = float(np.sum(d.probabilities * np.diff(d.bin_edges)))
    assert abs(integral - 1.0) <= 1e-9
    print(f"\nPASS criterion 6: impulse smooths to exactly h/10; argmax matches "
          f"brute force on {checked} traces; density integral = {integral:.12f}")


def test_criterion_07_four_byte_scenario_gap_ordering():
    env = default_env(1007, n_traces=200)
    key = bytes(int(b) for b in stream(1007, "k").integers(0, 256, 16))
    means = aes_level1_separations(key, env, encryptions_per_trace=500)
    sep_zeros = means["random"] - means["zeros"]
    sep_ones = means["random"] - means["ones"]
    assert abs(sep_zeros) > abs(sep_ones)
    print(f"\nPASS criterion 7: |sep(random, zeros)| = {abs(sep_zeros):.4f} V > "
          f"|sep(random, ones)| = {abs(sep_ones):.4f} V")


def test_criterion_08_poc_ladder_recovery_five_seeds():
    t0 = time.monotonic()
    for seed in (8101, 8102, 8103, 8104, 8105):
        env = default_env(seed, n_traces=200)
        key = SikeKey.random(64, stream(seed, "true-key"), first_bit=0)
        report = sike_poc_attack(key, env)
        assert report.recovered.bits == key.bits, f"seed {seed}"
        assert report.traces_used == 63 * 200
    elapsed = time.monotonic() - t0
    assert elapsed < 120
    print(f"\nPASS criterion 8: threshold attack recovered 64/64 bits on 5 seeds "
          f"at 200 traces/bit in {elapsed:.1f}s")


def test_criterion_09_sequential_ladder_recovery_five_seeds():
    t0 = time.monotonic()
    for seed in (9101, 9102, 9103, 9104, 9105):
        env = default_env(seed, n_traces=200)
        key = SikeKey.random(64, stream(seed, "true-key"), first_bit=0)
        report = sike_attack(key, env, iterations=4)
        assert report.recovered.bits == key.bits, f"seed {seed}"
        assert report.traces_used == 2 * 63 * 200
        # anomalous-hypothesis mean is lower whenever adjacent bits differ
        for t, (m1, m2) in enumerate(report.bit_means, start=1):
            if key.bits[t] != key.bits[t - 1]:
                assert m1 < m2, f"seed {seed} bit {t}"
    elapsed = time.monotonic() - t0
    assert elapsed < 300
    print(f"\nPASS criterion 9: sequential attack with auto separation limit and "
          f"4 amplification iterations recovered 64/64 on 5 seeds in {elapsed:.1f}s; "
          f"per-bit ordering holds at every differing pair")


def test_criterion_10_aes_recovery_and_noise_sweep():
    key = bytes(int(b) for b in stream(1010, "k").integers(0, 256, 16))
    k10 = expand_key(key).round10

    env0 = default_env(1010, n_traces=1, spike=NOISELESS)
    rep0 = aes_attack(key, env0, range(16), encryptions_per_trace=200)
    assert all(rep0.round10[t] == k10[t] for t in range(16))
    assert rep0.master_key == key

    env = default_env(1010, n_traces=200)
    targets = [1, 13, 15]
    scales = [1.0, 2.0, 4.0, 8.0, 16.0]
    sweep = aes_noise_sweep(key, env, targets, 2000, scales)
    for t in targets:
        assert sweep[1.0][t]["rank_of_true"] < 5, f"byte {t} not in bottom 5"
    table = ["    sigma_scale  " + "  ".join(f"byte{t:02d}" for t in targets)]
    for s in scales:
        cells = "  ".join(
            f"{'ok' if sweep[s][t]['recovered'] else 'miss'}:{sweep[s][t]['rank_of_true']:3d}"
            for t in targets
        )
        table.append(f"    x{s:<11g} {cells}")
    print("\nPASS criterion 10: noiseless run recovered 16/16 and inverted the "
          "master key; at default noise the true guess ranks in the bottom 5 "
          "for all tested bytes.  Noise sweep (recovered:rank):")
    print("\n".join(table))


def test_criterion_11_aes_correctness():
    key = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
    pt = bytes.fromhex("00112233445566778899aabbccddeeff")
    assert encrypt(pt, key).hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"

    rng = stream(1011)
    for _ in range(1000):
        k = bytes(int(b) for b in rng.integers(0, 256, 16))
        p = bytes(int(b) for b in rng.integers(0, 256, 16))
        assert decrypt(encrypt(p, k), k) == p
    for _ in range(100):
        k = bytes(int(b) for b in rng.integers(0, 256, 16))
        assert invert_key_schedule(expand_key(k).round10) == k
    print("\nPASS criterion 11: published test vector, 1000 encrypt/decrypt "
          "roundtrips, 100 key-schedule inversions")


def test_criterion_12_workload_fingerprinting():
    env = default_env(1012, n_traces=DEFAULT_N_TRACES)
    labels, matrix, accuracy, flagged = fingerprint_confusion(
        default_workloads(), env, trials_per_class=17, observed_per_trial=50
    )
    trials = int(matrix.sum())
    assert trials >= 100
    assert accuracy >= 0.90
    print(f"\nPASS criterion 12: nearest-centroid accuracy {accuracy:.3f} over "
          f"{trials} trials across {len(labels)} workload classes")


def test_criterion_13_cli_reproducibility(tmp_path):
    invocations = [
        ["model-sweep", "--experiment", "fig7", "--seed", "13", "--traces", "50"],
        ["model-sweep", "--experiment", "fig13", "--seed", "13", "--traces", "30"],
        ["sike-poc", "--key-bits", "16", "--key", "random", "--traces", "40", "--seed", "13"],
        ["sike-attack", "--key-bits", "16", "--key", "random", "--traces", "40", "--seed", "13"],
        ["aes-attack", "--key", "random", "--targets", "15", "--enc-per-trace", "200",
         "--traces", "30", "--noise-sweep", "1,4", "--seed", "13"],
        ["workload-id", "--classes", "4", "--traces", "30", "--seed", "13"],
        ["ingest", "--in", str(DATA_DIR / "sample_scope.csv"), "--smooth", "10", "--seed", "13"],
    ]
    checked = 0
    for k, argv in enumerate(invocations):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{k}{run}"
            code = main(argv + ["--out", str(out)])
            assert code in (0, 2)
            outs.append(out)
        files_a = sorted(p.name for p in outs[0].iterdir())
        files_b = sorted(p.name for p in outs[1].iterdir())
        assert files_a == files_b and files_a
        for name in files_a:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), (
                f"{argv[0]}: {name} differs between reruns"
            )
            checked += 1
    print(f"\nPASS criterion 13: {checked} output files byte-identical across "
          f"repeated runs of {len(invocations)} subcommand invocations")
