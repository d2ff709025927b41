import numpy as np
import pytest

from spikelab.acquisition import find_peak, smooth
from spikelab.microbench import HwtLoop, RegisterSnapshot, encode_hwt, execute
from spikelab.power import ActivityProfile, CmosParams, ThermalParams, ThermalState, simulate_thermal
from spikelab.spike import PeakSample, SpikeParams, run_experiment, spike_amplitude, spike_index, synthesize_trace
from spikelab.streams import stream

CP = CmosParams(v_dd=5.0, i_leak_scale=1e-9, theta_leak=600.0,
                alpha_hwt=1e-5, alpha_hd=1e-5, p_short=0.05)
TP = ThermalParams(c_th=1.0, r_th=5.0, t_amb=300.0)
SP = SpikeParams(beta0=0.2, beta_ctx=1e-4, beta_res=400.0, sigma_noise=0.0864)
SP0 = SpikeParams(beta0=0.2, beta_ctx=1e-4, beta_res=400.0, sigma_noise=0.0)


def test_spike_params_validation():
    with pytest.raises(ValueError):
        SpikeParams(0.0, 1e-4, 400.0, 0.1)
    with pytest.raises(ValueError):
        SpikeParams(0.2, 1e-4, 400.0, -0.1)


def test_amplitude_baseline_only():
    snap = RegisterSnapshot.filled(0)
    amp = spike_amplitude(snap, ThermalState(TP.t_amb), TP, SP0, stream(0))
    assert amp == SP0.beta0


def test_amplitude_direct_evaluation():
    sp = SpikeParams(beta0=0.1, beta_ctx=1e-4, beta_res=400.0, sigma_noise=0.0)
    snap = RegisterSnapshot.filled(encode_hwt(16))  # 27 regs at HWT 16
    amp = spike_amplitude(snap, ThermalState(TP.t_amb), TP, sp, stream(0))
    assert amp == pytest.approx(0.1 + 1e-4 * 432, rel=1e-12)


def test_amplitude_monotone_in_register_weight():
    hot = RegisterSnapshot.filled(encode_hwt(64))
    cold = RegisterSnapshot.filled(0)
    th = ThermalState(302.0)
    assert spike_amplitude(hot, th, TP, SP0, stream(0)) > spike_amplitude(cold, th, TP, SP0, stream(0))


def test_amplitude_linear_in_both_signatures():
    th0, th1, th2 = ThermalState(300.0), ThermalState(301.0), ThermalState(302.0)
    snap0 = RegisterSnapshot.filled(0)
    a = spike_amplitude(snap0, th0, TP, SP0, stream(0))
    b = spike_amplitude(snap0, th1, TP, SP0, stream(0))
    c = spike_amplitude(snap0, th2, TP, SP0, stream(0))
    assert c - b == pytest.approx(b - a, rel=1e-9)
    s1 = RegisterSnapshot.filled(encode_hwt(1))
    s2 = RegisterSnapshot.filled(encode_hwt(2))
    d = spike_amplitude(s1, th0, TP, SP0, stream(0))
    e = spike_amplitude(s2, th0, TP, SP0, stream(0))
    assert e - d == pytest.approx(d - a, rel=1e-9)


def test_amplitude_rejects_subambient_state():
    with pytest.raises(ValueError):
        spike_amplitude(RegisterSnapshot.filled(0), ThermalState(299.0), TP, SP, stream(0))


def test_mean_converges_to_noiseless_amplitude():
    snap = RegisterSnapshot.filled(encode_hwt(32))
    th = ThermalState(300.5)
    analytic = spike_amplitude(snap, th, TP, SP0, stream(1))
    n = 400
    amps = [spike_amplitude(snap, th, TP, SP, stream(1, i)) for i in range(n)]
    assert abs(np.mean(amps) - analytic) <= 4 * SP.sigma_noise / np.sqrt(n)


def test_synthesize_empty_series_spike_only():
    tr = synthesize_trace(np.array([]), 0.2, 0.5, 4, stream(0))
    assert tr.samples.max() == 0.2
    assert int(np.argmax(tr.samples)) == spike_index(0, 4) == 0
    assert len(tr) >= 21  # spike + quiet floor


def test_synthesize_doubling_spike_doubles_peak_over_floor():
    tr1 = synthesize_trace(np.array([0.01, 0.02]), 0.3, 0.5, 3, stream(0), floor_v=0.0)
    tr2 = synthesize_trace(np.array([0.01, 0.02]), 0.6, 0.5, 3, stream(0), floor_v=0.0)
    floor = 0.0
    assert tr2.samples.max() - floor == pytest.approx(2 * (tr1.samples.max() - floor), rel=1e-12)


def test_synthesize_body_mapping_and_dt():
    powers = np.array([0.1, 0.2])
    tr = synthesize_trace(powers, 1.0, 0.5, 4, stream(0), gain_v_per_w=2.0, floor_v=0.05)
    assert len(tr) == 8 + 1 + 24
    assert np.allclose(tr.samples[:4], 0.2)
    assert np.allclose(tr.samples[4:8], 0.4)
    assert tr.samples[spike_index(2, 4)] == 1.0
    assert np.allclose(tr.samples[9:], 0.05)
    assert tr.dt_s == pytest.approx(0.5 / 4)


def test_synthesized_spike_recovered_through_smoothing():
    # spike 5x the body level, seeded noise; peak lands within the window
    body = np.full(60, 0.1)
    spike_v = 0.5
    tr = synthesize_trace(body, spike_v, 0.5, 4, stream(42), gain_v_per_w=1.0,
                          floor_v=0.05, sigma_noise=0.01)
    idx_true = spike_index(60, 4)
    idx, _ = find_peak(smooth(tr, 10))
    assert abs(idx - idx_true) <= 10


def test_run_experiment_deterministic():
    spec = HwtLoop(hwt_value_loop=16, hwt_value=32, loop_itr=20)
    kw = dict(cmos=CP, thermal=TP, spike_params=SP, dt=0.5, label="x")
    a = run_experiment(spec, 50, 123, **kw)
    b = run_experiment(spec, 50, 123, **kw)
    assert a == b
    c = run_experiment(spec, 50, 124, **kw)
    assert a != c


def test_run_experiment_single_noiseless_trace_is_analytic():
    spec = HwtLoop(hwt_value_loop=16, hwt_value=32, loop_itr=20)
    peaks = run_experiment(spec, 1, 9, cmos=CP, thermal=TP, spike_params=SP0, dt=0.5)
    profile, snap = execute(spec)
    state, _ = simulate_thermal(profile, CP, TP, 0.5)
    expect = spike_amplitude(snap, state, TP, SP0, stream(9, 0))
    assert peaks[0].value == expect


def test_run_experiment_matches_manual_per_repetition_loop_any_order():
    spec = HwtLoop(hwt_value_loop=8, hwt_value=16, loop_itr=10)
    peaks = run_experiment(spec, 30, 77, cmos=CP, thermal=TP, spike_params=SP, dt=0.5)
    profile, snap = execute(spec)
    state, _ = simulate_thermal(profile, CP, TP, 0.5)
    manual = {}
    for i in reversed(range(30)):  # evaluation order must not matter
        manual[i] = spike_amplitude(snap, state, TP, SP, stream(77, i))
    assert [p.value for p in peaks] == [manual[i] for i in range(30)]
    assert [p.seed_index for p in peaks] == list(range(30))


class _RandomSnapshotVictim:
    """Stochastic victim: random register contents, no loop activity."""

    def run(self, rng):
        regs = tuple(int(w) for w in rng.integers(0, (1 << 64) - 1, size=27, dtype=np.uint64, endpoint=True))
        profile = ActivityProfile(np.zeros(3, dtype=np.int64), np.zeros(3, dtype=np.int64))
        return profile, RegisterSnapshot(regs)


def test_run_experiment_stochastic_victim_deterministic_per_seed():
    kw = dict(cmos=CP, thermal=TP, spike_params=SP, dt=0.5)
    a = run_experiment(_RandomSnapshotVictim(), 20, 5, **kw)
    b = run_experiment(_RandomSnapshotVictim(), 20, 5, **kw)
    assert a == b


def test_register_sweep_means_strictly_increase():
    kw = dict(cmos=CP, thermal=TP, spike_params=SP, dt=0.5)
    means = []
    for h in (0, 16, 32, 48, 64):
        peaks = run_experiment(HwtLoop(hwt_value_loop=8, hwt_value=h, loop_itr=20), 1000, 31, **kw)
        means.append(np.mean([p.value for p in peaks]))
    assert all(b > a for a, b in zip(means, means[1:]))


def test_peak_sample_validation():
    with pytest.raises(ValueError):
        PeakSample(float("nan"))
