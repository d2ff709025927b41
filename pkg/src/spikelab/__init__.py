"""Desk-scale laboratory for sleep-triggered context-switch power spikes.

Simulates the power spike emitted when the kernel switches away from a
victim task, including the register-weight signature captured at the
switch and the residual thermal signature of the work done before it,
and runs the key-recovery and fingerprinting analyses that consume those
spikes.  Real oscilloscope dumps can be ingested through the same
acquisition pipeline.
"""

from .acquisition import Density, Trace, density, find_peak, mean_peak, separation, smooth
from .attacks import (
    AttackEnv,
    AesAttackReport,
    ByteScan,
    InconsistencyError,
    SikeAttackReport,
    aes_attack,
    aes_level1_separations,
    aes_noise_sweep,
    calibrate_poc_band,
    calibrate_sep_limit,
    default_env,
    default_probe_key,
    default_workloads,
    fingerprint_confusion,
    sike_attack,
    sike_poc_attack,
    workload_fingerprint,
)
from .aes import (
    FinalRoundProfile,
    RoundKeys,
    decrypt,
    encrypt,
    expand_key,
    final_round_profile,
    generate_plaintext,
    invert_key_schedule,
)
from .microbench import (
    ConstLoop,
    HdLoop,
    HwtLoop,
    MicrobenchSpec,
    RegisterSnapshot,
    encode_hwt,
    execute,
    hamming_distance,
    hamming_weight,
)
from .power import (
    ActivityProfile,
    ActivitySample,
    CmosParams,
    ThermalParams,
    ThermalState,
    dynamic_power,
    leakage_power,
    simulate_thermal,
    simulate_thermal_batch,
    thermal_step,
    total_power,
)
from .sike import CraftedCiphertext, SikeKey, anomaly_triggered, decapsulate_profile, generate_ciphertext
from .spike import PeakSample, SpikeParams, run_experiment, spike_amplitude, synthesize_trace
from .streams import derive_seed, stream
from .traceio import (
    ExperimentManifest,
    ManifestError,
    TraceParseError,
    default_manifest,
    read_manifest,
    read_oscilloscope_csv,
    read_peaks,
    read_trace,
    write_manifest,
    write_peaks,
    write_trace,
)

__version__ = "0.1.0"
