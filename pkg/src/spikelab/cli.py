"""Batch experiment runner.

Subcommands map one-to-one to the bench's experiments and attacks:

  model-sweep   microbenchmark sweeps (register HWT, loop HWT, shift HD,
                iteration count with hot/cold tasks)
  sike-poc      threshold-classified ladder key recovery
  sike-attack   sequential two-hypothesis ladder key recovery
  aes-attack    last-round AES key byte recovery
  workload-id   workload fingerprinting confusion matrix
  ingest        oscilloscope CSV to smoothed peak extraction

Every subcommand is reproducible: (config, seed) fully determines all
output bytes.  Exit codes: 0 full success, 2 partial recovery, 1 error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import attacks
from .acquisition import find_peak, mean_peak, smooth
from .attacks import AttackEnv
from .microbench import ConstLoop, HdLoop, HwtLoop
from .sike import SikeKey
from .spike import PeakSample, run_experiment
from .streams import derive_seed, stream
from .traceio import (
    default_manifest,
    read_manifest,
    read_oscilloscope_csv,
    read_peaks,
    write_peaks,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2

HWT_GRID = (0, 16, 32, 48, 64)
SHIFT_GRID = (2, 5, 10, 15, 20)
ITR_GRID = (8, 16, 32, 64, 128)
SWEEP_LOOP_ITR = 100


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1; argparse defaults to 2 (reserved for partial recovery)
    def error(self, message):
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, *, traces_default: int | None = None) -> None:
    p.add_argument("--config", type=Path, default=None, help="manifest-format config file")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--traces", type=int, default=traces_default,
                   help="traces per measurement (overrides config)")


def _resolve(args) -> tuple[AttackEnv, "object"]:
    """Build the attack environment from config file, defaults and flags."""
    if args.config is not None:
        manifest = read_manifest(args.config)
    else:
        manifest = default_manifest(args.seed if args.seed is not None else 0)
    seed = args.seed if args.seed is not None else manifest.master_seed
    n_traces = args.traces if getattr(args, "traces", None) else manifest.n_traces
    env = AttackEnv(
        cmos=manifest.cmos, thermal=manifest.thermal, spike=manifest.spike,
        dt=manifest.dt, master_seed=seed, n_traces=n_traces,
    )
    return env, manifest


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, newline="\n")


def _run_sweep_series(env: AttackEnv, experiment: str, series) -> list[tuple]:
    rows = []
    for label, points in series:
        for xi, (x, spec) in enumerate(points):
            seed = derive_seed(env.master_seed, "model-sweep", experiment, label, xi)
            peaks = run_experiment(
                spec, env.n_traces, seed,
                cmos=env.cmos, thermal=env.thermal, spike_params=env.spike,
                dt=env.dt, label=label,
            )
            rows.append((x, label, mean_peak(peaks), env.n_traces))
    return rows


def _sweep_definition(experiment: str):
    if experiment == "fig7":
        return [("const", [(h, ConstLoop(loop_itr=SWEEP_LOOP_ITR, hwt_value=h))
                           for h in HWT_GRID])]
    if experiment == "fig9":
        return [
            (f"hwt{h}", [(lv, HwtLoop(hwt_value_loop=lv, hwt_value=h, loop_itr=SWEEP_LOOP_ITR))
                         for lv in HWT_GRID])
            for h in HWT_GRID
        ]
    if experiment == "fig11":
        return [("hwt32", [(s, HdLoop(shift_value=s, hwt_value=32, loop_itr=SWEEP_LOOP_ITR))
                           for s in SHIFT_GRID])]
    if experiment == "fig13":
        return [
            ("hw_cold", [(n, HwtLoop(0, 0, n)) for n in ITR_GRID]),
            ("hw_hot", [(n, HwtLoop(64, 64, n)) for n in ITR_GRID]),
            ("hd_cold", [(n, HdLoop(2, 0, n)) for n in ITR_GRID]),
            ("hd_hot", [(n, HdLoop(20, 64, n)) for n in ITR_GRID]),
        ]
    raise ValueError(f"unknown experiment: {experiment}")


def _cmd_model_sweep(args) -> int:
    env, _ = _resolve(args)
    rows = _run_sweep_series(env, args.experiment, _sweep_definition(args.experiment))
    lines = ["x,label,mean_peak_v,n"]
    lines += [f"{x},{label},{mean!r},{n}" for x, label, mean, n in rows]
    _write(args.out / f"{args.experiment}.csv", "\n".join(lines) + "\n")
    print(f"wrote {args.out / (args.experiment + '.csv')} ({len(rows)} rows)")
    return EXIT_OK


def _parse_sike_key(args, env: AttackEnv) -> SikeKey:
    if args.key == "random":
        return SikeKey.random(args.key_bits, stream(env.master_seed, "true-key"), first_bit=0)
    key = SikeKey.from_hex(args.key, args.key_bits)
    if key.bits[0] != 0:
        raise ValueError("bit 0 must be 0: recovery fixes the first key bit by convention")
    return key


def _sike_outputs(args, true_key: SikeKey, report) -> int:
    lines = ["bit,mean_value_1,mean_value_2,recovered_bit"]
    for t, (m1, m2) in enumerate(report.bit_means, start=1):
        m2s = "" if m2 is None else repr(m2)
        lines.append(f"{t},{m1!r},{m2s},{report.recovered.bits[t]}")
    _write(args.out / "sike_bit_means.csv", "\n".join(lines) + "\n")

    matches = sum(a == b for a, b in zip(report.recovered.bits, true_key.bits))
    total = len(true_key)
    text = [
        f"mode: {report.mode}",
        f"key bits: {total}",
        f"true key:      {true_key.to_hex()}",
        f"recovered key: {report.recovered.to_hex()}",
        f"recovered {matches}/{total} bits",
        f"separation limit: {report.sep_limit!r}",
        f"traces consumed: {report.traces_used}",
    ]
    _write(args.out / "report.txt", "\n".join(text) + "\n")
    print("\n".join(text))
    return EXIT_OK if matches == total else EXIT_PARTIAL


def _cmd_sike_poc(args) -> int:
    env, _ = _resolve(args)
    true_key = _parse_sike_key(args, env)
    threshold = None if args.sep_limit == "auto" else float(args.sep_limit)
    report = attacks.sike_poc_attack(true_key, env, threshold=threshold)
    return _sike_outputs(args, true_key, report)


def _cmd_sike_attack(args) -> int:
    env, manifest = _resolve(args)
    true_key = _parse_sike_key(args, env)
    sep = None if args.sep_limit == "auto" else float(args.sep_limit)
    iterations = args.iterations if args.iterations else manifest.sike_iterations
    report = attacks.sike_attack(true_key, env, sep_limit=sep, iterations=iterations)
    return _sike_outputs(args, true_key, report)


def _cmd_aes_attack(args) -> int:
    env, manifest = _resolve(args)
    if args.key == "random":
        true_key = bytes(int(b) for b in stream(env.master_seed, "true-key").integers(0, 256, 16))
    else:
        true_key = bytes.fromhex(args.key)
        if len(true_key) != 16:
            raise ValueError("key must be 32 hex digits (AES-128)")
    targets = (
        list(range(16)) if args.targets == "all"
        else [int(t) for t in args.targets.split(",")]
    )
    enc = args.enc_per_trace if args.enc_per_trace else manifest.encryptions_per_trace

    report = attacks.aes_attack(true_key, env, targets, encryptions_per_trace=enc)
    from .aes import expand_key  # local import keeps CLI deps obvious

    k10 = expand_key(true_key).round10
    for t in sorted(report.scans):
        scan = report.scans[t]
        lines = ["guess,mean_peak_v"]
        lines += [f"{g},{scan.means[g]!r}" for g in range(256)]
        _write(args.out / f"guess_means_byte{t:02d}.csv", "\n".join(lines) + "\n")

    correct = {t: report.round10[t] == k10[t] for t in report.round10}
    n_correct = sum(correct.values())
    unrecovered = 16 - n_correct
    recovered_hex = "".join(
        f"{report.round10[t]:02x}" if t in report.round10 else ".." for t in range(16)
    )
    text = [
        f"targets: {','.join(str(t) for t in sorted(report.round10))}",
        f"encryptions per trace: {report.encryptions_per_trace}",
        f"traces consumed: {report.traces_used}",
        f"true round-10 key: {k10.hex()}",
        f"recovered bytes:   {recovered_hex}",
    ]
    for t in sorted(report.scans):
        status = "ok" if correct[t] else "WRONG"
        text.append(
            f"byte {t:2d}: guess 0x{report.round10[t]:02x} ({status}), "
            f"margin {report.scans[t].margin!r}"
        )
    text.append(f"correct bytes: {n_correct}/{len(correct)} tested")
    text.append(f"residual key search complexity: 2^{8 * unrecovered}")
    if report.master_key is not None:
        text.append(f"inverted master key: {report.master_key.hex()}")
        text.append(f"master key correct: {report.master_key == true_key}")

    if args.noise_sweep:
        scales = [float(s) for s in args.noise_sweep.split(",")]
        sweep = attacks.aes_noise_sweep(true_key, env, targets, enc, scales)
        text.append("noise sweep (sigma scale: recovered bytes, per-byte rank of true guess):")
        for scale in scales:
            per_byte = sweep[scale]
            got = sum(1 for t in per_byte if per_byte[t]["recovered"])
            ranks = ",".join(f"{t}:{per_byte[t]['rank_of_true']}" for t in sorted(per_byte))
            text.append(f"  x{scale:g}: {got}/{len(per_byte)} recovered; ranks {ranks}")

    _write(args.out / "report.txt", "\n".join(text) + "\n")
    print("\n".join(text))
    return EXIT_OK if all(correct.values()) else EXIT_PARTIAL


def _cmd_workload_id(args) -> int:
    env, _ = _resolve(args)
    workloads = attacks.default_workloads()
    if not (2 <= args.classes <= len(workloads)):
        raise ValueError(f"--classes must be in 2..{len(workloads)}")
    classes = dict(list(workloads.items())[: args.classes])
    trials = -(-100 // args.classes)  # ceil: about 100 trials overall
    labels, matrix, accuracy, flagged = attacks.fingerprint_confusion(
        classes, env, trials_per_class=trials, observed_per_trial=env.n_traces,
    )

    lines = ["label," + ",".join(labels)]
    lines += [f"{lbl}," + ",".join(str(int(v)) for v in matrix[i]) for i, lbl in enumerate(labels)]
    _write(args.out / "confusion.csv", "\n".join(lines) + "\n")

    text = [
        f"classes: {','.join(labels)}",
        f"trials per class: {trials}, peaks per trial: {env.n_traces}",
        f"accuracy: {accuracy!r}",
    ]
    if flagged:
        text += [f"indistinguishable: {a} ~ {b}" for a, b in flagged]
    _write(args.out / "report.txt", "\n".join(text) + "\n")
    print("\n".join(text))
    return EXIT_OK


def _cmd_ingest(args) -> int:
    env, _ = _resolve(args)
    trace = read_oscilloscope_csv(args.infile)
    smoothed = smooth(trace, args.smooth)
    idx, value = find_peak(smoothed)

    args.out.mkdir(parents=True, exist_ok=True)
    peaks_path = args.out / "peaks.csv"
    existing = read_peaks(peaks_path) if peaks_path.exists() else []
    run_id = max((p.seed_index for p in existing), default=-1) + 1
    label = Path(args.infile).stem
    write_peaks(existing + [PeakSample(value=value, label=label, seed_index=run_id)], peaks_path)
    print(f"peak {value!r} V at sample {idx}; appended run {run_id} to {peaks_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikelab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model-sweep", help="microbenchmark mean-peak sweeps")
    p.add_argument("--experiment", required=True, choices=("fig7", "fig9", "fig11", "fig13"))
    _add_common(p)
    p.set_defaults(func=_cmd_model_sweep)

    for name, func in (("sike-poc", _cmd_sike_poc), ("sike-attack", _cmd_sike_attack)):
        p = sub.add_parser(name, help=f"{name} key recovery")
        p.add_argument("--key-bits", type=int, default=64)
        p.add_argument("--key", default="random", help="'random' or a hex key")
        p.add_argument("--sep-limit", default="auto", help="'auto' or a voltage")
        if name == "sike-attack":
            p.add_argument("--iterations", type=int, default=None,
                           help="amplification decapsulations per trace")
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("aes-attack", help="AES last-round key byte recovery")
    p.add_argument("--key", default="random", help="'random' or 32 hex digits")
    p.add_argument("--targets", default="all", help="'all' or comma-separated byte indices")
    p.add_argument("--enc-per-trace", type=int, default=None)
    p.add_argument("--noise-sweep", default=None,
                   help="comma-separated sigma multipliers for the sweep table")
    _add_common(p)
    p.set_defaults(func=_cmd_aes_attack)

    p = sub.add_parser("workload-id", help="workload fingerprinting confusion matrix")
    p.add_argument("--classes", type=int, default=6)
    _add_common(p, traces_default=50)
    p.set_defaults(func=_cmd_workload_id)

    p = sub.add_parser("ingest", help="ingest an oscilloscope CSV dump")
    p.add_argument("--in", dest="infile", type=Path, required=True)
    p.add_argument("--smooth", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=_cmd_ingest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
