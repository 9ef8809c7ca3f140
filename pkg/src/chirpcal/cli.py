"""Command-line front end: ``chirpcal simulate|calibrate|bench|fit``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import netsim
from .benchmark import compare_learning_speed, standard_scenario, summarize_residuals
from .calibration import estimate_delay, run_calibration, write_calibration_csv, write_calibration_json
from .chirp import SampledSignal, generate_chirp, read_signal_csv
from .config import OUTPUT_FORMATS, ScenarioConfig
from .errors import ChirpCalError, CoverageError
from .netsim import PATH_IDS, CaptureRecord, SweepPoint
from .optimizer import fit

OUT_DIR_ENV = "CHIRPCAL_OUT_DIR"
MANIFEST_NAME = "manifest.json"


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario YAML file (default: built-in scenario)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out-dir", type=Path,
                        help=f"output directory (default: ${OUT_DIR_ENV}, then the config)")
    common.add_argument("--format", action="append", choices=OUTPUT_FORMATS, dest="formats",
                        help="output format; repeat for several (default: from config)")
    common.add_argument("--paper-literal-phase", action="store_true",
                        help="use pi instead of 2*pi on the chirp frequency term")
    common.add_argument("--bias-correction", choices=("standard", "paper"),
                        help="Adam update variant")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="chirpcal", description="Chirp-pulse internal calibration with Adam fitting")
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the default scenario YAML and exit")
    sub = parser.add_subparsers(dest="command")

    sim = sub.add_parser("simulate", parents=[common], help="run the thermal sweep and write captures")
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", parents=[common], help="derive calibration factors from captures")
    cal.add_argument("manifest", type=Path, help="manifest.json written by 'simulate'")
    cal.add_argument("--gate", action="store_true",
                     help="exit nonzero unless compensated maxima meet the thresholds")
    cal.add_argument("--gain-threshold", type=float, help="gate limit in dB (default: from config)")
    cal.add_argument("--phase-threshold", type=float, help="gate limit in degrees (default: from config)")
    cal.set_defaults(func=cmd_calibrate)

    bench = sub.add_parser("bench", parents=[common], help="compare Adam and momentum learning speed")
    bench.add_argument("--algorithms", help="comma-separated subset of adam,momentum")
    bench.add_argument("--seeds", type=int, help="number of noise seeds")
    bench.add_argument("--curve-stride", type=int, default=1, help="keep every n-th epoch in the curve CSV")
    bench.set_defaults(func=cmd_bench)

    fit_p = sub.add_parser("fit", parents=[common], help="fit a single pulse from a signal CSV")
    fit_p.add_argument("signal", type=Path, help="CSV with columns index,t_seconds,i,q")
    fit_p.add_argument("--algorithm", choices=("adam", "momentum"))
    fit_p.add_argument("--stepsize", type=float)
    fit_p.add_argument("--max-epochs", type=int)
    fit_p.add_argument("--no-delay", action="store_true", help="skip group-delay estimation")
    fit_p.set_defaults(func=cmd_fit)
    return parser


def _load_config(args, fallback: ScenarioConfig | None = None) -> ScenarioConfig:
    if args.config is not None:
        cfg = ScenarioConfig.load(args.config)
    elif fallback is not None:
        cfg = fallback
    else:
        cfg = ScenarioConfig.default()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.paper_literal_phase:
        overrides["chirp.paper_literal_phase"] = True
    if args.bias_correction:
        overrides["optimizer.bias_correction"] = args.bias_correction
    if args.formats:
        overrides["output.formats"] = list(dict.fromkeys(args.formats))
    return cfg.with_overrides(**overrides) if overrides else cfg


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    if args.out_dir is not None:
        out = args.out_dir
    elif os.environ.get(OUT_DIR_ENV):
        out = Path(os.environ[OUT_DIR_ENV])
    else:
        out = Path(cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ChirpCalError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ChirpCalError(f"output directory {out} is not writable")
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    params = cfg.chirp_params()
    model = cfg.network_model()
    sweep = netsim.thermal_sweep(params, model)
    records = list(netsim.iter_records(sweep))

    files = {}
    formats = set(cfg.output.formats)
    if "csv" in formats:
        files["captures_csv"] = "captures.csv"
        netsim.write_captures_csv(records, out / files["captures_csv"])
    if "bin" in formats or not files:
        files["captures_bin"] = "captures.bin"
        netsim.write_captures_bin(records, out / files["captures_bin"])

    entries, offset = [], 0
    for rec in records:
        entries.append({
            "temperature": rec.temperature, "path": rec.path_id, "pulse_index": rec.pulse_index,
            "offset": offset, "n_samples": len(rec.pulse),
            "true_gain_db": rec.true_gain_db, "true_phase_deg": math.degrees(rec.true_phase),
            "true_delay_s": rec.true_delay,
        })
        offset += len(rec.pulse)
    manifest = {
        "config_hash": cfg.semantic_hash(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "files": files,
        "sample_rate": params.sample_rate,
        "temperatures": model.temperatures,
        "paths": list(PATH_IDS),
        "pulses_per_dwell": model.pulses_per_dwell,
        "capture_sets": [{"temperature": p.temperature, "path": pid, "pulses": len(p.captures[pid])}
                         for p in sweep for pid in PATH_IDS],
        "records": entries,
    }
    with open(out / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"simulated {len(model.temperatures)} temperatures x {len(PATH_IDS)} paths "
          f"x {model.pulses_per_dwell} pulses -> {out / MANIFEST_NAME}")
    return 0


def load_manifest_sweep(manifest_path: Path):
    """Rebuild sweep points (with ground truth) from a manifest and its capture file."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = manifest_path.parent
    files = manifest["files"]
    entries = manifest["records"]
    fs = manifest["sample_rate"]
    if "captures_bin" in files:
        pulses = netsim.read_captures_bin(base / files["captures_bin"],
                                         [(e["offset"], e["n_samples"]) for e in entries])
    else:
        table = netsim.read_captures_csv(base / files["captures_csv"])
        pulses = []
        for e in entries:
            key = (float(e["temperature"]), e["path"], int(e["pulse_index"]))
            if key not in table:
                raise ChirpCalError(f"capture {key} listed in manifest but absent from CSV")
            pulses.append(table[key])
    grouped = {}
    for e, samples in zip(entries, pulses):
        rec = CaptureRecord(
            temperature=float(e["temperature"]), path_id=e["path"],
            pulse=SampledSignal(samples, fs), true_gain_db=e["true_gain_db"],
            true_phase=math.radians(e["true_phase_deg"]), true_delay=e["true_delay_s"],
            pulse_index=int(e["pulse_index"]))
        grouped.setdefault(rec.temperature, {}).setdefault(rec.path_id, []).append(rec)
    temps = sorted(set(manifest["temperatures"]) | set(grouped))
    sweep = [SweepPoint(t, {pid: tuple(v) for pid, v in grouped.get(t, {}).items()}) for t in temps]
    return manifest, sweep


def cmd_calibrate(args) -> int:
    with open(args.manifest) as fh:
        embedded = ScenarioConfig.from_dict(json.load(fh)["config"])
    cfg = _load_config(args, fallback=embedded)
    out = _out_dir(args, cfg)
    _, sweep = load_manifest_sweep(args.manifest)
    try:
        records = run_calibration(sweep, cfg.chirp_params(), cfg.optimizer, cfg.sweep.t_ref,
                                  offsets=cfg.offset_table(), reference=cfg.reference_table())
    except CoverageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    formats = set(cfg.output.formats)
    write_calibration_csv(records, out / "calibration.csv")
    if "json" in formats:
        write_calibration_json(records, out / "calibration.json")
    summary = summarize_residuals(records)
    summary.write_csv(out / "residuals.csv")
    print(summary.table())
    print(f"(compensated rows judged on {summary.comp_basis} values)")
    if not args.gate:
        return 0
    gain_lim = args.gain_threshold if args.gain_threshold is not None else cfg.calibration.gate_gain_db
    phase_lim = args.phase_threshold if args.phase_threshold is not None else cfg.calibration.gate_phase_deg
    ok = all(r.comp_gain_db <= gain_lim and r.comp_phase_deg <= phase_lim for r in summary.rows)
    print(f"gate ({gain_lim} dB, {phase_lim} deg): {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    algorithms = list(cfg.benchmark.algorithms)
    if args.algorithms:
        algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    unknown = [a for a in algorithms if a not in ("adam", "momentum")]
    if unknown or not algorithms:
        raise _UsageError(f"unknown algorithm(s): {', '.join(unknown) or '(none given)'}")
    n_seeds = args.seeds if args.seeds is not None else cfg.benchmark.seeds
    if n_seeds < 1:
        raise _UsageError("--seeds must be >= 1")
    out = _out_dir(args, cfg)
    scenario = standard_scenario(cfg.chirp_params(), cfg.network_model(), cfg.benchmark.snr_db)
    seeds = [cfg.seed + i for i in range(n_seeds)]
    report = compare_learning_speed(scenario, algorithms, seeds, cfg.optimizer)
    report.write_json(out / "bench_report.json")
    report.write_curves_csv(out / "bench_curves.csv", stride=max(1, args.curve_stride))
    for name, st in report.stats.items():
        print(f"{name:9s} median converged epoch {st.median}  (min {st.min}, max {st.max}, "
              f"{st.non_converged} of {st.runs} not converged)")
    if {"adam", "momentum"} <= set(report.stats):
        verdict = "faster" if report.faster("adam", "momentum") else "NOT faster"
        print(f"adam is {verdict} than momentum on median converged epoch")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    overrides = {}
    if args.algorithm:
        overrides["algorithm"] = args.algorithm
    if args.stepsize is not None:
        overrides["stepsize"] = args.stepsize
    if args.max_epochs is not None:
        overrides["max_epochs"] = args.max_epochs
    opt = replace(cfg.optimizer, **overrides)
    params = cfg.chirp_params()
    signal = read_signal_csv(args.signal, sample_rate=params.sample_rate)
    out = _out_dir(args, cfg)
    delay = 0.0 if args.no_delay else estimate_delay(signal, generate_chirp(params.unit()))
    result = fit(signal, params, config=opt, delay=delay)
    result.write_json(out / "fit.json")
    result.write_history_csv(out / "fit_history.csv")
    print(f"A = {result.amplitude:.6f}  phase = {math.degrees(result.phase):.4f} deg  "
          f"E = {result.final_cost:.3e}  epochs = {result.epochs_run}  "
          f"converged_epoch = {result.converged_epoch}  delay = {delay * 1e9:.4f} ns")
    return 0


class _UsageError(Exception):
    pass


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(ScenarioConfig.default().to_yaml())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"chirpcal: error: {exc}", file=sys.stderr)
        return 2
    except ChirpCalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
