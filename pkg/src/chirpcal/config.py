"""Scenario files: a YAML document with chirp, network, sweep, optimizer,
calibration, benchmark and output sections.

Angles are degrees and delays nanoseconds in the file; everything is
converted to radians and seconds when the domain objects are built.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import yaml

from .chirp import DEFAULT_BANDWIDTH, DEFAULT_PRI, DEFAULT_PULSE_DURATION, DEFAULT_SAMPLE_RATE, ChirpParams
from .errors import ChirpCalError, ConfigError
from .netsim import (UNCOMP_HPA_GAIN_DB, UNCOMP_HPA_PHASE_DEG, UNCOMP_LNA_GAIN_DB, UNCOMP_LNA_PHASE_DEG,
                     AmplifierModel, DriftCurve, NetworkModel, PathModel)
from .optimizer import OptimizerConfig

OUTPUT_FORMATS = ("csv", "json", "bin")


def default_document() -> Dict[str, Any]:
    """The reference scenario as a plain nested dict."""
    return {
        "seed": 0,
        "chirp": {
            "pri": DEFAULT_PRI,
            "sample_rate": DEFAULT_SAMPLE_RATE,
            "bandwidth": DEFAULT_BANDWIDTH,
            "pulse_duration": DEFAULT_PULSE_DURATION,
            "frequency": None,
            "paper_literal_phase": False,
        },
        "network": {
            "snr_db": 30.0,
            "paths": {
                "P1": {"passive_gain_db": -30.0, "passive_phase_deg": -20.0, "group_delay_ns": 12.4},
                "P2": {"passive_gain_db": -25.0, "passive_phase_deg": 15.0, "group_delay_ns": 9.1},
                "P3": {"passive_gain_db": 0.0, "passive_phase_deg": 0.0, "group_delay_ns": 6.0,
                       "gain_drift_db": None, "phase_drift_deg": None},
            },
            "amplifiers": {
                "HPA": {
                    "reference_gain_db": 30.0,
                    "reference_phase_deg": 50.0,
                    "gain_drift_db": [[20.0, 0.0], [25.0, UNCOMP_HPA_GAIN_DB]],
                    "phase_drift_deg": [[20.0, 0.0], [25.0, -UNCOMP_HPA_PHASE_DEG]],
                },
                "LNA": {
                    "reference_gain_db": 25.0,
                    "reference_phase_deg": -35.0,
                    "gain_drift_db": [[20.0, 0.0], [22.5, round(-0.46 * UNCOMP_LNA_GAIN_DB, 10)],
                                      [25.0, -UNCOMP_LNA_GAIN_DB]],
                    "phase_drift_deg": [[20.0, 0.0], [22.5, round(0.52 * UNCOMP_LNA_PHASE_DEG, 10)],
                                        [25.0, UNCOMP_LNA_PHASE_DEG]],
                },
            },
        },
        "sweep": {"t_min": 20.0, "t_max": 25.0, "step": 0.2, "t_ref": 20.0, "pulses_per_dwell": 16},
        "optimizer": OptimizerConfig().to_dict(),
        "calibration": {"offsets": "auto", "reference": None,
                        "gate_gain_db": 0.06, "gate_phase_deg": 2.42},
        "benchmark": {"seeds": 20, "algorithms": ["adam", "momentum"], "snr_db": 30.0},
        "output": {"directory": "chirpcal-out", "formats": ["bin", "json"]},
    }


class _Reader:
    """Typed access to one mapping with dotted-path error messages."""

    def __init__(self, data, where):
        if not isinstance(data, dict):
            raise ConfigError(f"{where or 'document'}: expected a mapping, got {type(data).__name__}")
        self.data = data
        self.where = where
        self.seen = set()

    def _path(self, key):
        return f"{self.where}.{key}" if self.where else key

    def raw(self, key, default):
        self.seen.add(key)
        return self.data.get(key, default)

    def number(self, key, default, allow_none=False):
        value = self.raw(key, default)
        if value is None and allow_none:
            return None
        try:
            out = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{self._path(key)}: expected a number, got {value!r}") from None
        if math.isnan(out):
            raise ConfigError(f"{self._path(key)}: NaN is not allowed")
        return out

    def integer(self, key, default):
        value = self.raw(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{self._path(key)}: expected an integer, got {value!r}")
        try:
            out = int(value)
        except ValueError:
            raise ConfigError(f"{self._path(key)}: expected an integer, got {value!r}") from None
        if out != float(value):
            raise ConfigError(f"{self._path(key)}: expected an integer, got {value!r}")
        return out

    def boolean(self, key, default):
        value = self.raw(key, default)
        if not isinstance(value, bool):
            raise ConfigError(f"{self._path(key)}: expected true/false, got {value!r}")
        return value

    def string(self, key, default, choices=None):
        value = self.raw(key, default)
        if not isinstance(value, str):
            raise ConfigError(f"{self._path(key)}: expected a string, got {value!r}")
        if choices and value not in choices:
            raise ConfigError(f"{self._path(key)}: must be one of {', '.join(choices)}, got {value!r}")
        return value

    def section(self, key, default=None):
        value = self.raw(key, default if default is not None else {})
        return _Reader(value, self._path(key))

    def knots(self, key, default, allow_none=False):
        value = self.raw(key, default)
        if value is None and allow_none:
            return None
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{self._path(key)}: expected a list of [temperature, value] pairs")
        out = []
        for i, pair in enumerate(value):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(f"{self._path(key)}[{i}]: expected [temperature, value]")
            try:
                out.append((float(pair[0]), float(pair[1])))
            except (TypeError, ValueError):
                raise ConfigError(f"{self._path(key)}[{i}]: non-numeric entry {pair!r}") from None
        return tuple(out)

    def finish(self):
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ConfigError(f"{self.where or 'document'}: unknown field(s) {', '.join(map(str, extra))}")


@dataclass(frozen=True)
class ChirpSection:
    pri: float
    sample_rate: float
    bandwidth: float
    pulse_duration: float
    frequency: Optional[float]
    paper_literal_phase: bool


@dataclass(frozen=True)
class PathSection:
    passive_gain_db: float
    passive_phase_deg: float
    group_delay_ns: float
    gain_drift_db: Optional[Tuple[Tuple[float, float], ...]] = None
    phase_drift_deg: Optional[Tuple[Tuple[float, float], ...]] = None


@dataclass(frozen=True)
class AmplifierSection:
    reference_gain_db: float
    reference_phase_deg: float
    gain_drift_db: Tuple[Tuple[float, float], ...]
    phase_drift_deg: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class SweepSection:
    t_min: float
    t_max: float
    step: float
    t_ref: float
    pulses_per_dwell: int


@dataclass(frozen=True)
class CalibrationSection:
    offsets: Any  # "auto" or {path: (dB, deg)}
    reference: Optional[Dict[str, Tuple[float, float]]]
    gate_gain_db: float
    gate_phase_deg: float


@dataclass(frozen=True)
class BenchmarkSection:
    seeds: int
    algorithms: Tuple[str, ...]
    snr_db: Optional[float]


@dataclass(frozen=True)
class OutputSection:
    directory: str
    formats: Tuple[str, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    chirp: ChirpSection
    snr_db: Optional[float]
    paths: Dict[str, PathSection]
    amplifiers: Dict[str, AmplifierSection]
    sweep: SweepSection
    optimizer: OptimizerConfig
    calibration: CalibrationSection
    benchmark: BenchmarkSection
    output: OutputSection

    # -- parsing -----------------------------------------------------------
    @classmethod
    def from_dict(cls, doc) -> "ScenarioConfig":
        base = default_document()
        top = _Reader(doc if doc is not None else {}, "")
        seed = top.integer("seed", base["seed"])

        c = top.section("chirp")
        cd = base["chirp"]
        chirp = ChirpSection(
            pri=c.number("pri", cd["pri"]),
            sample_rate=c.number("sample_rate", cd["sample_rate"]),
            bandwidth=c.number("bandwidth", cd["bandwidth"]),
            pulse_duration=c.number("pulse_duration", cd["pulse_duration"]),
            frequency=c.number("frequency", cd["frequency"], allow_none=True),
            paper_literal_phase=c.boolean("paper_literal_phase", cd["paper_literal_phase"]),
        )
        c.finish()

        n = top.section("network")
        nd = base["network"]
        snr_db = n.number("snr_db", nd["snr_db"], allow_none=True)
        paths_r = n.section("paths", nd["paths"])
        paths = {}
        for pid in ("P1", "P2", "P3"):
            p = paths_r.section(pid, nd["paths"][pid])
            pdef = nd["paths"][pid]
            drift_ok = pid == "P3"
            paths[pid] = PathSection(
                passive_gain_db=p.number("passive_gain_db", pdef["passive_gain_db"]),
                passive_phase_deg=p.number("passive_phase_deg", pdef["passive_phase_deg"]),
                group_delay_ns=p.number("group_delay_ns", pdef["group_delay_ns"]),
                gain_drift_db=p.knots("gain_drift_db", None, allow_none=True) if drift_ok else None,
                phase_drift_deg=p.knots("phase_drift_deg", None, allow_none=True) if drift_ok else None,
            )
            p.finish()
        paths_r.finish()
        amps_r = n.section("amplifiers", nd["amplifiers"])
        amplifiers = {}
        for name in ("HPA", "LNA"):
            a = amps_r.section(name, nd["amplifiers"][name])
            ad = nd["amplifiers"][name]
            amplifiers[name] = AmplifierSection(
                reference_gain_db=a.number("reference_gain_db", ad["reference_gain_db"]),
                reference_phase_deg=a.number("reference_phase_deg", ad["reference_phase_deg"]),
                gain_drift_db=a.knots("gain_drift_db", ad["gain_drift_db"]),
                phase_drift_deg=a.knots("phase_drift_deg", ad["phase_drift_deg"]),
            )
            a.finish()
        amps_r.finish()
        n.finish()

        s = top.section("sweep")
        sd = base["sweep"]
        sweep = SweepSection(
            t_min=s.number("t_min", sd["t_min"]),
            t_max=s.number("t_max", sd["t_max"]),
            step=s.number("step", sd["step"]),
            t_ref=s.number("t_ref", sd["t_ref"]),
            pulses_per_dwell=s.integer("pulses_per_dwell", sd["pulses_per_dwell"]),
        )
        s.finish()

        o = top.section("optimizer")
        od = base["optimizer"]
        try:
            optimizer = OptimizerConfig(
                algorithm=o.string("algorithm", od["algorithm"], ("adam", "momentum")),
                stepsize=o.number("stepsize", od["stepsize"]),
                beta1=o.number("beta1", od["beta1"]),
                beta2=o.number("beta2", od["beta2"]),
                epsilon=o.number("epsilon", od["epsilon"]),
                momentum=o.number("momentum", od["momentum"]),
                max_epochs=o.integer("max_epochs", od["max_epochs"]),
                convergence_ratio=o.number("convergence_ratio", od["convergence_ratio"]),
                bias_correction=o.string("bias_correction", od["bias_correction"], ("standard", "paper")),
            )
        except ChirpCalError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"optimizer: {exc}") from None
        o.finish()

        k = top.section("calibration")
        kd = base["calibration"]
        offsets = k.raw("offsets", kd["offsets"])
        if offsets != "auto":
            offsets = _pair_table(offsets, "calibration.offsets", ("P1", "P2"))
        reference = k.raw("reference", kd["reference"])
        if reference is not None:
            reference = _pair_table(reference, "calibration.reference", ("HPA", "LNA"))
        calibration = CalibrationSection(
            offsets=offsets,
            reference=reference,
            gate_gain_db=k.number("gate_gain_db", kd["gate_gain_db"]),
            gate_phase_deg=k.number("gate_phase_deg", kd["gate_phase_deg"]),
        )
        k.finish()

        b = top.section("benchmark")
        bd = base["benchmark"]
        algorithms = b.raw("algorithms", bd["algorithms"])
        if not isinstance(algorithms, list) or not all(a in ("adam", "momentum") for a in algorithms):
            raise ConfigError(f"benchmark.algorithms: expected a list drawn from adam, momentum, got {algorithms!r}")
        benchmark = BenchmarkSection(
            seeds=b.integer("seeds", bd["seeds"]),
            algorithms=tuple(algorithms),
            snr_db=b.number("snr_db", bd["snr_db"], allow_none=True),
        )
        b.finish()

        out = top.section("output")
        outd = base["output"]
        formats = out.raw("formats", outd["formats"])
        if not isinstance(formats, list) or not all(f in OUTPUT_FORMATS for f in formats):
            raise ConfigError(f"output.formats: expected a list drawn from {', '.join(OUTPUT_FORMATS)}")
        output = OutputSection(directory=out.string("directory", outd["directory"]), formats=tuple(formats))
        out.finish()
        top.finish()

        cfg = cls(seed, chirp, snr_db, paths, amplifiers, sweep, optimizer, calibration, benchmark, output)
        try:
            cfg.chirp_params()
            cfg.network_model()
        except ChirpCalError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None
        return cfg

    @classmethod
    def from_yaml(cls, text: str, source: str = "<config>") -> "ScenarioConfig":
        try:
            doc = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
            raise ConfigError(f"{source}: {where}: {exc.problem}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        try:
            return cls.from_dict(doc)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_yaml(fh.read(), str(path))

    @classmethod
    def default(cls) -> "ScenarioConfig":
        return cls.from_dict(default_document())

    # -- serialisation -----------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        def knots(k):
            return None if k is None else [list(p) for p in k]

        paths = {}
        for pid, p in self.paths.items():
            entry = {"passive_gain_db": p.passive_gain_db, "passive_phase_deg": p.passive_phase_deg,
                     "group_delay_ns": p.group_delay_ns}
            if pid == "P3":
                entry["gain_drift_db"] = knots(p.gain_drift_db)
                entry["phase_drift_deg"] = knots(p.phase_drift_deg)
            paths[pid] = entry
        amps = {
            name: {"reference_gain_db": a.reference_gain_db, "reference_phase_deg": a.reference_phase_deg,
                   "gain_drift_db": knots(a.gain_drift_db), "phase_drift_deg": knots(a.phase_drift_deg)}
            for name, a in self.amplifiers.items()
        }
        cal = self.calibration

        def table(t):
            return t if t is None or t == "auto" else {k: list(v) for k, v in t.items()}

        return {
            "seed": self.seed,
            "chirp": dict(vars(self.chirp)),
            "network": {"snr_db": self.snr_db, "paths": paths, "amplifiers": amps},
            "sweep": dict(vars(self.sweep)),
            "optimizer": self.optimizer.to_dict(),
            "calibration": {"offsets": table(cal.offsets), "reference": table(cal.reference),
                            "gate_gain_db": cal.gate_gain_db, "gate_phase_deg": cal.gate_phase_deg},
            "benchmark": {"seeds": self.benchmark.seeds, "algorithms": list(self.benchmark.algorithms),
                          "snr_db": self.benchmark.snr_db},
            "output": {"directory": self.output.directory, "formats": list(self.output.formats)},
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def semantic_hash(self) -> str:
        """SHA-256 over everything except the output section."""
        doc = self.to_dict()
        doc.pop("output")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Re-parse with top-level or dotted-key overrides, e.g. ``{"sweep.t_max": 21}``."""
        doc = copy.deepcopy(self.to_dict())
        for dotted, value in changes.items():
            node = doc
            keys = dotted.split(".")
            for key in keys[:-1]:
                node = node[key]
            node[keys[-1]] = value
        return ScenarioConfig.from_dict(doc)

    # -- domain objects ----------------------------------------------------
    def chirp_params(self) -> ChirpParams:
        c = self.chirp
        return ChirpParams.from_bandwidth(c.bandwidth, c.pulse_duration, c.sample_rate, c.pri,
                                          frequency=c.frequency, paper_literal_phase=c.paper_literal_phase)

    def network_model(self, snr_db="config") -> NetworkModel:
        sw = self.sweep
        amps = {
            name: AmplifierModel(
                name, a.reference_gain_db, math.radians(a.reference_phase_deg), sw.t_ref,
                DriftCurve(a.gain_drift_db, tuple((t, math.radians(v)) for t, v in a.phase_drift_deg)))
            for name, a in self.amplifiers.items()
        }
        paths = {}
        for pid, p in self.paths.items():
            distortion = None
            if p.gain_drift_db is not None or p.phase_drift_deg is not None:
                distortion = DriftCurve(
                    p.gain_drift_db or ((sw.t_ref, 0.0),),
                    tuple((t, math.radians(v)) for t, v in (p.phase_drift_deg or ((sw.t_ref, 0.0),))))
            amp = {"P1": amps["HPA"], "P2": amps["LNA"]}.get(pid)
            paths[pid] = PathModel(pid, p.passive_gain_db, math.radians(p.passive_phase_deg),
                                   p.group_delay_ns * 1e-9, amp, distortion)
        snr = self.snr_db if snr_db == "config" else snr_db
        return NetworkModel(paths, sw.t_min, sw.t_max, sw.t_ref, sw.step, snr, sw.pulses_per_dwell, self.seed)

    def offset_table(self) -> Dict[str, Tuple[float, float]]:
        """Passive offsets in (dB, rad); ``auto`` uses the network's own passive characterisation."""
        if self.calibration.offsets == "auto":
            return self.network_model().offset_table()
        return {k: (v[0], math.radians(v[1])) for k, v in self.calibration.offsets.items()}

    def reference_table(self) -> Optional[Dict[str, Tuple[float, float]]]:
        ref = self.calibration.reference
        if ref is None:
            return None
        return {k: (v[0], math.radians(v[1])) for k, v in ref.items()}


def _pair_table(value, where, keys) -> Dict[str, Tuple[float, float]]:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected 'auto' or a mapping of {', '.join(keys)} to [dB, deg]")
    out = {}
    for key, pair in value.items():
        if key not in keys:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"{where}.{key}: expected [dB, deg]")
        try:
            out[key] = (float(pair[0]), float(pair[1]))
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{key}: non-numeric entry {pair!r}") from None
    return out
