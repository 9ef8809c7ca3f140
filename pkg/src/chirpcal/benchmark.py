"""Learning-speed comparison between update rules and residual summaries."""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .calibration import ELEMENTS, CalibrationRecord, estimate_delay
from .chirp import ChirpParams, generate_chirp, phase_distance, wrap_phase
from .errors import BenchmarkError, DivergenceError, ParameterError
from .netsim import CaptureRecord, NetworkModel, PathModel, default_network, noise_seed, propagate
from .optimizer import Algorithm, OptimizerConfig, fit


@dataclass(frozen=True)
class FitScenario:
    """One path at one temperature; each seed draws a fresh noisy capture."""

    scenario_id: str
    params: ChirpParams
    path: PathModel
    temperature: float
    snr_db: Optional[float] = None

    def capture(self, seed: int) -> CaptureRecord:
        return propagate(self.params, self.path, self.temperature, self.snr_db, noise_seed(seed, 2))


def standard_scenario(params: Optional[ChirpParams] = None, network: Optional[NetworkModel] = None,
                      snr_db: Optional[float] = 30.0) -> FitScenario:
    """HPA loopback (P1) at the reference temperature, single pulse, 30 dB SNR."""
    params = params or ChirpParams()
    network = network or default_network()
    return FitScenario("P1-reference-noisy", params, network.paths["P1"], network.t_ref, snr_db)


@dataclass(frozen=True)
class RunRecord:
    algorithm: str
    seed: int
    converged_epoch: Optional[int]
    epochs_run: int
    final_cost: float
    amplitude: float
    phase: float
    diverged: bool = False


@dataclass(frozen=True)
class AlgorithmStats:
    runs: int
    converged_runs: int
    non_converged: int
    min: Optional[int]
    median: Optional[float]
    max: Optional[int]


@dataclass
class BenchmarkReport:
    scenario_id: str
    runs: List[RunRecord]
    curves: Dict[Tuple[str, int], Tuple[float, ...]] = field(repr=False)
    stats: Dict[str, AlgorithmStats]
    residuals: Optional["ResidualSummary"] = None

    def median(self, algorithm) -> Optional[float]:
        return self.stats[algorithm].median

    def faster(self, first: str, second: str) -> bool:
        """True when ``first`` has a strictly smaller median converged epoch."""
        a, b = self.median(first), self.median(second)
        if a is None:
            return False
        return b is None or a < b

    def to_dict(self):
        d = {
            "scenario_id": self.scenario_id,
            "runs": [asdict(r) for r in self.runs],
            "stats": {k: asdict(v) for k, v in self.stats.items()},
            "residuals": self.residuals.to_dict() if self.residuals else None,
        }
        if {Algorithm.ADAM.value, Algorithm.MOMENTUM.value} <= set(self.stats):
            d["adam_faster_than_momentum"] = self.faster(Algorithm.ADAM.value, Algorithm.MOMENTUM.value)
        return d

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_curves_csv(self, path, stride: int = 1):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["algorithm", "seed", "epoch", "E"])
            for (algorithm, seed), history in self.curves.items():
                last = len(history) - 1
                for epoch, e in enumerate(history):
                    if epoch % stride == 0 or epoch == last:
                        writer.writerow([algorithm, seed, epoch, repr(e)])


def _stats(runs: Sequence[RunRecord]) -> AlgorithmStats:
    epochs = [r.converged_epoch for r in runs if r.converged_epoch is not None]
    return AlgorithmStats(
        runs=len(runs),
        converged_runs=len(epochs),
        non_converged=len(runs) - len(epochs),
        min=min(epochs) if epochs else None,
        median=float(statistics.median(epochs)) if epochs else None,
        max=max(epochs) if epochs else None,
    )


def compare_learning_speed(scenario: FitScenario, algorithms=(Algorithm.ADAM, Algorithm.MOMENTUM),
                           seeds: Sequence[int] = tuple(range(20)),
                           config: OptimizerConfig = OptimizerConfig(),
                           init=(1.0, 0.0)) -> BenchmarkReport:
    """Fit the same captures with each algorithm; only the update rule differs."""
    if not seeds:
        raise ParameterError("need at least one seed")
    algorithms = [Algorithm(a) for a in algorithms]
    if not algorithms:
        raise ParameterError("need at least one algorithm")
    reference = generate_chirp(scenario.params.unit())
    runs: List[RunRecord] = []
    curves = {}
    for seed in seeds:
        capture = scenario.capture(seed)
        delay = estimate_delay(capture.pulse, reference)
        for algorithm in algorithms:
            cfg = replace(config, algorithm=algorithm)
            try:
                result = fit(capture.pulse, scenario.params, init=init, config=cfg, delay=delay)
            except DivergenceError as exc:
                runs.append(RunRecord(algorithm.value, seed, None, exc.epoch, math.inf,
                                      math.nan, math.nan, diverged=True))
                continue
            runs.append(RunRecord(algorithm.value, seed, result.converged_epoch, result.epochs_run,
                                  result.final_cost, result.amplitude, result.phase))
            curves[(algorithm.value, seed)] = result.error_history
    stats = {}
    for algorithm in algorithms:
        mine = [r for r in runs if r.algorithm == algorithm.value]
        if all(r.diverged for r in mine):
            raise BenchmarkError(f"every {algorithm.value} run diverged")
        stats[algorithm.value] = _stats(mine)
    return BenchmarkReport(scenario.scenario_id, runs, curves, stats)


@dataclass(frozen=True)
class ResidualRow:
    element: str
    uncomp_gain_db: float
    uncomp_phase_deg: float
    comp_gain_db: float
    comp_phase_deg: float


@dataclass(frozen=True)
class ResidualSummary:
    """Worst-case |value - reference| per element, before and after correction.

    ``comp_basis`` is ``"truth"`` when the corrected response was judged on
    simulated ground truth and ``"measured"`` otherwise (which is zero by
    construction of the factors).
    """

    rows: Tuple[ResidualRow, ...]
    comp_basis: str

    def row(self, element) -> ResidualRow:
        for r in self.rows:
            if r.element == element:
                return r
        raise KeyError(element)

    def to_dict(self):
        return {"rows": [asdict(r) for r in self.rows], "comp_basis": self.comp_basis}

    def table(self) -> str:
        header = f"{'':8s}{'HPA gain dB':>13s}{'HPA phase deg':>15s}{'LNA gain dB':>13s}{'LNA phase deg':>15s}"
        lines = [header]
        for label, g, p in (("Uncomp", "uncomp_gain_db", "uncomp_phase_deg"),
                            ("Comp", "comp_gain_db", "comp_phase_deg")):
            cells = []
            for element in ELEMENTS:
                try:
                    r = self.row(element)
                except KeyError:
                    cells += [f"{'-':>13s}", f"{'-':>15s}"]
                    continue
                cells += [f"{getattr(r, g):13.4f}", f"{getattr(r, p):15.4f}"]
            lines.append(f"{label:8s}" + "".join(cells))
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "HPA_gain_dB", "HPA_phase_deg", "LNA_gain_dB", "LNA_phase_deg"])
            for label, g, p in (("Uncomp", "uncomp_gain_db", "uncomp_phase_deg"),
                                ("Comp", "comp_gain_db", "comp_phase_deg")):
                out = [label]
                for element in ELEMENTS:
                    try:
                        r = self.row(element)
                        out += [repr(getattr(r, g)), repr(getattr(r, p))]
                    except KeyError:
                        out += ["", ""]
                writer.writerow(out)


def summarize_residuals(records: Sequence[CalibrationRecord]) -> ResidualSummary:
    if not records:
        raise ParameterError("no calibration records to summarise")
    use_truth = all(r.true_compensated_error() is not None for r in records)
    rows = []
    for element in ELEMENTS:
        mine = [r for r in records if r.element == element]
        if not mine:
            continue
        uncomp_g = max(abs(r.measured_gain_db - r.reference_gain_db) for r in mine)
        uncomp_p = max(phase_distance(r.measured_phase, r.reference_phase) for r in mine)
        if use_truth:
            errs = [r.true_compensated_error() for r in mine]
            comp_g = max(abs(g) for g, _ in errs)
            comp_p = max(abs(wrap_phase(p)) for _, p in errs)
        else:
            comp_g = max(abs(r.compensated_gain_db - r.reference_gain_db) for r in mine)
            comp_p = max(phase_distance(r.compensated_phase, r.reference_phase) for r in mine)
        rows.append(ResidualRow(element, uncomp_g, math.degrees(uncomp_p), comp_g, math.degrees(comp_p)))
    return ResidualSummary(tuple(rows), "truth" if use_truth else "measured")
