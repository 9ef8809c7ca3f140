"""Amplifier gain/phase measurement and drift compensation.

Pipeline per temperature: coherently sum each dwell, estimate the path's group
delay by cross-correlation, fit (A, w) against a model chirp delayed by that
amount, ratio each active path against P3, and derive the factors that map
the measured response back onto the reference-temperature response.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .chirp import (ChirpParams, SampledSignal, amplitude_to_db, apply_delay, db_to_amplitude,
                    generate_chirp, wrap_phase)
from .errors import CoverageError, DelayRangeError, MeasurementError, ParameterError
from .netsim import ACTIVE_PATH, PATH_IDS, CaptureRecord, SweepPoint
from .optimizer import OptimizerConfig, _check_compatible, fit

ELEMENTS = ("HPA", "LNA")

# sub-sample polish tolerance; estimates this close to an integer lag snap to it
DELAY_XATOL = 1e-7
DELAY_SNAP = 10 * DELAY_XATOL


@dataclass(frozen=True)
class PathMeasurement:
    path_id: str
    temperature: float
    amplitude: float
    phase: float
    delay: float
    final_cost: float
    epochs: int
    converged_epoch: Optional[int] = None
    # ground truth carried over from simulation, when known
    true_gain_db: Optional[float] = None
    true_phase: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "phase", wrap_phase(self.phase))


@dataclass(frozen=True)
class AmplifierMeasurement:
    element: str
    temperature: float
    gain_db: float
    phase: float
    true_gain_db: Optional[float] = None
    true_phase: Optional[float] = None

    def __post_init__(self):
        if self.element not in ELEMENTS:
            raise ParameterError(f"unknown element {self.element!r}")
        object.__setattr__(self, "phase", wrap_phase(self.phase))


@dataclass(frozen=True)
class CalibrationRecord:
    element: str
    temperature: float
    measured_gain_db: float
    measured_phase: float
    reference_gain_db: float
    reference_phase: float
    k: float
    theta: float
    compensated_gain_db: float
    compensated_phase: float
    # element response after correction, judged on simulated ground truth
    true_gain_db: Optional[float] = None
    true_phase: Optional[float] = None
    true_reference_gain_db: Optional[float] = None
    true_reference_phase: Optional[float] = None

    @property
    def k_db(self) -> float:
        return amplitude_to_db(self.k)

    def true_compensated_error(self):
        """(gain dB, phase rad) left over when (k, theta) are applied to the true response."""
        if self.true_gain_db is None or self.true_reference_gain_db is None:
            return None
        gain = self.true_gain_db + self.k_db - self.true_reference_gain_db
        phase = wrap_phase(self.true_phase + self.theta - self.true_reference_phase)
        return gain, phase

    def to_dict(self):
        return asdict(self)


def _correlate(received: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Linear cross-correlation magnitude for lags -(N-1)..(N-1)."""
    n = received.size
    size = 2 * n
    spec = np.fft.fft(received, size) * np.conj(np.fft.fft(reference, size))
    corr = np.fft.ifft(spec)
    # lags 0..n-1 then -(n-1)..-1 -> reorder ascending
    return np.abs(np.concatenate([corr[n + 1:], corr[:n]]))


def estimate_delay(received: SampledSignal, reference: SampledSignal, refine: bool = True) -> float:
    """Group delay (seconds) of ``received`` relative to ``reference``.

    Integer lag from the cross-correlation peak, refined by a parabola through
    the peak and its neighbours.  With ``refine`` the estimate is then polished
    by maximising the normalised correlation against a fractionally delayed
    copy of the reference within half a sample of the parabolic estimate.
    """
    _check_compatible(received, reference)
    n = len(received)
    mag = _correlate(received.samples, reference.samples)
    peak = int(np.argmax(mag))
    if peak == 0 or peak == mag.size - 1:
        raise DelayRangeError("cross-correlation peak at the edge of the lag range")
    y0, y1, y2 = mag[peak - 1], mag[peak], mag[peak + 1]
    denom = y0 - 2 * y1 + y2
    offset = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    lag = peak - (n - 1) + offset
    fs = received.sample_rate
    if not refine:
        return lag / fs

    limit = n - 1

    def neg_match(lag_samples):
        shifted = apply_delay(reference, lag_samples / fs).samples
        energy = np.vdot(shifted, shifted).real
        if energy == 0:
            return 0.0
        return -abs(np.vdot(shifted, received.samples)) / math.sqrt(energy)

    lo, hi = max(lag - 0.5, -limit + 1e-6), min(lag + 0.5, limit - 1e-6)
    res = minimize_scalar(neg_match, bounds=(lo, hi), method="bounded",
                          options={"xatol": DELAY_XATOL})
    best = res.x if res.fun <= neg_match(lag) else lag
    if abs(best - round(best)) <= DELAY_SNAP:
        # below the polish resolution; an integer shift keeps the model basis exact
        best = float(round(best))
    return best / fs


def measure_path(capture: CaptureRecord, generator: ChirpParams,
                 config: OptimizerConfig = OptimizerConfig(), estimate: bool = True) -> PathMeasurement:
    """Fit amplitude and phase of one capture after aligning for group delay."""
    reference = generate_chirp(generator.unit())
    delay = estimate_delay(capture.pulse, reference) if estimate else 0.0
    context = f"path {capture.path_id}, {capture.temperature:g} C"
    result = fit(capture.pulse, generator, config=config, delay=delay, context=context)
    return PathMeasurement(
        path_id=capture.path_id,
        temperature=capture.temperature,
        amplitude=result.amplitude,
        phase=result.phase,
        delay=delay,
        final_cost=result.final_cost,
        epochs=result.epochs_run,
        converged_epoch=result.converged_epoch,
        true_gain_db=capture.true_gain_db,
        true_phase=capture.true_phase,
    )


def coherent_sum(pulses: Sequence[SampledSignal]) -> SampledSignal:
    """Sample-wise complex mean of delay-aligned pulses."""
    if not pulses:
        raise ParameterError("need at least one pulse")
    first = pulses[0]
    for p in pulses[1:]:
        _check_compatible(first, p)
    stack = np.stack([p.samples for p in pulses])
    return first.with_samples(stack.mean(axis=0))


OffsetTable = Mapping[str, Tuple[float, float]]


def derive_amplifier(active: PathMeasurement, reference_path: PathMeasurement,
                     offsets: Optional[OffsetTable] = None) -> AmplifierMeasurement:
    """Gain (dB) and phase of the amplifier on ``active`` relative to P3."""
    if reference_path.path_id != "P3":
        raise ParameterError(f"reference path must be P3, got {reference_path.path_id}")
    if active.path_id not in ("P1", "P2"):
        raise ParameterError(f"active path must be P1 or P2, got {active.path_id}")
    if not math.isclose(active.temperature, reference_path.temperature, abs_tol=1e-9):
        raise ParameterError(f"temperatures differ: {active.temperature} vs {reference_path.temperature}")
    if active.amplitude <= 0 or reference_path.amplitude <= 0:
        raise MeasurementError("path amplitudes must be positive")
    off_gain, off_phase = (offsets or {}).get(active.path_id, (0.0, 0.0))
    element = "HPA" if active.path_id == "P1" else "LNA"
    gain = amplitude_to_db(active.amplitude / reference_path.amplitude) - off_gain
    phase = wrap_phase(active.phase - reference_path.phase - off_phase)
    true_gain = true_phase = None
    if active.true_gain_db is not None and reference_path.true_gain_db is not None:
        true_gain = active.true_gain_db - reference_path.true_gain_db - off_gain
        true_phase = wrap_phase(active.true_phase - reference_path.true_phase - off_phase)
    return AmplifierMeasurement(element, active.temperature, gain, phase, true_gain, true_phase)


def derive_factors(measured: AmplifierMeasurement, reference: AmplifierMeasurement) -> CalibrationRecord:
    """Factors with ``G_ref = G * k`` (linear gain) and ``phi_ref = phi + theta``."""
    if measured.element != reference.element:
        raise ParameterError(f"element mismatch: {measured.element} vs {reference.element}")
    g_lin = db_to_amplitude(measured.gain_db)
    g_ref_lin = db_to_amplitude(reference.gain_db)
    if not (g_lin > 0 and g_ref_lin > 0 and math.isfinite(g_lin) and math.isfinite(g_ref_lin)):
        raise MeasurementError("linear gains must be positive and finite")
    k = g_ref_lin / g_lin
    theta = wrap_phase(reference.phase - measured.phase)
    return CalibrationRecord(
        element=measured.element,
        temperature=measured.temperature,
        measured_gain_db=measured.gain_db,
        measured_phase=measured.phase,
        reference_gain_db=reference.gain_db,
        reference_phase=reference.phase,
        k=k,
        theta=theta,
        compensated_gain_db=amplitude_to_db(g_lin * k),
        compensated_phase=wrap_phase(measured.phase + theta),
        true_gain_db=measured.true_gain_db,
        true_phase=measured.true_phase,
        true_reference_gain_db=reference.true_gain_db,
        true_reference_phase=reference.true_phase,
    )


def _coverage_gaps(sweep: Sequence[SweepPoint], t_ref: float):
    gaps = []
    temps = [p.temperature for p in sweep]
    if not any(math.isclose(t, t_ref, abs_tol=1e-9) for t in temps):
        gaps.extend((t_ref, pid) for pid in PATH_IDS)
    for point in sweep:
        for pid in PATH_IDS:
            if not point.captures.get(pid):
                gaps.append((point.temperature, pid))
    return gaps


def measure_point(point: SweepPoint, generator: ChirpParams, config: OptimizerConfig,
                  offsets: Optional[OffsetTable] = None) -> Dict[str, AmplifierMeasurement]:
    """HPA and LNA measurements from one temperature's dwells."""
    paths = {}
    for pid in PATH_IDS:
        captures = point.captures[pid]
        summed = coherent_sum([c.pulse for c in captures])
        paths[pid] = measure_path(replace(captures[0], pulse=summed), generator, config)
    return {
        element: derive_amplifier(paths[ACTIVE_PATH[element]], paths["P3"], offsets)
        for element in ELEMENTS
    }


def run_calibration(sweep: Sequence[SweepPoint], generator: ChirpParams,
                    config: OptimizerConfig = OptimizerConfig(), t_ref: float = 20.0,
                    offsets: Optional[OffsetTable] = None,
                    reference: Optional[Mapping[str, Tuple[float, float]]] = None) -> List[CalibrationRecord]:
    """Full procedure over a thermal sweep.

    Reference values default to this run's own measurement at ``t_ref``; pass
    ``reference`` as ``{element: (gain_db, phase_rad)}`` to use an external table.
    """
    gaps = _coverage_gaps(sweep, t_ref)
    if gaps:
        raise CoverageError(gaps)
    measured = {point.temperature: measure_point(point, generator, config, offsets) for point in sweep}
    ref_key = next(t for t in measured if math.isclose(t, t_ref, abs_tol=1e-9))
    refs = {}
    for element in ELEMENTS:
        base = measured[ref_key][element]
        if reference is not None and element in reference:
            gain, phase = reference[element]
            base = AmplifierMeasurement(element, t_ref, gain, phase, base.true_gain_db, base.true_phase)
        refs[element] = base
    records = [
        derive_factors(measured[temp][element], refs[element])
        for element in ELEMENTS
        for temp in sorted(measured)
    ]
    return records


CALIBRATION_CSV_HEADER = ("element", "temperature_C", "G_meas_dB", "phi_meas_deg", "k_dB",
                          "theta_deg", "G_comp_dB", "phi_comp_deg")


def _deg(rad):
    return math.degrees(wrap_phase(rad))


def write_calibration_csv(records: Sequence[CalibrationRecord], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CALIBRATION_CSV_HEADER)
        for r in records:
            writer.writerow([r.element, repr(r.temperature), repr(r.measured_gain_db),
                             repr(_deg(r.measured_phase)), repr(r.k_db), repr(_deg(r.theta)),
                             repr(r.compensated_gain_db), repr(_deg(r.compensated_phase))])


def read_calibration_csv(path) -> List[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CALIBRATION_CSV_HEADER:
            raise ParameterError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            rows.append({k: (v if k == "element" else float(v)) for k, v in row.items()})
    return rows


def write_calibration_json(records: Sequence[CalibrationRecord], path):
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in records], fh, indent=2)


def read_calibration_json(path) -> List[CalibrationRecord]:
    with open(path) as fh:
        return [CalibrationRecord(**d) for d in json.load(fh)]
