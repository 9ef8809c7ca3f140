"""Linear-FM chirp generation and the signal arithmetic shared by the other modules.

All signals are complex baseband I/Q sequences.  Times are referenced to the
start of the pulse unless an explicit ``t0`` is passed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError

# default timing of the measurement setup
DEFAULT_PRI = 20e-6
DEFAULT_SAMPLE_RATE = 350e6
DEFAULT_BANDWIDTH = 80e6
DEFAULT_PULSE_DURATION = 1.001e-6


def wrap_phase(x):
    """Wrap an angle (radians) into (-pi, pi]. Works on scalars and arrays."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def phase_distance(a, b):
    """Absolute circular distance between two angles, in [0, pi]."""
    return abs(wrap_phase(a - b))


def db_to_amplitude(gain_db):
    return 10.0 ** (gain_db / 20.0)


def amplitude_to_db(amplitude):
    return 20.0 * math.log10(amplitude)


@dataclass(frozen=True)
class ChirpParams:
    """Parametric chirp ``A * exp(j(pi*Kr*t^2 + c*f*t + w))``.

    ``c`` is 2*pi by default.  With ``paper_literal_phase`` it is pi, the
    literal variant of the frequency term (an effective frequency of f/2).
    """

    amplitude: float = 1.0
    chirp_rate: float = DEFAULT_BANDWIDTH / DEFAULT_PULSE_DURATION
    center_frequency: float = -DEFAULT_BANDWIDTH / 2
    phase: float = 0.0
    pulse_duration: float = DEFAULT_PULSE_DURATION
    sample_rate: float = DEFAULT_SAMPLE_RATE
    pri: float = DEFAULT_PRI
    paper_literal_phase: bool = False

    def __post_init__(self):
        if not self.pulse_duration > 0:
            raise ParameterError(f"pulse_duration must be > 0, got {self.pulse_duration}")
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be > 0, got {self.sample_rate}")
        if not self.pri >= self.pulse_duration:
            raise ParameterError(f"pri ({self.pri}) must be >= pulse_duration ({self.pulse_duration})")
        if not self.amplitude >= 0:
            raise ParameterError(f"amplitude must be >= 0, got {self.amplitude}")
        for name in ("chirp_rate", "center_frequency", "phase"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if self.n_samples < 2:
            raise ParameterError(f"pulse holds {self.n_samples} samples, need at least 2")
        object.__setattr__(self, "phase", wrap_phase(self.phase))

    @classmethod
    def from_bandwidth(cls, bandwidth=DEFAULT_BANDWIDTH, pulse_duration=DEFAULT_PULSE_DURATION,
                       sample_rate=DEFAULT_SAMPLE_RATE, pri=DEFAULT_PRI, frequency=None, **kwargs):
        """Chirp sweeping ``bandwidth`` over the pulse; centred on 0 Hz unless ``frequency`` is given."""
        if frequency is None:
            frequency = -bandwidth / 2
        return cls(chirp_rate=bandwidth / pulse_duration, center_frequency=frequency,
                   pulse_duration=pulse_duration, sample_rate=sample_rate, pri=pri, **kwargs)

    @property
    def n_samples(self) -> int:
        # tolerate representation error such as 1.001e-6 * 350e6 = 350.34999...
        return int(math.floor(self.pulse_duration * self.sample_rate + 1e-9))

    @property
    def bandwidth(self) -> float:
        return self.chirp_rate * self.pulse_duration

    @property
    def frequency_coefficient(self) -> float:
        return math.pi if self.paper_literal_phase else 2 * math.pi

    def with_gain_phase(self, amplitude, phase):
        return replace(self, amplitude=amplitude, phase=phase)

    def unit(self):
        """Same waveform with A=1, w=0."""
        return replace(self, amplitude=1.0, phase=0.0)


@dataclass(frozen=True, eq=False)
class SampledSignal:
    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128).reshape(-1)
        if arr.size < 1:
            raise ParameterError("signal must hold at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("signal contains NaN or Inf samples")
        if not self.sample_rate > 0:
            raise ParameterError(f"sample_rate must be > 0, got {self.sample_rate}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples):
        return SampledSignal(samples, self.sample_rate, self.start_time)


def chirp_phase(params: ChirpParams, t: np.ndarray) -> np.ndarray:
    """Instantaneous phase law of the chirp (radians) at times ``t``."""
    return math.pi * params.chirp_rate * t ** 2 + params.frequency_coefficient * params.center_frequency * t + params.phase


def generate_chirp(params: ChirpParams, t0: float = 0.0) -> SampledSignal:
    """Sample the chirp at ``t_i = t0 + i/fs`` for ``i < floor(T*fs)``."""
    t = t0 + np.arange(params.n_samples) / params.sample_rate
    samples = params.amplitude * np.exp(1j * chirp_phase(params, t))
    return SampledSignal(samples, params.sample_rate, t0)


def apply_gain_phase(sig: SampledSignal, gain_db: float, phase_shift: float) -> SampledSignal:
    factor = db_to_amplitude(gain_db) * np.exp(1j * phase_shift)
    return sig.with_samples(sig.samples * factor)


def _shift_integer(x, n):
    out = np.zeros_like(x)
    if n == 0:
        out[:] = x
    elif n > 0:
        out[n:] = x[:-n]
    else:
        out[:n] = x[-n:]
    return out


def _shift_fractional(x, frac):
    k = np.fft.fftfreq(x.size)
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * np.pi * k * frac))


def apply_delay(sig: SampledSignal, delay: float) -> SampledSignal:
    """Delay a signal by ``delay`` seconds, keeping its length.

    The nearest whole number of samples is applied as an index shift with
    zero fill; the remaining fraction (|frac| <= 0.5 sample) is applied as a
    linear phase ramp in the frequency domain, which is exact for band-limited
    periodic content.
    """
    if not math.isfinite(delay) or abs(delay) >= sig.duration:
        raise ParameterError(f"delay {delay!r} s outside (-{sig.duration}, {sig.duration})")
    if delay == 0:
        return sig
    d = delay * sig.sample_rate
    n = int(round(d))
    frac = d - n
    out = _shift_integer(sig.samples, n)
    if frac != 0.0:
        out = _shift_fractional(out, frac)
    return sig.with_samples(out)


def add_awgn(sig: SampledSignal, snr_db: float, seed: int) -> SampledSignal:
    """Add circular complex white Gaussian noise at the requested SNR.

    ``snr_db = inf`` (or None) disables noise and returns the input unchanged.
    """
    if snr_db is None or snr_db == math.inf:
        return sig
    p_sig = sig.power
    if p_sig == 0:
        raise ParameterError("cannot set an SNR on a zero-power signal")
    p_noise = p_sig / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(sig)) + 1j * rng.standard_normal(len(sig))
    return sig.with_samples(sig.samples + math.sqrt(p_noise / 2) * noise)


SIGNAL_CSV_HEADER = ("index", "t_seconds", "i", "q")


def write_signal_csv(sig: SampledSignal, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SIGNAL_CSV_HEADER)
        for idx, (t, z) in enumerate(zip(sig.times, sig.samples)):
            writer.writerow([idx, repr(float(t)), repr(float(z.real)), repr(float(z.imag))])


def read_signal_csv(path, sample_rate=None) -> SampledSignal:
    """Parse the ``index,t_seconds,i,q`` layout.

    The sample rate is inferred from the time column when not supplied.
    Malformed rows raise ``ParameterError`` naming the offending line.
    """
    times, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParameterError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != SIGNAL_CSV_HEADER:
            raise ParameterError(f"{path}: line 1: expected header {','.join(SIGNAL_CSV_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise ParameterError(f"{path}: line {line}: expected 4 fields, got {len(row)}")
            try:
                idx = int(row[0])
                t, i, q = float(row[1]), float(row[2]), float(row[3])
            except ValueError as exc:
                raise ParameterError(f"{path}: line {line}: {exc}") from None
            if idx != len(values):
                raise ParameterError(f"{path}: line {line}: index {idx} out of sequence")
            if not (math.isfinite(t) and math.isfinite(i) and math.isfinite(q)):
                raise ParameterError(f"{path}: line {line}: non-finite value")
            times.append(t)
            values.append(complex(i, q))
    if not values:
        raise ParameterError(f"{path}: no samples")
    if sample_rate is None:
        if len(times) < 2:
            raise ParameterError(f"{path}: cannot infer sample rate from one sample")
        sample_rate = (len(times) - 1) / (times[-1] - times[0])
    return SampledSignal(np.array(values), sample_rate, times[0])
