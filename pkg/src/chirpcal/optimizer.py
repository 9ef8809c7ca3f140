"""Fit the amplitude and phase of a chirp to a received pulse.

Two update rules are provided: Adam (with a canonical and a literal variant)
and classical momentum gradient descent, which serves as the baseline for
learning-speed comparisons.
"""
from __future__ import annotations

import cmath
import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .chirp import ChirpParams, SampledSignal, apply_delay, generate_chirp, wrap_phase
from .errors import DivergenceError, ParameterError

DEFAULT_STEPSIZE = 1.5e-4
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999

# stop when E moves less than PLATEAU_RTOL (relative) across PLATEAU_WINDOW epochs
PLATEAU_WINDOW = 50
PLATEAU_RTOL = 1e-12
DIVERGENCE_FACTOR = 1e6
# a cost this far below the received power is an exact fit to double precision
EXACT_FIT_RTOL = 1e-28


class Algorithm(str, Enum):
    ADAM = "adam"
    MOMENTUM = "momentum"


class BiasCorrection(str, Enum):
    STANDARD = "standard"
    PAPER = "paper"


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: Algorithm = Algorithm.ADAM
    stepsize: float = DEFAULT_STEPSIZE
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon: float = 1e-8
    momentum: float = 0.9
    max_epochs: int = 60000
    convergence_ratio: float = 0.01
    bias_correction: BiasCorrection = BiasCorrection.STANDARD

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "bias_correction", BiasCorrection(self.bias_correction))
        checks = [
            (self.stepsize > 0, "stepsize must be > 0"),
            (0 <= self.beta1 < 1, "beta1 must lie in [0, 1)"),
            (0 <= self.beta2 < 1, "beta2 must lie in [0, 1)"),
            (self.epsilon > 0, "epsilon must be > 0"),
            (0 <= self.momentum < 1, "momentum must lie in [0, 1)"),
            (int(self.max_epochs) == self.max_epochs and self.max_epochs >= 1, "max_epochs must be an integer >= 1"),
            (0 < self.convergence_ratio < 1, "convergence_ratio must lie in (0, 1)"),
        ]
        for ok, message in checks:
            if not ok:
                raise ParameterError(message)
        object.__setattr__(self, "max_epochs", int(self.max_epochs))

    def to_dict(self):
        d = asdict(self)
        d["algorithm"] = self.algorithm.value
        d["bias_correction"] = self.bias_correction.value
        return d


@dataclass(frozen=True)
class OptimizerState:
    """Parameters ``(A, w)`` and the per-parameter optimizer memory.

    For momentum GD the ``m`` slot holds the velocity and ``v`` stays zero.
    """

    params: Tuple[float, float] = (1.0, 0.0)
    m: Tuple[float, float] = (0.0, 0.0)
    v: Tuple[float, float] = (0.0, 0.0)
    m_hat: Tuple[float, float] = (0.0, 0.0)
    v_hat: Tuple[float, float] = (0.0, 0.0)
    epoch: int = 0

    def __post_init__(self):
        if self.epoch < 0:
            raise ParameterError("epoch must be >= 0")
        if self.v[0] < 0 or self.v[1] < 0:
            raise ParameterError("second moment must be nonnegative")


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    phase: float
    final_cost: float
    error_history: Tuple[float, ...] = field(repr=False)
    epochs_run: int
    converged_epoch: Optional[int]
    algorithm: str

    def to_dict(self):
        return {
            "amplitude": self.amplitude,
            "phase": self.phase,
            "final_cost": self.final_cost,
            "error_history": list(self.error_history),
            "epochs_run": self.epochs_run,
            "converged_epoch": self.converged_epoch,
            "algorithm": self.algorithm,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            amplitude=float(d["amplitude"]),
            phase=float(d["phase"]),
            final_cost=float(d["final_cost"]),
            error_history=tuple(float(e) for e in d["error_history"]),
            epochs_run=int(d["epochs_run"]),
            converged_epoch=None if d["converged_epoch"] is None else int(d["converged_epoch"]),
            algorithm=str(d["algorithm"]),
        )

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_history_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "E"])
            for epoch, e in enumerate(self.error_history):
                writer.writerow([epoch, repr(e)])


def _check_compatible(a: SampledSignal, b: SampledSignal):
    if len(a) != len(b):
        raise ParameterError(f"length mismatch: {len(a)} vs {len(b)}")
    if not math.isclose(a.sample_rate, b.sample_rate, rel_tol=1e-9):
        raise ParameterError(f"sample-rate mismatch: {a.sample_rate} vs {b.sample_rate}")


def cost(model: SampledSignal, received: SampledSignal) -> float:
    """Mean squared complex residual ``(1/N) sum |d_i - y_i|^2``."""
    _check_compatible(model, received)
    return float(np.mean(np.abs(received.samples - model.samples) ** 2))


def gradient(params: ChirpParams, received: SampledSignal) -> Tuple[float, float]:
    """Analytic ``(dE/dA, dE/dw)`` at the amplitude and phase held in ``params``."""
    basis = generate_chirp(params.unit()).samples
    _check_compatible(SampledSignal(basis, params.sample_rate), received)
    rot = np.exp(1j * params.phase) * basis
    y = params.amplitude * rot
    resid = np.conj(y - received.samples)
    d_amp = 2.0 * float(np.mean((resid * rot).real))
    d_phase = 2.0 * float(np.mean((resid * 1j * y).real))
    return d_amp, d_phase


def adam_step(state: OptimizerState, grad, config: OptimizerConfig) -> OptimizerState:
    """One Adam update.

    ``standard`` is canonical Adam.  The ``paper`` variant is the literal
    update rule: the second moment decays with beta1, the parameter step uses
    the uncorrected first moment, and epsilon sits inside the square root.
    """
    t = state.epoch + 1
    b1, b2, eps, alpha = config.beta1, config.beta2, config.epsilon, config.stepsize
    literal = config.bias_correction is BiasCorrection.PAPER
    v_decay = b1 if literal else b2
    params, m, v, m_hat, v_hat = [], [], [], [], []
    for theta, g, m_prev, v_prev in zip(state.params, grad, state.m, state.v):
        m_t = b1 * m_prev + (1 - b1) * g
        v_t = v_decay * v_prev + (1 - b2) * g * g
        mh = m_t / (1 - b1 ** t)
        vh = v_t / (1 - b2 ** t)
        if literal:
            theta = theta - alpha * m_t / math.sqrt(vh + eps)
        else:
            theta = theta - alpha * mh / (math.sqrt(vh) + eps)
        params.append(theta)
        m.append(m_t)
        v.append(v_t)
        m_hat.append(mh)
        v_hat.append(vh)
    return OptimizerState(tuple(params), tuple(m), tuple(v), tuple(m_hat), tuple(v_hat), t)


def momentum_gd_step(state: OptimizerState, grad, config: OptimizerConfig) -> OptimizerState:
    """Classical momentum: ``u <- mu*u - alpha*g``; ``theta <- theta + u``."""
    mu, alpha = config.momentum, config.stepsize
    vel = tuple(mu * u - alpha * g for u, g in zip(state.m, grad))
    params = tuple(theta + u for theta, u in zip(state.params, vel))
    return replace(state, params=params, m=vel, epoch=state.epoch + 1)


_STEPS = {Algorithm.ADAM: adam_step, Algorithm.MOMENTUM: momentum_gd_step}


class _ProjectedCost:
    """Exact cost and gradient for ``y = A e^{jw} b`` via the projection of d onto b.

    With ``z = A e^{jw}`` and ``z* = <d, b>/<b, b>`` the cost splits into
    ``E = E_min + q |z - z*|^2`` where ``q = mean|b|^2`` and ``E_min`` is the
    part of ``d`` orthogonal to ``b``.  Each evaluation is then O(1) and free
    of the cancellation that ``mean|d|^2 - 2Re(...) + ...`` would suffer.
    """

    def __init__(self, basis: np.ndarray, received: np.ndarray):
        self.q = float(np.mean(np.abs(basis) ** 2))
        if self.q == 0:
            raise ParameterError("model basis has zero energy")
        self.z_star = complex(np.mean(received * np.conj(basis)) / self.q)
        self.e_min = float(np.mean(np.abs(received - self.z_star * basis) ** 2))

    def value(self, amp, phase):
        return self.e_min + self.q * abs(amp * cmath.exp(1j * phase) - self.z_star) ** 2

    def grad(self, amp, phase):
        u = self.z_star * cmath.exp(-1j * phase)
        return 2 * self.q * (amp - u.real), -2 * self.q * amp * u.imag


def model_basis(generator: ChirpParams, delay: float = 0.0) -> SampledSignal:
    """Unit-amplitude, zero-phase model chirp, optionally delayed like a received pulse."""
    basis = generate_chirp(generator.unit())
    if delay:
        basis = apply_delay(basis, delay)
    return basis


def fit(received: SampledSignal, generator: ChirpParams, init=(1.0, 0.0),
        config: OptimizerConfig = OptimizerConfig(), delay: float = 0.0,
        context: Optional[str] = None) -> FitResult:
    """Estimate ``(A, w)`` of ``received`` against the model chirp of ``generator``.

    Chirp rate and frequency come from ``generator``; its amplitude and phase
    are ignored in favour of ``init``.  ``delay`` shifts the model pulse so it
    lines up with a delayed capture.  ``error_history[k]`` is the cost after
    ``k`` updates, so ``error_history[0]`` is the initial cost and
    ``epochs_run == len(error_history)``.

    Iteration stops at ``max_epochs``, on a plateau, or once the cost reaches
    double-precision zero relative to the received power (that floor also
    counts as converged, which covers starting on the optimum).
    """
    basis = model_basis(generator, delay)
    _check_compatible(basis, received)
    objective = _ProjectedCost(basis.samples, received.samples)
    step = _STEPS[config.algorithm]

    state = OptimizerState(params=(float(init[0]), float(init[1])))
    e0 = objective.value(*state.params)
    history = [e0]
    power = float(np.mean(np.abs(received.samples) ** 2))
    floor = EXACT_FIT_RTOL * power
    threshold = max(config.convergence_ratio * e0, floor)
    converged = 0 if e0 <= threshold else None
    # starting on the optimum makes e0 ~ 0, so also anchor on the received power
    blowup = DIVERGENCE_FACTOR * max(e0, power)

    for _ in range(config.max_epochs):
        if history[-1] <= floor:
            break
        state = step(state, objective.grad(*state.params), config)
        e = objective.value(*state.params)
        if not math.isfinite(e) or e > blowup:
            raise DivergenceError("cost diverged", state.epoch, state, context)
        history.append(e)
        if converged is None and e <= threshold:
            converged = state.epoch
        if state.epoch >= PLATEAU_WINDOW:
            ref = history[-1 - PLATEAU_WINDOW]
            if abs(e - ref) <= PLATEAU_RTOL * ref:
                break

    amp, phase = state.params
    if amp < 0:
        # (-A, w) and (A, w + pi) describe the same waveform
        amp, phase = -amp, phase + math.pi
    return FitResult(
        amplitude=amp,
        phase=wrap_phase(phase),
        final_cost=history[-1],
        error_history=tuple(history),
        epochs_run=len(history),
        converged_epoch=converged,
        algorithm=config.algorithm.value,
    )


def converged_epoch_of(history: Sequence[float], ratio: float = 0.01) -> Optional[int]:
    """First index whose cost is at most ``ratio`` times the initial cost."""
    threshold = ratio * history[0]
    for k, e in enumerate(history):
        if e <= threshold:
            return k
    return None
