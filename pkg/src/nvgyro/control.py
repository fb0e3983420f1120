"""Feedback controllers for the dual-spin acquisition loop.

Once per block the line tracker produces an estimate of the electronic
transition frequency.  The controller then

* re-centers the mapping pulse and the four ESR probes on the (possibly
  extrapolated) line position, and
* shifts the nuclear drive frequency by ``gain * (-gamma_n / gamma_e)``
  times the observed electronic shift, which cancels the common magnetic
  drift for ``gain = +1`` and doubles it for ``gain = -1``.

A polynomial history predictor generalizes the plain use-last-estimate
update: degree 0 with one point reproduces it exactly, higher degrees
extrapolate the recent trend.  ``predictor_study`` quantifies when that
helps as a function of measurement noise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .spinmodel import SensorParams


@dataclass(frozen=True)
class FeedbackState:
    """Feedback bookkeeping owned by a single experiment run.

    ``esr_center`` is the currently applied (tracked) transition
    frequency; ``mapping_correction`` is its cumulative offset from the
    nominal center and shifts both the mapping pulse and the probe set.
    ``history`` holds ``(block time, estimated shift from nominal)``
    pairs, newest last, bounded by ``history_capacity``.
    """
    nominal_center: float
    esr_center: float
    mapping_correction: float = 0.0
    nuclear_correction: float = 0.0
    gain: float = 1.0
    history: tuple = ()
    history_capacity: int = 64

    def __post_init__(self):
        if self.history_capacity < 1:
            raise ValueError("history_capacity must be >= 1")
        times = [t for t, _ in self.history]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("history must be ordered by time")


def initial_state(params: SensorParams, gain: float = 1.0,
                  history_capacity: int = 64) -> FeedbackState:
    return FeedbackState(nominal_center=params.nu_e, esr_center=params.nu_e,
                         gain=gain, history_capacity=history_capacity)


def record_estimate(state: FeedbackState, t: float,
                    estimated_center: float) -> FeedbackState:
    """Append an estimate to the bounded history without applying it."""
    shift = estimated_center - state.nominal_center
    history = (state.history + ((t, shift),))[-state.history_capacity:]
    return dataclasses.replace(state, history=history)


def update_mapping(state: FeedbackState, estimated_center: float) -> FeedbackState:
    """Re-center the mapping pulse and probe set on ``estimated_center``."""
    return dataclasses.replace(
        state,
        esr_center=estimated_center,
        mapping_correction=estimated_center - state.nominal_center,
    )


def update_nuclear(state: FeedbackState, estimated_shift: float,
                   params: SensorParams) -> FeedbackState:
    """Accumulate the cross-sensor nuclear drive correction.

    ``estimated_shift`` is the newly observed electronic line shift
    (relative to the previously applied center); the nuclear correction
    moves by ``gain * (-gamma_n / gamma_e)`` times that shift.
    """
    delta = state.gain * (-params.gamma_n / params.gamma_e) * estimated_shift
    return dataclasses.replace(
        state, nuclear_correction=state.nuclear_correction + delta)


def predict_next(values, degree: int, n_points: int | None = None) -> float:
    """One-step-ahead polynomial extrapolation of the last ``n_points``.

    Fits a degree-``degree`` polynomial by least squares to the trailing
    ``n_points`` values (default ``degree + 1``, which interpolates
    exactly) and evaluates it one step past the end.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    n = (degree + 1) if n_points is None else n_points
    if n < degree + 1:
        raise ValueError(f"need at least degree+1 = {degree + 1} points, got {n}")
    values = np.asarray(values, dtype=float)
    if values.size < n:
        raise ValueError(f"history holds {values.size} points, need {n}")
    window = values[-n:]
    if degree == 0:
        return float(np.mean(window))
    x = np.arange(n, dtype=float)
    coef = np.polynomial.polynomial.polyfit(x, window, degree)
    return float(np.polynomial.polynomial.polyval(float(n), coef))


def _extrapolation_stencil(degree: int) -> np.ndarray:
    """Coefficients of exact one-step extrapolation from degree+1 points.

    ``x_hat[k+1] = sum_j stencil[j] * x[k-j]`` is the unique degree-d
    polynomial through the last d+1 points evaluated one step ahead;
    it follows from the vanishing (d+1)-th finite difference.
    """
    d = degree
    return np.array([(-1.0) ** j * comb(d + 1, j + 1) for j in range(d + 1)])


@dataclass(frozen=True)
class PredictorErrorGrid:
    """Mean one-step |prediction error| per (noise amplitude, degree)."""
    noise_amplitudes: np.ndarray
    degrees: np.ndarray
    errors: np.ndarray          # shape (len(noise_amplitudes), len(degrees))
    per_realization: np.ndarray  # shape (noise, degree, realization)


def predictor_study(perturbation_amplitude: float, noise_amplitudes,
                    degrees, realizations: int = 20,
                    samples_per_period: int = 20, n_periods: int = 20,
                    seed: int = 0) -> PredictorErrorGrid:
    """Monte-Carlo grid of one-step prediction errors on sinusoid + noise.

    Each realization draws a random perturbation phase and fresh noise,
    runs the exact-interpolation predictor (``N = d + 1``) along the
    trace, and scores the mean absolute error after discarding the first
    ``N`` warm-up points.
    """
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    noise_amplitudes = np.asarray(noise_amplitudes, dtype=float)
    degrees = np.asarray(degrees, dtype=int)
    n_samples = samples_per_period * n_periods
    omega = 2.0 * np.pi / samples_per_period

    # Score every degree over the same target indices so the comparison
    # across degrees is not skewed by different warm-up lengths.
    start = 2 * (int(degrees.max()) + 1)
    errors = np.zeros((noise_amplitudes.size, degrees.size, realizations))
    for r in range(realizations):
        rng = np.random.Generator(np.random.Philox(key=np.array(
            [seed, 0x70726564 + r], dtype=np.uint64)))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        clean = perturbation_amplitude * np.sin(omega * np.arange(n_samples) + phase)
        noise_draws = rng.standard_normal(n_samples)
        for i, amp in enumerate(noise_amplitudes):
            trace = clean + amp * noise_draws
            for j, d in enumerate(degrees):
                stencil = _extrapolation_stencil(int(d))
                n = int(d) + 1
                # prediction for target index k comes from the n samples
                # before it; convolve yields targets n .. n_samples-1
                pred = np.convolve(trace, stencil, mode="valid")[:-1]
                err = np.abs(trace[n:] - pred)
                errors[i, j, r] = err[start - n:].mean()
    return PredictorErrorGrid(noise_amplitudes=noise_amplitudes,
                              degrees=degrees, errors=errors.mean(axis=2),
                              per_realization=errors)


@dataclass(frozen=True)
class ControlConfig:
    """Controller settings for an experiment run."""
    enabled: bool = True
    gain: float = 1.0
    predictor_degree: int = 0
    predictor_points: int | None = None   # default degree + 1
    history_capacity: int = 64

    def __post_init__(self):
        if self.predictor_degree < 0:
            raise ValueError("predictor_degree must be >= 0")
        n = self.predictor_points
        if n is not None and n < self.predictor_degree + 1:
            raise ValueError("predictor_points must be >= predictor_degree + 1")
        if self.history_capacity < 1:
            raise ValueError("history_capacity must be >= 1")


class Controller:
    """Per-block feedback: line tracking plus cross-sensor correction."""

    def __init__(self, params: SensorParams, config: ControlConfig):
        self.params = params
        self.config = config

    def start(self) -> FeedbackState:
        return initial_state(self.params, gain=self.config.gain,
                             history_capacity=self.config.history_capacity)

    def update(self, state: FeedbackState, t: float,
               estimated_center: float) -> FeedbackState:
        """Apply one block's estimate; returns the next block's state."""
        state = record_estimate(state, t, estimated_center)
        cfg = self.config
        shifts = np.array([s for _, s in state.history])
        n_needed = (cfg.predictor_degree + 1 if cfg.predictor_points is None
                    else cfg.predictor_points)
        if cfg.predictor_degree > 0 and shifts.size >= n_needed:
            predicted_shift = predict_next(shifts, cfg.predictor_degree,
                                           cfg.predictor_points)
        else:
            predicted_shift = estimated_center - state.nominal_center
        target_center = state.nominal_center + predicted_shift
        increment = target_center - state.esr_center
        state = update_mapping(state, target_center)
        state = update_nuclear(state, increment, self.params)
        return state
