"""Allan-deviation stability analysis of acquired signal series.

The Allan deviation at averaging time ``tau`` is computed from the
non-overlapping means of contiguous ``tau``-long bins:

    sigma(tau) = sqrt( 0.5 * mean( (ybar_{k+1} - ybar_k)^2 ) )

A white-noise series of per-sample deviation ``sigma0`` sampled every
``dt`` then follows ``sigma(tau) = sigma0 * sqrt(dt / tau)``; a
sinusoidal disturbance of period ``T`` produces the characteristic
lobe-and-notch signature around ``tau ~ T``.  Error bars scale with the
inverse square root of the number of bin differences, so they grow with
``tau`` on a fixed-length record, and every reported point uses at least
3 bins, capping ``tau`` at a third of the record length.

The signal-domain convention above (no division by ``tau``) is the one
that keeps the curve in the units of the analyzed signal.  The
frequency-domain convention that divides each bin difference by ``tau``
is available behind ``convention="frequency"``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class AllanCurve:
    taus: np.ndarray
    sigmas: np.ndarray
    error_bars: np.ndarray
    n_subdivisions: np.ndarray
    scale_factor_s: float | None = None   # (deg/s)^-1, for the rotation axis

    def __post_init__(self):
        n = len(self.taus)
        if not (len(self.sigmas) == len(self.error_bars)
                == len(self.n_subdivisions) == n):
            raise ValueError("AllanCurve arrays must have equal length")
        if np.any(self.n_subdivisions < 3):
            raise ValueError("every Allan point needs >= 3 subdivisions")
        if np.any(self.sigmas < 0):
            raise ValueError("sigma must be >= 0")

    @property
    def points(self):
        """(tau, sigma, error_bar, n_subdivisions) tuples."""
        return list(zip(self.taus, self.sigmas, self.error_bars,
                        self.n_subdivisions))

    @property
    def rotation_sigmas(self) -> np.ndarray:
        """Curve rescaled to a rotation rate, deg/s."""
        if self.scale_factor_s is None:
            raise ValueError("no scale factor set; use rescale_to_rotation")
        return self.sigmas / self.scale_factor_s


def default_taus(dt: float, duration: float, per_decade: int = 10) -> np.ndarray:
    """Log-spaced tau grid snapped to integer multiples of ``dt``.

    Spans from ``dt`` up to a third of ``duration`` (the largest tau
    that still allows 3 subdivisions).
    """
    if dt <= 0 or duration <= 0:
        raise ValueError("dt and duration must be > 0")
    tau_max = duration / 3.0
    if tau_max < dt:
        raise ValueError("duration too short for even one Allan point")
    raw = np.logspace(np.log10(dt), np.log10(tau_max),
                      int(np.ceil(per_decade * np.log10(tau_max / dt))) + 1)
    multiples = np.unique(np.round(raw / dt).astype(np.int64))
    multiples = multiples[multiples >= 1]
    return multiples * dt


def allan_deviation(times, values, taus=None,
                    convention: str = "signal",
                    overlapping: bool = False) -> AllanCurve:
    """Allan deviation of a uniformly sampled series at the given taus.

    Taus that do not leave at least 3 bins are omitted with a warning.
    ``overlapping=True`` uses all overlapping bin pairs for variance
    reduction; the default follows the plain successive-readings
    definition.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty series")
    if times.shape != values.shape:
        raise ValueError("times and values must have the same shape")
    if values.size < 3:
        raise ValueError("need at least 3 samples")
    if np.any(np.isnan(values)):
        raise ValueError("series contains gaps (NaN); clean it first")
    dt = float(np.median(np.diff(times)))
    if dt <= 0:
        raise ValueError("times must be increasing")
    duration = values.size * dt
    if taus is None:
        taus = default_taus(dt, duration)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))

    out_taus, out_sigmas, out_errors, out_n = [], [], [], []
    for tau in taus:
        m = int(round(tau / dt))
        if m < 1 or abs(m * dt - tau) > 1e-6 * tau:
            warnings.warn(f"tau={tau:g}s is not a multiple of the sampling "
                          f"interval {dt:g}s; skipped")
            continue
        n_bins = values.size // m
        if n_bins < 3:
            warnings.warn(f"tau={tau:g}s leaves only {n_bins} subdivisions; "
                          "point omitted")
            continue
        if overlapping:
            csum = np.concatenate([[0.0], np.cumsum(values)])
            bin_means = (csum[m:] - csum[:-m]) / m       # all offsets
            diffs = bin_means[m:] - bin_means[:-m]
        else:
            bin_means = values[:n_bins * m].reshape(n_bins, m).mean(axis=1)
            diffs = np.diff(bin_means)
        if convention == "frequency":
            diffs = diffs / tau
        elif convention != "signal":
            raise ValueError(f"unknown convention {convention!r}")
        sigma = float(np.sqrt(0.5 * np.mean(diffs ** 2)))
        out_taus.append(m * dt)
        out_sigmas.append(sigma)
        out_errors.append(sigma / np.sqrt(diffs.size))
        out_n.append(n_bins)
    if not out_taus:
        raise ValueError("no tau produced at least 3 subdivisions")
    return AllanCurve(taus=np.array(out_taus), sigmas=np.array(out_sigmas),
                      error_bars=np.array(out_errors),
                      n_subdivisions=np.array(out_n, dtype=np.int64))


def rescale_to_rotation(curve: AllanCurve, s: float) -> AllanCurve:
    """Attach the (deg/s)^-1 scale factor for the secondary rotation axis."""
    if not s > 0:
        raise ValueError("scale factor must be > 0")
    return replace(curve, scale_factor_s=s)


def white_noise_floor(curve: AllanCurve) -> float:
    """Coefficient c of the best-supported white law sigma = c / sqrt(tau).

    Anchored on the lowest point of ``sigma * sqrt(tau)`` so that slow
    disturbances riding on top of the white floor do not inflate it.
    """
    return float(np.min(curve.sigmas * np.sqrt(curve.taus)))


@dataclass(frozen=True)
class FeatureDetection:
    period: float
    found: bool
    tau: float           # tau of the strongest evidence in the window
    excess_over_white: float   # in units of the local error bar
    local_minimum: bool  # slope sign change (dip/recovery) in the window


def find_periodic_feature(curve: AllanCurve, period: float,
                          window=(1.0 / 3.0, 1.25),
                          threshold: float = 2.0) -> FeatureDetection:
    """Look for the Allan signature of a periodic disturbance near ``period``.

    Evidence is either an excess of ``sigma`` over the white-noise floor
    of at least ``threshold`` error bars, or a local minimum (the notch
    at ``tau = period`` makes the slope change sign), evaluated on grid
    points with ``tau`` in ``[window[0], window[1]] * period``.
    """
    lo, hi = window[0] * period, window[1] * period
    mask = (curve.taus >= lo) & (curve.taus <= hi)
    if not np.any(mask):
        return FeatureDetection(period, False, float("nan"), 0.0, False)
    floor = white_noise_floor(curve)
    expected = floor / np.sqrt(curve.taus)
    excess = (curve.sigmas - expected) / curve.error_bars
    idx = np.flatnonzero(mask)
    best = idx[np.argmax(excess[idx])]

    # A dip only counts when it clears the neighbors' error bars, so a
    # flat noisy stretch does not register as a notch.
    interior = idx[(idx > 0) & (idx < len(curve.taus) - 1)]
    local_min = any(
        curve.sigmas[i] < curve.sigmas[i - 1] - curve.error_bars[i - 1]
        and curve.sigmas[i] < curve.sigmas[i + 1] - curve.error_bars[i + 1]
        for i in interior)
    found = bool(excess[best] >= threshold or local_min)
    return FeatureDetection(period=period, found=found,
                            tau=float(curve.taus[best]),
                            excess_over_white=float(excess[best]),
                            local_minimum=local_min)


@dataclass(frozen=True)
class StabilityReport:
    taus: np.ndarray
    improvement_ratios: np.ndarray      # uncorrected / corrected, per tau
    ratio_at_longest_tau: float
    optimum_tau: float                  # argmin of the corrected curve
    optimum_sigma: float
    white_slope: float                  # log-log slope of corrected curve
    white_slope_window: tuple[float, float]
    follows_sqrt_law: bool              # |slope + 0.5| <= 0.1


def stability_report(uncorrected: AllanCurve, corrected: AllanCurve,
                     white_fit_window: tuple[float, float] | None = None,
                     sqrt_law_tol: float = 0.1) -> StabilityReport:
    """Compare a free-running curve against its feedback-corrected twin.

    Both curves must share the tau grid.  The white-law slope is fitted
    on the corrected curve over ``white_fit_window`` (defaults to the
    full grid) and flagged against the ideal -1/2 averaging law.
    """
    if (len(uncorrected.taus) != len(corrected.taus)
            or np.any(np.abs(uncorrected.taus - corrected.taus)
                      > 1e-9 * np.maximum(uncorrected.taus, 1.0))):
        raise ValueError("Allan curves do not share a tau grid")
    with np.errstate(divide="ignore"):
        ratios = uncorrected.sigmas / corrected.sigmas
    i_opt = int(np.argmin(corrected.sigmas))

    if white_fit_window is None:
        white_fit_window = (float(corrected.taus[0]), float(corrected.taus[-1]))
    lo, hi = white_fit_window
    mask = (corrected.taus >= lo) & (corrected.taus <= hi) & (corrected.sigmas > 0)
    if mask.sum() < 2:
        raise ValueError("white-law fit window contains fewer than 2 points")
    slope = float(np.polyfit(np.log(corrected.taus[mask]),
                             np.log(corrected.sigmas[mask]), 1)[0])
    return StabilityReport(
        taus=corrected.taus.copy(),
        improvement_ratios=ratios,
        ratio_at_longest_tau=float(ratios[-1]),
        optimum_tau=float(corrected.taus[i_opt]),
        optimum_sigma=float(corrected.sigmas[i_opt]),
        white_slope=slope,
        white_slope_window=(float(lo), float(hi)),
        follows_sqrt_law=bool(abs(slope + 0.5) <= sqrt_law_tol),
    )
