"""Four-point line-center estimation and rotation-rate sensitivity.

The line tracker samples the ESR spectrum at four increasingly ordered
frequencies around the expected center and estimates the true center as
the intersection of the secant line through samples (1, 2) with the
secant line through samples (3, 4).  For a symmetric dip probed at
symmetric offsets this is exact; when the line drifts outside the probe
window both secants sample the flat tail and the estimate is rejected
as out-of-band instead of feeding garbage into the feedback.

Sensitivity follows the operational definition
``eta = sigma_f(T) * sqrt(T) / |dS/dOmega|`` with ``sigma_f`` the
standard error of the signal series over measurement time ``T`` and the
slope calibrated from a phase sweep of the final Ramsey pulse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spinmodel import NUCLEAR, SensorParams, Spin, esr_spectrum, ramsey_signal


class OutOfBandError(RuntimeError):
    """The line has drifted outside the four-point capture range."""


@dataclass(frozen=True)
class FourPointReading:
    """Four probe frequencies (Hz, strictly increasing) and their signals."""
    frequencies: tuple[float, float, float, float]
    signals: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.frequencies) != 4 or len(self.signals) != 4:
            raise ValueError("a four-point reading needs exactly 4 entries each")
        if not all(np.diff(self.frequencies) > 0):
            raise ValueError("probe frequencies must be strictly increasing")


@dataclass(frozen=True)
class SensitivityReport:
    eta: float          # rotation-rate sensitivity, deg s^-1 / sqrt(Hz)
    sigma_f: float      # standard error of the signal series
    slope: float        # |dS/dOmega|, per (deg/s)
    t_total: float      # total acquisition time, s

    def __post_init__(self):
        for name in ("eta", "sigma_f", "slope", "t_total"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SensitivityReport.{name} must be > 0")


def _secant(f1, s1, f2, s2):
    slope = (s2 - s1) / (f2 - f1)
    intercept = s1 - slope * f1
    return slope, intercept


def nominal_slope_difference(params: SensorParams, offsets) -> float:
    """Secant-slope difference of an on-center, noiseless reading.

    Used to scale the out-of-band rejection threshold: in band, the two
    secants have opposite slopes of this combined magnitude; far out of
    band both collapse to ~0.
    """
    probes = params.nu_e + np.asarray(offsets, dtype=float)
    signals = esr_spectrum(probes, 0.0, params)
    m_a, _ = _secant(probes[0], signals[0], probes[1], signals[1])
    m_b, _ = _secant(probes[2], signals[2], probes[3], signals[3])
    return abs(m_a - m_b)


def four_point_estimate(reading: FourPointReading,
                        min_slope_difference: float | None = None) -> float:
    """Line center estimated from the intersection of the two secants.

    Raises :class:`OutOfBandError` when the secant slopes differ by less
    than ``min_slope_difference`` (or are exactly parallel), which
    signals that the line left the capture window.
    """
    f = np.asarray(reading.frequencies, dtype=float)
    s = np.asarray(reading.signals, dtype=float)
    m_a, b_a = _secant(f[0], s[0], f[1], s[1])
    m_b, b_b = _secant(f[2], s[2], f[3], s[3])
    slope_diff = m_a - m_b
    if min_slope_difference is not None and abs(slope_diff) < min_slope_difference:
        raise OutOfBandError(
            f"secant slope difference {abs(slope_diff):.3e} below threshold "
            f"{min_slope_difference:.3e}; line outside capture range")
    if slope_diff == 0.0:
        raise OutOfBandError("secant lines are parallel")
    return float((b_b - b_a) / slope_diff)


def sensitivity(values, total_time: float, slope: float) -> SensitivityReport:
    """Sensitivity from a measured signal series and a calibrated slope.

    ``values`` is the series of repeated signal measurements acquired
    over ``total_time`` seconds; ``slope`` is dS/dOmega in (deg/s)^-1.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("sensitivity needs at least 2 samples")
    if slope == 0:
        raise ValueError("slope calibration is zero; calibrate first")
    if total_time <= 0:
        raise ValueError("total_time must be > 0")
    sigma_f = float(np.std(values, ddof=1) / np.sqrt(values.size))
    eta = sigma_f * np.sqrt(total_time) / abs(slope)
    return SensitivityReport(eta=eta, sigma_f=sigma_f, slope=abs(slope),
                             t_total=total_time)


@dataclass(frozen=True)
class SlopeCalibration:
    """Result of a final-pulse phase sweep in a quiet environment."""
    slope_per_deg_s: float   # max |dF/dOmega|, per (deg/s)
    scale_factor_s: float    # Allan-axis rescaling factor, same value
    fringe_amplitude: float  # fitted amplitude of F(theta)
    thetas: np.ndarray
    contrast: np.ndarray


def slope_calibration(params: SensorParams, t_ramsey: float,
                      spin: Spin = NUCLEAR, mapped: bool = True,
                      n_points: int = 73,
                      residual_tol: float = 1e-6) -> SlopeCalibration:
    """Sweep the final-pulse phase and fit the sinusoidal contrast response.

    The symmetrized contrast ``F(theta)`` is computed noiselessly from
    the signal model, fitted to ``a*cos(theta) + b*sin(theta) + c``, and
    the maximum slope against an emulated rotation rate (deg/s over the
    free evolution time) is returned together with the rescaling factor
    used for the rotation axis of stability plots.
    """
    thetas = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    s_a = ramsey_signal(thetas, t_ramsey, 0.0, spin, params, mapped=mapped)
    s_b = ramsey_signal(thetas + np.pi, t_ramsey, 0.0, spin, params, mapped=mapped)
    contrast = (s_a - s_b) / (s_a + s_b)

    design = np.column_stack([np.cos(thetas), np.sin(thetas),
                              np.ones_like(thetas)])
    coef, *_ = np.linalg.lstsq(design, contrast, rcond=None)
    residual = contrast - design @ coef
    amplitude = float(np.hypot(coef[0], coef[1]))
    if amplitude == 0 or np.max(np.abs(residual)) > residual_tol * max(amplitude, 1.0):
        raise ValueError("phase sweep is not sinusoidal; calibration failed")

    # dF/dtheta peaks at the fringe amplitude; theta = Omega * t converts
    # a rotation rate in deg/s to a final-pulse phase in radians.
    slope = amplitude * t_ramsey * np.pi / 180.0
    return SlopeCalibration(slope_per_deg_s=slope, scale_factor_s=slope,
                            fringe_amplitude=amplitude,
                            thetas=thetas, contrast=contrast)
