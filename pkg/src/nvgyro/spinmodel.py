"""Analytic signal models for the two co-located spin sensors.

The device hosts two spin species in the same volume: an electronic spin
read out through a fluorescence dip (ESR), and a nuclear spin interrogated
with Ramsey interferometry.  This module provides the noiseless signal
models for both:

* ``esr_spectrum`` -- the pulsed ESR lineshape, a triplet of Lorentzian
  dips split by the hyperfine coupling, with dip weights set by the
  nuclear polarization.
* ``ramsey_signal`` -- the Ramsey fringe of either spin, including the
  ``T2*`` envelope and the phase of the final pi/2 pulse.
* ``mapping_fidelity`` -- the population-transfer probability of the
  selective mapping pi pulse as a function of its detuning, which scales
  the mapped nuclear readout contrast.

Sign convention: the tracked electronic transition lies on the lower
branch of the ground-state manifold, so its frequency *decreases* when
the field grows: ``nu_line = nu_e - gamma_e * db``.  The nuclear
transition frequency increases as ``nu_n + gamma_n * db``.  This pairing
is what makes the cross-sensor correction
``dnu_n = -(gamma_n / gamma_e) * dnu_e`` cancel a common field drift.

All operations are pure functions of immutable parameters and accept
numpy arrays wherever a float is accepted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

ELECTRONIC = "electronic"
NUCLEAR = "nuclear"

Spin = Literal["electronic", "nuclear"]


@dataclass(frozen=True)
class SensorParams:
    """Physical constants and calibration of both spin ensembles.

    Frequencies are in Hz, times in seconds, fields in gauss.
    ``hyperfine_splitting`` defaults to the standard literature value for
    the host defect; it is not derived from a measured spectrum here and
    should be overridden if a different splitting is calibrated.

    The default ``esr_linewidth`` places the +-350 kHz probe offsets at
    the maximum-slope points of the Lorentzian (at ``FWHM/(2*sqrt(3))``
    from center).  Narrower lines make the four-point re-centering loop
    overcorrect: the secant-intersection gain exceeds 2 below roughly
    1 MHz FWHM for this probe geometry, and the tracker oscillates.
    """

    gamma_e: float = 2.8e6          # electronic gyromagnetic ratio, Hz/G
    gamma_n: float = 300.0          # nuclear gyromagnetic ratio, Hz/G
    b0: float = 420.0               # static bias field, G
    nu_e: float = 1.704e9           # tracked electronic transition, Hz
    nu_n: float = 4.68e6            # nuclear transition, Hz
    t2e_star: float = 403e-9        # electronic dephasing time, s
    t2n_star: float = 840e-6        # nuclear dephasing time, s
    esr_contrast: float = 0.05      # fractional fluorescence dip at resonance
    esr_linewidth: float = 1.2e6    # FWHM of a single hyperfine line, Hz
    hyperfine_splitting: float = 2.16e6   # spacing of adjacent lines, Hz
    nuclear_polarization: float = 0.95    # fraction in the pumped state
    mapping_rabi: float = 1.0e5     # Rabi frequency of the mapping pulse, Hz
    mapping_contrast_gain: float = 3.0    # mapped / unmapped contrast ratio
    nuclear_contrast_mapped: float = 0.03  # absolute mapped readout contrast

    def __post_init__(self):
        positive = (
            "gamma_e", "gamma_n", "b0", "nu_e", "nu_n", "t2e_star",
            "t2n_star", "esr_linewidth", "hyperfine_splitting",
            "mapping_rabi", "mapping_contrast_gain", "nuclear_contrast_mapped",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"SensorParams.{name} must be > 0")
        if not 0.0 <= self.nuclear_polarization <= 1.0:
            raise ValueError("nuclear_polarization must be in [0, 1]")
        if not 0.0 < self.esr_contrast < 1.0:
            raise ValueError("esr_contrast must be in (0, 1)")
        if not 0.0 < self.nuclear_contrast_mapped < 1.0:
            raise ValueError("nuclear_contrast_mapped must be in (0, 1)")

    def hyperfine_centers(self) -> np.ndarray:
        """Line centers of the hyperfine triplet, dominant line first.

        Polarization pumps the population into one end state of the
        triplet, so the dominant dip sits at ``nu_e`` and the two minor
        dips at one and two splittings above it.
        """
        d = self.hyperfine_splitting
        return np.array([self.nu_e, self.nu_e + d, self.nu_e + 2.0 * d])

    def hyperfine_weights(self) -> np.ndarray:
        """Dip weights (populations) matching :meth:`hyperfine_centers`."""
        p = self.nuclear_polarization
        return np.array([p, (1.0 - p) / 2.0, (1.0 - p) / 2.0])

    def ramsey_t2(self, spin: Spin) -> float:
        if spin == ELECTRONIC:
            return self.t2e_star
        if spin == NUCLEAR:
            return self.t2n_star
        raise ValueError(f"unknown spin {spin!r}")

    def ramsey_contrast(self, spin: Spin, mapped: bool = True) -> float:
        """Readout contrast of the Ramsey fringe for the chosen mode.

        The electronic spin is always read out directly.  The nuclear
        spin is read either through the mapping pulse (full contrast) or
        through the bare fluorescence, lower by ``mapping_contrast_gain``.
        """
        if spin == ELECTRONIC:
            return self.esr_contrast
        if spin == NUCLEAR:
            if mapped:
                return self.nuclear_contrast_mapped
            return self.nuclear_contrast_mapped / self.mapping_contrast_gain
        raise ValueError(f"unknown spin {spin!r}")


def esr_spectrum(freq, detuning_offset, params: SensorParams):
    """Relative fluorescence of the pulsed ESR spectrum at ``freq``.

    Returns ``1 - sum_i w_i * C * L(freq - (nu_i + detuning_offset))``
    where ``L`` is a unit-height Lorentzian of FWHM ``esr_linewidth``,
    the ``nu_i`` are the hyperfine line centers and the weights ``w_i``
    follow the nuclear polarization.  ``detuning_offset`` shifts the
    whole triplet, which is how a field-induced line shift is applied.

    Parameters may be scalars or arrays (broadcast over ``freq``).
    """
    freq = np.asarray(freq, dtype=float)
    hwhm = params.esr_linewidth / 2.0
    centers = params.hyperfine_centers()
    weights = params.hyperfine_weights()
    dips = 0.0
    for c, w in zip(centers, weights):
        delta = freq - (c + detuning_offset)
        dips = dips + w * hwhm**2 / (delta**2 + hwhm**2)
    result = 1.0 - params.esr_contrast * dips
    return result if result.shape else float(result)


def ramsey_signal(theta, t, accumulated_phase, spin: Spin,
                  params: SensorParams, detuning: float = 0.0,
                  mapped: bool = True, contrast_scale=1.0):
    """Population signal of a Ramsey sequence with free evolution time ``t``.

    Returns ``0.5 * (1 - C_eff * exp(-t/T2*) * cos(2*pi*detuning*t + phi
    + theta))`` where ``phi`` is the accumulated quantum phase and
    ``theta`` the phase of the final pi/2 pulse.  ``contrast_scale``
    multiplies the readout contrast; the acquisition engine uses it to
    fold in the mapping-pulse transfer probability.

    At ``theta = pi/2`` and zero phase the signal sits exactly at the
    0.5 bias point, where the response to a small phase is linear with
    slope ``C_eff/2 * exp(-t/T2*)`` per radian.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("free evolution time must be >= 0")
    c_eff = params.ramsey_contrast(spin, mapped=mapped) * contrast_scale
    envelope = np.exp(-t / params.ramsey_t2(spin))
    phase = 2.0 * np.pi * detuning * t + accumulated_phase + theta
    result = 0.5 * (1.0 - c_eff * envelope * np.cos(phase))
    return result if np.ndim(result) else float(result)


def ramsey_slope_per_radian(params: SensorParams, spin: Spin, t: float,
                            mapped: bool = True) -> float:
    """Linear-response slope dS/dphi at the theta = pi/2 bias point."""
    c_eff = params.ramsey_contrast(spin, mapped=mapped)
    return 0.5 * c_eff * np.exp(-t / params.ramsey_t2(spin))


def mapping_fidelity(pulse_detuning, params: SensorParams):
    """Population-transfer probability of the selective mapping pi pulse.

    For a square pulse of Rabi frequency ``Omega_R`` calibrated to a pi
    rotation on resonance, a detuning ``delta`` reduces the transfer to

        P(delta) = Omega_R^2/(Omega_R^2 + delta^2)
                   * sin^2(pi/2 * sqrt(Omega_R^2 + delta^2)/Omega_R)

    which is 1 at zero detuning, even in ``delta``, and falls off over a
    scale of roughly one Rabi frequency.
    """
    delta = np.asarray(pulse_detuning, dtype=float)
    w = params.mapping_rabi
    w_eff_sq = w * w + delta * delta
    result = (w * w / w_eff_sq) * np.sin(
        0.5 * np.pi * np.sqrt(w_eff_sq) / w) ** 2
    return result if result.shape else float(result)
