"""Magnetic field trajectory and readout-noise generation.

The field trajectory models the deviation ``db(t)`` of the bias field
along the sensor axis: engineered sinusoidal perturbations, slow
environmental drift and optional static offsets.  Stochastic components
(random walk, Ornstein-Uhlenbeck) live on a fixed internal grid with
linear interpolation in between, and are generated from a counter-based
RNG keyed by ``(seed, component index)``.  Evaluation is therefore
bit-reproducible and independent of query order, which matters because
the acquisition engine does not query times monotonically.

Readout noise is additive Gaussian per raw fluorescence sample, with an
optional photon shot-noise term scaling as ``sqrt(signal / photons)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

_TRAJECTORY_TAG = 0x7472616A  # stream-key namespace for field components


@dataclass(frozen=True)
class Sinusoid:
    """Deterministic sine component, ``amplitude_pp/2 * sin(2*pi*t/period + phase)``."""
    amplitude_pp: float
    period: float
    phase: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("sinusoid period must be > 0")
        if self.amplitude_pp < 0:
            raise ValueError("sinusoid amplitude_pp must be >= 0")


@dataclass(frozen=True)
class RandomWalk:
    """Wiener process with variance ``diffusion * t`` (gauss^2/s)."""
    diffusion: float

    def __post_init__(self):
        if self.diffusion < 0:
            raise ValueError("random walk diffusion must be >= 0")


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """Stationary OU drift with rms ``sigma`` and the given correlation time."""
    sigma: float
    correlation_time: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("OU sigma must be >= 0")
        if self.correlation_time <= 0:
            raise ValueError("OU correlation_time must be > 0")


@dataclass(frozen=True)
class Constant:
    """Static field offset in gauss."""
    offset: float


FieldComponent = Union[Sinusoid, RandomWalk, OrnsteinUhlenbeck, Constant]


class FieldTrajectory:
    """Deviation of the axial magnetic field from the static bias, in gauss.

    Immutable after construction; safe for concurrent reads.  Stochastic
    samples are cached on the internal grid and regenerated from the
    keyed stream whenever the cache must grow, so a given ``(seed, t)``
    always yields the same value.
    """

    def __init__(self, components: Sequence[FieldComponent], seed: int,
                 grid: float = 1.0):
        if grid <= 0:
            raise ValueError("grid spacing must be > 0")
        self.components = tuple(components)
        self.seed = int(seed)
        self.grid = float(grid)
        self._caches: dict[int, np.ndarray] = {}

    def _stream(self, index: int) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF,
                        (_TRAJECTORY_TAG << 16) | index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def _grid_values(self, index: int, n: int) -> np.ndarray:
        """Grid samples [0, n) of stochastic component ``index``.

        The whole prefix is regenerated on growth so cached values never
        depend on the order or granularity of earlier queries.
        """
        cached = self._caches.get(index)
        if cached is not None and len(cached) >= n:
            return cached
        comp = self.components[index]
        # Round up generously to amortize regeneration.
        n_gen = max(n, 2 * len(cached) if cached is not None else 0, 1024)
        rng = self._stream(index)
        if isinstance(comp, RandomWalk):
            steps = rng.standard_normal(n_gen) * np.sqrt(
                comp.diffusion * self.grid)
            values = np.concatenate([[0.0], np.cumsum(steps)])[:n_gen]
        elif isinstance(comp, OrnsteinUhlenbeck):
            a = np.exp(-self.grid / comp.correlation_time)
            kick = comp.sigma * np.sqrt(1.0 - a * a)
            normals = rng.standard_normal(n_gen)
            values = np.empty(n_gen)
            values[0] = comp.sigma * normals[0]
            for k in range(1, n_gen):
                values[k] = a * values[k - 1] + kick * normals[k]
        else:
            raise TypeError(f"component {type(comp).__name__} has no grid values")
        self._caches[index] = values
        return values

    def _component_at(self, index: int, t: np.ndarray) -> np.ndarray:
        comp = self.components[index]
        if isinstance(comp, Constant):
            return np.full_like(t, comp.offset)
        if isinstance(comp, Sinusoid):
            return (comp.amplitude_pp / 2.0) * np.sin(
                2.0 * np.pi * t / comp.period + comp.phase)
        # Stochastic components: linear interpolation on the grid.
        if isinstance(comp, OrnsteinUhlenbeck) and comp.sigma == 0:
            return np.zeros_like(t)
        if isinstance(comp, RandomWalk) and comp.diffusion == 0:
            return np.zeros_like(t)
        x = t / self.grid
        k = np.floor(x).astype(np.int64)
        frac = x - k
        values = self._grid_values(index, int(k.max()) + 2)
        return values[k] * (1.0 - frac) + values[k + 1] * frac

    def field_at(self, t):
        """Field deviation at time(s) ``t`` (seconds), in gauss."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise ValueError("trajectory time must be >= 0")
        total = np.zeros_like(t_arr)
        for i in range(len(self.components)):
            total = total + self._component_at(i, t_arr)
        return total if total.shape else float(total)


def field_at(trajectory: FieldTrajectory, t):
    """Module-level alias of :meth:`FieldTrajectory.field_at`."""
    return trajectory.field_at(t)


@dataclass(frozen=True)
class NoiseModel:
    """Additive readout noise per raw fluorescence sample.

    ``photon_budget`` defaults to the photons collected in one 30 us
    readout window at the measured collection rate of 5e13 photons/s.
    """
    readout_sigma: float = 0.0
    shot_noise_enabled: bool = False
    photon_budget: float = 1.5e9

    def __post_init__(self):
        if self.readout_sigma < 0:
            raise ValueError("readout_sigma must be >= 0")
        if self.photon_budget <= 0:
            raise ValueError("photon_budget must be > 0")

    def total_sigma(self, true_signal):
        """Combined noise sigma for samples of the given true signal."""
        var = np.full_like(np.asarray(true_signal, dtype=float),
                           self.readout_sigma ** 2)
        if self.shot_noise_enabled:
            var = var + np.clip(true_signal, 0.0, None) / self.photon_budget
        return np.sqrt(var)


def sample_readout(true_signal, noise: NoiseModel,
                   rng: np.random.Generator):
    """One noisy readout per true signal value.  Output is not clipped."""
    signal = np.asarray(true_signal, dtype=float)
    if np.any(signal < 0) or np.any(signal > 1):
        raise ValueError("true_signal must lie in [0, 1]")
    noisy = signal + noise.total_sigma(signal) * rng.standard_normal(signal.shape)
    return noisy if noisy.shape else float(noisy)
