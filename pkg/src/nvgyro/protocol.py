"""Interleaved six-measurement acquisition blocks and the contrast signals.

One sequence interleaves a nuclear Ramsey measurement at final-pulse
phase +90 deg, two ESR samples at the upper probe frequencies, the
mirrored Ramsey measurement at -90 deg, and two ESR samples at the lower
probe frequencies.  A block repeats the sequence ``n_r`` times, averages
each of the six channels, and is followed by a dead time during which
the estimates are computed and corrections applied.

The symmetrized contrast

    F = (S+90 - S-90) / (S+90 + S-90)

rejects common-mode gain noise exactly; ``G`` is the same quotient built
from the unmapped (bare fluorescence) nuclear readout, lower in
amplitude by the mapping contrast gain.

The field is sampled once per sequence and held constant across it; all
modeled disturbances vary on timescales of seconds or longer, a thousand
times the sequence length.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import control as control_mod
from . import estimation
from .environment import FieldTrajectory, NoiseModel
from .spinmodel import (NUCLEAR, SensorParams, esr_spectrum,
                        mapping_fidelity, ramsey_signal)

_NOISE_TAG = 0x6E6F6973  # stream-key namespace for readout noise


@dataclass(frozen=True)
class SequenceConfig:
    """Timing and geometry of the interleaved six-measurement sequence."""
    t_ramsey: float = 600e-6            # nuclear free precession, s
    theta_plus: float = np.pi / 2.0     # final-pulse phases, rad
    theta_minus: float = -np.pi / 2.0
    esr_offsets: tuple[float, float, float, float] = (
        -700e3, -350e3, 350e3, 700e3)   # probe offsets from tracked center, Hz
    n_r: int = 2000                     # repetitions per block
    block_dead_time: float = 50.0       # computation/update pause, s
    sequence_length: float = 1e-3       # wall-clock of one sequence, s
    use_mapping: bool = True            # mapped (F) vs bare (G) readout
    emulated_rotation: float = 0.0      # injected rotation rate, deg/s

    def __post_init__(self):
        if len(self.esr_offsets) != 4:
            raise ValueError("esr_offsets must hold exactly 4 entries")
        if not all(np.diff(self.esr_offsets) > 0):
            raise ValueError("esr_offsets must be strictly increasing")
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        for name in ("t_ramsey", "sequence_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.block_dead_time < 0:
            raise ValueError("block_dead_time must be >= 0")
        if self.t_ramsey > self.sequence_length:
            raise ValueError("t_ramsey cannot exceed the sequence length")

    @property
    def block_duration(self) -> float:
        return self.n_r * self.sequence_length + self.block_dead_time


@dataclass(frozen=True)
class AcquisitionRecord:
    """Block-averaged outputs of one six-measurement block."""
    t_start: float
    s_plus: float
    s_minus: float
    esr_samples: tuple[float, float, float, float]
    probe_frequencies: tuple[float, float, float, float]
    nuclear_drive: float
    n_averaged: int
    estimated_center: float = float("nan")   # NaN when out of band
    mapping_correction: float = 0.0
    nuclear_correction: float = 0.0

    @property
    def applied_frequencies(self) -> tuple:
        return self.probe_frequencies + (self.nuclear_drive,)

    @property
    def contrast(self) -> float:
        return contrast_F(self.s_plus, self.s_minus)


def contrast_F(s_plus, s_minus):
    """Symmetrized contrast of the mapped readout, (S+ - S-)/(S+ + S-)."""
    s_plus = np.asarray(s_plus, dtype=float)
    s_minus = np.asarray(s_minus, dtype=float)
    denom = s_plus + s_minus
    if np.any(denom <= 0):
        raise ValueError("degenerate contrast denominator (S+ + S- <= 0); "
                         "corrupt data")
    result = (s_plus - s_minus) / denom
    return result if result.shape else float(result)


def contrast_G(s_plus_raw, s_minus_raw):
    """Contrast of the bare (unmapped) nuclear readout; same quotient as F."""
    return contrast_F(s_plus_raw, s_minus_raw)


def _block_rng(seed: int, block_index: int) -> np.random.Generator:
    key = np.array([(seed & 0xFFFFFFFFFFFFFFFF) ^ (_NOISE_TAG << 24),
                    block_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def run_block(params: SensorParams, config: SequenceConfig,
              trajectory: FieldTrajectory, noise: NoiseModel,
              feedback: control_mod.FeedbackState, t_start: float,
              seed: int = 0, block_index: int = 0) -> AcquisitionRecord:
    """Simulate one block of ``n_r`` interleaved sequences.

    The feedback state supplies the applied probe set, mapping-pulse
    correction and nuclear drive correction; the record holds the six
    block-averaged channels with readout noise applied per raw sample.
    """
    if t_start < 0:
        raise ValueError("t_start must be >= 0")
    n_r = config.n_r
    ts = t_start + np.arange(n_r) * config.sequence_length
    db = np.atleast_1d(trajectory.field_at(ts))

    # Nuclear quantum phase: field deviation, emulated rotation, and the
    # applied drive-frequency correction (a drive shift subtracts from
    # the accumulated phase).
    omega_rad = config.emulated_rotation * np.pi / 180.0
    phi = (2.0 * np.pi * params.gamma_n * db * config.t_ramsey
           + omega_rad * config.t_ramsey
           - 2.0 * np.pi * feedback.nuclear_correction * config.t_ramsey)

    # The tracked electronic transition sits on the lower branch: its
    # frequency moves by -gamma_e * db under a field deviation db.
    line_shift = -params.gamma_e * db

    if config.use_mapping:
        mapping_detuning = line_shift - feedback.mapping_correction
        contrast_scale = mapping_fidelity(mapping_detuning, params)
    else:
        contrast_scale = 1.0
    s_plus_true = ramsey_signal(config.theta_plus, config.t_ramsey, phi,
                                NUCLEAR, params, mapped=config.use_mapping,
                                contrast_scale=contrast_scale)
    s_minus_true = ramsey_signal(config.theta_minus, config.t_ramsey, phi,
                                 NUCLEAR, params, mapped=config.use_mapping,
                                 contrast_scale=contrast_scale)

    probes = feedback.esr_center + np.asarray(config.esr_offsets)
    esr_true = esr_spectrum(probes[:, None], line_shift[None, :], params)

    rng = _block_rng(seed, block_index)
    draws = rng.standard_normal((6, n_r))
    s_plus = s_plus_true + noise.total_sigma(s_plus_true) * draws[0]
    s_minus = s_minus_true + noise.total_sigma(s_minus_true) * draws[1]
    esr = esr_true + noise.total_sigma(esr_true) * draws[2:6]

    return AcquisitionRecord(
        t_start=t_start,
        s_plus=float(np.mean(s_plus)),
        s_minus=float(np.mean(s_minus)),
        esr_samples=tuple(float(x) for x in esr.mean(axis=1)),
        probe_frequencies=tuple(float(x) for x in probes),
        nuclear_drive=params.nu_n + feedback.nuclear_correction,
        n_averaged=n_r,
        mapping_correction=feedback.mapping_correction,
        nuclear_correction=feedback.nuclear_correction,
    )


@dataclass
class ExperimentResult:
    records: list
    feedback_log: list
    out_of_band_blocks: list
    final_state: control_mod.FeedbackState | None
    aborted: bool = False
    error: str | None = None


@dataclass(frozen=True)
class FeedbackSnapshot:
    t: float
    estimated_center: float
    applied_center: float
    mapping_correction: float
    nuclear_correction: float
    out_of_band: bool


def run_experiment(params: SensorParams, config: SequenceConfig,
                   trajectory: FieldTrajectory, noise: NoiseModel,
                   controller: control_mod.Controller | None,
                   duration: float, seed: int = 0,
                   estimator_threshold: float | None = None
                   ) -> ExperimentResult:
    """Alternate acquisition blocks and controller updates for ``duration``.

    With ``controller=None`` the probe set and drive stay at their
    nominal values (free-running reference run); estimates are still
    computed per block for the record stream, and out-of-band blocks are
    logged with a NaN estimate.  Controller exceptions abort the run,
    preserving the records gathered so far.
    """
    block_time = config.block_duration
    if duration < config.n_r * config.sequence_length:
        raise ValueError(
            f"duration {duration:g}s is shorter than one block "
            f"({config.n_r * config.sequence_length:g}s of acquisition)")
    if estimator_threshold is None:
        estimator_threshold = 1e-3 * estimation.nominal_slope_difference(
            params, config.esr_offsets)

    state = (controller.start() if controller is not None
             else control_mod.initial_state(params, gain=0.0))
    records: list[AcquisitionRecord] = []
    log: list[FeedbackSnapshot] = []
    oob: list[int] = []
    t = 0.0
    index = 0
    last_start = -np.inf
    while t + config.n_r * config.sequence_length <= duration:
        if t <= last_start:
            raise RuntimeError("non-monotonic block start; scheduling bug")
        last_start = t
        record = run_block(params, config, trajectory, noise, state, t,
                           seed=seed, block_index=index)
        reading = estimation.FourPointReading(
            frequencies=record.probe_frequencies,
            signals=record.esr_samples)
        try:
            center = estimation.four_point_estimate(
                reading, min_slope_difference=estimator_threshold)
            out_of_band = False
        except estimation.OutOfBandError:
            center = float("nan")
            out_of_band = True
            oob.append(index)
        records.append(dataclasses.replace(record, estimated_center=center))
        if controller is not None and not out_of_band:
            try:
                state = controller.update(state, t, center)
            except Exception as exc:  # preserve partial results
                return ExperimentResult(records=records, feedback_log=log,
                                        out_of_band_blocks=oob,
                                        final_state=state, aborted=True,
                                        error=f"{type(exc).__name__}: {exc}")
        log.append(FeedbackSnapshot(
            t=t, estimated_center=center, applied_center=state.esr_center,
            mapping_correction=state.mapping_correction,
            nuclear_correction=state.nuclear_correction,
            out_of_band=out_of_band))
        t += block_time
        index += 1
    return ExperimentResult(records=records, feedback_log=log,
                            out_of_band_blocks=oob, final_state=state)


def records_table(records: Sequence[AcquisitionRecord],
                  use_mapping: bool) -> tuple[list[str], list[list]]:
    """Header and rows for the records CSV.

    The contrast lands in the F column for mapped runs and in the G
    column otherwise; the unmeasured column holds NaN.
    """
    header = ["t_start_s", "s_plus", "s_minus",
              "esr_1", "esr_2", "esr_3", "esr_4", "F", "G",
              "nu_1_hz", "nu_2_hz", "nu_3_hz", "nu_4_hz",
              "nuclear_drive_hz", "esr_center_est_hz", "n_averaged"]
    rows = []
    for r in records:
        c = contrast_F(r.s_plus, r.s_minus)
        rows.append([r.t_start, r.s_plus, r.s_minus, *r.esr_samples,
                     c if use_mapping else float("nan"),
                     c if not use_mapping else float("nan"),
                     *r.probe_frequencies, r.nuclear_drive,
                     r.estimated_center, r.n_averaged])
    return header, rows
