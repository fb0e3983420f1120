"""Dual-spin quantum rotation-sensor simulator and stability toolkit."""

__version__ = "0.1.0"

from .spinmodel import (ELECTRONIC, NUCLEAR, SensorParams, esr_spectrum,
                        mapping_fidelity, ramsey_signal)
from .environment import (Constant, FieldTrajectory, NoiseModel,
                          OrnsteinUhlenbeck, RandomWalk, Sinusoid, field_at,
                          sample_readout)
from .protocol import (AcquisitionRecord, SequenceConfig, contrast_F,
                       contrast_G, run_block, run_experiment)
from .estimation import (FourPointReading, OutOfBandError, SensitivityReport,
                         four_point_estimate, sensitivity, slope_calibration)
from .control import (ControlConfig, Controller, FeedbackState, predict_next,
                      predictor_study, update_mapping, update_nuclear)
from .analysis import (AllanCurve, allan_deviation, find_periodic_feature,
                       rescale_to_rotation, stability_report)
from .config import ConfigError, ExperimentConfig, load_config
