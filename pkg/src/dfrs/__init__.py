"""Distributed field reconstruction from one-bit randomized-threshold sensors."""

from .errors import *  # noqa: F401,F403
from .fields import (ConstantField, LipschitzLinearField, PiecewiseStepField, SinusoidalField,
                     evaluate, global_modulus, local_modulus)
from .geometry import (CellPartition, Deployment, NearUniformSpec, deploy_grid, deploy_iid_uniform,
                       sanov_bound)
from .sensing import NoiseModel, ThresholdModel, observe, quantize_threshold, quantize_bit_expansion
from .coding import Schedule, SensorMessage, decode, encode, overhead_rate
from .reconstruction import (DitherCdf, FieldEstimate, estimate_supercell, full_pipeline, reconstruct,
                             reconstruct_known_dither)
from .config import DeploymentSpec, ExperimentConfig, load_config, loads_config
from .analysis import (ExperimentResult, as_convergence_trend, clt_check, cramer_rao_bound,
                       mse_monte_carlo, optimal_L, scaling_experiment, theorem1_bound, worst_case_mse)

__version__ = "0.1.0"
