"""Iterative camera-LiDAR extrinsic refinement via surrogate diffusion.

Any denoiser that predicts a left-multiplied correction twist from a scene
and a rough extrinsic can be wrapped into a diffusion-style reverse process
that repeatedly re-estimates the clean correction and blends toward it along
a cosine noise schedule. The package bundles the SE(3) arithmetic, the
schedule and samplers, synthetic denoiser stand-ins, an external-process
denoiser protocol, KITTI ingestion, and benchmark tooling around that idea.
"""

from . import cli, denoisers, diffusion, geometry, kitti, metrics, schedule, se3
from .denoisers import (
    Condition,
    ContractiveDenoiser,
    DenoiserBackend,
    DenoiserError,
    DenoiserSession,
    ExternalDenoiser,
    NoisyOracleDenoiser,
    OracleDenoiser,
    open_session,
)
from .diffusion import (
    DiffusionConfig,
    RefinementTrace,
    ancestral_step,
    forward_sample,
    lsd_reverse,
    multi_range_run,
    naive_iterate,
    surrogate_x0,
)
from .geometry import Intrinsics, PerturbationSpec, PointCloud, perturb_extrinsic
from .kitti import CalibSample, SplitSpec, load_samples
from .metrics import AggregateReport, SampleError, aggregate, sample_error, transform_error
from .schedule import NoiseSchedule, build_cosine_schedule, timestep_subsequence

__version__ = "0.1.0"
