"""Sub-sampled Newton optimization with eigenvalue thresholding."""

from .baselines import BaselineConfig, reference_minimizer, run_baseline
from .data import SpikedModelSpec, generate_spiked, load_csv, load_libsvm, standardize
from .linalg import (
    ScalingMatrix,
    TruncatedEigen,
    apply_scaling,
    build_scaling_matrix,
    spectral_norm,
    truncated_eigen,
)
from .optimizer import (
    ConvexSet,
    NewSampConfig,
    adaptive_step,
    newsamp_run,
    plain_subsampled_newton_run,
    project,
)
from .problems import Dataset, Objective, make_objective, problem_constants
from .sampling import SampleScheme, next_sample
from .theory import (
    CoefficientReport,
    CompositeBound,
    coefficient_drift_bound,
    coefficients_s1,
    coefficients_s2,
    effective_rank,
    iteration_bound,
    iteration_bound_steps,
    local_rate,
    phase_split,
    sufficient_start_radius,
    suggested_sample_size,
)
from .trace import Trace, TraceRecord

__version__ = "0.1.0"
