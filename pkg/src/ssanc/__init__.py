"""Multichannel active noise control with spatially selective constraints.

Filter designs (conventional ANC, hard- and soft-constrained spatially
selective ANC) in the time and frequency domains, a synthetic scene
generator, relative impulse response estimation, intelligibility-weighted
metrics and a sweep runner.
"""

__version__ = "0.1.0"

from .design import (
    ControlFilter,
    CostBreakdown,
    DesignParams,
    TimeDomainProblem,
    compute_beta,
    compute_rho,
    cost_breakdown,
    design_anc_time,
    design_hard_time,
    design_soft_time,
)
from .errors import (
    ConfigError,
    DivergenceError,
    InsufficientDataError,
    NotPositiveDefiniteError,
    NumericalError,
    SsancError,
)
from .freq import (
    FreqModel,
    design_anc_freq,
    design_hard_freq,
    design_soft_freq,
    estimate_freq_model,
    filter_response,
    limit_distances,
)
from .metrics import (
    BandImportance,
    MetricsReport,
    highpass_minphase,
    noise_reduction,
    sd_intellig,
    snr_improvement_intellig,
    third_octave_psd,
)
from .reir import ReirSet, deconvolved_reirs, lms_estimate_reirs, normalized_misalignment, probe_desired_mics
from .scene import (
    ControlOutput,
    Excitation,
    Role,
    ScenarioConfig,
    SceneSignals,
    SourceSpec,
    apply_control,
    estimate_leakage,
    generate_synthetic_ir,
    synthesize_scene,
)
from .sigcore import (
    BlockConvOperator,
    Component,
    Covariance,
    Fir,
    MultichannelSignal,
    OperatorKind,
    SelectionVector,
    Signal,
    build_constraint_operator,
    build_secondary_operator,
    estimate_covariance,
    fir_convolve,
    lambda_max,
    selection_vector,
    solve_spd,
)
from .config import RunConfig, load_config
from .sweep import SweepResult, export_artifacts, prepare, run_freq_checks, run_sweep

__all__ = [name for name in dir() if not name.startswith("_")]
