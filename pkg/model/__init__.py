from .analysis import (
    FlowEnsemble, ModelParams, ensemble_derive, epoch_oracle, fixed_point, harmonic_gap, is_stable,
    lambda_gamma, recursion_trajectory, utilization_bounds,
)
from .config import ModelConfig, ScenarioConfig
from .errors import AnalysisError, BufsimError, ConfigError, ReportMismatchError, SchedulingError
from .metrics import MetricsReport
from .sim_core import Simulator, TraceKind, TraceRecord
from .validators import validate_config, validate_model

__all__ = [
    'FlowEnsemble', 'ModelParams', 'ensemble_derive', 'epoch_oracle', 'fixed_point', 'harmonic_gap',
    'is_stable', 'lambda_gamma', 'recursion_trajectory', 'utilization_bounds',
    'ModelConfig', 'ScenarioConfig',
    'AnalysisError', 'BufsimError', 'ConfigError', 'ReportMismatchError', 'SchedulingError',
    'MetricsReport', 'Simulator', 'TraceKind', 'TraceRecord',
    'validate_config', 'validate_model',
]
