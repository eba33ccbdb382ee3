"""Simulator and analytic toolkit for the Flip-KLJN noise-based bit exchange."""

from .analytics import AnalyticInputs, breakdown, exact_breakdown, stationary_flip_ber, total_bep
from .eve import EveModel
from .exceptions import ConfigurationError, DomainError
from .harness import ExperimentConfig, ExperimentReport, run_trials
from .noise import Channel, MeasurementChannel, NoiseEnvironment, Resistor, build_environment
from .presets import PresetId, get_preset, run_figure_preset
from .protocol import DetectorKind, Role, Scheme, State, ThresholdSet
from .report import emit_report
from .thresholds import OptimizationProblem, ThresholdCache, optimize_current_thresholds, optimize_voltage_thresholds

__all__ = [
    "AnalyticInputs", "breakdown", "exact_breakdown", "stationary_flip_ber", "total_bep",
    "EveModel", "ConfigurationError", "DomainError",
    "ExperimentConfig", "ExperimentReport", "run_trials",
    "Channel", "MeasurementChannel", "NoiseEnvironment", "Resistor", "build_environment",
    "PresetId", "get_preset", "run_figure_preset",
    "DetectorKind", "Role", "Scheme", "State", "ThresholdSet",
    "emit_report",
    "OptimizationProblem", "ThresholdCache", "optimize_current_thresholds", "optimize_voltage_thresholds",
]
