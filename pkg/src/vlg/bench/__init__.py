"""Experiment harness: axis evaluation, ablation, scaling, tiers, reports."""

from .experiments import (AXES, AxisReport, ExperimentConfig, run_ablation, run_axis_eval,
                          run_data_scaling, run_text_tiers)
from .report import emit_report

__all__ = ["AXES", "AxisReport", "ExperimentConfig", "run_ablation", "run_axis_eval",
           "run_data_scaling", "run_text_tiers", "emit_report"]
