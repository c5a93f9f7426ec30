"""Hybrid wide/tele zoom fusion with mask-based fallback to the wide frame."""

from .coarse_align import CameraMeta, Rect, Translation2D
from .imaging import FlowField, InvalidInputError
from .pipeline import PipelineConfig, PipelineResult, StageTimings, run_pipeline

__all__ = [
    "CameraMeta",
    "FlowField",
    "InvalidInputError",
    "PipelineConfig",
    "PipelineResult",
    "Rect",
    "StageTimings",
    "Translation2D",
    "run_pipeline",
]

__version__ = "0.1.0"
