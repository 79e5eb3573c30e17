"""
Services Package
================

Business logic layer for the detection selection toolkit.

Services:
- GenerationService: Dataset generation and detection simulation
- TrainingService: Per-class decoder training
- PostprocessService: NMS baselines and DSA method dispatch
- ExperimentService: Scenario runs and report generation
- ExportService: Selection, ownership map and debugging exports
- StatisticsService: Report tables
"""

from .generation_service import GenerationService, SimulatedScene
from .training_service import TrainingService
from .postprocess_service import PostprocessService
from .experiment_service import ExperimentService
from .export_service import ExportService
from .statistics_service import StatisticsService

__all__ = [
    'GenerationService',
    'SimulatedScene',
    'TrainingService',
    'PostprocessService',
    'ExperimentService',
    'ExportService',
    'StatisticsService',
]
