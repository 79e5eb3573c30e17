"""
Exceptions
==========

Error hierarchy shared by every layer. The CLI maps ConfigError to exit
status 2 and every other DSAError to exit status 1.
"""

from typing import Dict, Optional


class DSAError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(DSAError):
    """Invalid box or a box that does not intersect the image."""


class ShapeError(DSAError):
    """Array dimensions do not match what an operation expects."""


class GenerationError(DSAError):
    """Scene generation failed (degenerate placement or rejection budget exhausted)."""

    def __init__(self, message: str, counts: Optional[Dict[str, int]] = None):
        self.counts = dict(counts or {})
        if self.counts:
            detail = ", ".join(f"{k}={v}" for k, v in sorted(self.counts.items()))
            message = f"{message} ({detail})"
        super().__init__(message)


class TrainingError(DSAError):
    """Decoder training diverged."""


class ModelFormatError(DSAError):
    """Model file has a bad magic, unsupported version or is truncated."""


class ConfigError(DSAError):
    """Unknown configuration key or invalid value."""


class EvaluationError(DSAError):
    """Metric or grid search asked to score an empty result set."""


class ArtifactError(DSAError):
    """A required artifact (dataset, model, detections) is missing."""

    def __init__(self, message: str, step: Optional[str] = None):
        self.step = step
        if step:
            message = f"{message}; run `{step}` first"
        super().__init__(message)


class SelectionError(DSAError):
    """Greedy selection produced a non-finite or increasing interpretation loss."""
