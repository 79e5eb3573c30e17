"""
Managers Package
================

Persistence and lookup layer for the detection selection toolkit.

Managers:
- ClassManager: Shape class catalog lookups
- ConfigManager: key=value run configuration
- DatasetManager: Scene and decoder dataset directories
- FileManager: File system operations
- JSONLManager: JSONL file management
- ModelManager: Decoder model directory
"""

from .class_manager import ClassManager
from .config_manager import ConfigManager
from .dataset_manager import DatasetManager
from .file_manager import FileManager
from .jsonl_manager import JSONLManager
from .model_manager import ModelManager

__all__ = [
    'ClassManager',
    'ConfigManager',
    'DatasetManager',
    'FileManager',
    'JSONLManager',
    'ModelManager',
]
