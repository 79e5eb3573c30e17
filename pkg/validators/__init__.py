"""
Validators Package
==================

This package contains scene validation logic:
- Mask checks (disjoint visible masks, visible inside amodal, visibility minimum)
- Colour check
- Image check (non-black pixels match the visible union)

Modules:
- scene_validator.py: SceneValidator and ValidationResult
"""

from .scene_validator import SceneValidator, ValidationResult

__all__ = ['SceneValidator', 'ValidationResult']
