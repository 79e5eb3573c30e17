"""
Class Manager
=============

Manages the shape class catalog.
Follows SRP: Only handles class-related lookups.
"""

from typing import Dict, List, Optional

from core.exceptions import ConfigError
from core.settings import SHAPE_CLASSES


class ClassManager:
    """
    Manager responsible for shape class queries.

    Follows SRP: Only handles catalog configuration and lookups.
    """

    def __init__(self, classes: Dict = None):
        """
        Initialize class manager.

        Args:
            classes: Class catalog dictionary (default: from settings)
        """
        self.classes = classes if classes is not None else SHAPE_CLASSES

    def get_class(self, class_id: int) -> Optional[Dict]:
        """
        Get class configuration.

        Args:
            class_id: Class identifier

        Returns:
            Class configuration dictionary or None
        """
        return self.classes.get(class_id)

    def get_class_name(self, class_id: int) -> str:
        """
        Get class name.

        Args:
            class_id: Class identifier

        Returns:
            Class name or "unknown"
        """
        info = self.get_class(class_id)
        return info.get("name", "unknown") if info else "unknown"

    def validate_class_id(self, class_id: int) -> bool:
        return class_id in self.classes

    def get_all_class_ids(self) -> List[int]:
        return sorted(self.classes.keys())

    def get_class_count(self) -> int:
        return len(self.classes)

    def is_rotation_invariant(self, class_id: int) -> bool:
        info = self.get_class(class_id)
        return bool(info and info.get("rotation_invariant"))

    def parse_class_list(self, text: Optional[str]) -> List[int]:
        """
        Parse a class selection such as "all", "8,9" or "1-4".

        Args:
            text: Selection text (None means all)

        Returns:
            Sorted list of class ids
        """
        if text is None or text.strip().lower() == "all":
            return self.get_all_class_ids()
        selected = set()
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                if "-" in part:
                    lo, hi = (int(p) for p in part.split("-", 1))
                    selected.update(range(lo, hi + 1))
                else:
                    selected.add(int(part))
            except ValueError:
                raise ConfigError(f"invalid class selection '{text}'") from None
        unknown = sorted(c for c in selected if not self.validate_class_id(c))
        if unknown:
            raise ConfigError(f"unknown class ids {unknown}; valid ids are {self.get_all_class_ids()}")
        return sorted(selected)
