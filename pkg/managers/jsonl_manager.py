"""
JSONL Manager
=============

Manages JSONL file operations: manifests, detections, decision logs and
per-scene result logs.
Follows SRP: Only handles JSONL file reading/writing.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from core.detection_simulator import index_detections
from core.geometry import Detection

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class JSONLManager:
    """
    Manager responsible for JSONL file operations.

    Follows SRP: Only handles JSONL file I/O.
    """

    def read_jsonl(self, filepath: PathLike) -> List[Dict[str, Any]]:
        """
        Read JSONL file and return list of records.

        Args:
            filepath: Path to JSONL file

        Returns:
            List of dictionaries (empty if the file does not exist)
        """
        records = []

        if not os.path.exists(filepath):
            return records

        with open(filepath, "r", encoding="utf-8") as f:
            for line_num, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue

                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    logger.warning("Invalid JSON in %s at line %d: %s", filepath, line_num, e)
                    continue

        return records

    def write_jsonl(self, records: Sequence[Dict[str, Any]], filepath: PathLike) -> int:
        """
        Write records to JSONL file.

        Args:
            records: Dictionaries to write
            filepath: Path to JSONL file (overwritten)

        Returns:
            Number of records written
        """
        Path(filepath).parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")

        return len(records)

    def count_records(self, filepath: PathLike) -> int:
        """
        Count records in a JSONL file.

        Args:
            filepath: Path to JSONL file

        Returns:
            Number of non-empty lines
        """
        if not os.path.exists(filepath):
            return 0

        with open(filepath, "r", encoding="utf-8") as f:
            return sum(1 for line in f if line.strip() and not line.startswith("#"))

    def write_detections(self, detections: Sequence[Detection], filepath: PathLike) -> int:
        """
        Write detections as {score, box, occ, cls} lines, sorted by score.

        Args:
            detections: Detections of one scene
            filepath: Target file

        Returns:
            Number of detections written
        """
        ordered = index_detections(detections)
        return self.write_jsonl([d.to_dict() for d in ordered], filepath)

    def read_detections(self, filepath: PathLike) -> List[Detection]:
        """
        Read detections; each gets its position in score order as index.

        Args:
            filepath: Detections file

        Returns:
            Detections sorted by score descending
        """
        raw = [Detection.from_dict(r) for r in self.read_jsonl(filepath)]
        return index_detections(raw)
