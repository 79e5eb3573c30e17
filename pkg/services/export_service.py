"""
Export Service
==============

Handles debugging exports following Single Responsibility Principle:
selected detections, decision logs, composite canvases and
reconstruction loss traces.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from core.geometry import Detection
from core.image_io import write_png
from core.selection import Interpretation
from managers.file_manager import FileManager
from managers.jsonl_manager import JSONLManager

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def owner_image(owner: np.ndarray) -> np.ndarray:
    """False-colour rendering of an ownership map; blank pixels stay black."""
    palette = np.random.default_rng(0).uniform(0.3, 1.0, size=(max(int(owner.max()) + 1, 1), 3))
    out = np.zeros(owner.shape + (3,))
    lit = owner >= 0
    out[lit] = palette[owner[lit]]
    return out


class ExportService:
    """
    Service responsible for exporting results to files.

    Follows SRP: Only handles export operations.
    """

    def __init__(self, jsonl_manager: JSONLManager = None, file_manager: FileManager = None):
        """
        Initialize export service.

        Args:
            jsonl_manager: JSONL manager instance
            file_manager: File manager instance
        """
        self.jsonl_manager = jsonl_manager or JSONLManager()
        self.file_manager = file_manager or FileManager()

    def export_selection(
        self,
        scene_id: str,
        selected: Sequence[Detection],
        decisions: Sequence[Dict],
        directory: PathLike,
    ) -> Path:
        """
        Write selected detections and, when present, the decision log.

        Args:
            scene_id: Scene identifier
            selected: Selected detections
            decisions: Greedy step records
            directory: Output directory

        Returns:
            Path of the detections file
        """
        root = self.file_manager.ensure_directory(directory)
        path = root / f"{scene_id}.jsonl"
        self.jsonl_manager.write_detections(selected, path)
        if decisions:
            self.jsonl_manager.write_jsonl(list(decisions), root / "decisions" / f"{scene_id}.jsonl")
        return path

    def dump_interpretation(self, interpretation: Interpretation, scene_id: str, directory: PathLike) -> List[Path]:
        """
        Dump the composite canvas, ownership map and per-detection loss traces.

        Args:
            interpretation: Result of greedy selection
            scene_id: Scene identifier
            directory: Dump directory

        Returns:
            Written paths
        """
        root = self.file_manager.ensure_directory(Path(directory) / scene_id)
        written = [
            write_png(interpretation.canvas, root / "canvas.png"),
            write_png(owner_image(interpretation.owner), root / "owner.png"),
        ]
        rows = []
        for (index, cls), single in interpretation.cache.items():
            rows.extend(
                {"index": index, "cls": cls, "step": step, "kl": kl, "data": data, "total": total}
                for step, kl, data, total in single.trace
            )
        if rows:
            trace_path = root / "loss_traces.csv"
            pd.DataFrame(rows).to_csv(trace_path, index=False)
            written.append(trace_path)
        logger.debug("Dumped %d files for scene %s", len(written), scene_id)
        return written
