"""
Statistics Service
==================

Provides report tables following Single Responsibility Principle.
Only handles aggregation and formatting of experiment results.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import pandas as pd

from core.exceptions import ArtifactError
from core.metrics import Report, SceneResult

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "method", "param_name", "param_boxes", "param_labels",
    "acc_boxes", "se_boxes", "acc_labels", "se_labels", "n",
]


class StatisticsService:
    """
    Service responsible for generating statistics and reports.

    Follows SRP: Only handles statistics and reporting.
    """

    def reports_frame(self, reports: Sequence[Report]) -> pd.DataFrame:
        """
        Tabulate report rows.

        Args:
            reports: Report objects

        Returns:
            DataFrame with the report columns first, extras after
        """
        frame = pd.DataFrame([r.to_row() for r in reports])
        if frame.empty:
            return pd.DataFrame(columns=REPORT_COLUMNS)
        extras = [c for c in frame.columns if c not in REPORT_COLUMNS]
        return frame[REPORT_COLUMNS + extras]

    def write_reports(self, reports: Sequence[Report], path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.reports_frame(reports).to_csv(path, index=False)
        logger.info("Wrote %d report rows to %s", len(reports), path)
        return path

    def read_reports(self, path: Union[str, Path]) -> pd.DataFrame:
        path = Path(path)
        if not path.is_file():
            raise ArtifactError(f"missing {path}", step="experiment")
        return pd.read_csv(path)

    def scene_summary(self, results: Sequence[SceneResult]) -> pd.DataFrame:
        """
        Per-method accuracy by true object count.

        Args:
            results: Scene results of one or more methods

        Returns:
            DataFrame indexed by (method, true_count)
        """
        frame = pd.DataFrame([r.to_dict() for r in results])
        if frame.empty:
            return frame
        return frame.groupby(["method", "true_count"])[["boxes_correct", "labels_correct"]].mean()

    def format_report_table(self, frame: pd.DataFrame) -> str:
        """
        Format a report frame as a readable table.

        Args:
            frame: Output of reports_frame() or read_reports()

        Returns:
            Formatted table string
        """
        lines = []
        lines.append("=" * 80)
        lines.append("Experiment Report")
        lines.append("=" * 80)
        lines.append(f"{'Method':<22} {'Param':<14} {'Acc boxes':<18} {'Acc labels':<18} {'n':<6}")
        lines.append("-" * 80)

        for row in frame.to_dict("records"):
            param = f"{row['param_name']}={_fmt_param(row['param_boxes'])}/{_fmt_param(row['param_labels'])}"
            boxes = f"{row['acc_boxes']:.3f} ({row['se_boxes']:.4f})"
            labels = f"{row['acc_labels']:.3f} ({row['se_labels']:.4f})"
            lines.append(f"{row['method']:<22} {param:<14} {boxes:<18} {labels:<18} {int(row['n']):<6}")

        lines.append("=" * 80)
        return "\n".join(lines)

    def training_table(self, rows: List[Dict]) -> str:
        lines = [f"{'Class':<6} {'Train':<7} {'Held-out':<9} {'First loss':<12} {'Final loss':<12} {'Held-out MSE':<12}"]
        for row in rows:
            mse = "-" if row["held_out_mse"] is None else f"{row['held_out_mse']:.5f}"
            lines.append(
                f"{row['cls']:<6} {row['n_train']:<7} {row['n_held_out']:<9} "
                f"{row['first_loss']:<12.2f} {row['final_loss']:<12.2f} {mse:<12}"
            )
        return "\n".join(lines)


def _fmt_param(value) -> str:
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return "-"
    return f"{float(value):g}"
