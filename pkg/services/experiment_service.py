"""
Experiment Service
==================

Runs one scenario end to end: load datasets and decoders, simulate
detections, tune every method on the validation set, evaluate it on the
(optionally perturbed) test set and write reports plus per-scene logs.
Follows SRP: Only handles experiment orchestration.
"""

import logging
import multiprocessing
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from core import settings
from core.detection_simulator import NoiseConfig, shift_profile
from core.exceptions import GenerationError
from core.geometry import Detection
from core.metrics import (
    Report,
    SceneResult,
    accuracy_boxes,
    accuracy_labels,
    accuracy_matched,
    grid_search_lambda,
    grid_search_threshold,
)
from core.reconstruction import ReconCache
from core.run_config import RunConfig
from core.scene_builder import Scene, perturb_enlarge, perturb_rotate
from core.selection import DsaConfig
from core.suppression import threshold_select
from managers.dataset_manager import DatasetManager
from managers.file_manager import FileManager
from managers.jsonl_manager import JSONLManager
from managers.model_manager import ModelManager
from services.export_service import ExportService
from services.generation_service import GenerationService, SimulatedScene
from services.postprocess_service import COMPETITION_METHOD, PostprocessService, is_dsa_method
from services.statistics_service import StatisticsService

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioPlan:
    name: str
    test_profile: str
    perturbation: Optional[Tuple[str, float]]
    fixed_threshold: Optional[float]
    competition_pairs: Tuple[Tuple[int, int], ...]
    enable_rotation: bool

    @classmethod
    def from_settings(cls, name: str) -> "ScenarioPlan":
        entry = settings.SCENARIOS[name]
        return cls(
            name=name,
            test_profile=entry["test_profile"],
            perturbation=entry["perturbation"],
            fixed_threshold=entry["fixed_threshold"],
            competition_pairs=tuple(tuple(p) for p in entry["competition_pairs"]),
            enable_rotation=entry["enable_rotation"],
        )


@dataclass
class ExperimentResult:
    scenario: str
    reports: List[Report]
    scene_results: List[SceneResult] = field(default_factory=list)
    directory: Optional[Path] = None


# ==============================================================================
# SCENE-LEVEL WORKERS
# ==============================================================================

@dataclass
class DsaTask:
    method: str
    sim: SimulatedScene
    lambdas: Tuple[float, ...]
    dump_dir: Optional[str] = None


@dataclass
class DsaRun:
    lam: float
    result: SceneResult
    decisions: List[dict]


_WORKER_SERVICE: Optional[PostprocessService] = None


def _init_worker(service: PostprocessService) -> None:
    global _WORKER_SERVICE
    _WORKER_SERVICE = service


def _dsa_scene_task(task: DsaTask) -> List[DsaRun]:
    """Every lambda of one scene. Each lambda starts from an empty reconstruction cache."""
    service = _WORKER_SERVICE
    sim = task.sim
    image, _ = sim.scene.render()
    suppressed = service.suppress(task.method, sim.detections)
    runs = []
    for lam in task.lambdas:
        start = time.perf_counter()
        out = service.select(task.method, image, suppressed, lam=lam, cache=ReconCache())
        elapsed = time.perf_counter() - start
        result = SceneResult.from_detections(sim.scene_id, task.method, sim.labels, sim.boxes, out.selected, elapsed)
        if task.dump_dir:
            ExportService().dump_interpretation(
                out.interpretation, f"{sim.scene_id}-lam{lam:g}", Path(task.dump_dir) / task.method
            )
        runs.append(DsaRun(lam, result, out.decisions))
    return runs


def map_ordered(
    fn: Callable[[DsaTask], List[DsaRun]],
    tasks: Sequence[DsaTask],
    service: PostprocessService,
    jobs: int,
) -> List[List[DsaRun]]:
    """Apply fn to every task; results come back in task order for any job count."""
    if jobs <= 1 or len(tasks) <= 1:
        _init_worker(service)
        return [fn(task) for task in tasks]
    with multiprocessing.Pool(processes=jobs, initializer=_init_worker, initargs=(service,)) as pool:
        return pool.map(fn, tasks, chunksize=1)


# ==============================================================================
# SERVICE
# ==============================================================================

class ExperimentService:
    """
    Service responsible for running experiment scenarios.

    Follows SRP: Only handles experiment orchestration, delegates the rest.
    """

    def __init__(
        self,
        dataset_manager: DatasetManager = None,
        generation_service: GenerationService = None,
        statistics_service: StatisticsService = None,
        jsonl_manager: JSONLManager = None,
    ):
        """
        Initialize experiment service with optional dependencies.

        Args:
            dataset_manager: Dataset manager (dependency injection)
            generation_service: Generation service (dependency injection)
            statistics_service: Statistics service (dependency injection)
            jsonl_manager: JSONL manager (dependency injection)
        """
        self.dataset_manager = dataset_manager or DatasetManager()
        self.generation_service = generation_service or GenerationService(dataset_manager=self.dataset_manager)
        self.statistics_service = statistics_service or StatisticsService()
        self.jsonl_manager = jsonl_manager or JSONLManager()
        self.file_manager = FileManager()

    # ------------------------------------------------------------------
    # Setup
    # ------------------------------------------------------------------

    def methods_for(self, cfg: RunConfig, plan: ScenarioPlan) -> List[str]:
        methods = list(cfg.experiment.methods)
        if plan.competition_pairs and "nms+dsa" in methods and COMPETITION_METHOD not in methods:
            methods.append(COMPETITION_METHOD)
        return methods

    def noise_for(self, profile: str, cfg: RunConfig) -> NoiseConfig:
        if profile == "baseline":
            return cfg.noise
        return shift_profile(profile, seed=cfg.noise.seed)

    def dsa_config_for(self, cfg: RunConfig, plan: ScenarioPlan) -> DsaConfig:
        recon = replace(cfg.dsa.recon, enable_rotation=True) if plan.enable_rotation else cfg.dsa.recon
        pairs = plan.competition_pairs or cfg.dsa.competition_pairs
        return replace(cfg.dsa, recon=recon, competition_pairs=pairs)

    def perturb(self, scenes: Sequence[Scene], plan: ScenarioPlan) -> List[Scene]:
        """Apply the scenario's test-set perturbation."""
        if plan.perturbation is None:
            return list(scenes)
        kind, amount = plan.perturbation
        if kind == "rotate":
            return perturb_rotate(scenes, amount)
        perturbed, skipped = [], 0
        for scene in scenes:
            try:
                perturbed.extend(perturb_enlarge([scene], int(amount)))
            except GenerationError as e:
                logger.warning("Scene %s kept at original scale: %s", scene.scene_id, e)
                perturbed.append(scene)
                skipped += 1
        if skipped:
            logger.warning("%d of %d test scenes could not be enlarged", skipped, len(scenes))
        return perturbed

    # ------------------------------------------------------------------
    # Methods
    # ------------------------------------------------------------------

    def _baseline_results(
        self, method: str, sims: Sequence[SimulatedScene],
        suppressed: Sequence[List[Detection]], threshold: float, times: Sequence[float],
    ) -> List[SceneResult]:
        results = []
        for sim, sup, elapsed in zip(sims, suppressed, times):
            start = time.perf_counter()
            selected = threshold_select(sup, threshold)
            results.append(
                SceneResult.from_detections(
                    sim.scene_id, method, sim.labels, sim.boxes, selected, elapsed + time.perf_counter() - start
                )
            )
        return results

    def _suppress_all(
        self, service: PostprocessService, method: str, sims: Sequence[SimulatedScene]
    ) -> Tuple[List[List[Detection]], List[float]]:
        suppressed, times = [], []
        for sim in sims:
            start = time.perf_counter()
            suppressed.append(service.suppress(method, sim.detections))
            times.append(time.perf_counter() - start)
        return suppressed, times

    def run_baseline(
        self, service: PostprocessService, method: str, plan: ScenarioPlan, cfg: RunConfig,
        validation: Sequence[SimulatedScene], test: Sequence[SimulatedScene],
    ) -> Tuple[Report, List[SceneResult], List[SceneResult]]:
        """Tune the final score threshold on validation, evaluate on test."""
        if plan.fixed_threshold is not None:
            t_boxes = t_labels = plan.fixed_threshold
        else:
            sup, times = self._suppress_all(service, method, validation)
            t_boxes, t_labels = grid_search_threshold(
                lambda t: self._baseline_results(method, validation, sup, t, times),
                cfg.experiment.threshold_grid,
            )
        sup, times = self._suppress_all(service, method, test)
        boxes_run = self._baseline_results(method, test, sup, t_boxes, times)
        labels_run = boxes_run if t_labels == t_boxes else self._baseline_results(
            method, test, sup, t_labels, times
        )
        report = self._report(method, "T", t_boxes, t_labels, boxes_run, labels_run, cfg, plan)
        return report, boxes_run, labels_run

    def run_dsa(
        self, service: PostprocessService, method: str, plan: ScenarioPlan, cfg: RunConfig,
        validation: Sequence[SimulatedScene], test: Sequence[SimulatedScene], out_dir: Path,
    ) -> Tuple[Report, List[SceneResult], List[SceneResult]]:
        """Tune lambda on validation, evaluate on test, write decision logs."""
        grid = tuple(cfg.experiment.lambda_grid)
        jobs = cfg.run.jobs
        val_runs = map_ordered(_dsa_scene_task, [DsaTask(method, sim, grid) for sim in validation], service, jobs)
        by_lambda: Dict[float, List[SceneResult]] = {lam: [] for lam in grid}
        for runs in val_runs:
            for run in runs:
                by_lambda[run.lam].append(run.result)
        lam_boxes, lam_labels = grid_search_lambda(lambda lam: by_lambda[lam], grid)

        lambdas = tuple(sorted({lam_boxes, lam_labels}))
        tasks = [DsaTask(method, sim, lambdas, cfg.run.dump_dir) for sim in test]
        test_runs = map_ordered(_dsa_scene_task, tasks, service, jobs)

        boxes_run, labels_run = [], []
        decisions_dir = out_dir / "decisions" / method
        for sim, runs in zip(test, test_runs):
            records = []
            for run in runs:
                records.extend(dict(r, lam=run.lam) for r in run.decisions)
                if run.lam == lam_boxes:
                    boxes_run.append(run.result)
                if run.lam == lam_labels:
                    labels_run.append(run.result)
            self.jsonl_manager.write_jsonl(records, decisions_dir / f"{sim.scene_id}.jsonl")

        report = self._report(method, "lambda", lam_boxes, lam_labels, boxes_run, labels_run, cfg, plan)
        return report, boxes_run, labels_run

    def _report(
        self, method: str, param_name: str, p_boxes: float, p_labels: float,
        boxes_run: Sequence[SceneResult], labels_run: Sequence[SceneResult], cfg: RunConfig, plan: ScenarioPlan,
    ) -> Report:
        acc_b, se_b = accuracy_boxes(boxes_run)
        acc_l, se_l = accuracy_labels(labels_run)
        extras = {"scenario": plan.name, "tie_rule": "median"}
        if method.startswith("soft-nms"):
            extras["soft_method"] = cfg.nms.soft_method
        if is_dsa_method(method):
            extras["cache_mode"] = cfg.dsa.cache_mode
        if cfg.experiment.matched_accuracy:
            extras["acc_matched"], extras["se_matched"] = accuracy_matched(boxes_run)
        report = Report(method, param_name, p_boxes, p_labels, acc_b, se_b, acc_l, se_l, len(boxes_run), extras)
        logger.info(
            "%s [%s]: boxes %.3f (%.4f) labels %.3f (%.4f) n=%d",
            method, plan.name, acc_b, se_b, acc_l, se_l, len(boxes_run),
        )
        return report

    # ------------------------------------------------------------------
    # Entry point
    # ------------------------------------------------------------------

    def run_experiment(self, cfg: RunConfig) -> ExperimentResult:
        """
        Run the configured scenario end to end.

        Args:
            cfg: Resolved run configuration

        Returns:
            ExperimentResult with one Report per method
        """
        plan = ScenarioPlan.from_settings(cfg.experiment.scenario)
        methods = self.methods_for(cfg, plan)
        val_scenes = self.dataset_manager.load_scenes(cfg.run.dataset_dir(settings.VALIDATION_SUBDIR))
        test_scenes = self.perturb(
            self.dataset_manager.load_scenes(cfg.run.dataset_dir(settings.TEST_SUBDIR)), plan
        )

        validation = self.generation_service.simulate_set(
            val_scenes, self.noise_for(cfg.experiment.validation_profile, cfg), cfg.seed, settings.VALIDATION_SUBDIR
        )
        test = self.generation_service.simulate_set(
            test_scenes, self.noise_for(plan.test_profile, cfg), cfg.seed, settings.TEST_SUBDIR
        )

        models = {}
        if any(is_dsa_method(m) for m in methods):
            models = ModelManager(cfg.run.models_dir).load_all()
        service = PostprocessService(cfg.nms, self.dsa_config_for(cfg, plan), models, cfg.experiment.dsa_nms_nt)

        out_dir = self.file_manager.reset_directory(cfg.run.experiments_dir / plan.name)
        reports: List[Report] = []
        scene_log: List[dict] = []
        scene_results: List[SceneResult] = []
        for method in methods:
            logger.info("Running %s on scenario %s", method, plan.name)
            if is_dsa_method(method):
                report, boxes_run, labels_run = self.run_dsa(service, method, plan, cfg, validation, test, out_dir)
            else:
                report, boxes_run, labels_run = self.run_baseline(service, method, plan, cfg, validation, test)
            reports.append(report)
            scene_results.extend(boxes_run)
            scene_log.extend(dict(r.to_dict(), param=report.param_boxes, tuned_for="boxes") for r in boxes_run)
            scene_log.extend(dict(r.to_dict(), param=report.param_labels, tuned_for="labels") for r in labels_run)

        self.statistics_service.write_reports(reports, out_dir / settings.REPORTS_NAME)
        self.jsonl_manager.write_jsonl(scene_log, out_dir / settings.SCENE_LOG_NAME)
        return ExperimentResult(plan.name, reports, scene_results, out_dir)
