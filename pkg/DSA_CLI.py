#!/usr/bin/env python3
"""
Detection Selection Toolkit - CLI Entry Point
=============================================

Thin command-line front door; every command delegates to a service.

Architecture:
- Services: Business logic (generation, training, post-processing, experiments, reports)
- Managers: Persistence (datasets, models, JSONL, config, files)
- CLI: User interface (parsing, formatting)
- Core: Algorithms
- Validators: Scene checks

Exit status: 0 success, 2 usage or configuration error, 1 runtime error,
130 interrupted.

Usage:
    python DSA_CLI.py gen-data --out artifacts --seed 7 --scale 0.1
    python DSA_CLI.py train-decoder --out artifacts --epochs 20
    python DSA_CLI.py experiment --config configs/desk.conf --out artifacts --scenario baseline
"""

import logging
import sys
from pathlib import Path
from typing import Any, List, Optional

from core import settings
from core.exceptions import ConfigError, DSAError
from core.run_config import RunConfig

# Service layer
from services import (
    ExperimentService,
    ExportService,
    GenerationService,
    PostprocessService,
    StatisticsService,
    TrainingService,
)

# Manager layer
from managers import (
    ClassManager,
    ConfigManager,
    DatasetManager,
    FileManager,
    JSONLManager,
    ModelManager,
)

# CLI layer
from cli import CommandParser, OutputFormatter
from cli.command_parser import UsageError

logger = logging.getLogger(__name__)


def load_config(parser: CommandParser, args: Any) -> RunConfig:
    """
    Resolve the run configuration: defaults < file < --set < dedicated flags.

    Args:
        parser: Command parser (flag mapping)
        args: Parsed arguments namespace

    Returns:
        Resolved RunConfig
    """
    config_manager = ConfigManager()
    overrides = config_manager.parse_overrides(args.set)
    overrides.update(parser.config_overrides(args))
    return config_manager.load(args.config, overrides)


def cmd_gen_data(cfg: RunConfig, args: Any) -> None:
    formatter = OutputFormatter()
    formatter.print_header(f"Generating datasets (seed {cfg.seed}, scale {cfg.data.scale:g})")
    counts = GenerationService().generate_all(cfg)
    formatter.print_counts("Datasets written", counts)
    formatter.print_info(f"Data fingerprint: {FileManager().tree_fingerprint(cfg.run.data_dir)}")
    formatter.print_success(f"Data in {cfg.run.data_dir}")


def cmd_train_decoder(cfg: RunConfig, args: Any) -> None:
    formatter = OutputFormatter()
    classes = ClassManager().parse_class_list(args.classes)
    formatter.print_header(f"Training decoders for classes {classes} ({cfg.train.epochs} epochs)")
    report = TrainingService().train_all(cfg, classes)
    formatter.print_table(StatisticsService().training_table([c.to_dict() for c in report.classes]))
    if report.discrimination_rate is not None:
        formatter.print_info(f"Held-out discrimination rate: {report.discrimination_rate:.3f}")
    formatter.print_success(f"Models in {cfg.run.models_dir}")


def cmd_simulate(cfg: RunConfig, args: Any) -> None:
    formatter = OutputFormatter()
    dataset_manager = DatasetManager()
    jsonl_manager = JSONLManager()
    scenes = dataset_manager.load_scenes(cfg.run.dataset_dir(args.dataset))
    noise = ExperimentService().noise_for(args.profile, cfg)
    out_dir = FileManager().reset_directory(args.detections or Path(cfg.run.out) / "detections" / args.dataset)
    total = 0
    for sim in GenerationService(dataset_manager=dataset_manager).simulate_set(scenes, noise, cfg.seed, args.dataset):
        total += jsonl_manager.write_detections(sim.detections, out_dir / f"{sim.scene_id}.jsonl")
    formatter.print_success(f"{total} detections for {len(scenes)} scenes in {out_dir}")


def cmd_postprocess(cfg: RunConfig, args: Any) -> None:
    formatter = OutputFormatter()
    dataset_manager = DatasetManager()
    jsonl_manager = JSONLManager()
    file_manager = FileManager()
    export_service = ExportService(jsonl_manager, file_manager)

    data_dir = cfg.run.dataset_dir(args.dataset)
    det_dir = file_manager.require_directory(
        args.detections or Path(cfg.run.out) / "detections" / args.dataset, step="simulate"
    )
    out_dir = file_manager.reset_directory(args.output or Path(cfg.run.out) / "selected" / args.method)

    models = ModelManager(cfg.run.models_dir).load_all() if "+dsa" in args.method else {}
    service = PostprocessService(cfg.nms, cfg.dsa, models, cfg.experiment.dsa_nms_nt)

    processed = kept = 0
    for scene in dataset_manager.load_scenes(data_dir):
        det_path = det_dir / f"{scene.scene_id}.jsonl"
        if not det_path.is_file():
            logger.warning("No detections for scene %s", scene.scene_id)
            continue
        image = dataset_manager.load_image(data_dir, scene)
        result = service.run(args.method, image, jsonl_manager.read_detections(det_path), threshold=args.threshold)
        export_service.export_selection(scene.scene_id, result.selected, result.decisions, out_dir)
        if cfg.run.dump_dir and result.interpretation is not None:
            export_service.dump_interpretation(result.interpretation, scene.scene_id, cfg.run.dump_dir)
        processed += 1
        kept += len(result.selected)
    formatter.print_success(f"{args.method}: kept {kept} detections over {processed} scenes in {out_dir}")


def cmd_experiment(cfg: RunConfig, args: Any) -> None:
    formatter = OutputFormatter()
    formatter.print_header(f"Experiment: {cfg.experiment.scenario} (seed {cfg.seed}, jobs {cfg.run.jobs})")
    result = ExperimentService().run_experiment(cfg)
    statistics = StatisticsService()
    formatter.print_table(statistics.format_report_table(statistics.reports_frame(result.reports)))
    formatter.print_success(f"Reports in {result.directory}")


def cmd_report(cfg: RunConfig, args: Any) -> None:
    statistics = StatisticsService()
    path = args.reports or cfg.run.experiments_dir / cfg.experiment.scenario / settings.REPORTS_NAME
    OutputFormatter().print_table(statistics.format_report_table(statistics.read_reports(path)))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-decoder": cmd_train_decoder,
    "simulate": cmd_simulate,
    "postprocess": cmd_postprocess,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for CLI; returns the exit status."""
    parser = CommandParser()
    formatter = OutputFormatter()

    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        formatter.print_error(str(e))
        return 2

    logging.basicConfig(level=args.log_level, format=settings.LOG_FORMAT, stream=sys.stderr)

    try:
        cfg = load_config(parser, args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        formatter.print_error(str(e))
        return 2
    except DSAError as e:
        formatter.print_error(str(e))
        return 1
    except KeyboardInterrupt:
        formatter.print_warning("operation cancelled by user")
        return 130
    except Exception as e:
        logger.exception("Unexpected failure in %s", args.command)
        formatter.print_error(f"unexpected error: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
