import pytest

from conftest import make_scene, make_spec, template_decoder, template_decoders, truth_detections
from core import settings
from core.exceptions import ArtifactError
from core.selection import DsaConfig
from managers.config_manager import ConfigManager
from managers.dataset_manager import DatasetManager
from managers.file_manager import FileManager
from managers.jsonl_manager import JSONLManager
from managers.model_manager import ModelManager
from services.experiment_service import (
    DsaTask,
    ExperimentService,
    ScenarioPlan,
    _dsa_scene_task,
    _init_worker,
    map_ordered,
)
from services.generation_service import GenerationService, SimulatedScene
from services.postprocess_service import PostprocessService


def _square(x):
    return [x * x]


def write_eval_sets(cfg, *scenes):
    manager = DatasetManager()
    for name in (settings.VALIDATION_SUBDIR, settings.TEST_SUBDIR):
        renamed = [make_scene(s.objects, scene_id=f"{name}-{i:05d}") for i, s in enumerate(scenes)]
        manager.write_scenes(renamed, cfg.run.dataset_dir(name))


def build_cfg(root, **overrides):
    values = {"run.out": str(root), "experiment.threshold_grid": "0.3, 0.5, 0.8"}
    values.update(overrides)
    return ConfigManager().build(values)


class TestPlanning:
    def test_competition_method_is_appended(self):
        cfg = build_cfg("unused", **{"experiment.methods": "nms, nms+dsa"})
        service = ExperimentService()
        assert service.methods_for(cfg, ScenarioPlan.from_settings("rotate10"))[-1] == "nms+dsa+competition"
        assert service.methods_for(cfg, ScenarioPlan.from_settings("baseline")) == ["nms", "nms+dsa"]

    def test_scenario_settings_reach_dsa(self):
        cfg = build_cfg("unused")
        dsa = ExperimentService().dsa_config_for(cfg, ScenarioPlan.from_settings("rotate10"))
        assert dsa.recon.enable_rotation
        assert dsa.competition_pairs == ((9, 8),)

    def test_validation_noise(self):
        cfg = build_cfg("unused")
        service = ExperimentService()
        assert service.noise_for("baseline", cfg) == cfg.noise
        assert service.noise_for("score_shift", cfg).score_floor == 0.3

    def test_enlarge_falls_back_per_scene(self, separated_scene):
        crowded = make_scene(
            [make_spec(1, (16.0, 16.0), depth=0), make_spec(4, (185.0, 185.0), depth=1)], scene_id="scene-00001"
        )
        out = ExperimentService().perturb([separated_scene, crowded], ScenarioPlan.from_settings("enlarge"))
        assert out[0].window is not None
        assert out[1] == crowded


def test_map_ordered_keeps_task_order():
    tasks = list(range(7))
    assert map_ordered(_square, tasks, service=None, jobs=1) == [[t * t] for t in tasks]
    assert map_ordered(_square, tasks, service=None, jobs=3) == [[t * t] for t in tasks]


class TestRunExperiment:
    def test_baselines(self, artifact_root, two_object_scene, separated_scene):
        cfg = build_cfg(artifact_root, **{"experiment.methods": "nms, soft-nms, diou-nms"})
        write_eval_sets(cfg, two_object_scene, separated_scene)
        result = ExperimentService().run_experiment(cfg)

        assert [r.method for r in result.reports] == ["nms", "soft-nms", "diou-nms"]
        assert all(r.n == 2 for r in result.reports)
        assert all(r.param_boxes in (0.3, 0.5, 0.8) for r in result.reports)
        assert result.reports[1].extras["soft_method"] == "linear"
        assert "soft_method" not in result.reports[0].extras
        out_dir = cfg.run.experiments_dir / "baseline"
        assert (out_dir / settings.REPORTS_NAME).is_file()
        assert JSONLManager().count_records(out_dir / settings.SCENE_LOG_NAME) == 3 * 2 * 2

    def test_reports_are_reproducible(self, tmp_path, two_object_scene, separated_scene):
        texts = []
        for run in ("a", "b"):
            cfg = build_cfg(tmp_path / run, **{"experiment.methods": "nms", "run.seed": "4"})
            write_eval_sets(cfg, two_object_scene, separated_scene)
            ExperimentService().run_experiment(cfg)
            texts.append((cfg.run.experiments_dir / "baseline" / settings.REPORTS_NAME).read_text())
        assert texts[0] == texts[1]

    def test_dsa_needs_trained_models(self, artifact_root, two_object_scene):
        cfg = build_cfg(artifact_root, **{"experiment.methods": "nms+dsa"})
        write_eval_sets(cfg, two_object_scene)
        with pytest.raises(ArtifactError, match="train-decoder"):
            ExperimentService().run_experiment(cfg)

    @pytest.mark.slow
    def test_dsa_with_template_decoders(self, artifact_root, two_object_scene, separated_scene):
        cfg = build_cfg(artifact_root, **{
            "experiment.methods": "nms, nms+dsa",
            "experiment.lambda_grid": "20, 50",
            "recon.n_iter": "5",
        })
        write_eval_sets(cfg, two_object_scene, separated_scene)
        models = ModelManager(cfg.run.models_dir)
        for cls in settings.SHAPE_CLASSES:
            models.save(template_decoder(cls, side=16), [1.0])

        result = ExperimentService().run_experiment(cfg)

        dsa = result.reports[1]
        assert dsa.method == "nms+dsa" and dsa.param_name == "lambda"
        assert dsa.param_boxes in (20.0, 50.0)
        assert dsa.extras["cache_mode"] == "reuse"
        decisions = cfg.run.experiments_dir / "baseline" / "decisions" / "nms+dsa"
        assert sorted(p.name for p in decisions.iterdir()) == ["test-00000.jsonl", "test-00001.jsonl"]


class TestGenerationService:
    def test_simulation_streams(self, two_object_scene, separated_scene):
        cfg = build_cfg("unused")
        service = GenerationService()
        scenes = [two_object_scene, separated_scene]
        a = service.simulate_set(scenes, cfg.noise, 1, settings.TEST_SUBDIR)
        b = service.simulate_set(scenes, cfg.noise, 1, settings.TEST_SUBDIR)
        c = service.simulate_set(scenes, cfg.noise, 1, settings.VALIDATION_SUBDIR)
        assert [s.detections for s in a] == [s.detections for s in b]
        assert [s.detections for s in a] != [s.detections for s in c]
        assert a[0].labels == (1, 4)

    @pytest.mark.slow
    def test_generate_all_at_small_scale(self, artifact_root):
        cfg = build_cfg(artifact_root, **{"data.scale": "0.002"})
        counts = GenerationService().generate_all(cfg)
        assert counts == {"pairs": 10, "decoder": 20, "validation": 2, "test": 3}
        assert len(DatasetManager().load_scenes(cfg.run.dataset_dir(settings.TEST_SUBDIR))) == 3


class TestDsaSceneTask:
    @pytest.fixture
    def setup(self, two_object_scene, fast_recon):
        image, truth = two_object_scene.render()
        disk, square = truth_detections(two_object_scene)
        dets = [disk, square, square.with_index(2).with_score(0.5)]
        sim = SimulatedScene(two_object_scene, tuple(truth.labels), tuple(truth.boxes), dets)
        service = PostprocessService(
            dsa_cfg=DsaConfig(recon=fast_recon), models=template_decoders([1, 4]), dsa_nms_nt=1.0
        )
        _init_worker(service)
        return image, sim, service

    def test_each_lambda_matches_a_standalone_run(self, setup):
        image, sim, service = setup
        runs = _dsa_scene_task(DsaTask("nms+dsa", sim, (0.0, 1000.0)))
        suppressed = service.suppress("nms+dsa", sim.detections)
        assert len(suppressed) == 3
        for run in runs:
            alone = service.select("nms+dsa", image, suppressed, lam=run.lam)
            assert run.decisions == alone.decisions

    def test_lambda_order_does_not_matter(self, setup):
        _, sim, _ = setup
        forward = _dsa_scene_task(DsaTask("nms+dsa", sim, (0.0, 1000.0)))
        backward = _dsa_scene_task(DsaTask("nms+dsa", sim, (1000.0, 0.0)))
        assert forward[1].decisions == backward[0].decisions
        assert forward[0].decisions == backward[1].decisions


@pytest.mark.slow
def test_gen_data_is_reproducible(tmp_path):
    manager = FileManager()
    digests, fingerprints = [], []
    for name in ("first", "second"):
        cfg = build_cfg(tmp_path / name, **{"data.scale": "0.002", "run.seed": "4"})
        GenerationService().generate_all(cfg)
        digests.append(manager.tree_digest(cfg.run.data_dir))
        fingerprints.append(manager.tree_fingerprint(cfg.run.data_dir))
    assert any(name.endswith(".png") for name in digests[0])
    assert digests[0] == digests[1]
    assert fingerprints[0] == fingerprints[1]
