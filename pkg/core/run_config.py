"""
Run Configuration
=================

Typed sections of a run. Every field has a default; ConfigManager fills
them from a key=value file and CLI overrides, keyed `section.field`.
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from core import settings
from core.decoder import TrainConfig
from core.detection_simulator import NoiseConfig
from core.exceptions import ConfigError
from core.reconstruction import ReconConfig
from core.scene_builder import scaled_counts
from core.seeding import derive_seed
from core.selection import DsaConfig
from core.suppression import NmsConfig

ObjectCounts = Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = str(settings.ARTIFACTS_DIR)
    jobs: int = 1
    dump_dir: Optional[str] = None

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError(f"run.seed must be >= 0, got {self.seed}")
        if self.jobs < 1:
            raise ConfigError(f"run.jobs must be >= 1, got {self.jobs}")

    @property
    def data_dir(self) -> Path:
        return Path(self.out) / "data"

    @property
    def models_dir(self) -> Path:
        return Path(self.out) / "models"

    @property
    def experiments_dir(self) -> Path:
        return Path(self.out) / "experiments"

    def dataset_dir(self, name: str) -> Path:
        return self.data_dir / name


@dataclass(frozen=True)
class DataConfig:
    scale: float = 1.0
    n_per_class: int = settings.N_PER_CLASS
    canvas: Tuple[int, int] = settings.CANVAS_SIZE
    decoder_side: int = settings.DECODER_SIDE
    min_visible: int = settings.MIN_VISIBLE_PIXELS
    min_separation: float = settings.MIN_SEPARATION_FACTOR * settings.DECODER_SIDE
    rejection_budget: int = settings.REJECTION_BUDGET
    validation_counts: ObjectCounts = settings.VALIDATION_COUNTS
    test_counts: ObjectCounts = settings.TEST_COUNTS
    train_fraction: float = settings.DECODER_TRAIN_FRACTION

    def __post_init__(self):
        if self.scale <= 0:
            raise ConfigError(f"data.scale must be > 0, got {self.scale}")
        if self.n_per_class < 1:
            raise ConfigError(f"data.n_per_class must be >= 1, got {self.n_per_class}")
        if self.min_visible < 1 or self.rejection_budget < 1:
            raise ConfigError("data.min_visible and data.rejection_budget must be >= 1")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError(f"data.train_fraction must be in (0, 1], got {self.train_fraction}")

    @property
    def scaled_n_per_class(self) -> int:
        return max(1, int(round(self.n_per_class * self.scale)))

    @property
    def scaled_validation(self) -> ObjectCounts:
        return scaled_counts(self.validation_counts, self.scale)

    @property
    def scaled_test(self) -> ObjectCounts:
        return scaled_counts(self.test_counts, self.scale)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "baseline"
    methods: Tuple[str, ...] = settings.ALL_METHODS
    threshold_grid: Tuple[float, ...] = settings.THRESHOLD_GRID
    lambda_grid: Tuple[float, ...] = settings.LAMBDA_GRID
    dsa_nms_nt: float = settings.DSA_NMS_THRESHOLD
    validation_profile: str = "baseline"
    matched_accuracy: bool = False

    def __post_init__(self):
        if self.scenario not in settings.SCENARIOS:
            raise ConfigError(
                f"unknown scenario '{self.scenario}' (expected one of {sorted(settings.SCENARIOS)})"
            )
        unknown = [m for m in self.methods if m not in settings.ALL_METHODS + ("nms+dsa+competition",)]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}")
        if not self.threshold_grid or not self.lambda_grid:
            raise ConfigError("experiment grids must be non-empty")


SECTION_TYPES = {
    "run": RunSection,
    "data": DataConfig,
    "noise": NoiseConfig,
    "nms": NmsConfig,
    "train": TrainConfig,
    "recon": ReconConfig,
    "dsa": DsaConfig,
    "experiment": ExperimentConfig,
}

# Fields filled in from other sections or from the master seed, never from files.
DERIVED_FIELDS = {
    "noise": {"seed"},
    "train": {"seed"},
    "recon": {"seed"},
    "dsa": {"recon", "sigma"},
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    nms: NmsConfig = field(default_factory=NmsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    dsa: DsaConfig = field(default_factory=DsaConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    @property
    def seed(self) -> int:
        return self.run.seed

    def resolved(self) -> "RunConfig":
        """Propagate the master seed into the per-stream seeds and recon (with its sigma) into dsa."""
        seed = self.run.seed
        recon = replace(self.recon, seed=derive_seed(seed, "inference"))
        return replace(
            self,
            noise=replace(self.noise, seed=derive_seed(seed, "detector")),
            train=replace(self.train, seed=derive_seed(seed, "training")),
            recon=recon,
            dsa=replace(self.dsa, recon=recon, sigma=recon.sigma),
        )

    def settable_keys(self) -> Dict[str, Tuple[str, ...]]:
        return {
            name: tuple(f.name for f in fields(cls) if f.name not in DERIVED_FIELDS.get(name, set()))
            for name, cls in SECTION_TYPES.items()
        }
