import os
from pathlib import Path

# ==============================================================================
# PROJECT PATHS
# ==============================================================================
BASE_DIR = Path(__file__).resolve().parent.parent

# Directories
ARTIFACTS_DIR = BASE_DIR / "artifacts"
DATA_DIR = ARTIFACTS_DIR / "data"
MODELS_DIR = ARTIFACTS_DIR / "models"
EXPERIMENTS_DIR = ARTIFACTS_DIR / "experiments"

# Essential Files
DEFAULT_CONFIG_FILE = BASE_DIR / "configs" / "desk.conf"
MANIFEST_NAME = "manifest.jsonl"
REPORTS_NAME = "reports.csv"
SCENE_LOG_NAME = "scenes.jsonl"

# Dataset sub-directories written by gen-data
PAIRS_SUBDIR = "pairs"
DECODER_SUBDIR = "decoder"
VALIDATION_SUBDIR = "validation"
TEST_SUBDIR = "test"

SEED_ENV_VAR = "DSA_SEED"

# ==============================================================================
# SHAPE CATALOG
# ==============================================================================
# Half-sizes are in pixels at scale 1.0. Shading: pixel = color * shade, with
# shade = floor + (1 - floor) * (1 - rho ** power), rho the normalized radius
# in the object frame.
SHAPE_CLASSES = {
    1: {
        "name": "disk",
        "kind": "ellipse",
        "half_size": (14.0, 14.0),
        "shading": {"floor": 0.45, "power": 2.0},
        "rotation_invariant": True,
    },
    2: {
        "name": "ellipse",
        "kind": "ellipse",
        "half_size": (19.0, 10.0),
        "shading": {"floor": 0.55, "power": 1.0},
        "rotation_invariant": False,
    },
    3: {
        "name": "annulus",
        "kind": "annulus",
        "half_size": (15.0, 15.0),
        "inner_ratio": 0.45,
        "shading": {"floor": 0.5, "power": 3.0},
        "rotation_invariant": True,
    },
    4: {
        "name": "square",
        "kind": "rectangle",
        "half_size": (12.0, 12.0),
        "shading": {"floor": 0.5, "power": 1.5},
        "rotation_invariant": False,
    },
    5: {
        "name": "wide thin rectangle",
        "kind": "rectangle",
        "half_size": (21.0, 6.0),
        "shading": {"floor": 0.6, "power": 2.0},
        "rotation_invariant": False,
    },
    6: {
        "name": "tall thin rectangle",
        "kind": "rectangle",
        "half_size": (6.0, 21.0),
        "shading": {"floor": 0.6, "power": 2.0},
        "rotation_invariant": False,
    },
    7: {
        "name": "medium rectangle",
        "kind": "rectangle",
        "half_size": (15.0, 10.0),
        "shading": {"floor": 0.45, "power": 1.0},
        "rotation_invariant": False,
    },
    8: {
        "name": "tall narrow rectangle",
        "kind": "rectangle",
        "half_size": (8.0, 18.0),
        "shading": {"floor": 0.5, "power": 2.5},
        "rotation_invariant": False,
    },
    9: {
        "name": "wide narrow rectangle",
        "kind": "rectangle",
        "half_size": (18.0, 8.0),
        "shading": {"floor": 0.5, "power": 2.5},
        "rotation_invariant": False,
    },
    10: {
        "name": "triangle",
        "kind": "triangle",
        "half_size": (15.0, 15.0),
        "shading": {"floor": 0.5, "power": 1.5},
        "rotation_invariant": False,
    },
}

NUM_CLASSES = len(SHAPE_CLASSES)

# Spin angle theta renders as an in-plane tilt of MAX_TILT_DEGREES * sin(theta)
MAX_TILT_DEGREES = 25.0

# ==============================================================================
# DATASET PROTOCOL
# ==============================================================================
CANVAS_SIZE = (200, 200)
DECODER_SIDE = 50
MIN_VISIBLE_PIXELS = 200
MIN_SEPARATION_FACTOR = 0.3
REJECTION_BUDGET = 1000
PLACEMENT_MARGIN = 40
PAIR_OFFSET_RANGE = (15.0, 32.0)
SCALE_RANGE = (0.85, 1.2)
N_PER_CLASS = 1000
VALIDATION_COUNTS = ((3, 250), (4, 250))
TEST_COUNTS = ((5, 150), (6, 150), (7, 200))
DECODER_TRAIN_FRACTION = 0.8

# ==============================================================================
# DETECTION SIMULATOR PRESETS
# ==============================================================================
# Pilot-tuned values; none of these numbers come from a published table.
NOISE_PROFILES = {
    "baseline": {
        "box_jitter_sd": 1.0,
        "score_floor": 0.7,
        "score_ceiling": 0.99,
        "occ_noise_sd": 0.05,
        "label_flip_prob": 0.0,
        "confusion_pairs": (),
        "dup_rate": 0.5,
        "fp_rate": 0.5,
        "fp_score_range": (0.05, 0.6),
    },
    "score_shift": {
        "box_jitter_sd": 1.0,
        "score_floor": 0.3,
        "score_ceiling": 0.95,
        "occ_noise_sd": 0.05,
        "label_flip_prob": 0.0,
        "confusion_pairs": (),
        "dup_rate": 0.5,
        "fp_rate": 0.5,
        "fp_score_range": (0.05, 0.6),
    },
    "label_shift": {
        "box_jitter_sd": 1.0,
        "score_floor": 0.7,
        "score_ceiling": 0.99,
        "occ_noise_sd": 0.05,
        "label_flip_prob": 0.0,
        "confusion_pairs": ((8, 9, 0.8),),
        "dup_rate": 0.5,
        "fp_rate": 0.5,
        "fp_score_range": (0.05, 0.6),
    },
}

# ==============================================================================
# DECODER / RECONSTRUCTION / SELECTION DEFAULTS
# ==============================================================================
LATENT_DIM = 10
HIDDEN_WIDTH = 300
SIGMA = 0.1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

RECON_ITERATIONS = 300
OCCLUSION_THRESHOLD = 0.15
MAX_ROTATION_DEGREES = 30.0

MIN_OBJECTNESS = 0.25
DSA_NMS_THRESHOLD = 0.5
LAMBDA_GRID = (10.0, 20.0, 30.0, 40.0, 50.0)
THRESHOLD_GRID = tuple(round(0.01 * i, 2) for i in range(1, 100))
FIXED_THRESHOLD = 0.5

# ==============================================================================
# EXPERIMENT SCENARIOS
# ==============================================================================
BASELINE_METHODS = ("nms", "soft-nms", "diou-nms")
DSA_METHODS = ("nms+dsa", "soft-nms+dsa")
ALL_METHODS = BASELINE_METHODS + DSA_METHODS

SCENARIOS = {
    "baseline": {
        "perturbation": None,
        "test_profile": "baseline",
        "fixed_threshold": None,
        "competition_pairs": (),
        "enable_rotation": False,
    },
    "fixed": {
        "perturbation": None,
        "test_profile": "baseline",
        "fixed_threshold": FIXED_THRESHOLD,
        "competition_pairs": (),
        "enable_rotation": False,
    },
    "score_shift": {
        "perturbation": None,
        "test_profile": "score_shift",
        "fixed_threshold": None,
        "competition_pairs": (),
        "enable_rotation": False,
    },
    "rotate10": {
        "perturbation": ("rotate", 10.0),
        "test_profile": "label_shift",
        "fixed_threshold": None,
        "competition_pairs": ((9, 8),),
        "enable_rotation": True,
    },
    "enlarge": {
        "perturbation": ("enlarge", 180),
        "test_profile": "score_shift",
        "fixed_threshold": None,
        "competition_pairs": (),
        "enable_rotation": False,
    },
}

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_LOG_LEVEL = os.environ.get("DSA_LOG_LEVEL", "INFO")
