"""
Reconstruction
==============

Single reconstruction: fit a class decoder's latent posterior and pose to
the visible pixels of one detection box, through a differentiable
affine + bilinear sampling grid from the L x L box frame to the d x d
decoder frame.

Whole reconstruction: paint single reconstructions front to back by
occlusion score onto a black canvas. Each detection only sees the pixels
still blank when its turn comes.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core import settings
from core.decoder import (
    Adam,
    DecoderModel,
    backward_batch,
    forward_batch,
    kl_diag_gaussian,
    kl_gradients,
)
from core.exceptions import ArtifactError, ConfigError, GeometryError, ShapeError, TrainingError
from core.geometry import BoundingBox, Detection, PixelSet, blank_mask, support_mask
from core.seeding import derive_rng

logger = logging.getLogger(__name__)

Point = Tuple[float, float]
CacheKey = Tuple[int, int]


# ==============================================================================
# CONFIG AND TYPES
# ==============================================================================

@dataclass(frozen=True)
class ReconConfig:
    n_iter: int = settings.RECON_ITERATIONS
    sigma: float = settings.SIGMA
    t0: float = settings.OCCLUSION_THRESHOLD
    lr_latent: float = 0.01
    lr_pose: float = 0.05
    lr_rotation: float = 0.5
    use_mean_for_final: bool = True
    enable_rotation: bool = False
    max_rotation: float = settings.MAX_ROTATION_DEGREES
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1:
            raise ConfigError(f"recon.n_iter must be >= 1, got {self.n_iter}")
        if self.sigma <= 0:
            raise ConfigError(f"recon.sigma must be > 0, got {self.sigma}")
        if self.t0 < 0:
            raise ConfigError(f"recon.t0 must be >= 0, got {self.t0}")
        if min(self.lr_latent, self.lr_pose, self.lr_rotation) <= 0:
            raise ConfigError("recon learning rates must be > 0")
        if self.max_rotation < 0:
            raise ConfigError("recon.max_rotation must be >= 0")


@dataclass
class LatentPosterior:
    """Diagonal Gaussian over z plus the pose of the sampling grid."""

    mu: np.ndarray
    log_tau: np.ndarray
    t: np.ndarray
    s: Tuple[float, float]
    alpha: Optional[float] = None

    @classmethod
    def prior(cls, n_z: int, s: Tuple[float, float], rotation: bool = False) -> "LatentPosterior":
        return cls(np.zeros(n_z), np.zeros(n_z), np.zeros(2), s, 0.0 if rotation else None)

    @property
    def tau(self) -> np.ndarray:
        return np.exp(self.log_tau)

    def kl(self) -> float:
        return float(kl_diag_gaussian(self.mu, self.log_tau))


@dataclass
class SingleRecon:
    recon: np.ndarray
    posterior: LatentPosterior
    bb_star: BoundingBox
    support: np.ndarray
    final_loss: float
    trace: List[Tuple[int, float, float, float]] = field(default_factory=list)
    unconstrained: bool = False

    @property
    def side(self) -> int:
        return self.recon.shape[0]


class ReconCache:
    """
    Single reconstructions of one interpretation task, keyed by
    (detection index, class label). `computed` counts cache misses.
    """

    def __init__(self):
        self._entries: Dict[CacheKey, SingleRecon] = {}
        self.computed = 0

    def __contains__(self, key: CacheKey) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: CacheKey) -> Optional[SingleRecon]:
        return self._entries.get(key)

    def put(self, key: CacheKey, value: SingleRecon) -> None:
        self._entries[key] = value
        self.computed += 1

    def items(self) -> Iterable[Tuple[CacheKey, SingleRecon]]:
        return self._entries.items()


class WholeRecon(NamedTuple):
    canvas: np.ndarray
    cache: ReconCache
    owner: np.ndarray


# ==============================================================================
# SAMPLING GRID
# ==============================================================================

def affine_map(
    pt: Point,
    t: Sequence[float],
    s: Sequence[float],
    alpha: Optional[float] = None,
    center: Optional[Point] = None,
) -> Point:
    """
    Box-frame point to decoder-frame point: x_d = s_x (x_b + t_x).

    With `alpha` (degrees) the point is first rotated about `center`
    (the box-frame grid centre).
    """
    x, y = float(pt[0]), float(pt[1])
    if alpha is not None:
        cx, cy = center if center is not None else (0.0, 0.0)
        a = math.radians(alpha)
        dx, dy = x - cx, y - cy
        x = cx + math.cos(a) * dx - math.sin(a) * dy
        y = cy + math.sin(a) * dx + math.cos(a) * dy
    return s[0] * (x + t[0]), s[1] * (y + t[1])


def bilinear_sample(src: np.ndarray, coord: Point) -> np.ndarray:
    """RGB value of `src` at a real (x, y) with zero padding outside the grid."""
    values, _, _ = bilinear_sample_grid(src, np.array([float(coord[0])]), np.array([float(coord[1])]))
    return values[0]


class _Corners(NamedTuple):
    xi: np.ndarray
    yi: np.ndarray
    weights: np.ndarray  # (4, N)
    valid: np.ndarray  # (4, N)


def _corners(shape: Tuple[int, int], xs: np.ndarray, ys: np.ndarray) -> Tuple[_Corners, np.ndarray, np.ndarray]:
    h, w = shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx, wy = xs - x0, ys - y0
    x0, y0 = x0.astype(np.int64), y0.astype(np.int64)
    xi = np.stack([x0, x0 + 1, x0, x0 + 1])
    yi = np.stack([y0, y0, y0 + 1, y0 + 1])
    weights = np.stack([(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy])
    valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    return _Corners(xi, yi, weights, valid), wx, wy


def bilinear_sample_grid(
    src: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sample `src` (h, w, C) at flat coordinate arrays.

    Returns values (N, C) and their derivatives with respect to x and y.
    """
    corners, wx, wy = _corners(src.shape[:2], xs, ys)
    xi = np.where(corners.valid, corners.xi, 0)
    yi = np.where(corners.valid, corners.yi, 0)
    v = src[yi, xi] * corners.valid[..., None]  # (4, N, C)
    values = np.einsum("kn,knc->nc", corners.weights, v)
    d_x = (1 - wy)[:, None] * (v[1] - v[0]) + wy[:, None] * (v[3] - v[2])
    d_y = (1 - wx)[:, None] * (v[2] - v[0]) + wx[:, None] * (v[3] - v[1])
    return values, d_x, d_y


def bilinear_scatter(shape: Tuple[int, int, int], xs: np.ndarray, ys: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Adjoint of bilinear_sample_grid with respect to the source image."""
    corners, _, _ = _corners(shape[:2], xs, ys)
    grad = np.zeros(shape)
    for k in range(4):
        ok = corners.valid[k]
        np.add.at(grad, (corners.yi[k][ok], corners.xi[k][ok]), corners.weights[k][ok, None] * upstream[ok])
    return grad


class _WarpCache(NamedTuple):
    forward: object
    src: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    d_x: np.ndarray
    d_y: np.ndarray
    rel_x: np.ndarray
    rel_y: np.ndarray


def _warp_forward(
    model: DecoderModel, z: np.ndarray, t: Sequence[float], s: Sequence[float], L: int,
    alpha: Optional[float] = None,
) -> Tuple[np.ndarray, _WarpCache]:
    fwd = forward_batch(model, np.asarray(z, dtype=np.float64)[None, :])
    src = fwd.y[0].reshape(model.d, model.d, 3)
    grid_y, grid_x = np.mgrid[0:L, 0:L].astype(np.float64)
    c = (L - 1) / 2.0
    rel_x, rel_y = grid_x.ravel() - c, grid_y.ravel() - c
    if alpha is not None:
        a = math.radians(alpha)
        bx = c + math.cos(a) * rel_x - math.sin(a) * rel_y
        by = c + math.sin(a) * rel_x + math.cos(a) * rel_y
    else:
        bx, by = grid_x.ravel(), grid_y.ravel()
    xs = s[0] * (bx + t[0])
    ys = s[1] * (by + t[1])
    values, d_x, d_y = bilinear_sample_grid(src, xs, ys)
    return values.reshape(L, L, 3), _WarpCache(fwd, src, xs, ys, d_x, d_y, rel_x, rel_y)


def _warp_backward(
    model: DecoderModel, cache: _WarpCache, upstream: np.ndarray, s: Sequence[float],
    alpha: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    g = upstream.reshape(-1, 3)
    gx = np.sum(g * cache.d_x, axis=1)
    gy = np.sum(g * cache.d_y, axis=1)
    dt = np.array([s[0] * gx.sum(), s[1] * gy.sum()])
    d_alpha = 0.0
    if alpha is not None:
        a = math.radians(alpha)
        dbx = -math.sin(a) * cache.rel_x - math.cos(a) * cache.rel_y
        dby = math.cos(a) * cache.rel_x - math.sin(a) * cache.rel_y
        d_alpha = float(np.sum(gx * s[0] * dbx + gy * s[1] * dby)) * math.pi / 180.0
    g_src = bilinear_scatter(cache.src.shape, cache.xs, cache.ys, g)
    dz, _ = backward_batch(model, cache.forward, g_src.reshape(1, -1), need_weights=False)
    return dz[0], dt, d_alpha


def grid_scale(model: DecoderModel, L: int) -> Tuple[float, float]:
    return (model.d / L, model.d / L)


def warp_decode(model: DecoderModel, posterior: LatentPosterior, L: int, z: Optional[np.ndarray] = None) -> np.ndarray:
    """Decode z (default mu) and resample it onto the L x L box frame."""
    z = posterior.mu if z is None else z
    out, _ = _warp_forward(model, z, posterior.t, posterior.s, L, posterior.alpha)
    return out


def warp_gradients(
    model: DecoderModel, z: np.ndarray, t: Sequence[float], s: Sequence[float], L: int,
    upstream: np.ndarray, alpha: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Gradients of <upstream, warp> with respect to z, t and alpha (degrees)."""
    _, cache = _warp_forward(model, z, t, s, L, alpha)
    return _warp_backward(model, cache, np.asarray(upstream, dtype=np.float64), s, alpha)


# ==============================================================================
# SINGLE RECONSTRUCTION
# ==============================================================================

def box_frame(box: BoundingBox) -> Tuple[int, int, int, int, int]:
    """(x0, y0, width, height, L) of the box's integer pixel extent."""
    x0, y0, x1, y1 = box.to_pixels()
    width, height = x1 - x0, y1 - y0
    return x0, y0, width, height, max(width, height)


class FitGradients(NamedTuple):
    mu: np.ndarray
    log_tau: np.ndarray
    t: np.ndarray
    alpha: float


def fit_objective(
    model: DecoderModel,
    posterior: LatentPosterior,
    eps: np.ndarray,
    target: np.ndarray,
    weight: np.ndarray,
    L: int,
    origin: Tuple[int, int],
    sigma: float,
) -> Tuple[float, float, FitGradients]:
    """
    KL and data terms of one reconstruction step, with z = mu + tau * eps.

    Args:
        model: Class decoder
        posterior: Current (mu, log_tau, t, alpha); alpha None keeps rotation off
        eps: Standard normal draw for z
        target: Image crop compared against the frame
        weight: (h, w, 1) visibility weights of the crop
        L: Side of the box frame
        origin: (row, col) of the crop inside the frame
        sigma: Pixel noise standard deviation

    Returns:
        (kl, data, gradients of kl + data)
    """
    sigma2 = sigma * sigma
    tau = posterior.tau
    z = posterior.mu + tau * eps
    out, cache = _warp_forward(model, z, posterior.t, posterior.s, L, posterior.alpha)
    ry, rx = origin
    region = (slice(ry, ry + target.shape[0]), slice(rx, rx + target.shape[1]))
    residual = (out[region] - target) * weight
    data = float(np.sum(residual * residual)) / (2.0 * sigma2)

    upstream = np.zeros_like(out)
    upstream[region] = residual * weight / sigma2
    dz, dt, d_alpha = _warp_backward(model, cache, upstream, posterior.s, posterior.alpha)
    g_mu_kl, g_lt_kl = kl_gradients(posterior.mu, posterior.log_tau)
    grads = FitGradients(dz + g_mu_kl, dz * eps * tau + g_lt_kl, dt, d_alpha)
    return posterior.kl(), data, grads


def single_reconstruction(
    target: np.ndarray,
    visible: PixelSet,
    det: Detection,
    model: DecoderModel,
    cfg: ReconConfig,
    rng: Optional[np.random.Generator] = None,
    clip_offset: Tuple[int, int] = (0, 0),
) -> SingleRecon:
    """
    Fit (mu, log_tau, t[, alpha]) to the visible pixels of one detection.

    `target` is the image crop at det.box; when the box is clipped by the
    image border, `clip_offset` = (dx, dy) locates the crop inside the
    unclipped box.
    """
    if model.cls != det.cls:
        raise ConfigError(f"decoder for class {model.cls} used on a class {det.cls} detection")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    bx0, by0, width, height, L = box_frame(det.box)
    ox, oy = (L - width) // 2, (L - height) // 2
    bb_star = BoundingBox(float(bx0 - ox), float(by0 - oy), float(bx0 - ox + L), float(by0 - oy + L))
    s = grid_scale(model, L)
    posterior = LatentPosterior.prior(model.n_z, s, cfg.enable_rotation)
    sigma2 = cfg.sigma * cfg.sigma

    if len(visible) == 0:
        recon = warp_decode(model, posterior, L)
        return SingleRecon(
            recon, posterior, bb_star, support_mask(recon, cfg.t0), posterior.kl(), [], unconstrained=True
        )

    th, tw = target.shape[:2]
    if visible.frame_shape != (th, tw):
        raise ShapeError(f"visible frame {visible.frame_shape} does not match target {(th, tw)}")
    dx, dy = clip_offset
    ry, rx = oy + dy, ox + dx
    if ry + th > L or rx + tw > L:
        raise ShapeError("target crop does not fit inside the detection's box frame")
    region = (slice(ry, ry + th), slice(rx, rx + tw))
    weight = visible.to_mask()[..., None].astype(np.float64)

    latent_opt = Adam(cfg.lr_latent)
    pose_opt = Adam(cfg.lr_pose)
    rot_opt = Adam(cfg.lr_rotation)
    alpha = np.zeros(1)
    trace: List[Tuple[int, float, float, float]] = []

    for step in range(cfg.n_iter):
        eps = rng.standard_normal(model.n_z)
        if cfg.enable_rotation:
            posterior.alpha = float(alpha[0])
        kl, data, grads = fit_objective(model, posterior, eps, target, weight, L, (ry, rx), cfg.sigma)
        if not math.isfinite(data + kl):
            raise TrainingError(f"non-finite reconstruction loss at step {step} (detection {det.index})")
        trace.append((step, kl, data, kl + data))

        latent_opt.update("mu", posterior.mu, grads.mu)
        latent_opt.update("log_tau", posterior.log_tau, grads.log_tau)
        pose_opt.update("t", posterior.t, grads.t)
        if cfg.enable_rotation:
            rot_opt.update("alpha", alpha, np.array([grads.alpha]))
            np.clip(alpha, -cfg.max_rotation, cfg.max_rotation, out=alpha)

    if cfg.enable_rotation:
        posterior.alpha = float(alpha[0])
    z_final = posterior.mu if cfg.use_mean_for_final else posterior.mu + posterior.tau * rng.standard_normal(model.n_z)
    recon = warp_decode(model, posterior, L, z=z_final)
    residual = (recon[region] - target) * weight
    final_loss = posterior.kl() + float(np.sum(residual * residual)) / (2.0 * sigma2)
    return SingleRecon(recon, posterior, bb_star, support_mask(recon, cfg.t0), final_loss, trace)


# ==============================================================================
# WHOLE RECONSTRUCTION
# ==============================================================================

def occlusion_order(subset: Sequence[Detection]) -> List[Detection]:
    """Front to back: occ descending, then score descending, then index."""
    return sorted(subset, key=lambda d: (-d.occ, -d.score, d.index))


def _visible_inputs(
    det: Detection, image: np.ndarray, canvas: np.ndarray
) -> Tuple[np.ndarray, PixelSet, Tuple[int, int]]:
    h, w = image.shape[:2]
    px0, py0, px1, py1 = det.box.to_pixels()
    x0, y0, x1, y1 = max(px0, 0), max(py0, 0), min(px1, w), min(py1, h)
    if x0 >= x1 or y0 >= y1:
        empty = np.zeros((0, 0, 3))
        return empty, PixelSet(np.zeros((0, 2)), (0, 0)), (0, 0)
    target = image[y0:y1, x0:x1]
    visible = PixelSet.from_mask(blank_mask(canvas[y0:y1, x0:x1]))
    return target, visible, (x0 - px0, y0 - py0)


def whole_reconstruction(
    subset: Sequence[Detection],
    cache: ReconCache,
    image: np.ndarray,
    models: Mapping[int, DecoderModel],
    cfg: ReconConfig,
) -> WholeRecon:
    """
    Composite the subset front to back. Cached single reconstructions are
    reused as-is; misses are fitted against the pixels still blank.
    """
    indices = [d.index for d in subset]
    if len(set(indices)) != len(indices):
        raise GeometryError("detections in a subset must carry distinct indices")
    h, w = image.shape[:2]
    canvas = np.zeros_like(image, dtype=np.float64)
    owner = np.full((h, w), -1, dtype=np.int64)

    for det in occlusion_order(subset):
        single = cache.get(det.key)
        if single is None:
            model = models.get(det.cls)
            if model is None:
                raise ArtifactError(f"no decoder model for class {det.cls}", step="train-decoder")
            target, visible, offset = _visible_inputs(det, image, canvas)
            rng = derive_rng(cfg.seed, "inference", det.index + 1, det.cls)
            single = single_reconstruction(target, visible, det, model, cfg, rng=rng, clip_offset=offset)
            cache.put(det.key, single)

        L = single.side
        sx, sy = int(single.bb_star.x_min), int(single.bb_star.y_min)
        x0, y0, x1, y1 = max(sx, 0), max(sy, 0), min(sx + L, w), min(sy + L, h)
        if x0 >= x1 or y0 >= y1:
            continue
        local = (slice(y0 - sy, y1 - sy), slice(x0 - sx, x1 - sx))
        paint = single.support[local] & blank_mask(canvas[y0:y1, x0:x1])
        canvas[y0:y1, x0:x1][paint] = single.recon[local][paint]
        owner[y0:y1, x0:x1][paint] = det.index

    return WholeRecon(canvas, cache, owner)
