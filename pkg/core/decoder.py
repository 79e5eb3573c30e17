"""
Decoder
=======

Per-class generative decoder: latent z (n_z) -> affine -> relu -> affine ->
logistic -> d x d x 3 image, with analytic gradients and stochastic
variational training of per-image latent posteriors.

Weights live on the float32 grid (initialisation and the trained model are
rounded through float32) so a saved model reloads bit for bit, while all
arithmetic runs in float64.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from core import settings
from core.exceptions import ConfigError, ModelFormatError, ShapeError, TrainingError

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"DSAM"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIIIII")
PARAM_ORDER = ("W1", "b1", "W2", "b2")


# ==============================================================================
# MODEL
# ==============================================================================

def _float32_grid(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


@dataclass(eq=False)
class DecoderModel:
    cls: int
    n_z: int
    d: int
    hidden: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        expected = self.param_shapes()
        for name in PARAM_ORDER:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != expected[name]:
                raise ShapeError(f"decoder {name} has shape {arr.shape}, expected {expected[name]}")
            setattr(self, name, arr)

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        out = 3 * self.d * self.d
        return {
            "W1": (self.n_z, self.hidden),
            "b1": (self.hidden,),
            "W2": (self.hidden, out),
            "b2": (out,),
        }

    def params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def copy(self) -> "DecoderModel":
        return DecoderModel(self.cls, self.n_z, self.d, self.hidden, **{k: v.copy() for k, v in self.params().items()})

    def equals(self, other: "DecoderModel") -> bool:
        header = (self.cls, self.n_z, self.d, self.hidden) == (other.cls, other.n_z, other.d, other.hidden)
        return header and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in PARAM_ORDER)


def init_model(
    cls: int,
    rng: np.random.Generator,
    n_z: int = settings.LATENT_DIM,
    d: int = settings.DECODER_SIDE,
    hidden: int = settings.HIDDEN_WIDTH,
) -> DecoderModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    out = 3 * d * d
    w1 = rng.uniform(-1.0, 1.0, size=(n_z, hidden)) / np.sqrt(n_z)
    w2 = rng.uniform(-1.0, 1.0, size=(hidden, out)) / np.sqrt(hidden)
    return DecoderModel(
        cls, n_z, d, hidden,
        W1=_float32_grid(w1), b1=np.zeros(hidden), W2=_float32_grid(w2), b2=np.zeros(out),
    )


# ==============================================================================
# FORWARD / BACKWARD
# ==============================================================================

class ForwardCache(NamedTuple):
    z: np.ndarray
    h_pre: np.ndarray
    h: np.ndarray
    y: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward_batch(model: DecoderModel, z: np.ndarray) -> ForwardCache:
    """Forward pass for a (B, n_z) batch; y has shape (B, 3 d^2)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != model.n_z:
        raise ShapeError(f"latent has dimension {z.shape[1]}, decoder expects {model.n_z}")
    h_pre = z @ model.W1 + model.b1
    h = np.maximum(h_pre, 0.0)
    y = _sigmoid(h @ model.W2 + model.b2)
    return ForwardCache(z, h_pre, h, y)


def backward_batch(
    model: DecoderModel, cache: ForwardCache, upstream: np.ndarray, need_weights: bool = True
) -> Tuple[np.ndarray, Optional[Dict[str, np.ndarray]]]:
    """Contract (B, 3 d^2) output gradients back to z and (summed over B) weights."""
    g_out = upstream * cache.y * (1.0 - cache.y)
    g_h_pre = (g_out @ model.W2.T) * (cache.h_pre > 0.0)
    dz = g_h_pre @ model.W1.T
    if not need_weights:
        return dz, None
    grads = {
        "W1": cache.z.T @ g_h_pre,
        "b1": g_h_pre.sum(axis=0),
        "W2": cache.h.T @ g_out,
        "b2": g_out.sum(axis=0),
    }
    return dz, grads


def decoder_forward(model: DecoderModel, z: np.ndarray) -> np.ndarray:
    """Decode one latent vector to a (d, d, 3) image in (0, 1)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != model.n_z:
        raise ShapeError(f"latent must have shape ({model.n_z},), got {z.shape}")
    return forward_batch(model, z[None, :]).y[0].reshape(model.d, model.d, 3)


def decoder_gradients(
    model: DecoderModel, z: np.ndarray, upstream: np.ndarray
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Gradients of <upstream, decoder_forward(model, z)> w.r.t. z and the weights."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (model.d, model.d, 3):
        raise ShapeError(f"upstream gradient must have shape {(model.d, model.d, 3)}, got {upstream.shape}")
    cache = forward_batch(model, np.asarray(z, dtype=np.float64)[None, :])
    dz, grads = backward_batch(model, cache, upstream.reshape(1, -1))
    return dz[0], grads


def kl_diag_gaussian(mu: np.ndarray, log_tau: np.ndarray) -> np.ndarray:
    """KL(N(mu, diag(tau^2)) || N(0, I)); reduces over the last axis."""
    mu = np.asarray(mu, dtype=np.float64)
    log_tau = np.asarray(log_tau, dtype=np.float64)
    if mu.shape != log_tau.shape:
        raise ShapeError(f"mu {mu.shape} and log_tau {log_tau.shape} differ in shape")
    n_z = mu.shape[-1]
    return 0.5 * (np.sum(mu * mu, axis=-1) + np.sum(np.exp(2.0 * log_tau), axis=-1) - n_z) - np.sum(log_tau, axis=-1)


def kl_gradients(mu: np.ndarray, log_tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return mu, np.exp(2.0 * log_tau) - 1.0


# ==============================================================================
# OPTIMIZER
# ==============================================================================

class Adam:
    """
    Adaptive-moment optimizer over named arrays, updated in place.

    `rows` restricts an update to a subset of leading-axis rows, each row
    keeping its own step count (per-image latents in a shared array).
    """

    def __init__(self, lr: float, betas: Tuple[float, float] = settings.ADAM_BETAS, eps: float = settings.ADAM_EPS):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}
        self._t: Dict[str, np.ndarray] = {}

    def update(self, name: str, param: np.ndarray, grad: np.ndarray, rows: Optional[np.ndarray] = None) -> None:
        if name not in self._m:
            self._m[name] = np.zeros_like(param)
            self._v[name] = np.zeros_like(param)
            self._t[name] = np.zeros(param.shape[0] if param.ndim else 1, dtype=np.int64)
        idx = slice(None) if rows is None else rows
        self._t[name][idx] += 1
        t = self._t[name][idx].reshape((-1,) + (1,) * (param.ndim - 1)) if param.ndim > 1 else self._t[name][idx]
        m = self.beta1 * self._m[name][idx] + (1.0 - self.beta1) * grad
        v = self.beta2 * self._v[name][idx] + (1.0 - self.beta2) * grad * grad
        self._m[name][idx] = m
        self._v[name][idx] = v
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        param[idx] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ==============================================================================
# TRAINING
# ==============================================================================

@dataclass(frozen=True)
class TrainConfig:
    """
    Desk-scale defaults: 20 epochs, batch 25, decoder and latent lr 0.01.

    `full_scale()` returns the full schedule instead: 400 epochs, batch 100,
    decoder lr 0.0001, latent lr 0.01.
    """

    epochs: int = 20
    batch_size: int = 25
    latent_steps_per_decoder_update: int = 10
    lr_decoder: float = 0.01
    lr_latent: float = 0.01
    sigma: float = settings.SIGMA
    n_z: int = settings.LATENT_DIM
    hidden: int = settings.HIDDEN_WIDTH
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1 or self.latent_steps_per_decoder_update < 0:
            raise ConfigError("train.batch_size must be >= 1 and latent steps >= 0")
        if self.lr_decoder <= 0 or self.lr_latent <= 0:
            raise ConfigError("train learning rates must be > 0")
        if self.sigma <= 0:
            raise ConfigError(f"train.sigma must be > 0, got {self.sigma}")

    @classmethod
    def full_scale(cls, seed: int = 0) -> "TrainConfig":
        return cls(epochs=400, batch_size=100, lr_decoder=0.0001, lr_latent=0.01, seed=seed)


@dataclass
class TrainResult:
    model: DecoderModel
    loss_curve: List[float] = field(default_factory=list)
    mu: Optional[np.ndarray] = None
    log_tau: Optional[np.ndarray] = None


def _elbo_terms(model, x, mu, log_tau, eps, sigma, need_weights):
    """Per-image loss (kl + residual / 2 sigma^2) and its gradients."""
    tau = np.exp(log_tau)
    z = mu + tau * eps
    cache = forward_batch(model, z)
    residual = cache.y - x
    loss = kl_diag_gaussian(mu, log_tau) + np.sum(residual * residual, axis=1) / (2.0 * sigma * sigma)
    dz, grads = backward_batch(model, cache, residual / (sigma * sigma), need_weights)
    g_mu_kl, g_lt_kl = kl_gradients(mu, log_tau)
    return loss, dz + g_mu_kl, dz * eps * tau + g_lt_kl, grads


def svi_train(
    images: np.ndarray,
    cfg: TrainConfig,
    cls: int,
    rng: Optional[np.random.Generator] = None,
) -> TrainResult:
    """
    Stochastic variational training of one class decoder.

    Every training image keeps its own (mu, log_tau), initialised at the
    prior and warm-started across epochs. Each batch runs the configured
    number of latent Adam steps, then one decoder Adam step on the same loss.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] == 0 or images.shape[3] != 3 or images.shape[1] != images.shape[2]:
        raise ShapeError(f"training images must be a non-empty (N, d, d, 3) stack, got {images.shape}")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n, d = images.shape[0], images.shape[1]
    flat = images.reshape(n, -1)

    model = init_model(cls, rng, n_z=cfg.n_z, d=d, hidden=cfg.hidden)
    mu = np.zeros((n, cfg.n_z))
    log_tau = np.zeros((n, cfg.n_z))
    latent_opt = Adam(cfg.lr_latent)
    decoder_opt = Adam(cfg.lr_decoder)
    curve: List[float] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            x = flat[idx]
            for _ in range(cfg.latent_steps_per_decoder_update):
                eps = rng.standard_normal((len(idx), cfg.n_z))
                _, g_mu, g_lt, _ = _elbo_terms(model, x, mu[idx], log_tau[idx], eps, cfg.sigma, False)
                latent_opt.update("mu", mu, g_mu, rows=idx)
                latent_opt.update("log_tau", log_tau, g_lt, rows=idx)

            eps = rng.standard_normal((len(idx), cfg.n_z))
            loss, _, _, grads = _elbo_terms(model, x, mu[idx], log_tau[idx], eps, cfg.sigma, True)
            if not np.all(np.isfinite(loss)):
                raise TrainingError(f"non-finite loss for class {cls} at epoch {epoch}, batch {b}")
            for name in PARAM_ORDER:
                decoder_opt.update(name, getattr(model, name), grads[name] / len(idx))
            epoch_loss += float(loss.sum())
        curve.append(epoch_loss / n)
        logger.debug("class %d epoch %d mean loss %.3f", cls, epoch, curve[-1])

    for name in PARAM_ORDER:
        setattr(model, name, _float32_grid(getattr(model, name)))
    logger.info("Trained decoder for class %d: loss %.2f -> %.2f", cls, curve[0], curve[-1])
    return TrainResult(model=model, loss_curve=curve, mu=mu, log_tau=log_tau)


class LatentFit(NamedTuple):
    mu: np.ndarray
    log_tau: np.ndarray
    loss: np.ndarray
    mse: np.ndarray


def fit_latents(
    model: DecoderModel,
    images: np.ndarray,
    sigma: float = settings.SIGMA,
    steps: int = 50,
    lr: float = 0.05,
    rng: Optional[np.random.Generator] = None,
) -> LatentFit:
    """
    Fit per-image posteriors with the decoder held fixed.

    Returns, per image, the loss and mean squared error of the decoding at mu.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[1:] != (model.d, model.d, 3):
        raise ShapeError(f"images must have shape (N, {model.d}, {model.d}, 3), got {images.shape}")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = images.shape[0]
    flat = images.reshape(n, -1)
    mu = np.zeros((n, model.n_z))
    log_tau = np.zeros((n, model.n_z))
    opt = Adam(lr)
    for _ in range(steps):
        eps = rng.standard_normal((n, model.n_z))
        _, g_mu, g_lt, _ = _elbo_terms(model, flat, mu, log_tau, eps, sigma, False)
        opt.update("mu", mu, g_mu)
        opt.update("log_tau", log_tau, g_lt)
    residual = forward_batch(model, mu).y - flat
    sq = np.sum(residual * residual, axis=1)
    loss = kl_diag_gaussian(mu, log_tau) + sq / (2.0 * sigma * sigma)
    return LatentFit(mu, log_tau, loss, sq / flat.shape[1])


# ==============================================================================
# MODEL FILES
# ==============================================================================

def save_model(model: DecoderModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.cls, model.n_z, model.d, model.hidden)
    blocks = [np.ascontiguousarray(getattr(model, n), dtype="<f4").tobytes() for n in PARAM_ORDER]
    path.write_bytes(header + b"".join(blocks))
    return path


def load_model(path: Union[str, Path]) -> DecoderModel:
    blob = Path(path).read_bytes()
    if len(blob) < _MODEL_HEADER.size:
        raise ModelFormatError(f"{path}: truncated header")
    magic, version, cls, n_z, d, hidden = _MODEL_HEADER.unpack_from(blob, 0)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version} (expected {MODEL_VERSION})")
    out = 3 * d * d
    shapes = {"W1": (n_z, hidden), "b1": (hidden,), "W2": (hidden, out), "b2": (out,)}
    expected = _MODEL_HEADER.size + 4 * sum(int(np.prod(s)) for s in shapes.values())
    if len(blob) != expected:
        raise ModelFormatError(f"{path}: size {len(blob)} does not match header (expected {expected})")
    offset = _MODEL_HEADER.size
    params = {}
    for name in PARAM_ORDER:
        count = int(np.prod(shapes[name]))
        params[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).astype(np.float64).reshape(shapes[name])
        offset += 4 * count
    return DecoderModel(cls, n_z, d, hidden, **params)
