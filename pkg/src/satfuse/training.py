"""Training loop for the super-resolution networks.

Adam on masked mean squared error.  Patches are sampled on coarse-pixel
boundaries (positions are multiples of the fine/coarse scale factor) and
patches whose pixels are all masked are rejected at sampling time.  Runs are
bit-deterministic under a fixed seed: shuffling comes from one seeded
generator and gradient reduction order is fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .raster import Raster
from .srcnn import ArchConfig, _backward_batch, _forward_batch, build_model

__all__ = ["TrainConfig", "train", "loss_log_to_csv"]


@dataclass
class TrainConfig:
    """Knobs for one training run; defaults are the documented conventions."""

    scale: int = 8                 # fine pixels per coarse pixel
    patch_coarse: int = 2          # coarse pixels per patch side
    patch_stride_coarse: int | None = None  # sampling stride; None = patch_coarse
    batch_size: int = 16
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    seed: int = 0
    validation_fraction: float = 0.1
    split: str | None = None       # free-form split description, recorded only

    def __post_init__(self):
        if self.scale < 1 or self.patch_coarse < 1:
            raise ConfigError("scale and patch_coarse must be positive")
        if self.patch_stride_coarse is not None and self.patch_stride_coarse < 1:
            raise ConfigError("patch_stride_coarse must be positive")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ConfigError("validation_fraction must lie strictly between 0 and 1")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")

    @property
    def patch_side(self) -> int:
        return self.patch_coarse * self.scale

    @property
    def patch_stride(self) -> int:
        return (self.patch_stride_coarse or self.patch_coarse) * self.scale


@dataclass
class _PairData:
    x: np.ndarray      # (C_in, H, W) float64, invalid zero-filled
    t: np.ndarray      # (C_out, H, W)
    mask: np.ndarray   # (H, W) float64 joint validity


class _Adam:
    def __init__(self, shapes, cfg: TrainConfig):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.cfg = cfg

    def step(self, weights, grads):
        c = self.cfg
        self.t += 1
        b1c = 1.0 - c.beta1**self.t
        b2c = 1.0 - c.beta2**self.t
        for w, g, m, v in zip(weights, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            w -= c.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + c.eps)


def _prepare_pairs(pairs, arch: ArchConfig) -> list[_PairData]:
    if not pairs:
        raise DataError("empty dataset")
    out = []
    for inp, tgt in pairs:
        if inp.grid != tgt.grid:
            raise DataError("input/target rasters are not grid-aligned")
        if inp.n_bands != arch.in_channels:
            raise ShapeError(
                f"input raster has {inp.n_bands} bands, network expects {arch.in_channels}"
            )
        if tgt.n_bands != arch.out_channels:
            raise ShapeError(
                f"target raster has {tgt.n_bands} bands, network expects {arch.out_channels}"
            )
        mask = (inp.mask & tgt.mask).astype(np.float64)
        out.append(_PairData(inp.filled_values(), tgt.filled_values(), mask))
    return out


def _patch_pool(data: list[_PairData], side: int, stride: int) -> list[tuple[int, int, int]]:
    pool = []
    for pi, d in enumerate(data):
        H, W = d.mask.shape
        if side > H or side > W:
            raise ConfigError(f"patch side {side} exceeds image dims {H}x{W}")
        for i0 in range(0, H - side + 1, stride):
            for j0 in range(0, W - side + 1, stride):
                if d.mask[i0 : i0 + side, j0 : j0 + side].any():
                    pool.append((pi, i0, j0))
    return pool


def _batch_arrays(data, entries, side):
    """Patch batches in the network's (channels, batch, H, W) layout."""
    xb = np.stack([data[pi].x[:, i0 : i0 + side, j0 : j0 + side] for pi, i0, j0 in entries], axis=1)
    tb = np.stack([data[pi].t[:, i0 : i0 + side, j0 : j0 + side] for pi, i0, j0 in entries], axis=1)
    mb = np.stack([data[pi].mask[i0 : i0 + side, j0 : j0 + side] for pi, i0, j0 in entries])
    return xb, tb, mb[None, :, :, :]


def _pooled_loss(model, data, pool, side, batch_size):
    """Masked-MSE over a whole patch pool (forward only)."""
    sq = 0.0
    n = 0.0
    c_out = model.arch.out_channels
    for s in range(0, len(pool), batch_size):
        xb, tb, mb = _batch_arrays(data, pool[s : s + batch_size], side)
        pred, _ = _forward_batch(model, xb)
        d = (pred - tb) * mb
        sq += float((d * d).sum())
        n += float(mb.sum()) * c_out
    return sq / n if n else 0.0


def train(
    arch: ArchConfig,
    pairs: list[tuple[Raster, Raster]],
    cfg: TrainConfig,
    val_pairs: list[tuple[Raster, Raster]] | None = None,
):
    """Train a network on grid-aligned (input, target) raster pairs.

    When `val_pairs` is given its patches form the validation pool; otherwise
    a seeded `validation_fraction` of the training patches is held out.
    Returns ``(model, loss_log)`` where the model carries the
    best-validation-loss parameters and ``loss_log`` is a list of
    ``(epoch, train_loss, val_loss)`` rows.
    """
    data = _prepare_pairs(pairs, arch)
    side = cfg.patch_side
    rng = np.random.default_rng(cfg.seed)

    pool = _patch_pool(data, side, cfg.patch_stride)
    if not pool:
        raise DataError("all candidate patches are fully masked")
    if val_pairs is not None:
        vdata = _prepare_pairs(val_pairs, arch)
        val_pool = _patch_pool(vdata, side, cfg.patch_stride)
        if not val_pool:
            raise DataError("validation pairs contain no usable patches")
        train_pool = pool
    else:
        order = rng.permutation(len(pool))
        n_val = max(1, int(round(cfg.validation_fraction * len(pool))))
        if n_val >= len(pool):
            raise DataError("not enough patches to hold out a validation split")
        vdata = data
        val_pool = [pool[i] for i in order[:n_val]]
        train_pool = [pool[i] for i in order[n_val:]]

    model = build_model(arch, cfg.seed)
    adam = _Adam([w.shape for w in model.weights], cfg)
    c_out = arch.out_channels

    best_val = np.inf
    best_weights = model.copy_weights()
    best_epoch = -1
    loss_log: list[tuple[int, float, float]] = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_pool))
        sq = 0.0
        n = 0.0
        for s in range(0, len(order), cfg.batch_size):
            entries = [train_pool[i] for i in order[s : s + cfg.batch_size]]
            xb, tb, mb = _batch_arrays(data, entries, side)
            pred, cache = _forward_batch(model, xb, keep_cache=True)
            n_batch = float(mb.sum()) * c_out
            d = (pred - tb) * mb
            sq += float((d * d).sum())
            n += n_batch
            if n_batch == 0:
                continue
            grad_out = 2.0 * d / n_batch
            grads, _ = _backward_batch(model, cache, grad_out)
            adam.step(model.weights, grads)
        train_loss = sq / n if n else 0.0
        val_loss = _pooled_loss(model, vdata, val_pool, side, cfg.batch_size)
        loss_log.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_weights = model.copy_weights()
            best_epoch = epoch

    model.weights = best_weights
    model.train_meta = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "optimizer": "adam",
        "learning_rate": cfg.learning_rate,
        "betas": [cfg.beta1, cfg.beta2],
        "loss": "masked_mse",
        "split": cfg.split,
        "patch_side": side,
        "n_train_patches": len(train_pool),
        "n_val_patches": len(val_pool),
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "final_train_loss": loss_log[-1][1],
        "final_val_loss": loss_log[-1][2],
    }
    return model, loss_log


def loss_log_to_csv(loss_log, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, tr, va in loss_log:
            fh.write(f"{epoch},{tr!r},{va!r}\n")
