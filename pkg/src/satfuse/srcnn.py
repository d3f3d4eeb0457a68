"""Small super-resolution conv nets with exact-graph backpropagation.

Networks follow the classic three-stage layout: a wide-kernel feature
extractor, one or more nonlinear mapping layers, and a linear reconstruction
layer.  They operate at the target resolution (the coarse input is upsampled
before entering the network), so output spatial dims always equal input
spatial dims.  Convolutions use replicate-edge same padding, LeakyReLU after
every layer but the last, no batch normalization, and no bias terms (all
parameters are convolution weights).

Parameters are float64 in memory for exact gradient checks and are
serialized as little-endian float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CorruptionError, ShapeError
from .raster import Raster

__all__ = [
    "ArchConfig",
    "SrcnnModel",
    "PRESETS",
    "preset",
    "build_model",
    "forward",
    "backward",
    "masked_mse",
    "masked_mse_grad",
    "infer_tiled",
    "save_checkpoint",
    "load_checkpoint",
]

# elements budget for one im2col slab (float64) ~ 256 MB
_COL_BUDGET = 2**25


@dataclass(frozen=True)
class ArchConfig:
    """Layer plan for one network: (kernel, filters) per conv layer."""

    in_channels: int
    out_channels: int
    layers: tuple[tuple[int, int], ...]
    slope: float = 0.1
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(tuple(l) for l in self.layers))
        if len(self.layers) < 2:
            raise ConfigError("need at least 2 conv layers")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")
        for k, f in self.layers:
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"kernel size {k} must be odd and positive")
            if f < 1:
                raise ConfigError("filter counts must be positive")
        if self.layers[-1][1] != self.out_channels:
            raise ConfigError(
                f"final layer has {self.layers[-1][1]} filters, expected {self.out_channels}"
            )

    @property
    def channel_chain(self) -> list[int]:
        return [self.in_channels] + [f for _, f in self.layers]

    @property
    def max_kernel(self) -> int:
        return max(k for k, _ in self.layers)

    @property
    def receptive_radius(self) -> int:
        return sum(k // 2 for k, _ in self.layers)

    def parameter_count(self) -> int:
        chain = self.channel_chain
        return sum(k * k * chain[i] * chain[i + 1] for i, (k, _) in enumerate(self.layers))

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "layers": [list(l) for l in self.layers],
            "slope": self.slope,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            in_channels=int(d["in_channels"]),
            out_channels=int(d["out_channels"]),
            layers=tuple((int(k), int(f)) for k, f in d["layers"]),
            slope=float(d.get("slope", 0.1)),
            name=str(d.get("name", "custom")),
        )


PRESETS: dict[str, ArchConfig] = {
    # 8 upsampled satellite bands + 3 camera RGB bands -> 8 sharp bands
    "spectral": ArchConfig(11, 8, ((9, 64), (5, 32), (5, 8)), 0.1, "spectral"),
    # camera RGB only (no usable satellite scene)
    "spectral-rgb": ArchConfig(3, 8, ((9, 64), (5, 32), (5, 8)), 0.1, "spectral-rgb"),
    # satellite-only sharpening for unflown areas / dates: wider first kernel
    # to bridge the larger resolution gap
    "spatial": ArchConfig(8, 8, ((13, 64), (5, 32), (5, 8)), 0.1, "spatial"),
    "temporal": ArchConfig(8, 8, ((13, 64), (5, 32), (5, 8)), 0.1, "temporal"),
}


def preset(name: str) -> ArchConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}") from None


@dataclass
class SrcnnModel:
    arch: ArchConfig
    weights: list[np.ndarray]  # per layer, (c_out, c_in, k, k) float64
    seed: int
    train_meta: dict = field(default_factory=dict)

    def parameter_count(self) -> int:
        return int(sum(w.size for w in self.weights))

    def copy_weights(self) -> list[np.ndarray]:
        return [w.copy() for w in self.weights]


def build_model(arch: ArchConfig, seed: int = 0) -> SrcnnModel:
    """He-uniform initialization, deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    chain = arch.channel_chain
    weights = []
    for i, (k, _) in enumerate(arch.layers):
        c_in, c_out = chain[i], chain[i + 1]
        limit = np.sqrt(6.0 / (k * k * c_in))
        weights.append(rng.uniform(-limit, limit, size=(c_out, c_in, k, k)))
    return SrcnnModel(arch, weights, seed)


# ---------------------------------------------------------------------------
# convolution kernels


# Activations flow through the network in (channels, batch, H, W) layout:
# im2col then reduces to plain slab copies (cols[:, offset] = padded slice)
# and one GEMM per layer, with the GEMM result already in the right layout.


def _im2col(xp: np.ndarray, k: int, H: int, W: int) -> np.ndarray:
    """Stack the k*k shifted views of a padded tensor.

    xp: (C, B, H + k - 1, W + k - 1) -> (C, k*k, B, H, W), contiguous.
    """
    C, B = xp.shape[0], xp.shape[1]
    cols = np.empty((C, k * k, B, H, W), dtype=np.float64)
    for a in range(k):
        for b in range(k):
            cols[:, a * k + b] = xp[:, :, a : a + H, b : b + W]
    return cols


def _conv2d(x: np.ndarray, w: np.ndarray, keep_cols: bool = False):
    """Same-size convolution with replicate-edge padding.

    x: (C_in, B, H, W), w: (C_out, C_in, k, k) -> (C_out, B, H, W).
    Large inputs are processed in row slabs to bound im2col memory; with
    `keep_cols` the column tensor is returned for gradient reuse (training
    patches are small, so no slabbing happens on that path).
    """
    c_in, B, H, W = x.shape
    c_out, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="edge")
    wmat = w.reshape(c_out, c_in * k * k)
    if keep_cols or c_in * k * k * B * H * W <= _COL_BUDGET:
        cols = _im2col(xp, k, H, W)
        out = (wmat @ cols.reshape(c_in * k * k, B * H * W)).reshape(c_out, B, H, W)
        return (out, cols) if keep_cols else (out, None)
    out = np.empty((c_out, B, H, W), dtype=np.float64)
    rows_per = max(1, _COL_BUDGET // max(1, c_in * k * k * B * W))
    for r0 in range(0, H, rows_per):
        r1 = min(H, r0 + rows_per)
        cols = _im2col(xp[:, :, r0 : r1 + 2 * p, :], k, r1 - r0, W)
        out[:, :, r0:r1, :] = (
            wmat @ cols.reshape(c_in * k * k, B * (r1 - r0) * W)
        ).reshape(c_out, B, r1 - r0, W)
    return out, None


def _fold_replicate_padding(g: np.ndarray, p: int) -> np.ndarray:
    """Accumulate padded-image gradient onto the interior (replicate-pad adjoint)."""
    if p == 0:
        return g.copy()
    Hp, Wp = g.shape[-2], g.shape[-1]
    g = g.copy()
    g[..., p, :] += g[..., :p, :].sum(axis=-2)
    g[..., Hp - p - 1, :] += g[..., Hp - p :, :].sum(axis=-2)
    g = g[..., p : Hp - p, :]
    g[..., :, p] += g[..., :, :p].sum(axis=-1)
    g[..., :, Wp - p - 1] += g[..., :, Wp - p :].sum(axis=-1)
    return g[..., :, p : Wp - p].copy()


def _conv2d_backward(
    cols: np.ndarray, w: np.ndarray, gout: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`_conv2d` given the forward column tensor.

    cols: (C_in, k*k, B, H, W), gout: (C_out, B, H, W).
    Returns (grad_input (C_in, B, H, W), grad_weights).
    """
    c_out, B, H, W = gout.shape
    c_in, kk = cols.shape[0], cols.shape[1]
    k = int(round(np.sqrt(kk)))
    p = k // 2
    N = B * H * W
    gmat = gout.reshape(c_out, N)

    gw = (gmat @ cols.reshape(c_in * kk, N).T).reshape(c_out, c_in, k, k)

    # scatter the column gradients back onto the padded image (col2im)
    gcols = (w.reshape(c_out, -1).T @ gmat).reshape(c_in, kk, B, H, W)
    gxp = np.zeros((c_in, B, H + 2 * p, W + 2 * p))
    for a in range(k):
        for b in range(k):
            gxp[:, :, a : a + H, b : b + W] += gcols[:, a * k + b]
    gx = _fold_replicate_padding(gxp, p)
    return gx, gw


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, 1.0, slope)


# ---------------------------------------------------------------------------
# network forward / backward


def _check_input(model: SrcnnModel, x: np.ndarray):
    if x.ndim != 4:
        raise ShapeError("expected a (channels, batch, H, W) tensor")
    if x.shape[0] != model.arch.in_channels:
        raise ShapeError(
            f"input has {x.shape[0]} channels, network expects {model.arch.in_channels}"
        )
    if x.shape[2] < model.arch.max_kernel or x.shape[3] < model.arch.max_kernel:
        raise ShapeError(
            f"spatial dims {x.shape[2]}x{x.shape[3]} smaller than the largest "
            f"kernel {model.arch.max_kernel}"
        )


def _forward_batch(model: SrcnnModel, x: np.ndarray, keep_cache: bool = False):
    """x: (C_in, B, H, W) float64 -> (C_out, B, H, W) plus backward cache."""
    _check_input(model, x)
    slope = model.arch.slope
    n_layers = len(model.weights)
    cache = [] if keep_cache else None
    a = x
    for li, w in enumerate(model.weights):
        z, cols = _conv2d(a, w, keep_cols=keep_cache)
        if keep_cache:
            cache.append((cols, z))
        a = z if li == n_layers - 1 else _leaky(z, slope)
    return a, cache


def _backward_batch(model: SrcnnModel, cache, gout: np.ndarray):
    slope = model.arch.slope
    n_layers = len(model.weights)
    grads = [None] * n_layers
    g = gout
    for li in range(n_layers - 1, -1, -1):
        cols, z = cache[li]
        if li != n_layers - 1:
            g = g * _leaky_grad(z, slope)
        g, grads[li] = _conv2d_backward(cols, model.weights[li], g)
    return grads, g


def forward(model: SrcnnModel, x: np.ndarray) -> np.ndarray:
    """Run one image (C_in, H, W) -> (C_out, H, W)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError("expected a (channels, H, W) tensor")
    y, _ = _forward_batch(model, x[:, None])
    return y[:, 0]


def backward(model: SrcnnModel, x: np.ndarray, grad_out: np.ndarray):
    """Exact gradients of the forward graph.

    Returns ``(weight_grads, input_grad)`` for one image; ``grad_out`` is the
    loss gradient w.r.t. the network output.
    """
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if x.ndim != 3 or grad_out.ndim != 3:
        raise ShapeError("expected (channels, H, W) tensors")
    y, cache = _forward_batch(model, x[:, None], keep_cache=True)
    if grad_out.shape != (y.shape[0], y.shape[2], y.shape[3]):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} != output shape "
            f"{(y.shape[0], y.shape[2], y.shape[3])}"
        )
    grads, gin = _backward_batch(model, cache, grad_out[:, None])
    return grads, gin[:, 0]


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Mean squared error over valid pixels (mask broadcasts over channels)."""
    m = mask.astype(np.float64)
    n = m.sum() * pred.shape[-3]
    if n == 0:
        return 0.0
    d = (pred - target) * m
    return float((d * d).sum() / n)


def masked_mse_grad(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> np.ndarray:
    m = mask.astype(np.float64)
    n = m.sum() * pred.shape[-3]
    if n == 0:
        return np.zeros_like(pred)
    return 2.0 * (pred - target) * m / n


# ---------------------------------------------------------------------------
# tiled inference


def _tile_spans(n: int, tile: int, overlap: int):
    """(start, stop, write_start, write_stop) spans covering [0, n)."""
    if n <= tile:
        return [(0, n, 0, n)]
    step = tile - 2 * overlap
    starts = list(range(0, n - tile + 1, step))
    if starts[-1] != n - tile:
        starts.append(n - tile)
    spans = []
    for s in starts:
        w0 = 0 if s == 0 else s + overlap
        w1 = n if s + tile == n else s + tile - overlap
        spans.append((s, s + tile, w0, w1))
    return spans


def infer_tiled(
    model: SrcnnModel,
    inputs: Raster,
    tile: int = 512,
    overlap: int = 16,
    band_names: list[str] | None = None,
) -> Raster:
    """Run the network over a raster in overlapping tiles.

    Tiles are 512x512 with a 16-pixel overlap; each tile contributes its
    center region, so seams agree with a whole-image pass wherever the
    overlap exceeds the receptive-field radius.  The input mask propagates
    unchanged to the output.
    """
    if inputs.n_bands != model.arch.in_channels:
        raise ShapeError(
            f"raster has {inputs.n_bands} bands, network expects {model.arch.in_channels}"
        )
    if overlap < model.arch.receptive_radius:
        raise ConfigError(
            f"overlap {overlap} smaller than receptive radius {model.arch.receptive_radius}"
        )
    x = inputs.filled_values()
    _, H, W = x.shape
    c_out = model.arch.out_channels
    out = np.empty((c_out, H, W), dtype=np.float64)
    for r0, r1, wr0, wr1 in _tile_spans(H, tile, overlap):
        for c0, c1, wc0, wc1 in _tile_spans(W, tile, overlap):
            y, _ = _forward_batch(model, x[:, None, r0:r1, c0:c1])
            out[:, wr0:wr1, wc0:wc1] = y[:, 0, wr0 - r0 : wr1 - r0, wc0 - c0 : wc1 - c0]
    if band_names is None:
        band_names = [f"band{i}" for i in range(c_out)]
    return Raster(inputs.grid, out.astype(np.float32), band_names, inputs.mask.copy())


# ---------------------------------------------------------------------------
# checkpoints: u32le header length + JSON header + raw little-endian float32
# parameter block (layer order, C-contiguous)


def save_checkpoint(model: SrcnnModel, path) -> None:
    payload = b"".join(
        np.ascontiguousarray(w, dtype="<f4").tobytes() for w in model.weights
    )
    header = {
        "arch": model.arch.to_dict(),
        "seed": model.seed,
        "train_meta": model.train_meta,
        "payload_bytes": len(payload),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path) -> SrcnnModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise CorruptionError("checkpoint shorter than its header length field")
    hlen = int(np.frombuffer(data[:4], dtype="<u4")[0])
    if 4 + hlen > len(data):
        raise CorruptionError("declared header length exceeds file size")
    try:
        header = json.loads(data[4 : 4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"checkpoint header is not valid JSON: {exc}") from exc
    arch = ArchConfig.from_dict(header["arch"])
    payload = data[4 + hlen :]
    expected = arch.parameter_count() * 4
    if header.get("payload_bytes") != len(payload) or len(payload) != expected:
        raise CorruptionError(
            f"parameter block length mismatch: header says {header.get('payload_bytes')}, "
            f"architecture needs {expected}, file holds {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    weights = []
    pos = 0
    chain = arch.channel_chain
    for i, (k, _) in enumerate(arch.layers):
        shape = (chain[i + 1], chain[i], k, k)
        n = int(np.prod(shape))
        weights.append(flat[pos : pos + n].reshape(shape).copy())
        pos += n
    model = SrcnnModel(arch, weights, int(header.get("seed", 0)))
    model.train_meta = dict(header.get("train_meta", {}))
    return model

