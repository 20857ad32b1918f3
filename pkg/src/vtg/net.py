"""3D convolutional completion network written directly in numpy.

Architecture (``D`` voxels per axis)::

    conv3d 1 -> c1, kernel 4, stride 2, pad 1, ReLU      D   -> D/2
    conv3d c1 -> c2, kernel 4, stride 2, pad 1, ReLU     D/2 -> D/4
    flatten -> dense hidden, ReLU
    dense -> D**3, sigmoid

Parameters are kept in an insertion-ordered ``dict`` (``W1, b1, ..., W4, b4``);
that order is also the checkpoint blob order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .grid import InvalidInputError, ScalarGrid, VoxelGrid, merge_grids

KERNEL = 4
STRIDE = 2
PAD = 1
CLAMP_EPS = 1e-7

MODES = ("depth_only", "tactile_and_depth", "tactile_only")
MODE_ALIASES = {"depth": "depth_only", "both": "tactile_and_depth", "tactile": "tactile_only"}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetConfig:
    grid_dim: int = 40
    conv1: int = 8
    conv2: int = 16
    hidden: int = 512

    def __post_init__(self):
        if self.grid_dim <= 0 or self.grid_dim % 4:
            raise InvalidInputError(f"grid_dim must be a positive multiple of 4, got {self.grid_dim}")
        if min(self.conv1, self.conv2, self.hidden) <= 0:
            raise InvalidInputError("layer widths must be positive")

    @property
    def flat(self) -> int:
        return self.conv2 * (self.grid_dim // 4) ** 3

    @property
    def out(self) -> int:
        return self.grid_dim ** 3

    def shapes(self) -> dict[str, tuple[int, ...]]:
        k = (KERNEL,) * 3
        return {
            "W1": (self.conv1, 1) + k, "b1": (self.conv1,),
            "W2": (self.conv2, self.conv1) + k, "b2": (self.conv2,),
            "W3": (self.flat, self.hidden), "b3": (self.hidden,),
            "W4": (self.hidden, self.out), "b4": (self.out,),
        }


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    clamp_eps: float = CLAMP_EPS
    dtype: str = "float32"

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidInputError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def init_params(cfg: NetConfig, seed: int = 0, dtype="float64", zero_output: bool = False) -> dict:
    """He-normal weights for ReLU layers, Glorot-uniform for the sigmoid layer, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    shapes = cfg.shapes()
    params = {}
    for name, shape in shapes.items():
        if name.startswith("b"):
            params[name] = np.zeros(shape, dtype=dtype)
        elif name == "W4":
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=shape)
            params[name] = (np.zeros(shape) if zero_output else w).astype(dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if name in ("W1", "W2") else shape[0]
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(dtype)
    return params


def _check_params(cfg: NetConfig, params: dict) -> None:
    for name, shape in cfg.shapes().items():
        if params[name].shape != shape:
            raise InvalidInputError(f"{name} has shape {params[name].shape}, expected {shape}")


def config_from_params(params: dict) -> NetConfig:
    c1 = params["W1"].shape[0]
    c2 = params["W2"].shape[0]
    hidden = params["W3"].shape[1]
    dim = round(params["W4"].shape[1] ** (1 / 3))
    return NetConfig(dim, c1, c2, hidden)


# --- layers -----------------------------------------------------------------

def _windows(x: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0)) + ((PAD, PAD),) * 3)
    win = sliding_window_view(xp, (KERNEL,) * 3, axis=(2, 3, 4))
    return win[:, :, ::STRIDE, ::STRIDE, ::STRIDE]


def conv3d(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Strided 3D convolution (cross-correlation). Returns output and the window view."""
    win = _windows(x)
    out = np.tensordot(win, w, axes=([1, 5, 6, 7], [1, 2, 3, 4]))
    out = np.moveaxis(out, -1, 1) + b[None, :, None, None, None]
    return out, win


def conv3d_backward(dout: np.ndarray, win: np.ndarray, w: np.ndarray, in_shape, input_grad: bool = True):
    """Gradients ``(dx, dw, db)`` of :func:`conv3d`; ``dx`` is ``None`` unless ``input_grad``."""
    dw = np.tensordot(dout, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    db = dout.sum(axis=(0, 2, 3, 4))
    if not input_grad:
        return None, dw, db
    # Kernel axes first so every tap below reads one contiguous block.
    g = np.tensordot(w, dout, axes=([0], [1]))               # (C, k, k, k, B, O, O, O)
    bsz, ch = in_shape[:2]
    size = in_shape[2] + 2 * PAD
    o = dout.shape[2]
    dxp = np.zeros((ch, bsz, size, size, size), dtype=dout.dtype)
    span = STRIDE * (o - 1) + 1
    for i in range(KERNEL):
        for j in range(KERNEL):
            for k in range(KERNEL):
                dxp[:, :, i:i + span:STRIDE, j:j + span:STRIDE, k:k + span:STRIDE] += g[:, i, j, k]
    return dxp[:, :, PAD:-PAD, PAD:-PAD, PAD:-PAD].transpose(1, 0, 2, 3, 4), dw, db


def forward_batch(params: dict, x: np.ndarray, keep: bool = False):
    """Occupancy probabilities for a batch ``x`` of shape (B, D, D, D).

    Returns ``(probs (B, D**3), cache)``; ``cache`` is ``None`` unless ``keep``.
    """
    x = x[:, None].astype(params["W1"].dtype, copy=False)
    a1, win1 = conv3d(x, params["W1"], params["b1"])
    h1 = np.maximum(a1, 0)
    a2, win2 = conv3d(h1, params["W2"], params["b2"])
    h2 = np.maximum(a2, 0)
    f = h2.reshape(len(x), -1)
    a3 = f @ params["W3"] + params["b3"]
    h3 = np.maximum(a3, 0)
    z = h3 @ params["W4"] + params["b4"]
    y = expit(z)
    cache = (x.shape, win1, a1, h1.shape, win2, a2, f, a3, h3) if keep else None
    return y, cache


def loss_and_grad(params: dict, x: np.ndarray, target: np.ndarray, clamp_eps: float = CLAMP_EPS):
    """Mean clamped cross-entropy over all voxels of the batch and its exact gradient."""
    y, cache = forward_batch(params, x, keep=True)
    t = target.reshape(len(x), -1).astype(y.dtype, copy=False)
    loss = cross_entropy(y, t, clamp_eps)
    x_shape, win1, a1, h1_shape, win2, a2, f, a3, h3 = cache
    # d/dz of E(t, clip(sigmoid(z))) is (y - t) inside the clamp band and 0 where clipped.
    active = (y > clamp_eps) & (y < 1 - clamp_eps)
    dz = np.where(active, y - t, 0).astype(y.dtype) / y.size
    grads = {}
    grads["W4"] = h3.T @ dz
    grads["b4"] = dz.sum(axis=0)
    dh3 = dz @ params["W4"].T
    da3 = dh3 * (a3 > 0)
    grads["W3"] = f.T @ da3
    grads["b3"] = da3.sum(axis=0)
    df = da3 @ params["W3"].T
    da2 = df.reshape(a2.shape) * (a2 > 0)
    dh1, grads["W2"], grads["b2"] = conv3d_backward(da2, win2, params["W2"], h1_shape)
    da1 = dh1 * (a1 > 0)
    _, grads["W1"], grads["b1"] = conv3d_backward(da1, win1, params["W1"], x_shape, input_grad=False)
    return loss, {k: grads[k] for k in params}


def backward(params: dict, x: np.ndarray, target: np.ndarray, clamp_eps: float = CLAMP_EPS) -> dict:
    """Gradient of :func:`cross_entropy` w.r.t. every parameter."""
    return loss_and_grad(params, x, target, clamp_eps)[1]


def cross_entropy(pred, target, clamp_eps: float = CLAMP_EPS) -> float:
    """Mean of ``-(y log p + (1 - y) log(1 - p))`` with ``p`` clipped to ``[eps, 1 - eps]``."""
    p = np.clip(np.asarray(pred, dtype=float), clamp_eps, 1 - clamp_eps)
    y = np.asarray(target, dtype=float)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))


def _grid_input(grid: VoxelGrid, dim: int) -> np.ndarray:
    if grid.frame.dims != (dim, dim, dim):
        raise InvalidInputError(f"network expects a {dim}^3 grid, got {grid.frame.dims}")
    return grid.occupancy[None]


def forward(params: dict, grid: VoxelGrid) -> ScalarGrid:
    """Per-voxel occupancy probability for one input grid."""
    dim = config_from_params(params).grid_dim
    y, _ = forward_batch(params, _grid_input(grid, dim))
    return ScalarGrid(grid.frame, y.reshape((dim,) * 3).astype(float))


def loss(pred: ScalarGrid, target: VoxelGrid, clamp_eps: float = CLAMP_EPS) -> float:
    if pred.frame.dims != target.frame.dims:
        raise InvalidInputError("prediction and target dims differ")
    return cross_entropy(pred.values, target.occupancy, clamp_eps)


def binarize(pred: ScalarGrid, threshold: float = 0.5) -> VoxelGrid:
    """Voxels whose probability is at least ``threshold``."""
    return VoxelGrid(pred.frame, pred.values >= threshold)


def adam_step(state: AdamState, params: dict, grads: dict, cfg: TrainConfig):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingError(f"non-finite gradient in {name} ({bad} entries) at step {state.t + 1}")
    t = state.t + 1
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1 - b1 ** t
    corr2 = 1 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * (g * g)
        step = (cfg.learning_rate / corr1) * m / (np.sqrt(v / corr2) + cfg.epsilon)
        new_params[name] = (p - step).astype(p.dtype, copy=False)
        new_m[name], new_v[name] = m.astype(p.dtype, copy=False), v.astype(p.dtype, copy=False)
    return new_params, AdamState(new_m, new_v, t)


# --- training -----------------------------------------------------------------

def normalize_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise InvalidInputError(f"unknown mode {mode!r}; expected one of {MODES}")
    return mode


def select_input(depth: VoxelGrid, tactile: VoxelGrid, mode: str) -> VoxelGrid:
    mode = normalize_mode(mode)
    if mode == "depth_only":
        return depth
    if mode == "tactile_only":
        return tactile
    return merge_grids(depth, tactile)


def stack_inputs(triplets, mode: str):
    """Network inputs (N, D, D, D) and targets (N, D, D, D) as bool arrays."""
    x = np.stack([select_input(t.depth, t.tactile, mode).occupancy for t in triplets])
    y = np.stack([t.ground_truth.occupancy for t in triplets])
    return x, y


def predict(params: dict, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    dim = config_from_params(params).grid_dim
    out = [forward_batch(params, x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(out).reshape((len(x),) + (dim,) * 3)


def mean_jaccard(pred_occ: np.ndarray, target_occ: np.ndarray) -> float:
    inter = np.logical_and(pred_occ, target_occ).reshape(len(pred_occ), -1).sum(axis=1)
    union = np.logical_or(pred_occ, target_occ).reshape(len(pred_occ), -1).sum(axis=1)
    scores = np.where(union > 0, inter / np.maximum(union, 1), 1.0)
    return float(scores.mean())


def dihedral_xy(grid: np.ndarray, code: int) -> np.ndarray:
    """One of the 8 symmetries of the square acting on the x/y axes of a (..., X, Y, Z) array.

    Bit 0 flips x, bit 1 flips y, bit 2 swaps x and y. The z (viewing)
    axis is left alone, so rays and tactile probes keep their direction.
    """
    out = grid
    if code & 1:
        out = out[..., ::-1, :, :]
    if code & 2:
        out = out[..., :, ::-1, :]
    if code & 4:
        out = np.swapaxes(out, -3, -2)
    return out


def _augment(x: np.ndarray, y: np.ndarray, rng: np.random.Generator):
    codes = rng.integers(0, 8, size=len(x))
    xa = np.stack([dihedral_xy(xi, c) for xi, c in zip(x, codes)])
    ya = np.stack([dihedral_xy(yi, c) for yi, c in zip(y, codes)])
    return xa, ya


@dataclass
class TrainResult:
    params: dict
    best_params: dict
    history: list = field(default_factory=list)
    best_epoch: int = -1


def train(dataset, net_cfg: NetConfig, train_cfg: TrainConfig, mode: str, holdout=None,
          params: dict | None = None, log: Callable[[dict], None] | None = None,
          threshold: float = 0.5, augment: bool = False) -> TrainResult:
    """Fit the completion network on triplets with the given input ``mode``.

    Mini-batches are reshuffled every epoch (the last, partial batch is
    kept). ``history`` holds one record per epoch with the mean training
    loss and, when ``holdout`` triplets are given, their mean Jaccard.
    With ``augment`` every sample gets a random :func:`dihedral_xy`
    symmetry each time it is drawn.
    """
    mode = normalize_mode(mode)
    dataset = list(dataset)
    if not dataset:
        raise InvalidInputError("training set is empty")
    x, y = stack_inputs(dataset, mode)
    if x.shape[1:] != (net_cfg.grid_dim,) * 3:
        raise InvalidInputError(f"dataset grids {x.shape[1:]} do not match grid_dim {net_cfg.grid_dim}")
    if holdout:
        hx, hy = stack_inputs(holdout, mode)
    if params is None:
        params = init_params(net_cfg, train_cfg.seed, dtype=train_cfg.dtype)
    _check_params(net_cfg, params)
    state = AdamState.zeros_like(params)
    rng = np.random.Generator(np.random.PCG64(train_cfg.seed))
    result = TrainResult(params, params)
    best = -np.inf
    n = len(x)
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, train_cfg.batch_size):
            idx = order[s:s + train_cfg.batch_size]
            bx, by = _augment(x[idx], y[idx], rng) if augment else (x[idx], y[idx])
            batch_loss, grads = loss_and_grad(params, bx, by, train_cfg.clamp_eps)
            if not np.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            params, state = adam_step(state, params, grads, train_cfg)
            total += batch_loss * len(idx)
        record = {"epoch": epoch, "mode": mode, "loss": total / n, "steps": state.t}
        if holdout:
            score = mean_jaccard(predict(params, hx) >= threshold, hy)
            record["holdout_jaccard"] = score
            if score > best:
                best, result.best_params, result.best_epoch = score, params, epoch
        result.history.append(record)
        if log is not None:
            log(record)
    result.params = params
    if not holdout:
        result.best_params, result.best_epoch = params, train_cfg.epochs
    return result


def jsonl_logger(path) -> Callable[[dict], None]:
    """Append each training record to ``path`` as one JSON line."""
    path = Path(path)

    def write(record: dict) -> None:
        with path.open("a") as fh:
            fh.write(json.dumps(record) + "\n")

    return write


# --- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, params: dict, net_cfg: NetConfig, train_cfg: TrainConfig | None = None,
                    epoch: int = 0, metrics: dict | None = None) -> None:
    """u32 header length, JSON header, then every tensor as little-endian f32."""
    header = json.dumps({
        "net_cfg": asdict(net_cfg),
        "train_cfg": asdict(train_cfg) if train_cfg else None,
        "epoch": epoch,
        "metrics": metrics or {},
        "layers": [[k, list(v.shape)] for k, v in params.items()],
    }).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for v in params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path, dtype="float32"):
    """Returns ``(params, header)``."""
    data = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<I", data)
    header = json.loads(data[4:4 + hlen])
    net_cfg = NetConfig(**header["net_cfg"])
    offset = 4 + hlen
    params = {}
    for name, shape in net_cfg.shapes().items():
        count = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).astype(dtype)
        offset += 4 * count
    if offset != len(data):
        raise InvalidInputError(f"checkpoint size mismatch: {len(data) - offset} trailing bytes")
    header["net_cfg"] = net_cfg
    return params, header

