"""Compact CNN classifier written directly in numpy.

Three 3x3 conv blocks (8, 16, 32 filters, ReLU, 2x2 max-pool), global
average pooling and a 32 -> 2 linear head. Activations are kept channel-major
(C, N, H, W) so each convolution is a single im2col matmul; ReLU is applied
after pooling, which gives the same result on a quarter of the values.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArchMismatch, DegenerateDataset, FormatError, ShapeMismatch

log = logging.getLogger(__name__)

ARCH = {
    "name": "compact_cnn",
    "input": [1, 224, 224],
    "conv_filters": [8, 16, 32],
    "kernel": 3,
    "n_classes": 2,
}
CONV_FILTERS = tuple(ARCH["conv_filters"])
N_CLASSES = 2
INPUT_SIZE = 224
# parameter order in flattened weight vectors
PARAM_NAMES = ("conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w", "conv3.b", "fc.w", "fc.b")


def param_shapes() -> dict[str, tuple[int, ...]]:
    shapes = {}
    c_in = 1
    for i, c_out in enumerate(CONV_FILTERS, 1):
        shapes[f"conv{i}.w"] = (3, 3, c_in, c_out)
        shapes[f"conv{i}.b"] = (c_out,)
        c_in = c_out
    shapes["fc.w"] = (c_in, N_CLASSES)
    shapes["fc.b"] = (N_CLASSES,)
    return shapes


N_PARAMS = sum(int(np.prod(s)) for s in param_shapes().values())


def _im2col(x: np.ndarray) -> np.ndarray:
    """(C, N, H, W) -> (9*C, N*H*W) patches for a 3x3 'same' convolution.

    Rows are ordered (ky, kx, c), matching ``w.reshape(9 * C, C_out)``.
    """
    c, n, h, w = x.shape
    xp = np.zeros((c, n, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((9, c, n, h, w), dtype=x.dtype)
    for k in range(9):
        dy, dx = divmod(k, 3)
        cols[k] = xp[:, :, dy:dy + h, dx:dx + w]
    return cols.reshape(9 * c, n * h * w)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    c, n, h, w = shape
    dcols = dcols.reshape(9, c, n, h, w)
    dxp = np.zeros((c, n, h + 2, w + 2), dtype=dcols.dtype)
    for k in range(9):
        dy, dx = divmod(k, 3)
        dxp[:, :, dy:dy + h, dx:dx + w] += dcols[k]
    return dxp[:, :, 1:-1, 1:-1]


def _maxpool(a: np.ndarray):
    """2x2/2 max-pool over the last two axes.

    Pools column pairs, then row pairs. Returns the pooled map and the
    per-stage winners ``(right_wins, bottom_wins)``; strict comparisons make
    ties go to the first element in row-major order.
    """
    left, right = a[..., 0::2], a[..., 1::2]
    right_wins = right > left
    cols = np.maximum(left, right)
    top, bottom = cols[..., 0::2, :], cols[..., 1::2, :]
    bottom_wins = bottom > top
    return np.maximum(top, bottom), (right_wins, bottom_wins)


def _pool_select(a: np.ndarray, winners) -> np.ndarray:
    """Pool ``a`` using given winners instead of comparing values."""
    right_wins, bottom_wins = winners
    cols = np.where(right_wins, a[..., 1::2], a[..., 0::2])
    return np.where(bottom_wins, cols[..., 1::2, :], cols[..., 0::2, :])


def _maxpool_backward(dout: np.ndarray, winners, shape) -> np.ndarray:
    right_wins, bottom_wins = winners
    dcols = np.empty(right_wins.shape, dtype=dout.dtype)
    np.multiply(dout, ~bottom_wins, out=dcols[..., 0::2, :])
    np.multiply(dout, bottom_wins, out=dcols[..., 1::2, :])
    da = np.empty(shape, dtype=dout.dtype)
    np.multiply(dcols, ~right_wins, out=da[..., 0::2])
    np.multiply(dcols, right_wins, out=da[..., 1::2])
    return da


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def loss(logits: np.ndarray, labels) -> float:
    """Mean softmax cross-entropy."""
    labels = np.asarray(labels, dtype=np.int64)
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    return float(-logp[np.arange(len(labels)), labels].mean())


class CompactCnn:
    """The classifier's parameters plus forward/backward passes."""

    def __init__(self, params: dict[str, np.ndarray] | None = None, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        shapes = param_shapes()
        if params is None:
            params = {name: np.zeros(shape) for name, shape in shapes.items()}
        for name, shape in shapes.items():
            if name not in params or tuple(params[name].shape) != shape:
                raise ArchMismatch(f"parameter {name} missing or not shaped {shape}")
        self.params = {name: np.asarray(params[name], dtype=self.dtype) for name in PARAM_NAMES}

    @classmethod
    def initialize(cls, rng: np.random.Generator, dtype=np.float32) -> "CompactCnn":
        """Uniform +/- sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
        params = {}
        for name, shape in param_shapes().items():
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
                continue
            if len(shape) == 4:
                fan_in = shape[0] * shape[1] * shape[2]
                fan_out = shape[0] * shape[1] * shape[3]
            else:
                fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
        return cls(params, dtype)

    def astype(self, dtype) -> "CompactCnn":
        return CompactCnn({k: v.copy() for k, v in self.params.items()}, dtype)

    def copy(self) -> "CompactCnn":
        return self.astype(self.dtype)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in PARAM_NAMES])

    @classmethod
    def from_flat(cls, flat: np.ndarray, dtype=np.float32) -> "CompactCnn":
        flat = np.asarray(flat)
        if flat.size != N_PARAMS:
            raise ArchMismatch(f"expected {N_PARAMS} weights, got {flat.size}")
        params = {}
        pos = 0
        for name, shape in param_shapes().items():
            size = int(np.prod(shape))
            params[name] = flat[pos:pos + size].reshape(shape)
            pos += size
        return cls(params, dtype)

    def _prepare(self, batch) -> np.ndarray:
        x = np.asarray(batch)
        if x.ndim == 2:
            x = x[None]
        if x.ndim == 4 and x.shape[1] == 1:
            x = x[:, 0]
        if x.ndim != 3 or x.shape[0] == 0:
            raise ShapeMismatch(f"expected a non-empty (N, H, W) batch, got shape {np.shape(batch)}")
        if x.shape[1] % 8 or x.shape[2] % 8:
            raise ShapeMismatch(f"image sides must be multiples of 8, got {x.shape[1:]}")
        if x.dtype == np.uint8:
            x = x.astype(self.dtype) / self.dtype.type(255)
        return x.astype(self.dtype, copy=False)[None]

    def _forward_layers(self, x: np.ndarray, start: int = 1, keep: bool = False, frozen=None):
        """Run conv blocks ``start``..3 and the head on CNHW input ``x``.

        ``frozen`` maps block index -> (pool winners, ReLU mask) to evaluate
        the network on a fixed activation pattern instead of recomputing it.
        Returns logits, the backward cache (if ``keep``) and the pattern used.
        """
        cache = {}
        pattern = {}
        a = x
        for i in range(start, len(CONV_FILTERS) + 1):
            w = self.params[f"conv{i}.w"]
            b = self.params[f"conv{i}.b"]
            _, n, h, wd = a.shape
            cols = _im2col(a)
            z = (w.reshape(-1, w.shape[-1]).T @ cols).reshape(-1, n, h, wd)
            z += b[:, None, None, None]
            # ReLU commutes with max-pool, so pool first and rectify the smaller map
            if frozen is None:
                zp, arg = _maxpool(z)
                mask = zp > 0
            else:
                arg, mask = frozen[i]
                zp = _pool_select(z, arg)
            pattern[i] = (arg, mask)
            if keep:
                cache[i] = (a, cols, zp, arg)
            a = np.where(mask, zp, 0)
        feat = a.mean(axis=(2, 3)).T
        logits = feat @ self.params["fc.w"] + self.params["fc.b"]
        if keep:
            cache["head"] = (a, feat)
        return logits, cache, pattern

    def forward(self, batch) -> np.ndarray:
        return self._forward_layers(self._prepare(batch))[0]

    def loss_and_grads(self, batch, labels, skip_input_grad: bool = True):
        """Mean cross-entropy, gradients per parameter, and the logits."""
        x = self._prepare(batch)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (x.shape[1],):
            raise ShapeMismatch("one label per image required")
        logits, cache, _ = self._forward_layers(x, keep=True)
        n = x.shape[1]
        probs = softmax(logits)
        value = float(-log_softmax(logits.astype(np.float64))[np.arange(n), labels].mean())

        grads = {}
        dlogits = probs
        dlogits[np.arange(n), labels] -= 1
        dlogits /= n
        a_last, feat = cache["head"]
        grads["fc.w"] = feat.T @ dlogits
        grads["fc.b"] = dlogits.sum(axis=0)
        dfeat = dlogits @ self.params["fc.w"].T
        h, w = a_last.shape[2:]
        da = np.broadcast_to(dfeat.T[:, :, None, None] / (h * w), a_last.shape)

        for i in range(len(CONV_FILTERS), 0, -1):
            a_in, cols, zp, arg = cache[i]
            _, n_, h_, w_ = a_in.shape
            dzp = np.where(zp > 0, da, 0)
            dz = _maxpool_backward(dzp, arg, (zp.shape[0], n_, h_, w_)).reshape(zp.shape[0], -1)
            wmat = self.params[f"conv{i}.w"]
            grads[f"conv{i}.w"] = (cols @ dz.T).reshape(wmat.shape)
            grads[f"conv{i}.b"] = dz.sum(axis=1)
            if i > 1 or not skip_input_grad:
                dcols = wmat.reshape(-1, wmat.shape[-1]) @ dz
                da = _col2im(dcols, a_in.shape)
            del cache[i]
        return value, grads, logits

    def sgd_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        lr = self.dtype.type(lr)
        for name in PARAM_NAMES:
            self.params[name] -= lr * grads[name].astype(self.dtype, copy=False)


def forward(model: CompactCnn, batch) -> np.ndarray:
    return model.forward(batch)


def predict_proba_batch(model: CompactCnn, images, batch_size: int = 64) -> np.ndarray:
    """Probability of class 1 for each image."""
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    out = []
    for start in range(0, len(images), batch_size):
        out.append(softmax(model.forward(images[start:start + batch_size]).astype(np.float64))[:, 1])
    return np.concatenate(out)


# --- gradient verification -------------------------------------------------


def _param_location(flat_index: int) -> tuple[str, tuple[int, ...]]:
    pos = 0
    for name, shape in param_shapes().items():
        size = int(np.prod(shape))
        if flat_index < pos + size:
            return name, np.unravel_index(flat_index - pos, shape)
        pos += size
    raise IndexError(flat_index)


def _same_pattern(p, q) -> bool:
    def same(x, y):
        if isinstance(x, tuple):
            return all(same(u, v) for u, v in zip(x, y))
        return np.array_equal(x, y)

    return all(same(p[k], q[k]) for k in p)


def grad_check(
    model: CompactCnn,
    image,
    label: int,
    n_params: int = 200,
    step: float = 1e-4,
    seed: int = 0,
    gradient_fn=None,
    details: bool = False,
):
    """Max relative error between analytic and central-difference gradients.

    Runs in float64 on ``n_params`` randomly chosen parameters; the error for
    one parameter is ``|ga - gn| / max(|ga|, |gn|, 1e-8)``.

    ReLU and max-pool make the loss piecewise smooth. When a +/- ``step``
    perturbation changes the activation pattern, the plain difference
    straddles a kink and says nothing about the gradient, so that parameter's
    difference is recomputed with the pattern frozen at the unperturbed point
    (the function backprop differentiates). ``details=True`` also returns how
    many parameters needed that.

    ``gradient_fn(model, images, labels) -> (loss, grads, logits)`` replaces
    ``CompactCnn.loss_and_grads``; used to check the checker.
    """
    m = model.astype(np.float64)
    x = m._prepare(np.asarray(image, dtype=np.float64))
    labels = np.array([label])
    grad_fn = gradient_fn or CompactCnn.loss_and_grads
    _, grads, _ = grad_fn(m, x[0], labels)

    rng = np.random.default_rng(seed)
    picks = rng.choice(N_PARAMS, size=min(n_params, N_PARAMS), replace=False)

    # inputs to every block, so a perturbation only re-runs the layers after it
    _, cache, base_pattern = m._forward_layers(x, keep=True)
    block_inputs = {i: cache[i][0] for i in range(1, len(CONV_FILTERS) + 1)}
    head_input = cache["head"][0]
    del cache

    def loss_from(name: str, frozen: bool):
        if name.startswith("fc"):
            feat = head_input.mean(axis=(2, 3)).T
            logits = feat @ m.params["fc.w"] + m.params["fc.b"]
            return loss(logits, labels), None
        layer = int(name[4])
        fixed = {k: v for k, v in base_pattern.items() if k >= layer} if frozen else None
        logits, _, pattern = m._forward_layers(block_inputs[layer], start=layer, frozen=fixed)
        return loss(logits, labels), pattern

    def central_difference(name, idx, frozen):
        p = m.params[name]
        orig = p[idx]
        p[idx] = orig + step
        up, pat_up = loss_from(name, frozen)
        p[idx] = orig - step
        down, pat_down = loss_from(name, frozen)
        p[idx] = orig
        crossed = pat_up is not None and not (
            _same_pattern(pat_up, base_pattern) and _same_pattern(pat_down, base_pattern)
        )
        return (up - down) / (2 * step), crossed

    worst = 0.0
    n_kinks = 0
    for flat_index in picks:
        name, idx = _param_location(int(flat_index))
        numeric, crossed = central_difference(name, idx, frozen=False)
        if crossed:
            n_kinks += 1
            numeric, _ = central_difference(name, idx, frozen=True)
        analytic = float(grads[name][idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    if details:
        return worst, {"n_params": len(picks), "n_kink_crossings": n_kinks}
    return worst


# --- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.001
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class Checkpoint:
    weights: np.ndarray  # flat float32
    arch: dict = field(default_factory=lambda: dict(ARCH))
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32).ravel()
        if self.arch != ARCH:
            raise ArchMismatch(f"unsupported architecture {self.arch!r}")
        if self.weights.size != N_PARAMS:
            raise ArchMismatch(f"expected {N_PARAMS} weights, got {self.weights.size}")

    def model(self, dtype=np.float32) -> CompactCnn:
        return CompactCnn.from_flat(self.weights, dtype)

    @classmethod
    def from_model(cls, model: CompactCnn, metadata: dict | None = None) -> "Checkpoint":
        return cls(model.flat().astype(np.float32), dict(ARCH), dict(metadata or {}))


def _accuracy(model: CompactCnn, images, labels, batch_size: int) -> float:
    probs = predict_proba_batch(model, images, batch_size)
    return float(np.mean((probs > 0.5).astype(np.int64) == np.asarray(labels)))


def train(
    images,
    labels,
    cfg: TrainConfig = TrainConfig(),
    val_images=None,
    val_labels=None,
    metadata: dict | None = None,
    progress=None,
) -> Checkpoint:
    """Mini-batch SGD on softmax cross-entropy.

    Weight init and shuffling both come from ``np.random.default_rng(cfg.seed)``
    so the result is a deterministic function of the inputs and config.
    ``progress`` is called with a dict after every epoch.
    """
    images = np.asarray(images)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) != len(labels):
        raise ShapeMismatch("images and labels differ in length")
    if np.unique(labels).size < 2:
        raise DegenerateDataset("training needs both classes present")
    if not np.isin(labels, (0, 1)).all():
        raise DegenerateDataset("labels must be 0 or 1")

    rng = np.random.default_rng(cfg.seed)
    model = CompactCnn.initialize(rng)
    history = {"train_loss": [], "train_accuracy": [], "val_accuracy": []}
    n = len(images)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            value, grads, logits = model.loss_and_grads(images[idx], labels[idx])
            total_loss += value * len(idx)
            correct += int((np.argmax(logits, axis=1) == labels[idx]).sum())
            model.sgd_step(grads, cfg.learning_rate)
        history["train_loss"].append(total_loss / n)
        history["train_accuracy"].append(correct / n)
        if val_images is not None and len(val_images):
            history["val_accuracy"].append(_accuracy(model, val_images, val_labels, 64))
        log.info("epoch %d: %s", epoch + 1, {k: v[-1] for k, v in history.items() if v})
        if progress is not None:
            progress({"epoch": epoch + 1, **{k: v[-1] for k, v in history.items() if v}})

    meta = {"config": asdict(cfg), "history": history, "n_train": int(n)}
    meta.update(metadata or {})
    return Checkpoint.from_model(model, meta)


def predict_proba(ckpt: Checkpoint, image) -> float:
    """Probability of class 1 for a single image."""
    if not isinstance(ckpt, Checkpoint):
        raise ArchMismatch("expected a Checkpoint")
    model = ckpt.model()
    return float(softmax(model.forward(image).astype(np.float64))[0, 1])


# --- checkpoint files ----------------------------------------------------------
#
# layout: magic "EBMCKPT\0", u32 version, then three length-prefixed blocks
# (u32 little-endian byte count each): architecture JSON, float32 LE weights,
# metadata JSON.

MAGIC = b"EBMCKPT\0"
VERSION = 1


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for block in (_json_bytes(ckpt.arch), ckpt.weights.astype("<f4").tobytes(), _json_bytes(ckpt.metadata)):
        buf.write(struct.pack("<I", len(block)))
        buf.write(block)
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    blocks = []
    try:
        for _ in range(3):
            (size,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            blocks.append(raw[pos:pos + size])
            if len(blocks[-1]) != size:
                raise FormatError(f"{path}: truncated checkpoint")
            pos += size
        arch = json.loads(blocks[0])
        metadata = json.loads(blocks[2])
    except (struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint ({exc})") from None
    if len(blocks[1]) % 4:
        raise FormatError(f"{path}: weight block is not float32-aligned")
    weights = np.frombuffer(blocks[1], dtype="<f4").astype(np.float32)
    return Checkpoint(weights, arch, metadata)


def checkpoint_digest(ckpt: Checkpoint) -> str:
    return hashlib.sha256(checkpoint_bytes(ckpt)).hexdigest()
