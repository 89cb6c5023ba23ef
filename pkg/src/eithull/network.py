"""Shallow convolutional regression from indicator matrices to support vectors.

Architecture: 30x50 padded input -> 6x4 conv (60 channels, rows zero-padded
by 3) -> leaky ReLU -> 6x4 conv (60 channels, same padding rule) -> leaky
ReLU -> fully connected -> tanh, giving 45 outputs in (-1, 1).  Activation
shapes are 31x47x60 and 32x44x60.  Training is plain SGD with classical
momentum and a step learning-rate decay.

torch supplies the tensor ops and reverse-mode gradients; weights live in
numpy arrays so that initialization, the update rule, and serialization
stay fully explicit and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as tf

INPUT_ROWS, INPUT_COLS = 30, 50
RAW_ROWS, RAW_COLS = 10, 45
OUTPUT_SIZE = 45
CHANNELS = 60
KERNEL = (6, 4)
ROW_PAD = 3
FLAT_FEATURES = 32 * 44 * CHANNELS


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class NetworkWeights:
    """All learnable tensors plus the (fixed) leaky-ReLU slope."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    leaky_slope: float = 0.01

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "conv1_w": self.conv1_w,
            "conv1_b": self.conv1_b,
            "conv2_w": self.conv2_w,
            "conv2_b": self.conv2_b,
            "fc_w": self.fc_w,
            "fc_b": self.fc_b,
        }

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(
            **{k: v.copy() for k, v in self.arrays().items()},
            leaky_slope=self.leaky_slope,
        )


WEIGHT_SHAPES = {
    "conv1_w": (CHANNELS, 1, *KERNEL),
    "conv1_b": (CHANNELS,),
    "conv2_w": (CHANNELS, CHANNELS, *KERNEL),
    "conv2_b": (CHANNELS,),
    "fc_w": (OUTPUT_SIZE, FLAT_FEATURES),
    "fc_b": (OUTPUT_SIZE,),
}


def init_weights(rng: np.random.Generator, leaky_slope: float = 0.01) -> NetworkWeights:
    """Glorot-style uniform init, U(+-sqrt(6/(fan_in+fan_out))), zero biases."""

    def glorot(shape, fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)

    kh, kw = KERNEL
    return NetworkWeights(
        conv1_w=glorot(WEIGHT_SHAPES["conv1_w"], 1 * kh * kw, CHANNELS * kh * kw),
        conv1_b=np.zeros(CHANNELS),
        conv2_w=glorot(WEIGHT_SHAPES["conv2_w"], CHANNELS * kh * kw, CHANNELS * kh * kw),
        conv2_b=np.zeros(CHANNELS),
        fc_w=glorot(WEIGHT_SHAPES["fc_w"], FLAT_FEATURES, OUTPUT_SIZE),
        fc_b=np.zeros(OUTPUT_SIZE),
        leaky_slope=leaky_slope,
    )


def _reflect_index(i: int, n: int) -> int:
    """Mirror an out-of-range row index into [0, n) without repeating the
    edge rows (reflection period 2n - 2)."""
    m = i % (2 * n - 2)
    return 2 * n - 2 - m if m > n - 1 else m


def pad_indicator(im: np.ndarray) -> np.ndarray:
    """Pad a 10x45 indicator matrix to the 30x50 network input.

    Rows are mirror-reflected (10 above, 10 below, edge rows not
    repeated); columns wrap periodically with 3 columns prepended from the
    right end and 2 appended from the left, matching the 2*pi periodicity
    of the direction axis.
    """
    im = np.asarray(im, dtype=float)
    if im.shape != (RAW_ROWS, RAW_COLS):
        raise ValueError(f"expected a {RAW_ROWS}x{RAW_COLS} indicator matrix, got {im.shape}")
    if not np.all(np.isfinite(im)):
        raise ValueError("indicator matrix contains non-finite entries")
    rows = [_reflect_index(r - RAW_ROWS, RAW_ROWS) for r in range(INPUT_ROWS)]
    cols = [(c - 3) % RAW_COLS for c in range(INPUT_COLS)]
    return im[np.ix_(rows, cols)]


def _weight_tensors(w: NetworkWeights, dtype, requires_grad=False) -> dict[str, torch.Tensor]:
    out = {}
    for name, arr in w.arrays().items():
        if arr.shape != WEIGHT_SHAPES[name]:
            raise ValueError(f"{name} has shape {arr.shape}, expected {WEIGHT_SHAPES[name]}")
        out[name] = torch.tensor(arr, dtype=dtype, requires_grad=requires_grad)
    return out


def _forward_tensors(t: dict[str, torch.Tensor], x: torch.Tensor, slope: float) -> torch.Tensor:
    """Batched forward pass, x shaped (batch, 30, 50)."""
    assert x.shape[1:] == (INPUT_ROWS, INPUT_COLS)
    a = x.unsqueeze(1)
    a = tf.leaky_relu(tf.conv2d(a, t["conv1_w"], t["conv1_b"], padding=(ROW_PAD, 0)), slope)
    assert a.shape[1:] == (CHANNELS, 31, 47)
    a = tf.leaky_relu(tf.conv2d(a, t["conv2_w"], t["conv2_b"], padding=(ROW_PAD, 0)), slope)
    assert a.shape[1:] == (CHANNELS, 32, 44)
    out = torch.tanh(tf.linear(a.flatten(1), t["fc_w"], t["fc_b"]))
    assert out.shape[1:] == (OUTPUT_SIZE,)
    return out


def forward(w: NetworkWeights, x: np.ndarray) -> np.ndarray:
    """Network output (45,) for a single 30x50 input."""
    x = np.asarray(x, dtype=float)
    if x.shape != (INPUT_ROWS, INPUT_COLS):
        raise ValueError(f"expected a {INPUT_ROWS}x{INPUT_COLS} input, got {x.shape}")
    t = _weight_tensors(w, torch.float64)
    with torch.no_grad():
        out = _forward_tensors(t, torch.tensor(x[None], dtype=torch.float64), w.leaky_slope)
    return out[0].numpy()


def loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Half mean squared error over the 45 outputs."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("prediction and target must have equal length")
    d = pred - target
    return float(d @ d) / (2 * pred.size)


def gradients(w: NetworkWeights, x: np.ndarray, target: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of loss(forward(w, x), target).

    Returns one array per weight tensor (keys as in NetworkWeights.arrays)
    plus the gradient with respect to the input under key "input", all in
    float64.
    """
    t = _weight_tensors(w, torch.float64, requires_grad=True)
    xt = torch.tensor(np.asarray(x, dtype=float)[None], dtype=torch.float64, requires_grad=True)
    tt = torch.tensor(np.asarray(target, dtype=float), dtype=torch.float64)
    out = _forward_tensors(t, xt, w.leaky_slope)[0]
    val = ((out - tt) ** 2).sum() / (2 * OUTPUT_SIZE)
    val.backward()
    grads = {name: tensor.grad.numpy().copy() for name, tensor in t.items()}
    grads["input"] = xt.grad[0].numpy().copy()
    return grads


@dataclass(frozen=True)
class TrainConfig:
    """Recipe for the SGD-with-momentum training loop."""

    epochs: int = 200
    learning_rate: float = 0.01
    momentum: float = 0.9
    decay_factor: float = 0.2
    decay_every: int = 5
    batch_size: int = 128
    seed: int = 0
    val_fraction: float = 0.2
    dtype: str = "float32"
    threads: int | None = None

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-indexed epoch."""
        return self.learning_rate * self.decay_factor ** (epoch // self.decay_every)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


def train(
    inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig | None = None
) -> tuple[NetworkWeights, list[EpochLog]]:
    """Train the network on (n, 30, 50) inputs and (n, 45) targets.

    The dataset is split 80/20 into train/validation once up front (after
    a seeded shuffle); minibatches are reshuffled every epoch with the
    same generator.  The update is classical momentum,
    v <- m*v - lr*g, w <- w + v, with the learning rate multiplied by
    decay_factor every decay_every epochs.  Weights from the final epoch
    are returned together with the per-epoch loss log.

    RNG draw order (fixes determinism): split permutation, weight init,
    then one shuffle per epoch.
    """
    cfg = cfg or TrainConfig()
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = len(inputs)
    if n == 0 or len(targets) != n:
        raise ValueError("dataset must be non-empty with matching inputs/targets")
    if cfg.threads:
        torch.set_num_threads(cfg.threads)
    dtype = {"float32": torch.float32, "float64": torch.float64}[cfg.dtype]

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(n * cfg.val_fraction)
    train_idx, val_idx = perm[: n - n_val], perm[n - n_val :]
    weights = init_weights(rng)

    x_all = torch.tensor(inputs, dtype=dtype)
    y_all = torch.tensor(targets, dtype=dtype)
    params = _weight_tensors(weights, dtype, requires_grad=True)
    velocity = {k: torch.zeros_like(v) for k, v in params.items()}

    log: list[EpochLog] = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = train_idx[rng.permutation(len(train_idx))]
        seen, loss_sum = 0, 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = x_all[batch], y_all[batch]
            out = _forward_tensors(params, xb, weights.leaky_slope)
            batch_loss = ((out - yb) ** 2).sum() / (2 * OUTPUT_SIZE * len(batch))
            value = float(batch_loss)
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, start // cfg.batch_size, value)
            batch_loss.backward()
            with torch.no_grad():
                for k, p in params.items():
                    velocity[k].mul_(cfg.momentum).add_(p.grad, alpha=-lr)
                    p.add_(velocity[k])
                    p.grad = None
            loss_sum += value * len(batch)
            seen += len(batch)
        val_loss = _mean_loss(params, x_all, y_all, val_idx, weights.leaky_slope)
        log.append(EpochLog(epoch, lr, loss_sum / seen, val_loss))

    final = NetworkWeights(
        **{k: p.detach().numpy().astype(np.float64) for k, p in params.items()},
        leaky_slope=weights.leaky_slope,
    )
    return final, log


def _mean_loss(params, x_all, y_all, idx, slope, chunk: int = 256) -> float:
    if len(idx) == 0:
        return float("nan")
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(idx), chunk):
            sel = idx[start : start + chunk]
            out = _forward_tensors(params, x_all[sel], slope)
            total += float(((out - y_all[sel]) ** 2).sum()) / (2 * OUTPUT_SIZE)
    return total / len(idx)


def predict_support(w: NetworkWeights, im: np.ndarray) -> np.ndarray:
    """Learned support vector for a raw 10x45 indicator matrix."""
    return forward(w, pad_indicator(im))
