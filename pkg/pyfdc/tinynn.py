"""Dense networks in float64 numpy: forward and backward passes, loss, optimizer.

A `Matrix` is a 2-D float64 numpy array, rows being samples. Weights are
stored (in_dim, out_dim) so a layer computes `x @ W + b`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .exceptions import (
    CheckpointFormatError,
    NonFiniteError,
    PreconditionError,
    ShapeMismatchError,
    StaleCacheError,
)
from .misc import Activation, Mode

logger = logging.getLogger(__name__)

Matrix = np.ndarray

BCE_EPS = 1e-7
CHECKPOINT_MAGIC = b"PFDC"
CHECKPOINT_VERSION = 1

_ACT_CODES = {Activation.IDENTITY: 0, Activation.RELU: 1, Activation.SIGMOID: 2}


def as_matrix(x, what: str = "input") -> Matrix:
    """Validates `x` as a finite 2-D float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError(what, "(rows, cols)", x.shape)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(what)
    return x


@dataclass
class MlpParams:
    """Weights, biases and activations of a multi-layer perceptron.

    Attributes:
        weights: per layer, (in_dim, out_dim).
        biases: per layer, (out_dim,).
        activations: per layer.
        version: bumped on every optimizer update; forward caches record it.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[Activation, ...]
    version: int = 0

    def __post_init__(self):
        self.activations = tuple(Activation.get_from_str(a) for a in self.activations)
        if not (len(self.weights) == len(self.biases) == len(self.activations) > 0):
            raise ShapeMismatchError(
                "MlpParams", "one weight, bias and activation per layer",
                (len(self.weights), len(self.biases), len(self.activations)),
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatchError(f"MlpParams layer {i}", (w.shape[1],), b.shape)
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ShapeMismatchError(
                    f"MlpParams layer {i}", self.weights[i - 1].shape[1], w.shape[0]
                )

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.in_dim] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        """[W0, b0, W1, b1, ...], by reference."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> MlpParams:
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activations=self.activations,
            version=self.version,
        )

    def zeros_like(self) -> MlpParams:
        return MlpParams(
            weights=[np.zeros_like(w) for w in self.weights],
            biases=[np.zeros_like(b) for b in self.biases],
            activations=self.activations,
        )


def init_mlp(
    dims: Sequence[int],
    rng: np.random.Generator,
    hidden: Union[str, Activation] = Activation.RELU,
    final: Union[str, Activation] = Activation.RELU,
) -> MlpParams:
    """He-uniform initialized MLP with layer sizes `dims` (in, hidden..., out).

    Weights are U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero.
    """
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise PreconditionError("init_mlp", f"invalid layer sizes {list(dims)}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    acts = [Activation.get_from_str(hidden)] * (len(dims) - 2) + [Activation.get_from_str(final)]
    return MlpParams(weights=weights, biases=biases, activations=tuple(acts))


def _activate(z: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    if act is Activation.SIGMOID:
        return expit(z)
    return z


def _activation_grad(g: np.ndarray, z: np.ndarray, a: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        # subgradient 0 at the kink
        return g * (z > 0.0)
    if act is Activation.SIGMOID:
        return g * a * (1.0 - a)
    return g


@dataclass
class MlpCache:
    """What `mlp_backward` needs from one forward call."""

    params: MlpParams
    version: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    masks: list[Optional[np.ndarray]]
    output_shape: tuple[int, int]


def mlp_forward(
    p: MlpParams,
    x: Matrix,
    mode: Union[str, Mode] = Mode.INFER,
    dropout_prob: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Matrix, MlpCache]:
    """Evaluates the network on the rows of `x`.

    In train mode, inverted dropout (scaled by 1/(1-p)) follows every hidden
    activation; the output layer never gets dropout. Infer mode is
    deterministic.

    Returns:
        (output, cache)
    """
    mode = Mode.get_from_str(mode)
    x = as_matrix(x)
    if x.shape[1] != p.in_dim:
        raise ShapeMismatchError("mlp_forward", (x.shape[0], p.in_dim), x.shape)
    if not 0.0 <= dropout_prob < 1.0:
        raise PreconditionError("mlp_forward", f"dropout_prob={dropout_prob} not in [0, 1)")
    use_dropout = mode is Mode.TRAIN and dropout_prob > 0.0
    if use_dropout and rng is None:
        raise PreconditionError("mlp_forward", "train mode with dropout needs an rng")

    inputs, pre, post, masks = [], [], [], []
    a = x
    for i, (w, b, act) in enumerate(zip(p.weights, p.biases, p.activations)):
        inputs.append(a)
        z = a @ w + b
        a = _activate(z, act)
        pre.append(z)
        post.append(a)
        mask = None
        if use_dropout and i < p.depth - 1:
            mask = (rng.random(a.shape) >= dropout_prob) / (1.0 - dropout_prob)
            a = a * mask
        masks.append(mask)
    cache = MlpCache(
        params=p, version=p.version, inputs=inputs, pre=pre, post=post, masks=masks,
        output_shape=a.shape,
    )
    return a, cache


def mlp_backward(cache: MlpCache, grad_output: Matrix) -> tuple[MlpParams, Matrix]:
    """Backpropagates `grad_output` through the cached forward computation.

    Returns:
        (gradients laid out like the parameters, gradient w.r.t. the input)
    """
    p = cache.params
    if p.version != cache.version:
        raise StaleCacheError(
            f"parameters changed since the forward pass (v{cache.version} -> v{p.version})"
        )
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != cache.output_shape:
        raise StaleCacheError(f"grad_output shape {g.shape}, output shape {cache.output_shape}")
    grads = p.zeros_like()
    for i in reversed(range(p.depth)):
        if cache.masks[i] is not None:
            g = g * cache.masks[i]
        g = _activation_grad(g, cache.pre[i], cache.post[i], p.activations[i])
        grads.weights[i] = cache.inputs[i].T @ g
        grads.biases[i] = g.sum(axis=0)
        g = g @ p.weights[i].T
    return grads, g


def bce_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. `pred`.

    Predictions are clamped to [1e-7, 1 - 1e-7]; the gradient is taken at
    the clamped value.
    """
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if pred.shape != y.shape:
        raise ShapeMismatchError("bce_loss", pred.shape, y.shape)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise PreconditionError("bce_loss", "targets must be 0 or 1")
    n = pred.size
    if n == 0:
        return 0.0, np.zeros_like(pred)
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    loss = -np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p)) / n
    return float(loss), grad


@dataclass
class AdamState:
    """Moments of Adam for a list of parameter arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[MlpParams], **kwargs) -> AdamState:
        arrays = [a for p in params for a in p.arrays()]
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            **kwargs,
        )


def adam_step(
    s: AdamState, params: Sequence[MlpParams], grads: Sequence[MlpParams], lr: float
) -> tuple[Sequence[MlpParams], AdamState]:
    """One bias-corrected Adam update, applied in place.

    Raises:
        NonFiniteError: a gradient holds NaN or infinity; nothing is updated.
    """
    p_arrays = [a for p in params for a in p.arrays()]
    g_arrays = [a for g in grads for a in g.arrays()]
    if len(p_arrays) != len(g_arrays) or len(p_arrays) != len(s.m):
        raise ShapeMismatchError("adam_step", len(s.m), (len(p_arrays), len(g_arrays)))
    for a, g in zip(p_arrays, g_arrays):
        if a.shape != g.shape:
            raise ShapeMismatchError("adam_step", a.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("gradient")
    s.t += 1
    c1 = 1.0 - s.beta1**s.t
    c2 = 1.0 - s.beta2**s.t
    for a, g, m, v in zip(p_arrays, g_arrays, s.m, s.v):
        m *= s.beta1
        m += (1.0 - s.beta1) * g
        v *= s.beta2
        v += (1.0 - s.beta2) * g * g
        a -= lr * (m / c1) / (np.sqrt(v / c2) + s.eps)
    for p in params:
        p.version += 1
    return params, s


def sidecar_path(path: Union[Path, str]) -> Path:
    return Path(path).with_suffix(".json")


def save_checkpoint(path: Union[Path, str], mlps: Sequence[MlpParams], hyper: dict) -> None:
    """Writes MLPs as little-endian binary plus a JSON sidecar of `hyper`.

    Layout: magic, version (u4), MLP count (u4); per MLP its layer count (u4);
    per layer in_dim, out_dim, activation code (u4) then W and b row-major
    as float64.
    """
    path = Path(path)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(np.array([CHECKPOINT_VERSION, len(mlps)], dtype="<u4").tobytes())
        for p in mlps:
            f.write(np.array([p.depth], dtype="<u4").tobytes())
            for w, b, act in zip(p.weights, p.biases, p.activations):
                f.write(np.array([w.shape[0], w.shape[1], _ACT_CODES[act]], dtype="<u4").tobytes())
                f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(sidecar_path(path), "w") as f:
        json.dump(hyper, f, indent=2)
    logger.info("checkpoint written to %s", path)


class _Reader:
    def __init__(self, buf: bytes, path: Path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, dtype: str, count: int) -> np.ndarray:
        n = np.dtype(dtype).itemsize * count
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(self.path, "truncated file")
        out = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.pos)
        self.pos += n
        return out


def load_checkpoint(path: Union[Path, str]) -> tuple[list[MlpParams], dict]:
    """Reads what `save_checkpoint` wrote. Returns (mlps, hyperparameters)."""
    path = Path(path)
    try:
        buf = path.read_bytes()
        with open(sidecar_path(path), "r") as f:
            hyper = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(path, str(e)) from e
    if buf[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(path, "bad magic")
    rd = _Reader(buf, path)
    rd.pos = len(CHECKPOINT_MAGIC)
    version, n_mlps = (int(v) for v in rd.take("<u4", 2))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(path, f"unsupported version {version}")
    codes = {v: k for k, v in _ACT_CODES.items()}
    mlps = []
    for _ in range(n_mlps):
        depth = int(rd.take("<u4", 1)[0])
        weights, biases, acts = [], [], []
        for _ in range(depth):
            n_in, n_out, code = (int(v) for v in rd.take("<u4", 3))
            if code not in codes:
                raise CheckpointFormatError(path, f"unknown activation code {code}")
            weights.append(rd.take("<f8", n_in * n_out).reshape(n_in, n_out).astype(np.float64))
            biases.append(rd.take("<f8", n_out).astype(np.float64))
            acts.append(codes[code])
        try:
            mlps.append(MlpParams(weights=weights, biases=biases, activations=tuple(acts)))
        except ShapeMismatchError as e:
            raise CheckpointFormatError(path, e.msg) from e
    if rd.pos != len(buf):
        raise CheckpointFormatError(path, "trailing bytes")
    return mlps, hyper
