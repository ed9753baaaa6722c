"""Chebyshev graph-convolution model with hand-rolled reverse-mode gradients.

A layer computes Y = sum_k (T_k(L) X) theta_k + b over the K-term Chebyshev
basis of the scaled Laplacian. Hidden layers use SiLU, the output layer a
sigmoid into normalized pressure units. Training is plain mini-batch Adam
(L2 weight decay on the filter weights only) with early stopping on the
validation loss. Everything runs in float64 numpy; no autodiff framework.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .scenegen import SceneSet, scale_out
from .spectral import DimensionMismatch, ScaledLaplacian


class DivergedLoss(Exception):
    pass


@dataclass
class ChebLayer:
    order: int   # number of Chebyshev terms (T_0 .. T_{order-1})
    f_in: int
    f_out: int
    theta: np.ndarray = field(repr=False, default=None)  # (order, f_in, f_out)
    bias: np.ndarray = field(repr=False, default=None)   # (f_out,)

    def __post_init__(self):
        if self.theta is None:
            self.theta = np.zeros((self.order, self.f_in, self.f_out))
        if self.bias is None:
            self.bias = np.zeros(self.f_out)


def xavier_init(layer: ChebLayer, rng: np.random.Generator) -> ChebLayer:
    """Uniform Xavier weights with fan_in = order * f_in; zero biases."""
    bound = np.sqrt(6.0 / (layer.order * layer.f_in + layer.f_out))
    layer.theta = rng.uniform(-bound, bound, size=(layer.order, layer.f_in, layer.f_out))
    layer.bias = np.zeros(layer.f_out)
    return layer


def silu(x):
    return x * sigmoid(x)


def sigmoid(x):
    return expit(np.asarray(x, dtype=float))


def _silu_grad(x, s=None):
    s = sigmoid(x) if s is None else s
    return s * (1.0 + x * (1.0 - s))


def _sigmoid_grad(s):
    return s * (1.0 - s)


class ChebModel:
    """Stack of Chebyshev layers over a fixed scaled Laplacian.

    Input is (n, 2) per scene: standardized masked pressures and the mask.
    Output is (n, 1) in normalized pressure units, strictly inside (0, 1).
    """

    def __init__(self, layers: list[ChebLayer], laplacian: ScaledLaplacian):
        if layers[0].f_in != 2:
            raise DimensionMismatch("first layer must take 2 input channels")
        if layers[-1].f_out != 1:
            raise DimensionMismatch("last layer must emit 1 output channel")
        for a, b in zip(layers, layers[1:]):
            if a.f_out != b.f_in:
                raise DimensionMismatch(
                    f"channel chain broken: {a.f_out} -> {b.f_in}")
        self.layers = layers
        self.laplacian = laplacian

    @property
    def n_nodes(self) -> int:
        return self.laplacian.n_nodes

    def parameters(self):
        for layer in self.layers:
            yield layer.theta
            yield layer.bias

    def copy_parameters(self):
        return [p.copy() for p in self.parameters()]

    def set_parameters(self, params):
        for layer, theta, bias in zip(self.layers, params[0::2], params[1::2]):
            layer.theta = theta.copy()
            layer.bias = bias.copy()


def build_model(topology: list[tuple[int, int]], laplacian: ScaledLaplacian,
                seed: int = 0, output_order: int = 1) -> ChebModel:
    """Hidden layers from (order, channels) pairs plus a pointwise sigmoid readout."""
    rng = np.random.default_rng([seed, 3])
    layers = []
    f_in = 2
    for order, channels in topology:
        layers.append(xavier_init(ChebLayer(order, f_in, channels), rng))
        f_in = channels
    layers.append(xavier_init(ChebLayer(output_order, f_in, 1), rng))
    return ChebModel(layers, laplacian)


def _cheb_stream(op, x_flat: np.ndarray, order: int):
    """Yield T_0 x, T_1 x, ... with two ping-pong buffers (O(1) memory)."""
    yield x_flat
    if order == 1:
        return
    t_prev, t_cur = x_flat, op @ x_flat
    yield t_cur
    for _ in range(2, order):
        t_new = op @ t_cur
        t_new *= 2.0
        t_new -= t_prev
        yield t_new
        t_prev, t_cur = t_cur, t_new


def _layer_preact(lap: ScaledLaplacian, layer: ChebLayer, act: np.ndarray) -> np.ndarray:
    """z = sum_k (T_k(L) act) theta_k + bias for an (n, batch, f_in) signal."""
    n, batch, f_in = act.shape
    rows = n * batch
    z = np.zeros((rows, layer.f_out))
    flat = act.reshape(n, batch * f_in)
    for k, term in enumerate(_cheb_stream(lap.op, flat, layer.order)):
        z += term.reshape(rows, f_in) @ layer.theta[k]
    z += layer.bias
    return z.reshape(n, batch, layer.f_out)


def layer_forward(layer: ChebLayer, lap: ScaledLaplacian, x: np.ndarray) -> np.ndarray:
    """Pre-activation output of one layer for a single (n, f_in) signal."""
    if x.ndim != 2:
        raise DimensionMismatch("layer_forward expects an (n, f_in) signal")
    if x.shape[1] != layer.f_in:
        raise DimensionMismatch(f"signal has {x.shape[1]} channels, layer wants {layer.f_in}")
    return _layer_preact(lap, layer, np.ascontiguousarray(x[:, None, :]))[:, 0, :]


def model_forward(model: ChebModel, x: np.ndarray) -> np.ndarray:
    """Forward pass; accepts (n, 2) or (batch, n, 2)."""
    single = x.ndim == 2
    pred, _ = _forward_cached(model, x[None] if single else x)
    return pred[0] if single else pred


def _forward_cached(model: ChebModel, x: np.ndarray):
    """Batched forward keeping the (input, pre-activation) pair per layer.

    Activations travel as (n, batch, f). The Chebyshev basis is streamed
    rather than stored; backward recomputes it the same way.
    """
    if x.ndim != 3 or x.shape[1] != model.n_nodes:
        raise DimensionMismatch(
            f"expected (batch, {model.n_nodes}, f) input, got {x.shape}")
    act = np.ascontiguousarray(x.transpose(1, 0, 2))  # (n, batch, f)
    caches = []
    last = len(model.layers) - 1
    for idx, layer in enumerate(model.layers):
        if act.shape[2] != layer.f_in:
            raise DimensionMismatch(
                f"layer {idx}: {act.shape[2]} channels, wants {layer.f_in}")
        z = _layer_preact(model.laplacian, layer, act)
        caches.append((act, z))
        act = sigmoid(z) if idx == last else z * sigmoid(z)
    return np.ascontiguousarray(act.transpose(1, 0, 2)), caches


def mse_all_nodes(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over every node, observed or not (and the batch)."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def backward(model: ChebModel, caches, delta_out: np.ndarray):
    """Gradients of every theta/bias given d(loss)/d(output), shape (n, batch, 1).

    Uses the symmetry of the Laplacian: the adjoint of applying T_k is
    applying T_k again, so the input gradient streams a second Chebyshev
    recursion on delta and accumulates (T_k(L) delta) theta_k^T.
    """
    op = model.laplacian.op
    grads: list[np.ndarray] = []
    delta = delta_out  # (n, batch, f_out of the current layer)
    last = len(model.layers) - 1
    for idx in range(last, -1, -1):
        layer = model.layers[idx]
        act, z = caches[idx]
        if idx == last:
            delta_z = delta * _sigmoid_grad(sigmoid(z))
        else:
            delta_z = delta * _silu_grad(z)
        n, batch, f_in = act.shape
        rows = n * batch
        delta_flat = delta_z.reshape(rows, layer.f_out)
        d_theta = np.empty((layer.order, f_in, layer.f_out))
        in_flat = act.reshape(n, batch * f_in)
        for k, term in enumerate(_cheb_stream(op, in_flat, layer.order)):
            d_theta[k] = term.reshape(rows, f_in).T @ delta_flat
        d_bias = delta_flat.sum(axis=0)
        grads.append(d_bias)
        grads.append(d_theta)
        if idx > 0:
            # sum_k T_k(L) (delta theta_k^T) = sum_k (T_k(L) delta) theta_k^T
            # because T_k acts on nodes and theta on channels
            dz_nodes = delta_z.reshape(n, batch * layer.f_out)
            acc = np.zeros((rows, f_in))
            for k, term in enumerate(_cheb_stream(op, dz_nodes, layer.order)):
                acc += term.reshape(rows, layer.f_out) @ layer.theta[k].T
            delta = acc.reshape(n, batch, f_in)
    grads.reverse()
    return grads


def loss_and_grads(model: ChebModel, x: np.ndarray, target: np.ndarray,
                   loss_nodes: int | None = None):
    """MSE loss over the first `loss_nodes` rows (default: all) and its gradients."""
    pred, caches = _forward_cached(model, x)
    n_loss = loss_nodes if loss_nodes is not None else pred.shape[1]
    diff = pred[:, :n_loss, 0] - target
    loss = float(np.mean(diff * diff))
    delta = np.zeros((model.n_nodes, x.shape[0], 1))
    delta[:n_loss, :, 0] = (2.0 / diff.size) * diff.T
    return loss, backward(model, caches, delta)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 2000
    patience: int = 50
    min_delta: float = 1e-6
    weight_decay: float = 1e-6
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.patience < self.max_epochs:
            raise ValueError("need 1 <= patience < max_epochs")
        if self.batch_size < 1 or self.eps <= 0 or not 0 <= self.beta1 < 1 \
                or not 0 <= self.beta2 < 1:
            raise ValueError("bad optimizer settings")
        if self.lr < 0 or self.weight_decay < 0 or self.min_delta < 0:
            raise ValueError("lr, weight_decay and min_delta must be non-negative")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, cfg: TrainConfig,
              decay_flags=None) -> None:
    """In-place Adam update; weight decay added to the gradient of flagged params."""
    state.step += 1
    t = state.step
    correct1 = 1.0 - cfg.beta1 ** t
    correct2 = 1.0 - cfg.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if decay_flags is not None and decay_flags[i] and cfg.weight_decay:
            g = g + cfg.weight_decay * p
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[i] / correct1
        v_hat = state.v[i] / correct2
        p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass
class TrainResult:
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int      # 1-based epoch whose parameters the model carries
    best_val: float
    epochs_run: int

    def history_rows(self):
        for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            yield e, tr, va


def train(model: ChebModel, sceneset: SceneSet, mask, cfg: TrainConfig) -> TrainResult:
    """Mini-batch Adam with early stopping on the validation loss.

    The sensor mask is fixed for the whole run. The loss covers every
    junction, observed or not. Parameters from the best-validation epoch
    are restored into the model before returning.
    """
    from .evaluation import assemble_input  # local import: module cycle

    inputs = assemble_input(sceneset.pressures, mask, sceneset.scaler, model.n_nodes)
    targets = scale_out(sceneset.pressures, sceneset.scaler)
    n_junc = sceneset.pressures.shape[1]
    train_idx = sceneset.splits["train"]
    val_idx = sceneset.splits["val"]

    params = list(model.parameters())
    decay_flags = [p.ndim == 3 for p in params]  # decay thetas, not biases
    state = AdamState.for_params(params)
    rng = np.random.default_rng([cfg.seed, 4])

    def dataset_loss(idx) -> float:
        pred, _ = _forward_cached(model, inputs[idx])
        diff = pred[:, :n_junc, 0] - targets[idx]
        return float(np.mean(diff * diff))

    history_train, history_val = [], []
    best_val = np.inf
    best_params = model.copy_parameters()
    best_epoch = 0
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model, inputs[batch], targets[batch],
                                         loss_nodes=n_junc)
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}")
            adam_step(params, grads, state, cfg, decay_flags)
        tr = dataset_loss(train_idx)
        va = dataset_loss(val_idx)
        if not (np.isfinite(tr) and np.isfinite(va)):
            raise DivergedLoss(f"non-finite epoch loss at epoch {epoch}")
        history_train.append(tr)
        history_val.append(va)
        if best_val - va > cfg.min_delta:
            best_val = va
            best_params = model.copy_parameters()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.set_parameters(best_params)
    return TrainResult(train_loss=history_train, val_loss=history_val,
                       best_epoch=best_epoch, best_val=float(best_val),
                       epochs_run=len(history_train))


MAGIC = b"WGCN"


def save_checkpoint(path, model: ChebModel, header: dict) -> None:
    """Single-file checkpoint: JSON header + little-endian float64 blob."""
    head = dict(header)
    head["layers"] = [[l.order, l.f_in, l.f_out] for l in model.layers]
    head_bytes = json.dumps(head, sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes()
                    for p in model.parameters())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head_bytes)))
        fh.write(head_bytes)
        fh.write(blob)


def load_checkpoint(path, laplacian: ScaledLaplacian):
    """Bit-exact reload; returns (model, header)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    head_len = struct.unpack("<Q", raw[4:12])[0]
    header = json.loads(raw[12:12 + head_len].decode())
    layers = [ChebLayer(order, f_in, f_out)
              for order, f_in, f_out in header["layers"]]
    offset = 12 + head_len
    for layer in layers:
        for shape in ((layer.order, layer.f_in, layer.f_out), (layer.f_out,)):
            count = int(np.prod(shape))
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            offset += count * 8
            if shape == (layer.f_out,):
                layer.bias = arr.copy()
            else:
                layer.theta = arr.reshape(shape).copy()
    return ChebModel(layers, laplacian), header
