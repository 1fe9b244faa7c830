"""Frame-wise feed-forward mapping from normal to whispered cepstra.

A plain numpy multilayer perceptron with ReLU hidden layers and a linear
output, trained with Adam on mean squared error in z-scored space plus an L2
penalty on the weight matrices.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .alignment import AlignedPairSet
from .spectral import AnalysisConfig, Cepstrogram

log = logging.getLogger(__name__)

DNN_MAGIC = b"DNNV"
DNN_VERSION = 1
STD_FLOOR = 1e-8


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class DnnHyperparams:
    hidden_sizes: tuple = (128, 64, 64, 128)
    learning_rate: float = 0.002
    batch_size: int = 2048
    l2_lambda: float = 1e-5
    epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate <= 0 or self.l2_lambda < 0:
            raise ValueError("invalid DNN hyperparameters")


@dataclass
class Network:
    weights: list
    biases: list

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            if keep:
                acts.append(h)
        return (h, acts) if keep else h


def init_network(sizes, rng: np.random.Generator) -> Network:
    """He-style uniform init scaled by fan-in; zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases)


@dataclass
class Gradients:
    weights: list
    biases: list
    loss: float
    mse: float


def loss_and_gradients(net: Network, x: np.ndarray, y: np.ndarray, l2_lambda: float) -> Gradients:
    """Loss = mean((f(x) - y)^2) + l2 * sum ||W||^2, with analytic gradients."""
    out, acts = net.forward(x, keep=True)
    err = out - y
    mse = float(np.mean(err**2))
    penalty = l2_lambda * sum(float(np.sum(w * w)) for w in net.weights)
    delta = 2.0 * err / err.size
    gw = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta + 2.0 * l2_lambda * net.weights[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0)
    return Gradients(gw, gb, mse + penalty, mse)


class Adam:
    def __init__(self, params, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """In-place update of ``params``."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class DnnModel:
    net: Network
    in_mean: np.ndarray
    in_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray
    config: AnalysisConfig = field(default_factory=AnalysisConfig)
    trained_on: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    def normalize_in(self, x):
        return (x - self.in_mean) / self.in_std

    def normalize_out(self, y):
        return (y - self.out_mean) / self.out_std

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(self.normalize_in(x)) * self.out_std + self.out_mean


def backprop_gradients(model: DnnModel, src: np.ndarray, tgt: np.ndarray, l2_lambda: float) -> Gradients:
    """Gradients of the training objective for a batch of raw (unnormalised) frames."""
    return loss_and_gradients(model.net, model.normalize_in(src), model.normalize_out(tgt), l2_lambda)


def _stats(x):
    return x.mean(axis=0), np.maximum(x.std(axis=0), STD_FLOOR)


def train_dnn(
    pairs: AlignedPairSet,
    hp: DnnHyperparams = DnnHyperparams(),
    val: AlignedPairSet | None = None,
    config: AnalysisConfig = AnalysisConfig(),
    trained_on: dict | None = None,
    dtype=np.float32,
) -> DnnModel:
    """Adam on shuffled mini-batches; keeps the epoch with lowest validation MSE.

    Arithmetic runs in ``dtype`` (float32 by default, matching the model file
    precision); the returned model holds float64 copies.
    """
    if len(pairs) == 0:
        raise ValueError("no training pairs")
    rng = np.random.default_rng(hp.seed)
    x, y = pairs.source, pairs.target
    in_mean, in_std = _stats(x)
    out_mean, out_std = _stats(y)
    sizes = [x.shape[1], *hp.hidden_sizes, y.shape[1]]
    model = DnnModel(init_network(sizes, rng), in_mean, in_std, out_mean, out_std, config, dict(trained_on or {}))
    xn, yn = model.normalize_in(x).astype(dtype), model.normalize_out(y).astype(dtype)
    has_val = val is not None and len(val) > 0
    if has_val:
        xv, yv = model.normalize_in(val.source).astype(dtype), model.normalize_out(val.target).astype(dtype)

    net = Network([w.astype(dtype) for w in model.net.weights], [b.astype(dtype) for b in model.net.biases])
    opt = Adam(net.params(), hp.learning_rate, hp.adam_beta1, hp.adam_beta2, hp.adam_eps)
    best, best_loss = net.copy(), np.inf
    history = []
    for epoch in range(hp.epochs):
        order = rng.permutation(len(xn))
        total = 0.0
        for start in range(0, len(order), hp.batch_size):
            idx = order[start : start + hp.batch_size]
            g = loss_and_gradients(net, xn[idx], yn[idx], hp.l2_lambda)
            if not np.isfinite(g.loss):
                raise DivergenceError(f"loss became non-finite at epoch {epoch}")
            opt.step(net.params(), g.weights + g.biases)
            total += g.mse * len(idx)
        train_mse = total / len(order)
        score = float(np.mean((net.forward(xv) - yv) ** 2)) if has_val else train_mse
        if not all(np.all(np.isfinite(p)) for p in net.params()):
            raise DivergenceError(f"parameters became non-finite at epoch {epoch}")
        history.append((train_mse, score))
        if has_val:
            if score < best_loss:
                best, best_loss = net.copy(), score
        log.debug("epoch %d train %.5f val %.5f", epoch, train_mse, score)
    final = best if has_val else net
    model.net = Network([w.astype(np.float64) for w in final.weights], [b.astype(np.float64) for b in final.biases])
    model.history = history
    return model


def convert_dnn(model: DnnModel, src: Cepstrogram) -> Cepstrogram:
    if src.frames.shape[1] != model.in_mean.size:
        raise ValueError(f"model expects {model.in_mean.size}-dim frames, got {src.frames.shape[1]}")
    return Cepstrogram(model.predict(src.frames), src.config)


def interim_trainer(pairs: AlignedPairSet, epochs: int = 5, seed: int = 0):
    """Cheap DNN used between alignment rounds; returns a converter."""
    model = train_dnn(pairs, DnnHyperparams(epochs=epochs, seed=seed))
    return lambda c: convert_dnn(model, c)


def save_dnn(model: DnnModel, path) -> None:
    meta = json.dumps({"config": asdict(model.config), "trained_on": model.trained_on}, sort_keys=True).encode()
    sizes = model.net.sizes
    with open(path, "wb") as fh:
        fh.write(DNN_MAGIC + struct.pack("<2I", DNN_VERSION, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for w, b in zip(model.net.weights, model.net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())
        for v in (model.in_mean, model.in_std, model.out_mean, model.out_std):
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def load_dnn(path) -> DnnModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != DNN_MAGIC:
        raise ValueError(f"{path}: not a DNN model file")
    version, n_layers = struct.unpack("<2I", raw[4:12])
    if version != DNN_VERSION:
        raise ValueError(f"{path}: unsupported DNN model version {version}")
    pos = 12
    sizes = struct.unpack(f"<{n_layers}I", raw[pos : pos + 4 * n_layers])
    pos += 4 * n_layers

    def take(count):
        nonlocal pos
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos += 4 * count
        return arr

    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(take(a * b).reshape(a, b))
        biases.append(take(b))
    in_mean, in_std = take(sizes[0]), take(sizes[0])
    out_mean, out_std = take(sizes[-1]), take(sizes[-1])
    (meta_len,) = struct.unpack("<I", raw[pos : pos + 4])
    meta = json.loads(raw[pos + 4 : pos + 4 + meta_len])
    return DnnModel(
        Network(weights, biases), in_mean, in_std, out_mean, out_std, AnalysisConfig(**meta["config"]), meta["trained_on"]
    )
