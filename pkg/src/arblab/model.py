"""MLP with hand-written backprop, SGD with momentum, LR schedules, checkpoints.

Weights follow the ``(out, in)`` convention so the classifier ``W_L`` is
``(c, d)`` with one row per class, and it carries no bias.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import loss as L
from .collapse import etf_frame
from .errors import DimensionError, InvalidSpec
from .numkit import Rng, matmul

ACTIVATIONS = ("relu", "sigmoid", "tanh")
CHECKPOINT_FORMAT = "arblab-checkpoint"
CHECKPOINT_VERSION = 1


def _act(kind, u):
    if kind == "relu":
        return np.maximum(u, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-u))
    if kind == "tanh":
        return np.tanh(u)
    raise ValueError(f"unknown activation {kind!r}")


def _act_grad(kind, u, a):
    if kind == "relu":
        return (u > 0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    return 1.0 - a * a


@dataclass
class Mlp:
    dims: list
    params: dict
    activation: str = "relu"

    @property
    def depth(self):
        return len(self.dims) - 1

    @property
    def classifier(self):
        return self.params[f"W{self.depth}"]

    @property
    def num_classes(self):
        return self.dims[-1]

    def param_names(self):
        names = []
        for l in range(1, self.depth):
            names += [f"W{l}", f"b{l}"]
        return names + [f"W{self.depth}"]


def init_mlp(dims, rng: Rng, activation="relu", classifier_init="gaussian"):
    """Fan-in scaled Gaussian init (std ``sqrt(2/fan_in)``), zero biases.

    ``classifier_init="etf"`` starts the classifier at a unit-norm simplex ETF.
    """
    dims = [int(x) for x in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise InvalidSpec(f"bad layer dims {dims}")
    if activation not in ACTIVATIONS:
        raise InvalidSpec(f"activation must be one of {ACTIVATIONS}")
    params = {}
    depth = len(dims) - 1
    for l in range(1, depth + 1):
        fan_in, fan_out = dims[l - 1], dims[l]
        sub = rng.child(l)
        if l == depth and classifier_init == "etf":
            params[f"W{l}"] = etf_frame(fan_out, fan_in, sub).W_star
        elif classifier_init not in ("gaussian", "etf"):
            raise InvalidSpec(f"unknown classifier init {classifier_init!r}")
        else:
            params[f"W{l}"] = sub.normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in)
        if l < depth:
            params[f"b{l}"] = np.zeros(fan_out)
    return Mlp(dims, params, activation)


def _forward_cache(mlp: Mlp, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != mlp.dims[0]:
        raise DimensionError(f"input shape {X.shape} does not match input dim {mlp.dims[0]}")
    acts, pre = [X], []
    a = X
    for l in range(1, mlp.depth):
        u = matmul(a, mlp.params[f"W{l}"].T) + mlp.params[f"b{l}"]
        a = _act(mlp.activation, u)
        pre.append(u)
        acts.append(a)
    Z = matmul(a, mlp.classifier.T)
    return acts, pre, Z


def forward(mlp: Mlp, X):
    """Return ``(H, Z)``: penultimate features and logits."""
    acts, _, Z = _forward_cache(mlp, X)
    return acts[-1], Z


@dataclass
class BackwardResult:
    loss: float
    grads: dict
    H: np.ndarray
    Z: np.ndarray
    G: np.ndarray  # per-sample d(loss_j)/d(z_j), not divided by batch size


def backward(mlp: Mlp, X, labels, kind, counts=None, labels_b=None, lam=1.0):
    """Mean batch loss and gradients of every parameter.

    With ``labels_b`` the loss is the mixup form
    ``lam * L(labels) + (1 - lam) * L(labels_b)``.  Weight decay is not
    included here; :func:`sgd_step` adds it.
    """
    acts, pre, Z = _forward_cache(mlp, X)
    H = acts[-1]
    b = Z.shape[0]
    losses, G = L.sample_losses(kind, Z, labels, counts)
    value = losses.mean()
    if labels_b is not None and lam != 1.0:
        losses_b, G_b = L.sample_losses(kind, Z, labels_b, counts)
        value = lam * value + (1.0 - lam) * losses_b.mean()
        G = lam * G + (1.0 - lam) * G_b
    dZ = G / b
    grads = {f"W{mlp.depth}": dZ.T @ H}
    dA = dZ @ mlp.classifier
    for l in range(mlp.depth - 1, 0, -1):
        dU = dA * _act_grad(mlp.activation, pre[l - 1], acts[l])
        grads[f"W{l}"] = dU.T @ acts[l - 1]
        grads[f"b{l}"] = dU.sum(axis=0)
        if l > 1:
            dA = dU @ mlp.params[f"W{l}"]
    return BackwardResult(float(value), grads, H, Z, G)


@dataclass
class SgdState:
    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict = field(default_factory=dict)


def sgd_step(state: SgdState, params: dict, grads: dict) -> dict:
    """Coupled weight decay then heavy-ball momentum.

    ``v <- momentum * v + grad + wd * param``; ``param <- param - lr * v``.
    """
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, param {p.shape}")
        v = state.velocity.get(name)
        step = g + state.weight_decay * p
        v = step if v is None else state.momentum * v + step
        state.velocity[name] = v
        out[name] = p - state.lr * v
    return out


@dataclass(frozen=True)
class Schedule:
    kind: str
    base_lr: float
    total_epochs: int
    milestones: tuple = ()
    factor: float = 0.1
    lr_end: float = 0.0


def lr_at(schedule: Schedule, epoch: int) -> float:
    if not 0 <= epoch < schedule.total_epochs:
        raise InvalidSpec(f"epoch {epoch} outside [0, {schedule.total_epochs})")
    if schedule.kind == "constant":
        return schedule.base_lr
    if schedule.kind == "step":
        passed = sum(1 for m in schedule.milestones if epoch >= m)
        return schedule.base_lr * schedule.factor ** passed
    if schedule.kind == "cosine":
        t = epoch / schedule.total_epochs
        return schedule.lr_end + 0.5 * (schedule.base_lr - schedule.lr_end) * (1 + math.cos(math.pi * t))
    raise InvalidSpec(f"unknown schedule {schedule.kind!r}")


def save_checkpoint(path, params: dict, meta: dict | None = None):
    """JSON checkpoint: named tensors with explicit shapes, floats in repr form."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {
            name: {"shape": list(np.shape(a)), "data": [float(x) for x in np.ravel(a)]}
            for name, a in params.items()
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InvalidSpec(f"{path} is not an arblab checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidSpec(f"unsupported checkpoint version {doc.get('version')}")
    params = {}
    for name, t in doc["params"].items():
        a = np.array(t["data"], dtype=np.float64)
        if a.size != int(np.prod(t["shape"])):
            raise InvalidSpec(f"tensor {name}: data does not match shape {t['shape']}")
        params[name] = a.reshape(t["shape"])
    return params, doc["meta"]


def mlp_from_checkpoint(path):
    params, meta = load_checkpoint(path)
    return Mlp(list(meta["dims"]), params, meta.get("activation", "relu"))
