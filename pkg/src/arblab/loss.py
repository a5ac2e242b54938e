"""Cross-entropy and attraction-repulsion-balanced (ARB) losses.

ARB replaces the softmax denominator ``sum_k exp(z_k)`` with
``sum_k (n_k / n_y) exp(z_k)`` where ``n`` are class counts and ``y`` is the
sample's true class.  Loss values are batch means; :class:`GradientReport`
holds batch *sums*, which is the form used for the attraction/repulsion
decomposition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError

CE = "ce"
ARB = "arb"
KINDS = (CE, ARB)


@dataclass(frozen=True)
class ClassCounts:
    """Per-class counts ``n_k`` fed to the ARB denominator.

    ``mode`` is ``"global"`` (whole training set; all counts must be
    positive) or ``"batch"`` (counted inside one mini-batch; absent classes
    have count 0 and vanish from the denominator).
    """

    counts: np.ndarray
    mode: str = "global"

    def __post_init__(self):
        arr = np.asarray(self.counts, dtype=np.float64)
        if arr.ndim != 1:
            raise DimensionError("counts must be a vector")
        if self.mode not in ("global", "batch"):
            raise ValueError(f"unknown counts mode {self.mode!r}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("counts must be finite and non-negative")
        if self.mode == "global" and np.any(arr <= 0):
            raise ValueError("global counts must all be positive")
        object.__setattr__(self, "counts", arr)

    @classmethod
    def from_labels(cls, labels, num_classes, mode="batch"):
        return cls(np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes), mode)


def _counts_array(counts):
    if counts is None:
        return None
    if isinstance(counts, ClassCounts):
        return counts.counts
    return np.asarray(counts, dtype=np.float64)


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"loss kind must be one of {KINDS}, got {kind!r}")


def _check_logits(Z, labels):
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if Z.ndim != 2 or labels.shape != (Z.shape[0],):
        raise DimensionError(f"logits {Z.shape} do not match labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= Z.shape[1]):
        raise ValueError("label out of range")
    return Z, labels


def softmax(z):
    """Row-wise softmax with max subtraction (1-D or 2-D input)."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def arb_softmax(z, counts, truth):
    """``exp(z_i) / sum_k (n_k / n_truth) exp(z_k)``.

    The result does not sum to one; ``sum_i (n_i / n_truth) p_i`` does.
    Classes with zero count are left out of the denominator.
    """
    z = np.asarray(z, dtype=np.float64)
    n = _counts_array(counts)
    if n[truth] <= 0:
        raise ValueError("truth class must have a positive count")
    pos = n > 0
    logw = np.full(n.shape, -np.inf)
    logw[pos] = np.log(n[pos]) - np.log(n[truth])
    m = np.max(z[pos])
    if n[pos].max() / n[pos].min() > kernels.LOG_SPACE_RATIO:
        a = z + logw
        ma = a[pos].max()
        log_denom = ma + np.log(np.exp(a[pos] - ma).sum())
        return np.exp(z - log_denom)
    w = np.where(pos, n / n[truth], 0.0)
    denom = np.maximum((w * np.exp(np.where(pos, z - m, 0.0))).sum(), kernels.DENOM_FLOOR)
    return np.exp(z - m) / denom


def sample_losses(kind, Z, labels, counts=None):
    """Per-sample losses and logit gradients, shape ``(b,)`` and ``(b, c)``."""
    _check_kind(kind)
    Z, labels = _check_logits(Z, labels)
    n = _counts_array(counts) if kind == ARB else None
    if kind == ARB and n is None:
        raise ValueError("ARB loss requires class counts")
    return kernels.loss_grad(Z, labels, n)


def ce_loss(logits, labels):
    losses, _ = sample_losses(CE, logits, labels)
    return float(losses.mean())


def arb_loss(logits, labels, counts):
    """Mean ARB loss.

    Can be negative: for a sample of the most frequent class every weight
    ``n_k / n_y`` is at most 1, so the denominator may drop below the
    numerator.
    """
    losses, _ = sample_losses(ARB, logits, labels, counts)
    return float(losses.mean())


def logit_gradient(kind, z, truth, counts=None):
    """d(loss)/d(z) for a single sample; components sum to zero."""
    _, g = sample_losses(kind, np.asarray(z, dtype=np.float64)[None, :], [truth], counts)
    return g[0]


@dataclass
class GradientReport:
    """Classifier-weight gradient of the batch-summed loss, split by source class.

    ``parts[i, k]`` is the contribution of class-``k`` samples to the gradient
    of ``w_i``: the diagonal is the attraction term, off-diagonal entries
    are the repulsion terms.  ``full`` is computed independently as
    ``G.T @ H`` so the split can be checked against it.
    """

    kind: str
    full: np.ndarray
    parts: np.ndarray
    counts: np.ndarray

    @property
    def num_classes(self):
        return self.full.shape[0]

    @property
    def attraction(self):
        return np.einsum("iid->id", self.parts)

    def repulsion(self, i, k):
        if i == k:
            raise ValueError("repulsion is only defined for k != i")
        return self.parts[i, k]

    def repulsion_total(self):
        return self.parts.sum(axis=1) - self.attraction

    def part_norms(self):
        """``(c, c)`` matrix of component norms; diagonal = attraction norms."""
        return np.linalg.norm(self.parts, axis=2)

    def normalized_parts(self):
        """Parts of row ``i`` divided by ``n_i`` (zero where ``n_i`` is zero)."""
        n = self.counts
        scale = np.divide(1.0, n, out=np.zeros_like(n), where=n > 0)
        return self.parts * scale[:, None, None]

    def reconstruction_residual(self):
        return float(np.abs(self.full - self.parts.sum(axis=1)).max())


def classifier_gradient(kind, H, labels, W, counts=None):
    """Gradient of the summed batch loss w.r.t. each classifier row ``w_i``.

    ``H`` is ``(b, d)`` features, ``W`` is ``(c, d)`` with rows ``w_i``.
    """
    H = np.asarray(H, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if H.ndim != 2 or W.ndim != 2 or H.shape[1] != W.shape[1]:
        raise DimensionError(f"features {H.shape} incompatible with weights {W.shape}")
    Z = H @ W.T
    _, G = sample_losses(kind, Z, labels, counts)
    return report_from_logit_grads(kind, G, H, labels, W.shape[0], counts)


def report_from_logit_grads(kind, G, H, labels, num_classes, counts=None):
    labels = np.asarray(labels, dtype=np.int64)
    n = _counts_array(counts) if kind == ARB else None
    if n is None:
        n = np.bincount(labels, minlength=num_classes).astype(np.float64)
    return GradientReport(
        kind=kind,
        full=G.T @ H,
        parts=kernels.class_parts(G, H, labels, num_classes),
        counts=n,
    )


def feature_gradient(kind, z, truth, counts, W):
    """d(loss)/d(h) for a single sample: ``sum_i g_i w_i``."""
    W = np.asarray(W, dtype=np.float64)
    g = logit_gradient(kind, z, truth, counts)
    if W.shape[0] != g.shape[0]:
        raise DimensionError("weights must have one row per class")
    return g @ W


def q_coefficients(G, target):
    """Magnitudes ``q_{j,target}`` of the logit gradients for class ``target``.

    Equals ``1 - p`` for samples of ``target`` and ``p`` (count-weighted for
    ARB) for the others.
    """
    return np.abs(np.asarray(G)[:, target])


def weighted_class_mean(H, labels, weights, cls):
    """``(1/n_cls) * sum over samples of class cls of weights_j * h_j``.

    Returns ``(mean, empty)``; an absent class gives a zero vector and
    ``empty=True``.
    """
    H = np.asarray(H, dtype=np.float64)
    labels = np.asarray(labels)
    weights = np.asarray(weights, dtype=np.float64)
    idx = labels == cls
    n = int(idx.sum())
    if n == 0:
        return np.zeros(H.shape[1]), True
    return weights[idx] @ H[idx] / n, False
