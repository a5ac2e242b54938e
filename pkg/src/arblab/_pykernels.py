"""Pure numpy implementations of the hot kernels.

Same contract as the compiled ``_ckernels`` module; selected by
:mod:`arblab.kernels` when the extension is unavailable.
"""
import numpy as np

LOG_SPACE_RATIO = 1e12
DENOM_FLOOR = 1e-300


def loss_grad(Z, labels, counts=None):
    """Per-sample loss and d(loss)/d(logits) for count-weighted softmax.

    With ``counts=None`` this is plain cross-entropy.  Otherwise sample ``j``
    with label ``a`` uses denominator weights ``counts[k] / counts[a]``;
    classes with zero count drop out of the denominator.
    """
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b, c = Z.shape
    rows = np.arange(b)
    if counts is None:
        m = Z.max(axis=1, keepdims=True)
        E = np.exp(Z - m)
        S = np.maximum(E.sum(axis=1, keepdims=True), DENOM_FLOOR)
        G = E / S
        losses = np.log(S[:, 0]) - (Z[rows, labels] - m[:, 0])
        G[rows, labels] -= 1.0
        return losses, G

    counts = np.asarray(counts, dtype=np.float64)
    pos = counts > 0
    if not np.all(pos[labels]):
        raise ValueError("every sample's class must have a positive count")
    ratio = counts[pos].max() / counts[pos].min()
    if ratio > LOG_SPACE_RATIO:
        logn = np.full(c, -np.inf)
        logn[pos] = np.log(counts[pos])
        A = Z + logn[None, :] - logn[labels][:, None]
        m = A.max(axis=1, keepdims=True)
        E = np.exp(A - m)
        S = np.maximum(E.sum(axis=1, keepdims=True), DENOM_FLOOR)
        G = E / S
        losses = np.log(S[:, 0]) + m[:, 0] - Z[rows, labels]
    else:
        Wt = counts[None, :] / counts[labels][:, None]
        masked = np.where(pos[None, :], Z, -np.inf)
        m = masked.max(axis=1, keepdims=True)
        E = Wt * np.exp(np.where(pos[None, :], Z - m, 0.0))
        S = np.maximum(E.sum(axis=1, keepdims=True), DENOM_FLOOR)
        G = E / S
        losses = np.log(S[:, 0]) - (Z[rows, labels] - m[:, 0])
    G[rows, labels] -= 1.0
    return losses, G


def class_parts(G, H, labels, num_classes):
    """``parts[i, k] = sum over samples j of class k of G[j, i] * H[j]``."""
    G = np.asarray(G, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    c = int(num_classes)
    parts = np.zeros((c, c, H.shape[1]))
    for k in range(c):
        idx = labels == k
        if idx.any():
            parts[:, k, :] = G[idx].T @ H[idx]
    return parts
