"""Simplex ETF frames and classifier / class-mean geometry metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWeights, InvalidSpec
from .numkit import Rng, gaussian_matrix, qr_orthonormal

DEGENERATE_ROW_TOL = 1e-12


@dataclass(frozen=True)
class EtfFrame:
    W_star: np.ndarray  # (c, d), rows are the frame vectors

    @property
    def c(self):
        return self.W_star.shape[0]

    @property
    def d(self):
        return self.W_star.shape[1]


def etf_frame(c, d, rng: Rng) -> EtfFrame:
    """``sqrt(c/(c-1)) * P (I - 11^T/c)`` with a random partial orthogonal ``P``."""
    if c < 2:
        raise InvalidSpec("an ETF needs c >= 2")
    if d < c:
        raise InvalidSpec(f"need d >= c, got c={c}, d={d}")
    P = qr_orthonormal(gaussian_matrix(rng, d, c))
    M = np.sqrt(c / (c - 1)) * P @ (np.eye(c) - np.ones((c, c)) / c)
    return EtfFrame(M.T.copy())


@dataclass
class CollapseMetrics:
    """Balance metrics of ``c`` vectors.

    ``B_D2`` / ``B_A2`` are the variances of the off-diagonal dot products /
    cosines over all ``c(c-1)`` ordered pairs, ``B_L2`` the variance of the
    norms.  ``B_D2_printed`` / ``B_A2_printed`` use the ``1/(c-1)^2``
    normalisation of the published formula literally; they are not zero on
    an exact ETF and are kept for comparison only.
    """

    B_D2: float
    B_A2: float
    B_L2: float
    B_D2_printed: float
    B_A2_printed: float
    M: np.ndarray
    M_degenerate_rows: list
    min_pairwise_angle_deg: float
    mean_pairwise_cos: float
    norms: np.ndarray
    within_class_var: np.ndarray | None = field(default=None)

    def to_dict(self):
        out = {
            "B_D2": self.B_D2,
            "B_A2": self.B_A2,
            "B_L2": self.B_L2,
            "B_D2_printed": self.B_D2_printed,
            "B_A2_printed": self.B_A2_printed,
            "min_pairwise_angle_deg": self.min_pairwise_angle_deg,
            "mean_pairwise_cos": self.mean_pairwise_cos,
            "norms": self.norms.tolist(),
            "M": [[None if np.isnan(v) else float(v) for v in row] for row in self.M],
            "M_degenerate_rows": list(self.M_degenerate_rows),
        }
        if self.within_class_var is not None:
            out["within_class_var"] = self.within_class_var.tolist()
        return out


def _printed_variance(x, c):
    s = (c - 1) ** 2
    mean = x.sum() / s
    return float(((x - mean) ** 2).sum() / s)


def balance_metrics(W) -> CollapseMetrics:
    W = np.asarray(W, dtype=np.float64)
    c = W.shape[0]
    if c < 2:
        raise InvalidSpec("need at least two vectors")
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise DegenerateWeights(f"zero-norm vectors: {np.flatnonzero(norms == 0).tolist()}")
    D = W @ W.T
    C = D / np.outer(norms, norms)
    off = ~np.eye(c, dtype=bool)
    dots, coss = D[off], C[off]

    row_sums = np.where(off, D, 0.0).sum(axis=1)
    degenerate = np.abs(row_sums) < DEGENERATE_ROW_TOL
    M = np.zeros((c, c))
    safe = np.where(degenerate, 1.0, row_sums)
    M[off] = (D / safe[:, None])[off]
    M[degenerate] = np.nan
    np.fill_diagonal(M, 0.0)

    angles = np.degrees(np.arccos(np.clip(coss, -1.0, 1.0)))
    return CollapseMetrics(
        B_D2=float(dots.var()),
        B_A2=float(coss.var()),
        B_L2=float(norms.var()),
        B_D2_printed=_printed_variance(dots, c),
        B_A2_printed=_printed_variance(coss, c),
        M=M,
        M_degenerate_rows=np.flatnonzero(degenerate).tolist(),
        min_pairwise_angle_deg=float(angles.min()),
        mean_pairwise_cos=float(coss.mean()),
        norms=norms,
    )


def class_means(H, labels, num_classes):
    H = np.asarray(H, dtype=np.float64)
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        raise DegenerateWeights(f"empty classes: {np.flatnonzero(counts == 0).tolist()}")
    sums = np.zeros((num_classes, H.shape[1]))
    np.add.at(sums, labels, H)
    return sums / counts[:, None]


def class_mean_geometry(H, labels, num_classes=None, center="class") -> CollapseMetrics:
    """Balance metrics of the centred class means plus within-class variance.

    ``center`` picks the reference point subtracted from the class means:
    ``"class"`` (average of the class means, so an exact frame stays a frame
    whatever the class counts), ``"global"`` (sample mean of ``H``) or
    ``"none"``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    c = int(num_classes if num_classes is not None else labels.max() + 1)
    mu = class_means(H, labels, c)
    if center == "class":
        centred = mu - mu.mean(axis=0)
    elif center == "global":
        centred = mu - np.asarray(H, dtype=np.float64).mean(axis=0)
    elif center == "none":
        centred = mu
    else:
        raise InvalidSpec(f"center must be 'class', 'global' or 'none', got {center!r}")
    metrics = balance_metrics(centred)
    H = np.asarray(H, dtype=np.float64)
    sq = ((H - mu[labels]) ** 2).sum(axis=1)
    metrics.within_class_var = np.bincount(labels, weights=sq, minlength=c) / np.bincount(labels, minlength=c)
    return metrics


def minority_collapse_score(W, minority):
    """Largest cosine between any two minority-class weight vectors."""
    idx = list(minority)
    if len(idx) < 2:
        raise InvalidSpec("need at least two minority classes")
    V = np.asarray(W, dtype=np.float64)[idx]
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0):
        raise DegenerateWeights("zero-norm minority weight")
    C = (V @ V.T) / np.outer(norms, norms)
    return float(C[~np.eye(len(idx), dtype=bool)].max())


def nearest_class_mean_predict(H, means):
    H = np.asarray(H, dtype=np.float64)
    d2 = (H ** 2).sum(1)[:, None] - 2 * H @ means.T + (means ** 2).sum(1)[None, :]
    return d2.argmin(axis=1)
