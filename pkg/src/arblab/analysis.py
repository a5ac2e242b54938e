"""Per-epoch gradient component tracking and the count-ratio experiments
behind the attraction/repulsion balance claims."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import loss as L
from .collapse import CollapseMetrics, etf_frame
from .numkit import Rng

RATIO_TOL = 1e-12


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    overall_acc: float
    balanced_acc: float
    per_class_acc: np.ndarray
    metrics: CollapseMetrics
    g: np.ndarray
    minority_cos: float | None = None


class GradientNormTracker:
    """Accumulates ``||parts[tracked, k]||`` over the batches of one epoch."""

    def __init__(self, num_classes, tracked):
        self.tracked = int(tracked)
        self.total = np.zeros(num_classes)
        self.batches = 0

    def add(self, report: L.GradientReport):
        self.total += np.linalg.norm(report.parts[self.tracked], axis=1)
        self.batches += 1

    def value(self):
        if self.batches == 0:
            raise ValueError("no batches recorded")
        return self.total / self.batches


def epoch_gradient_norms(reports, tracked):
    """Mean per-batch norm of each gradient component of ``w_tracked``.

    Entry ``k != tracked`` is the repulsion from class ``k``; entry
    ``tracked`` is the attraction.
    """
    tracker = None
    for rep in reports:
        if tracker is None:
            tracker = GradientNormTracker(rep.num_classes, tracked)
        tracker.add(rep)
    if tracker is None:
        raise ValueError("need at least one batch")
    return tracker.value()


def imbalance_spread(g, tracked):
    """``max / min`` over the repulsion entries of a g vector."""
    rep = np.delete(np.asarray(g, dtype=np.float64), tracked)
    return float(rep.max() / rep.min()) if rep.min() > 0 else float("inf")


def smooth(series, window=11):
    """Centred moving average; windows shrink near the ends."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd number")
    x = np.asarray(series, dtype=np.float64)
    half = window // 2
    # direct window means: exact for window 1 and constant input, unlike a cumsum
    return np.array([x[max(i - half, 0):i + half + 1].mean() for i in range(x.size)])


def _slope(xs, ys):
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if xs.size < 2 or np.ptp(xs) == 0:
        return None
    return float(np.polyfit(xs, ys, 1)[0])


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Scenario:
    """A fixed-weight classification snapshot for measuring gradient ratios.

    Classifier rows are a unit simplex ETF; features of class ``y`` are
    ``feature_scale * w_y + noise * N(0, I)``, so every class has the same
    expected squared feature norm.  The defaults put samples in the
    well-separated regime (true-class logit margin about 9) that training
    drives towards.
    """

    ratios: tuple
    seeds: int = 50
    base_count: int = 10
    num_classes: int = 3
    dim: int = 8
    feature_scale: float = 6.0
    noise: float = 0.5
    seed: int = 0
    tracked: int = 0
    # count of the reference class (l for the repulsion check, i for the attraction check);
    # None means base_count, 0 makes it absent
    reference_count: int | None = None


@dataclass
class PropositionReport:
    proposition: int
    scenario: dict
    scenario_hash: str
    ratios: list
    seeds: list
    median: dict  # loss kind -> list of median ratios per r
    quartiles: dict
    slope: dict  # loss kind -> log-log slope vs r
    count_ratios: list
    E_H: list  # per-class mean squared feature norm, averaged over seeds
    flagged: list = field(default_factory=list)
    bound_constant: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _draw(scn: Scenario, counts, rng: Rng):
    W = etf_frame(scn.num_classes, scn.dim, rng.child(0)).W_star
    labels = np.repeat(np.arange(scn.num_classes), counts)
    H = scn.feature_scale * W[labels] + scn.noise * rng.child(1).normal((labels.size, scn.dim))
    return W, H, labels


def _reports(W, H, labels, counts):
    out = {}
    for kind in L.KINDS:
        out[kind] = L.classifier_gradient(kind, H, labels, W, L.ClassCounts(counts, "batch"))
    return out


def _mean_sq_norms(H, labels, c):
    sq = (H ** 2).sum(axis=1)
    cnt = np.bincount(labels, minlength=c)
    return np.divide(np.bincount(labels, weights=sq, minlength=c), cnt,
                     out=np.full(c, np.nan), where=cnt > 0)


def _run(scn: Scenario, counts_for, numerator, proposition):
    c = scn.num_classes
    ratios = [float(r) for r in scn.ratios]
    per = {kind: [] for kind in L.KINDS}
    quart = {kind: [] for kind in L.KINDS}
    count_ratios, flagged = [], []
    eh = np.zeros(c)
    eh_n = 0
    for ri, r in enumerate(ratios):
        counts = counts_for(r)
        num, den = numerator
        count_ratios.append(float(counts[num] / counts[den]) if counts[den] > 0 else None)
        vals = {kind: [] for kind in L.KINDS}
        for s in range(scn.seeds):
            rng = Rng(scn.seed).child(ri).child(s)
            W, H, labels = _draw(scn, counts, rng)
            eh_s = _mean_sq_norms(H, labels, c)
            if np.all(np.isfinite(eh_s)):
                eh += eh_s
                eh_n += 1
            for kind, rep in _reports(W, H, labels, counts).items():
                norms = rep.part_norms()[scn.tracked]
                if counts[den] == 0 or counts[num] == 0 or norms[den] <= RATIO_TOL:
                    flagged.append({"ratio": r, "seed": s, "loss": kind,
                                    "reason": "empty class or zero denominator"})
                    continue
                vals[kind].append(norms[num] / norms[den])
        for kind in L.KINDS:
            v = np.asarray(vals[kind])
            per[kind].append(float(np.median(v)) if v.size else None)
            quart[kind].append([float(q) for q in np.percentile(v, [25, 75])] if v.size else None)
    slope = {}
    for kind in L.KINDS:
        pts = [(np.log(r), np.log(m)) for r, m in zip(ratios, per[kind]) if m is not None and r > 0]
        slope[kind] = _slope(*zip(*pts)) if len(pts) >= 2 else None
    scn_dict = asdict(scn)
    scn_dict["ratios"] = ratios
    return PropositionReport(
        proposition=proposition,
        scenario=scn_dict,
        scenario_hash=_hash(scn_dict),
        ratios=ratios,
        seeds=list(range(scn.seeds)),
        median=per,
        quartiles=quart,
        slope=slope,
        count_ratios=count_ratios,
        E_H=(eh / eh_n).tolist() if eh_n else [],
        flagged=flagged,
    )


def check_proposition_1(scn: Scenario) -> PropositionReport:
    """Ratio of two repulsion components of ``w_i`` against ``r = n_k / n_l``.

    Tracked class ``i = 0``, ``k = 1`` has ``r * base_count`` samples,
    ``l = 2`` (and any further class) has ``reference_count``.  Cross-entropy
    ratios grow linearly with ``r`` (log-log slope near 1); ARB ratios stay
    flat (slope near 0).
    """
    if scn.num_classes < 3:
        raise ValueError("need at least three classes (i, k, l)")
    ref = scn.base_count if scn.reference_count is None else scn.reference_count

    def counts_for(r):
        n = np.full(scn.num_classes, scn.base_count)
        n[1] = max(1, int(round(r * scn.base_count)))
        n[2:] = ref
        return n

    rep = _run(scn, counts_for, (1, 2), 1)
    _bound_constants(rep)
    return rep


def check_proposition_2(scn: Scenario) -> PropositionReport:
    """Attraction of ``w_i`` over the repulsion from class ``k`` against ``r = n_i / n_k``.

    Class ``i = 0`` has ``reference_count`` samples (default ``base_count``);
    the other classes have ``n_i / r``.
    """
    ref = scn.base_count if scn.reference_count is None else scn.reference_count

    def counts_for(r):
        n = np.full(scn.num_classes, max(1, int(round(scn.base_count / r))))
        n[0] = ref
        return n

    rep = _run(scn, counts_for, (0, 1), 2)
    _bound_constants(rep)
    return rep


def _bound_constants(rep: PropositionReport):
    """Median ratio with the count and feature-norm factors divided out.

    For cross-entropy the count ratio is part of the bound, for ARB it is
    not; what remains is an empirical stand-in for the bound's constant.
    """
    eh = np.asarray(rep.E_H)
    num, den = (1, 2) if rep.proposition == 1 else (0, 1)
    feat = float(np.sqrt(eh[num] / eh[den])) if eh.size else 1.0
    out = {}
    for kind in L.KINDS:
        vals = []
        for m, cr in zip(rep.median[kind], rep.count_ratios):
            if m is None or cr is None:
                vals.append(None)
            else:
                vals.append(m / (cr * feat) if kind == L.CE else m / feat)
        out[kind] = vals
    rep.bound_constant = out


def proposition_snapshot(H, labels, W, counts, tracked):
    """Component norms of ``w_tracked`` on a given feature set, for both losses."""
    labels = np.asarray(labels, dtype=np.int64)
    c = W.shape[0]
    counts = np.asarray(counts, dtype=np.float64)
    out = {"tracked_class": int(tracked), "counts": counts.tolist(),
           "E_H": [None if not np.isfinite(v) else float(v) for v in _mean_sq_norms(H, labels, c)]}
    for kind in L.KINDS:
        rep = L.classifier_gradient(kind, H, labels, W, L.ClassCounts(counts, "global"))
        norms = rep.part_norms()[tracked]
        rep_norms = np.delete(norms, tracked)
        out[kind] = {
            "attraction_norm": float(norms[tracked]),
            "repulsion_norms": norms.tolist(),
            "repulsion_spread": float(rep_norms.max() / rep_norms.min()) if rep_norms.min() > RATIO_TOL else None,
            "attraction_over_max_repulsion": float(norms[tracked] / rep_norms.max()) if rep_norms.max() > RATIO_TOL else None,
        }
    return out
