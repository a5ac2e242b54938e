"""Training loops: the standard MLP trainer and the free-feature (layer-peeled) mode."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import loss as L
from .analysis import EpochLog, GradientNormTracker, proposition_snapshot
from .collapse import (balance_metrics, class_mean_geometry, class_means,
                       minority_collapse_score, nearest_class_mean_predict)
from .config import ExperimentConfig
from .data import (Dataset, LongTailSpec, apply_longtail, iterate_batches, load_csv,
                   load_idx, longtail_counts, mixup, split_per_class, synth_gaussian_mixture)
from .errors import DivergedError
from .model import Mlp, SgdState, Schedule, backward, forward, init_mlp, lr_at, sgd_step
from .numkit import Rng

log = logging.getLogger(__name__)

# child-stream tags of the experiment seed
_DATA, _MODEL, _EPOCH = 1, 2, 3


def schedule_from(cfg: ExperimentConfig) -> Schedule:
    o = cfg.optim
    return Schedule(o.schedule, o.lr, o.epochs, cfg.milestones(), o.factor, o.lr_end)


def build_datasets(cfg: ExperimentConfig):
    """``(train, test)``.  File sources without a test file evaluate on train."""
    d = cfg.data
    rng = Rng(cfg.seed).child(_DATA)
    if d.source == "synth":
        if d.counts is not None:
            pool = np.asarray(d.counts) + d.test_per_class
        else:
            pool = np.full(d.num_classes, d.base_count + d.test_per_class)
        ds = synth_gaussian_mixture(rng.child(0), d.num_classes, d.dim, pool, d.mean_scale)
        if d.test_per_class:
            train, test = split_per_class(ds, d.test_per_class, rng.child(1))
        else:
            train = test = ds
        if d.counts is None and d.imbalance_factor > 1:
            train = apply_longtail(train, LongTailSpec(d.imbalance_factor, d.base_count), rng.child(2))
        return train, test
    if d.source == "idx":
        train = load_idx(d.path, d.label_path, d.num_classes)
        test = load_idx(d.test_path, d.test_label_path, d.num_classes) if d.test_path else train
    else:
        train = load_csv(d.path, d.num_classes)
        test = load_csv(d.test_path, d.num_classes) if d.test_path else train
    return train, test


def tracked_class(cfg: ExperimentConfig, counts):
    t = cfg.tracking.tracked_class
    if t == "rarest":
        counts = np.asarray(counts)
        return int(np.flatnonzero(counts == counts.min())[-1])
    return int(t)


def minority_classes(cfg: ExperimentConfig, counts):
    """Explicit ids, or (auto) every class with at most a tenth of the largest count."""
    m = cfg.tracking.minority
    if m != "auto":
        return [int(s) for s in m.split(",") if s.strip()]
    counts = np.asarray(counts)
    return np.flatnonzero(counts * 10 <= counts.max()).tolist()


def accuracies(pred, labels, num_classes):
    labels = np.asarray(labels)
    correct = np.asarray(pred) == labels
    per = np.array([correct[labels == k].mean() if np.any(labels == k) else np.nan
                    for k in range(num_classes)])
    return float(correct.mean()), float(np.nanmean(per)), per


@dataclass
class TrainResult:
    model: Mlp | None
    logs: list
    train: Dataset | None = None
    test: Dataset | None = None
    tracked: int = 0
    minority: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    H: np.ndarray | None = None  # peeled mode only


def _finite(params):
    return all(np.all(np.isfinite(p)) for p in params.values())


def _minority_cos(W, minority):
    return minority_collapse_score(W, minority) if len(minority) >= 2 else None


def train(cfg: ExperimentConfig, data=None) -> TrainResult:
    """Mini-batch SGD on an MLP, logging accuracy, geometry and gradient norms per epoch.

    ``data`` may pass a prebuilt ``(train, test)`` pair.  Gradients of the
    batch-mean loss drive the updates.
    """
    train_ds, test_ds = data if data is not None else build_datasets(cfg)
    c = train_ds.num_classes
    rng = Rng(cfg.seed)
    dims = [train_ds.dim] + list(cfg.model.hidden) + [c]
    model = init_mlp(dims, rng.child(_MODEL), cfg.model.activation, cfg.model.classifier_init)
    sched = schedule_from(cfg)
    state = SgdState(cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay)
    kind = cfg.loss.kind
    global_counts = L.ClassCounts(train_ds.class_counts, "global")
    tracked = tracked_class(cfg, train_ds.class_counts)
    minority = minority_classes(cfg, train_ds.class_counts)
    logs = []

    for epoch in range(cfg.optim.epochs):
        state.lr = lr_at(sched, epoch)
        ep_rng = rng.child(_EPOCH).child(epoch)
        mix_rng = ep_rng.child(1)
        tracker = GradientNormTracker(c, tracked)
        loss_sum = 0.0
        for batch in iterate_batches(train_ds, cfg.optim.batch_size, True, ep_rng.child(0)):
            if cfg.loss.counts_mode == "batch":
                counts = L.ClassCounts(batch.batch_counts, "batch")
            else:
                counts = global_counts
            if cfg.data.mixup:
                mb = mixup(batch, cfg.data.mixup_alpha, mix_rng)
                res = backward(model, mb.features, mb.labels_a, kind, counts, mb.labels_b, mb.lam)
                H, _ = forward(model, batch.features)
                tracker.add(L.classifier_gradient(kind, H, batch.labels, model.classifier, counts))
            else:
                res = backward(model, batch.features, batch.labels, kind, counts)
                tracker.add(L.report_from_logit_grads(kind, res.G, res.H, batch.labels, c, counts))
            if not np.isfinite(res.loss):
                raise DivergedError(epoch, "non-finite loss")
            loss_sum += res.loss * batch.labels.size
            model.params = sgd_step(state, model.params, res.grads)
            if not _finite(model.params):
                raise DivergedError(epoch, "non-finite parameters")

        _, Z = forward(model, test_ds.features)
        overall, balanced, per = accuracies(Z.argmax(axis=1), test_ds.labels, c)
        W = model.classifier
        logs.append(EpochLog(epoch, state.lr, loss_sum / train_ds.n, overall, balanced, per,
                             balance_metrics(W), tracker.value(), _minority_cos(W, minority)))
        log.debug("epoch %d loss %.4f acc %.4f bal %.4f", epoch, logs[-1].train_loss, overall, balanced)

    res = TrainResult(model, logs, train_ds, test_ds, tracked, minority)
    res.final = final_metrics_standard(cfg, res)
    return res


def final_metrics_standard(cfg, res: TrainResult):
    model, tr, te = res.model, res.train, res.test
    c = tr.num_classes
    H_tr, _ = forward(model, tr.features)
    H_te, Z_te = forward(model, te.features)
    overall, balanced, per = accuracies(Z_te.argmax(axis=1), te.labels, c)
    ncm_pred = nearest_class_mean_predict(H_te, class_means(H_tr, tr.labels, c))
    ncm_overall, ncm_balanced, ncm_per = accuracies(ncm_pred, te.labels, c)
    out = {
        "mode": "standard",
        "loss": cfg.loss.kind,
        "epochs": len(res.logs),
        "train_counts": tr.class_counts.tolist(),
        "tracked_class": res.tracked,
        "overall_acc": overall,
        "balanced_acc": balanced,
        "per_class_acc": per.tolist(),
        "ncm_overall_acc": ncm_overall,
        "ncm_balanced_acc": ncm_balanced,
        "ncm_per_class_acc": ncm_per.tolist(),
        "classifier_metrics": balance_metrics(model.classifier).to_dict(),
        "feature_metrics": class_mean_geometry(H_tr, tr.labels, c).to_dict(),
        "minority_classes": res.minority,
        "minority_max_cos": _minority_cos(model.classifier, res.minority),
        "final_g": res.logs[-1].g.tolist() if res.logs else None,
        "gradient_snapshot": proposition_snapshot(H_tr, tr.labels, model.classifier,
                                                  tr.class_counts, res.tracked),
    }
    return out


def peeled_counts(cfg: ExperimentConfig):
    d = cfg.data
    if d.counts is not None:
        return np.asarray(d.counts, dtype=np.int64)
    return longtail_counts(d.num_classes, d.base_count, d.imbalance_factor)


def train_peeled(cfg: ExperimentConfig) -> TrainResult:
    """Full-batch training of free features ``H`` and classifier ``W``.

    One epoch is one full-batch step on the mean loss plus weight decay on
    both ``H`` and ``W``.  With ``per_sample_features`` each feature vector
    instead follows the gradient of its own sample's loss (a per-sample
    preconditioning of the same objective).
    """
    counts = peeled_counts(cfg)
    c, d = cfg.data.num_classes, cfg.data.dim
    labels = np.repeat(np.arange(c), counts)
    n = labels.size
    rng = Rng(cfg.seed)
    H = cfg.peeled.feature_init_scale * rng.child(_DATA).normal((n, d))
    W = rng.child(_MODEL).normal((c, d)) * np.sqrt(2.0 / d)
    params = {"W": W, "H": H}
    kind = cfg.loss.kind
    cc = L.ClassCounts(counts, "global")
    sched = schedule_from(cfg)
    state = SgdState(cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay)
    tracked = tracked_class(cfg, counts)
    minority = minority_classes(cfg, counts)
    bound = cfg.peeled.feature_norm_bound
    logs = []
    for epoch in range(cfg.optim.epochs):
        state.lr = lr_at(sched, epoch)
        W, H = params["W"], params["H"]
        losses, G = L.sample_losses(kind, H @ W.T, labels, cc)
        value = float(losses.mean())
        if not np.isfinite(value):
            raise DivergedError(epoch, "non-finite loss")
        tracker = GradientNormTracker(c, tracked)
        tracker.add(L.report_from_logit_grads(kind, G, H, labels, c, cc))
        gH = G @ W
        if not cfg.peeled.per_sample_features:
            gH = gH / n
        params = sgd_step(state, params, {"W": G.T @ H / n, "H": gH})
        if bound is not None:
            norms = np.linalg.norm(params["H"], axis=1, keepdims=True)
            params["H"] = params["H"] * np.minimum(1.0, np.sqrt(bound) / np.maximum(norms, 1e-300))
        if not _finite(params):
            raise DivergedError(epoch, "non-finite parameters")
        W, H = params["W"], params["H"]
        overall, balanced, per = accuracies((H @ W.T).argmax(axis=1), labels, c)
        logs.append(EpochLog(epoch, state.lr, value, overall, balanced, per,
                             balance_metrics(W), tracker.value(), _minority_cos(W, minority)))

    res = TrainResult(None, logs, tracked=tracked, minority=minority, H=params["H"])
    res.final = {
        "mode": "peeled",
        "loss": kind,
        "steps": len(logs),
        "train_counts": counts.tolist(),
        "tracked_class": tracked,
        "classifier_metrics": balance_metrics(params["W"]).to_dict(),
        "feature_metrics": class_mean_geometry(params["H"], labels, c).to_dict(),
        "minority_classes": minority,
        "minority_max_cos": _minority_cos(params["W"], minority),
        "overall_acc": logs[-1].overall_acc if logs else None,
        "balanced_acc": logs[-1].balanced_acc if logs else None,
        "final_g": logs[-1].g.tolist() if logs else None,
        "gradient_snapshot": proposition_snapshot(params["H"], labels, params["W"], counts, tracked),
    }
    res.params = params
    return res
