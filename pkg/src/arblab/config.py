"""Experiment configuration: INI (or JSON) sections mapped onto dataclasses.

Every key is validated before any computation; unknown sections or keys
are rejected with a :class:`ConfigError` naming ``section.key``.
"""
from __future__ import annotations

import configparser
import io
import json
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class ExperimentSection:
    seed: int = 0
    mode: str = "standard"  # standard | peeled


@dataclass(frozen=True)
class DataSection:
    source: str = "synth"  # synth | idx | csv
    num_classes: int = 10
    dim: int = 32
    counts: typing.Optional[typing.List[int]] = None
    base_count: int = 500
    imbalance_factor: float = 1.0
    mean_scale: float = 3.0
    test_per_class: int = 200
    path: str = ""
    label_path: str = ""
    test_path: str = ""
    test_label_path: str = ""
    mixup: bool = False
    mixup_alpha: float = 1.0


@dataclass(frozen=True)
class ModelSection:
    hidden: typing.List[int] = field(default_factory=lambda: [64])
    activation: str = "relu"
    classifier_init: str = "gaussian"  # gaussian | etf


@dataclass(frozen=True)
class LossSection:
    kind: str = "arb"  # ce | arb
    counts_mode: str = "batch"  # batch | global


@dataclass(frozen=True)
class OptimSection:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "step"  # step | cosine | constant
    milestones: typing.Optional[typing.List[int]] = None  # default: 80% and 90% of epochs
    factor: float = 0.1
    lr_end: float = 0.0
    epochs: int = 200
    batch_size: int = 128


@dataclass(frozen=True)
class PeeledSection:
    feature_init_scale: float = 1.0
    feature_norm_bound: typing.Optional[float] = None  # E_H; projection off when unset
    per_sample_features: bool = False


@dataclass(frozen=True)
class TrackingSection:
    tracked_class: str = "rarest"  # "rarest" or a class id
    minority: str = "auto"  # "auto" or comma-separated ids
    smooth_window: int = 11


@dataclass(frozen=True)
class OutputSection:
    directory: str = "runs/out"


@dataclass(frozen=True)
class PropositionsSection:
    ratios_1: typing.List[float] = field(default_factory=lambda: [1.0, 3.0, 10.0, 30.0])
    ratios_2: typing.List[float] = field(default_factory=lambda: [1.0, 1 / 3, 0.1, 1 / 30, 0.01])
    seeds: int = 50
    base_count: int = 10
    num_classes: int = 3
    dim: int = 8
    feature_scale: float = 6.0
    noise: float = 0.5


SECTIONS = {
    "experiment": ExperimentSection,
    "data": DataSection,
    "model": ModelSection,
    "loss": LossSection,
    "optim": OptimSection,
    "peeled": PeeledSection,
    "tracking": TrackingSection,
    "output": OutputSection,
    "propositions": PropositionsSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = ExperimentSection()
    data: DataSection = DataSection()
    model: ModelSection = ModelSection()
    loss: LossSection = LossSection()
    optim: OptimSection = OptimSection()
    peeled: PeeledSection = PeeledSection()
    tracking: TrackingSection = TrackingSection()
    output: OutputSection = OutputSection()
    propositions: PropositionsSection = PropositionsSection()

    @property
    def seed(self):
        return self.experiment.seed

    def with_values(self, **sections):
        """Copy with some fields replaced: ``cfg.with_values(loss={"kind": "ce"})``."""
        updates = {name: replace(getattr(self, name), **vals) for name, vals in sections.items()}
        return validate(replace(self, **updates))

    def milestones(self):
        o = self.optim
        if o.milestones is not None:
            return tuple(o.milestones)
        return (round(0.8 * o.epochs), round(0.9 * o.epochs))


def _convert(where, tp, value):
    origin = typing.get_origin(tp)
    if origin is typing.Union:  # Optional[X]
        inner = [a for a in typing.get_args(tp) if a is not type(None)][0]
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
            return None
        return _convert(where, inner, value)
    if origin in (list, typing.List):
        (inner,) = typing.get_args(tp)
        if isinstance(value, str):
            text = value.strip()
            if text.startswith("[") and text.endswith("]"):
                text = text[1:-1]
            items = [v for v in (s.strip() for s in text.split(",")) if v]
        elif isinstance(value, (list, tuple)):
            items = list(value)
        else:
            raise ConfigError(where, f"expected a list, got {value!r}")
        return [_convert(where, inner, v) for v in items]
    try:
        if tp is bool:
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if tp is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(str(value).strip()) if isinstance(value, str) else int(value)
        if tp is float:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if tp is str:
            return str(value)
    except ValueError:
        raise ConfigError(where, f"cannot parse {value!r} as {tp.__name__}") from None
    raise ConfigError(where, f"unsupported type {tp}")


def _build(raw: dict) -> ExperimentConfig:
    sections = {}
    for name, body in raw.items():
        if name not in SECTIONS:
            raise ConfigError(name, "unknown section")
        if not isinstance(body, dict):
            raise ConfigError(name, "section must be a mapping")
        cls = SECTIONS[name]
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        vals = {}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"{name}.{key}", "unknown key")
            vals[key] = _convert(f"{name}.{key}", hints[key], value)
        sections[name] = cls(**vals)
    return validate(ExperimentConfig(**sections))


def _require(cond, where, msg):
    if not cond:
        raise ConfigError(where, msg)


def _choice(where, value, options):
    _require(value in options, where, f"must be one of {options}, got {value!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    e, d, m, lo, o, p, t, pr = (cfg.experiment, cfg.data, cfg.model, cfg.loss, cfg.optim,
                                cfg.peeled, cfg.tracking, cfg.propositions)
    _choice("experiment.mode", e.mode, ("standard", "peeled"))
    _require(e.seed >= 0, "experiment.seed", "must be non-negative")
    _choice("data.source", d.source, ("synth", "idx", "csv"))
    _require(d.num_classes >= 2, "data.num_classes", "must be >= 2")
    _require(d.dim >= 1, "data.dim", "must be >= 1")
    if d.counts is not None:
        _require(len(d.counts) == d.num_classes, "data.counts", "need one count per class")
        _require(all(n >= 1 for n in d.counts), "data.counts", "counts must be >= 1")
    _require(d.base_count >= 1, "data.base_count", "must be >= 1")
    _require(d.imbalance_factor >= 1, "data.imbalance_factor", "must be >= 1")
    _require(d.mean_scale >= 0, "data.mean_scale", "must be >= 0")
    _require(d.test_per_class >= 0, "data.test_per_class", "must be >= 0")
    _require(d.mixup_alpha > 0, "data.mixup_alpha", "must be > 0")
    if d.source == "idx":
        _require(bool(d.path) and bool(d.label_path), "data.path", "idx source needs path and label_path")
    if d.source == "csv":
        _require(bool(d.path), "data.path", "csv source needs path")
    _require(all(h >= 1 for h in m.hidden), "model.hidden", "widths must be >= 1")
    _choice("model.activation", m.activation, ("relu", "sigmoid", "tanh"))
    _choice("model.classifier_init", m.classifier_init, ("gaussian", "etf"))
    _choice("loss.kind", lo.kind, ("ce", "arb"))
    _choice("loss.counts_mode", lo.counts_mode, ("batch", "global"))
    _require(o.lr > 0, "optim.lr", "must be > 0")
    _require(0 <= o.momentum < 1, "optim.momentum", "must be in [0, 1)")
    _require(o.weight_decay >= 0, "optim.weight_decay", "must be >= 0")
    _choice("optim.schedule", o.schedule, ("step", "cosine", "constant"))
    _require(0 < o.factor <= 1, "optim.factor", "must be in (0, 1]")
    _require(0 <= o.lr_end <= o.lr, "optim.lr_end", "must be in [0, lr]")
    _require(o.epochs >= 0, "optim.epochs", "must be >= 0")
    _require(o.batch_size >= 1, "optim.batch_size", "must be >= 1")
    _require(p.feature_init_scale > 0, "peeled.feature_init_scale", "must be > 0")
    if p.feature_norm_bound is not None:
        _require(p.feature_norm_bound > 0, "peeled.feature_norm_bound", "must be > 0")
    if t.tracked_class != "rarest":
        _require(t.tracked_class.isdigit() and int(t.tracked_class) < d.num_classes,
                 "tracking.tracked_class", "must be 'rarest' or a valid class id")
    if t.minority != "auto":
        ids = [s.strip() for s in t.minority.split(",") if s.strip()]
        _require(all(s.isdigit() and int(s) < d.num_classes for s in ids),
                 "tracking.minority", "must be 'auto' or comma-separated class ids")
    _require(t.smooth_window >= 1 and t.smooth_window % 2 == 1, "tracking.smooth_window", "must be odd and >= 1")
    _require(all(r > 0 for r in pr.ratios_1), "propositions.ratios_1", "ratios must be > 0")
    _require(all(r > 0 for r in pr.ratios_2), "propositions.ratios_2", "ratios must be > 0")
    _require(pr.seeds >= 1, "propositions.seeds", "must be >= 1")
    _require(pr.base_count >= 1, "propositions.base_count", "must be >= 1")
    _require(pr.num_classes >= 3, "propositions.num_classes", "must be >= 3")
    _require(pr.dim >= pr.num_classes, "propositions.dim", "must be >= num_classes")
    return cfg


def parse_text(text: str, fmt="ini") -> ExperimentConfig:
    if fmt == "json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"invalid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("<file>", "top level must be an object")
        return _build(raw)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError("<file>", f"invalid INI: {e}") from None
    return _build({s: dict(cp.items(s)) for s in cp.sections()})


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("<file>", str(e)) from None
    fmt = "json" if path.suffix.lower() == ".json" or text.lstrip().startswith("{") else "ini"
    return parse_text(text, fmt)


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def dump_ini(cfg: ExperimentConfig) -> str:
    """Fully resolved config; parsing it back gives an equal config."""
    buf = io.StringIO()
    for name in SECTIONS:
        sec = getattr(cfg, name)
        buf.write(f"[{name}]\n")
        for f in fields(sec):
            buf.write(f"{f.name} = {_fmt(getattr(sec, f.name))}\n")
        buf.write("\n")
    return buf.getvalue()
