"""Command-line experiment runner.

    arblab run CONFIG               train one arm, write logs and metrics
    arblab compare CONFIG           train CE and ARB on identical data and seed
    arblab check-propositions CONFIG
    arblab metrics CHECKPOINT       balance metrics of a saved classifier

Exit codes: 0 success, 2 invalid configuration or input, 3 divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import Scenario, check_proposition_1, check_proposition_2, imbalance_spread
from .collapse import balance_metrics
from .config import ExperimentConfig, dump_ini, load
from .errors import ConfigError, DivergedError, FormatError, InvalidSpec
from .model import load_checkpoint, save_checkpoint
from .train import build_datasets, train, train_peeled

EPOCHS_CSV_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("arblab")


def fmt(x):
    """Nine significant digits; ``nan`` is the degeneracy sentinel."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def _round_json(obj):
    if isinstance(obj, dict):
        return {k: _round_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_json(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return None
        return float(f"{float(obj):.9g}")
    return obj


def atomic_write(path: Path, text: str):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    atomic_write(path, json.dumps(_round_json(obj), indent=2, sort_keys=False) + "\n")


def epochs_header(c, peeled=False):
    cols = ["epoch", "lr", "train_loss", "overall_acc", "balanced_acc"]
    cols += [f"acc_class_{k}" for k in range(c)]
    cols += ["B_D2", "B_A2", "B_L2", "min_angle_deg"]
    cols += [f"g_{k}" for k in range(c)]
    if peeled:
        cols.append("minority_max_cos")
    return cols


def epochs_csv(logs, c, peeled=False):
    lines = [",".join(epochs_header(c, peeled))]
    for e in logs:
        m = e.metrics
        row = [e.epoch, e.lr, e.train_loss, e.overall_acc, e.balanced_acc, *e.per_class_acc,
               m.B_D2, m.B_A2, m.B_L2, m.min_pairwise_angle_deg, *e.g]
        if peeled:
            row.append(e.minority_cos)
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _checkpoint(path, cfg, result):
    tmp = Path(path).with_name(f".{Path(path).name}.tmp{os.getpid()}")
    if cfg.experiment.mode == "peeled":
        save_checkpoint(tmp, result.params, {"mode": "peeled", "classifier": "W"})
    else:
        m = result.model
        save_checkpoint(tmp, m.params, {"mode": "standard", "dims": m.dims,
                                        "activation": m.activation, "classifier": f"W{m.depth}"})
    os.replace(tmp, path)


def run_one(cfg: ExperimentConfig, out: Path, data=None):
    out.mkdir(parents=True, exist_ok=True)
    peeled = cfg.experiment.mode == "peeled"
    result = train_peeled(cfg) if peeled else train(cfg, data)
    c = cfg.data.num_classes
    atomic_write(out / "config.ini", dump_ini(cfg))
    atomic_write(out / "epochs.csv", epochs_csv(result.logs, c, peeled))
    final = dict(result.final)
    final["epochs_csv_version"] = EPOCHS_CSV_VERSION
    final["seed"] = cfg.seed
    if result.logs:
        g = result.logs[-1].g
        final["final_repulsion_spread"] = imbalance_spread(g, result.tracked)
    write_json(out / "final_metrics.json", final)
    _checkpoint(out / "checkpoint.json", cfg, result)
    write_json(out / "propositions.json", {"source": "trained model", "snapshot": final["gradient_snapshot"]})
    return result


def scenarios(cfg: ExperimentConfig):
    p = cfg.propositions
    common = dict(seeds=p.seeds, base_count=p.base_count, num_classes=p.num_classes, dim=p.dim,
                  feature_scale=p.feature_scale, noise=p.noise, seed=cfg.seed)
    return Scenario(ratios=tuple(p.ratios_1), **common), Scenario(ratios=tuple(p.ratios_2), **common)


def propositions_report(cfg: ExperimentConfig):
    s1, s2 = scenarios(cfg)
    r1, r2 = check_proposition_1(s1), check_proposition_2(s2)
    i_min = int(np.argmin(r2.ratios))
    ce_m, arb_m = r2.median["ce"][i_min], r2.median["arb"][i_min]
    return {
        "proposition_1": r1.to_dict(),
        "proposition_2": r2.to_dict(),
        "summary": {
            "prop1_slope_ce": r1.slope["ce"],
            "prop1_slope_arb": r1.slope["arb"],
            "prop2_slope_ce": r2.slope["ce"],
            "prop2_slope_arb": r2.slope["arb"],
            "prop2_min_ratio": r2.ratios[i_min],
            "prop2_median_ce": ce_m,
            "prop2_median_arb": arb_m,
            "prop2_arb_over_ce": (arb_m / ce_m) if ce_m else None,
        },
    }


def _arm_summary(res):
    f = res.final
    return {k: f.get(k) for k in ("overall_acc", "balanced_acc", "per_class_acc", "minority_max_cos",
                                  "classifier_metrics", "ncm_balanced_acc", "final_repulsion_spread")}


def cmd_run(cfg, out, quiet):
    res = run_one(cfg, out)
    if not quiet:
        f = res.final
        print(f"{cfg.loss.kind}: overall {f['overall_acc']:.4f} balanced {f['balanced_acc']:.4f} -> {out}")


def cmd_compare(cfg, out, quiet):
    out.mkdir(parents=True, exist_ok=True)
    data = build_datasets(cfg) if cfg.experiment.mode == "standard" else None
    arms = {}
    for kind in ("ce", "arb"):
        res = run_one(cfg.with_values(loss={"kind": kind}), out / kind, data)
        res.final["final_repulsion_spread"] = imbalance_spread(res.logs[-1].g, res.tracked) if res.logs else None
        arms[kind] = _arm_summary(res)
    ce, arb = arms["ce"], arms["arb"]
    deltas = {
        "overall_acc": arb["overall_acc"] - ce["overall_acc"],
        "balanced_acc": arb["balanced_acc"] - ce["balanced_acc"],
        "per_class_acc": (np.asarray(arb["per_class_acc"]) - np.asarray(ce["per_class_acc"])).tolist(),
        "B_A2": arb["classifier_metrics"]["B_A2"] - ce["classifier_metrics"]["B_A2"],
    }
    write_json(out / "compare.json", {"seed": cfg.seed, "ce": ce, "arb": arb, "delta_arb_minus_ce": deltas})
    if not quiet:
        print(f"balanced acc  ce {ce['balanced_acc']:.4f}  arb {arb['balanced_acc']:.4f}  "
              f"delta {deltas['balanced_acc']:+.4f} -> {out / 'compare.json'}")


def cmd_check(cfg, out, quiet):
    out.mkdir(parents=True, exist_ok=True)
    rep = propositions_report(cfg)
    write_json(out / "propositions.json", rep)
    if not quiet:
        s = rep["summary"]
        print(f"repulsion slope ce {s['prop1_slope_ce']:.3f} arb {s['prop1_slope_arb']:.3f}; "
              f"attraction/repulsion at r={s['prop2_min_ratio']:g}: arb/ce {s['prop2_arb_over_ce']:.1f}")


def cmd_metrics(path, quiet):
    params, meta = load_checkpoint(path)
    name = meta.get("classifier") or sorted(k for k in params if k.startswith("W"))[-1]
    m = balance_metrics(params[name]).to_dict()
    print(json.dumps(_round_json(m), indent=2))


def build_parser():
    p = argparse.ArgumentParser(prog="arblab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "compare", "check-propositions"):
        s = sub.add_parser(name)
        s.add_argument("config")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--quiet", action="store_true")
    s = sub.add_parser("metrics")
    s.add_argument("checkpoint")
    s.add_argument("--quiet", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.command == "metrics":
            cmd_metrics(args.checkpoint, args.quiet)
            return EXIT_OK
        cfg = load(args.config)
        if args.seed is not None:
            cfg = cfg.with_values(experiment={"seed": args.seed})
        if args.out is not None:
            cfg = cfg.with_values(output={"directory": args.out})
        out = Path(cfg.output.directory)
        {"run": cmd_run, "compare": cmd_compare, "check-propositions": cmd_check}[args.command](cfg, out, args.quiet)
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidSpec, FormatError, FileNotFoundError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergedError as e:
        print(str(e), file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
