"""Command-line runs: ``tgib {gen-synth,train,eval-link,explain,sweep}``.

Settings resolve as built-in defaults < preset < JSON config file < flags.
The preset is ``--preset``, else a ``"preset"`` key in the config file, else
``desk``. Each command writes ``<command>.manifest.json`` with the resolved
settings and ``<command>.metrics.jsonl`` next to its other outputs, so one
directory can hold a whole pipeline. The output directory is ``--out``, else
``$TGIB_OUTPUT_DIR``, else ``./tgib-runs``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .bottleneck import write_explanation_dump
from .evaluation import (
    explanation_records,
    extract_explanation,
    link_eval,
    sparsity_sweep,
    sweep_levels,
    write_curve_csv,
    write_metrics,
)
from .model import ModelConfig, TGIBModel
from .synth import PlantedRuleConfig, explanation_recall, generate, read_truth, write_dataset
from .tempgraph import load_jodie_csv, make_split, write_split_manifest
from .trainer import PRESETS, DivergenceError, TrainConfig, train

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_DIVERGED = 0, 1, 2, 3, 4
OUTPUT_ENV = "TGIB_OUTPUT_DIR"
CHECKPOINT = "checkpoint.tgib"
DEFAULT_PRESET = "desk"

# run-level settings that belong to neither the model nor the trainer
RUN_DEFAULTS = {
    "mode": "transductive",
    "seeds": [0, 1, 2, 3, 4],
    "sparsity": 0.1,
    "sparsity_max": 0.3,
    "sparsity_step": 0.002,
    "bipartite": None,          # None: unipartite when a ground-truth sidecar sits next to the data
    "max_events": None,
    "split_seed": 0,
    "synth": {},                # PlantedRuleConfig fields for gen-synth
}

MODEL_PRESETS = {
    "desk": {"d": 16, "d_time": 16, "neighbors": 5},
    "paper": {"d": 32, "d_time": 32, "neighbors": 20},
}


class UsageError(Exception):
    pass


def _names(cls):
    return {f.name for f in fields(cls)}


def resolve_config(preset=None, config_path=None, overrides=None):
    """Flat settings dict from defaults, a preset, a JSON file and flag overrides."""
    cfg = {**asdict(ModelConfig()), **asdict(TrainConfig()), **RUN_DEFAULTS}
    cfg["hidden"] = None        # follows d unless set
    data = {}
    if config_path:
        with open(config_path) as fh:
            data = json.load(fh)
        unknown = set(data) - set(cfg) - {"preset"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    preset = preset or data.pop("preset", None) or DEFAULT_PRESET
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg.update(MODEL_PRESETS[preset])
    cfg.update(PRESETS[preset])
    cfg.update({k: v for k, v in data.items() if k != "preset"})
    cfg["preset"] = preset
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if not cfg["seeds"]:
        raise UsageError("seeds must be non-empty")
    if cfg["mode"] not in ("transductive", "inductive"):
        raise UsageError(f"mode must be transductive or inductive, got {cfg['mode']!r}")
    return cfg


def model_config(cfg):
    return ModelConfig.from_dict({k: v for k, v in cfg.items() if k in _names(ModelConfig)})


def train_config(cfg):
    return TrainConfig.from_dict({k: v for k, v in cfg.items() if k in _names(TrainConfig)})


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_manifest(out, command, cfg, extra=None):
    record = {"command": command, "config": _jsonable(cfg)}
    if extra:
        record.update(_jsonable(extra))
    with open(out / f"{command}.manifest.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def truth_sidecar(data_path):
    path = Path(data_path)
    candidate = path.with_name(f"{path.stem}_truth.jsonl")
    return candidate if candidate.exists() else None


def load_graph(data_path, cfg):
    if not Path(data_path).exists():
        raise FileNotFoundError(data_path)
    bipartite = cfg["bipartite"]
    if bipartite is None:
        bipartite = truth_sidecar(data_path) is None
    return load_jodie_csv(data_path, bipartite=bipartite)


def _require(path, what):
    if path is None:
        raise UsageError(f"{what} is required")
    if not Path(path).exists():
        raise FileNotFoundError(path)
    return path


def _explained_positions(g, split, truth, limit):
    positions = np.asarray(split.test)
    if truth is not None:
        positions = np.array([p for p in positions if int(g.event_ids[p]) in truth], dtype=np.int64)
    return positions[:limit] if limit else positions


# -- subcommands ---------------------------------------------------------------
def cmd_gen_synth(args, cfg, out):
    names = _names(PlantedRuleConfig)
    synth = PlantedRuleConfig(**{k: v for k, v in cfg.get("synth", {}).items() if k in names},
                              **({"seed": args.seed} if args.seed is not None else {}))
    g, truth = generate(synth)
    csv_path, truth_path = write_dataset(out, g, truth, args.stem)
    write_manifest(out, "gen-synth", cfg, {"synth": asdict(synth)})
    return f"gen-synth: {len(g)} events, {len(truth)} explained targets -> {csv_path}"


def cmd_train(args, cfg, out):
    data = _require(args.data, "--data")
    g = load_graph(data, cfg)
    cfg["f_edge"] = g.f_edge
    split = make_split(g, cfg["mode"] == "inductive", cfg["split_seed"])
    write_split_manifest(out / "split.jsonl", g, split)
    write_manifest(out, "train", cfg, {"data": str(data)})
    _, records = train(g, split, model_config(cfg), train_config(cfg),
                       log_path=out / "train_log.jsonl", checkpoint_path=out / CHECKPOINT)
    scored = [r for r in records if r["val_ap"] is not None]
    best = max(scored, key=lambda r: r["val_ap"]) if scored else records[-1]
    val = f"{best['val_ap']:.4f}" if best["val_ap"] is not None else "n/a"
    return f"train: {len(records)} epochs, best val AP {val} at epoch {best['epoch']} -> {out / CHECKPOINT}"


def _load_model(args, cfg):
    data = _require(args.data, "--data")
    ckpt = _require(args.checkpoint, "--checkpoint")
    g = load_graph(data, cfg)
    model, _ = TGIBModel.load(ckpt)
    cfg.update(asdict(model.cfg))       # record the settings the model was trained with
    split = make_split(g, cfg["mode"] == "inductive", cfg["split_seed"])
    return g, model, split


def cmd_eval_link(args, cfg, out):
    g, model, split = _load_model(args, cfg)
    mean, std, per_seed = link_eval(model, g, split, cfg["mode"], tuple(cfg["seeds"]))
    write_metrics(out / "eval-link.metrics.jsonl", [{"metric": f"ap_{cfg['mode']}", "mean": mean, "std": std,
                                           "seeds": list(cfg["seeds"]), "per_seed": per_seed.tolist()}])
    write_manifest(out, "eval-link", cfg, {"data": str(args.data), "checkpoint": str(args.checkpoint)})
    return f"eval-link: {cfg['mode']} AP {mean:.4f} +- {std:.4f} over {len(cfg['seeds'])} seeds"


def _truth_for(args):
    path = args.truth or (truth_sidecar(args.data) if args.data else None)
    return read_truth(path) if path else None


def cmd_explain(args, cfg, out):
    g, model, split = _load_model(args, cfg)
    truth = _truth_for(args)
    positions = _explained_positions(g, split, truth, cfg["max_events"])
    records, matches, recalls = [], [], []
    for pos in positions:
        result = extract_explanation(model, g, int(pos), cfg["sparsity"])
        records.extend(explanation_records(result))
        matches.append(result.prediction_match)
        if truth is not None:
            recalls.append(explanation_recall(result, truth))
    write_explanation_dump(out / "explanations.jsonl", records)
    rows = [{"metric": "prediction_match", "mean": float(np.mean(matches)) if matches else None,
             "sparsity": cfg["sparsity"], "events": len(positions)}]
    summary = f"explain: {len(positions)} events, match rate {rows[0]['mean']}"
    if recalls:
        rows.append({"metric": "explanation_recall", "mean": float(np.mean(recalls)),
                     "std": float(np.std(recalls)), "events": len(recalls)})
        summary += f", recall {np.mean(recalls):.4f}"
    write_metrics(out / "explain.metrics.jsonl", rows)
    write_manifest(out, "explain", cfg, {"data": str(args.data), "checkpoint": str(args.checkpoint)})
    return summary


def cmd_sweep(args, cfg, out):
    g, model, split = _load_model(args, cfg)
    truth = _truth_for(args)
    positions = _explained_positions(g, split, truth, cfg["max_events"])
    levels = sweep_levels(cfg["sparsity_max"], cfg["sparsity_step"])
    learned = sparsity_sweep(model, g, positions, levels)
    random = sparsity_sweep(model, g, positions, levels, ranker="random", seed=cfg["seed"])
    write_curve_csv(out / "curve.csv", learned)
    write_curve_csv(out / "curve_random.csv", random)
    write_metrics(out / "sweep.metrics.jsonl", [
        {"metric": "sweep_auc", "mean": learned.auc, "events": len(positions)},
        {"metric": "sweep_auc_random", "mean": random.auc, "events": len(positions)},
    ])
    write_manifest(out, "sweep", cfg, {"data": str(args.data), "checkpoint": str(args.checkpoint)})
    return f"sweep: {len(levels)} levels, AUC {learned.auc:.4f} (random {random.auc:.4f})"


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "eval-link": cmd_eval_link,
    "explain": cmd_explain,
    "sweep": cmd_sweep,
}


def _seed_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="tgib", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./tgib-runs)")
    common.add_argument("--config", help="JSON file of settings")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="Jodie-format CSV")
    data.add_argument("--mode", choices=["transductive", "inductive"])
    data.add_argument("--split-seed", type=int)
    data.add_argument("--bipartite", action=argparse.BooleanOptionalAction, default=None)

    gen = sub.add_parser("gen-synth", parents=[common], help="write a planted-rule synthetic dataset")
    gen.add_argument("--stem", default="synth")
    for name in ("num_nodes", "num_hubs", "num_targets", "num_background_events", "trigger_count"):
        gen.add_argument("--" + name.replace("_", "-"), type=int, dest=f"synth__{name}")
    gen.add_argument("--window", type=float, dest="synth__window")
    gen.add_argument("--noise-rate", type=float, dest="synth__noise_rate")

    tr = sub.add_parser("train", parents=[common, data], help="train and checkpoint a model")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--learning-rate", type=float)
    tr.add_argument("--beta", type=float)
    tr.add_argument("--num-negatives", type=int)
    tr.add_argument("--tau-anneal", type=float)
    tr.add_argument("--literal-negative-term", action="store_true", default=None)
    tr.add_argument("--val-max-events", type=int)
    for name in ("d", "d_time", "layers", "neighbors", "hidden"):
        tr.add_argument("--" + name.replace("_", "-"), type=int)
    for name in ("dropout", "r", "tau"):
        tr.add_argument("--" + name, type=float)
    tr.add_argument("--readout", choices=["mean", "sum"])

    for name, helptext in (("eval-link", "link-prediction AP of a checkpoint"),
                           ("explain", "rank candidate events and dump explanations"),
                           ("sweep", "match rate over the sparsity sweep")):
        p = sub.add_parser(name, parents=[common, data], help=helptext)
        p.add_argument("--checkpoint", help="model checkpoint written by train")
        p.add_argument("--seeds", type=_seed_list)
        if name != "eval-link":
            p.add_argument("--truth", help="ground-truth sidecar (default: <data stem>_truth.jsonl)")
            p.add_argument("--max-events", type=int)
        if name == "explain":
            p.add_argument("--sparsity", type=float)
        if name == "sweep":
            p.add_argument("--sparsity-max", type=float)
            p.add_argument("--sparsity-step", type=float)
    return parser


def _overrides(args):
    skip = {"command", "out", "config", "preset", "verbose", "data", "checkpoint", "truth", "stem"}
    flags, synth = {}, {}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        if key.startswith("synth__"):
            synth[key[len("synth__"):]] = value
        else:
            flags[key] = value
    return flags, synth


def output_dir(args):
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "tgib-runs")
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def run(argv=None):
    """Execute one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        flags, synth = _overrides(args)
        cfg = resolve_config(args.preset, args.config, flags)
        cfg["synth"] = {**cfg["synth"], **synth}
        out = output_dir(args)
        print(COMMANDS[args.command](args, cfg, out))
        return EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tgib: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"tgib: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except DivergenceError as exc:
        print(f"tgib: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, KeyError, OSError) as exc:
        print(f"tgib: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
