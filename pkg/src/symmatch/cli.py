"""Command-line entry point: ``symmatch {gen,train,match,eval,sweep,gradcheck}``.

Training options may come from a flat JSON file (``--config``); explicit flags
win over file values, which win over the built-in defaults. Exit codes: 0 ok,
2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import IncompatibleError, NonFiniteError, SingularityError, SymmatchError
from .evaluation import Suite, evaluate_suite, match, sweep, untrained_params, write_report
from .geom.generator import CUT_RANGE, HOLE_COUNT, HOLE_SIZE, MAX_REMOVED, gen_dataset
from .geom.io import load_cloud, load_dataset, save_map, save_pair
from .loss import LossWeights
from .train import NumericalFailure, TrainConfig, fit, load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DATASET_FORMAT = "symmatch-dataset"

# flag name -> TrainConfig field
TRAIN_KEYS = {
    "k": "k",
    "points": "points",
    "batch_size": "batch_size",
    "lr": "lr",
    "epochs": "epochs",
    "lambda": "lam",
    "gamma": "gamma",
    "eps": "eps",
    "seed": "seed",
    "mode": "mode",
    "train_pairs": "train_pairs",
    "max_tilt_deg": "max_tilt_deg",
    "max_yaw_deg": "max_yaw_deg",
}
_TYPES = {"k": int, "points": int, "batch_size": int, "epochs": int, "seed": int, "train_pairs": int, "mode": str}


class UsageError(Exception):
    pass


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


# ------------------------------------------------------------------ config


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat JSON file with training options")
    for flag in TRAIN_KEYS:
        kind = _TYPES.get(flag, float)
        kw = {"choices": ("full", "partial")} if flag == "mode" else {}
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=kind, default=None, **kw)


def resolve_config(args) -> TrainConfig:
    """Defaults < config file < flags. Loss weights follow ``mode`` unless set."""
    values: dict = {}
    if getattr(args, "config", None) is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc.msg})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        unknown = sorted(set(raw) - set(TRAIN_KEYS))
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {unknown}")
        values.update(raw)
    for flag in TRAIN_KEYS:
        v = getattr(args, flag, None)
        if v is not None:
            values[flag] = v
    mode = values.get("mode", "full")
    defaults = LossWeights.for_mode(mode)
    values.setdefault("lambda", defaults.lam)
    values.setdefault("gamma", defaults.gamma)
    try:
        return TrainConfig(**{TRAIN_KEYS[k]: v for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs = gen_dataset(args.pairs, args.points, args.partial, args.seed)
    entries = []
    for s in pairs:
        name = s.meta["name"]
        files = save_pair(out, name, s)
        entries.append({"name": name, "files": files, "meta": _jsonable(s.meta)})
    manifest = {
        "format": DATASET_FORMAT,
        "version": 1,
        "seed": args.seed,
        "generator": {
            "pairs": args.pairs,
            "points": args.points,
            "partial": args.partial,
            "cut_range": list(CUT_RANGE),
            "hole_count": list(HOLE_COUNT),
            "hole_size": list(HOLE_SIZE),
            "max_removed": MAX_REMOVED,
            "version": __version__,
        },
        "pairs": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(pairs)} pairs to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = resolve_config(args)
    _, pairs = load_dataset(args.data)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = args.log or out.with_name(out.stem + ".log.csv")
    timing_path = out.with_name(out.stem + ".timing.csv")
    ckpt = fit(config, pairs, log_path=log_path, timing_path=timing_path)
    save_checkpoint(out, ckpt)
    print(f"checkpoint {ckpt.checkpoint_id()} after {ckpt.iteration} iterations -> {out}")
    return EXIT_OK


def _model(args):
    baseline = getattr(args, "baseline", None)
    if baseline == "raw":
        return "raw"
    if baseline == "untrained":
        return untrained_params(args.k or TrainConfig.k, args.seed)
    if args.ckpt is None:
        raise UsageError("need --ckpt or --baseline")
    ckpt = load_checkpoint(args.ckpt)
    if args.k is not None and args.k != ckpt.params.k:
        raise IncompatibleError(f"checkpoint has k={ckpt.params.k}, request expects k={args.k}")
    return ckpt


def cmd_match(args) -> int:
    model = _model(args)
    pred = match(model, load_cloud(args.source), load_cloud(args.target))
    save_map(args.out, pred)
    print(f"wrote {pred.src_size} matches -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.baseline and args.ckpt:
        raise UsageError("--ckpt and --baseline are mutually exclusive")
    model = _model(args)
    manifest, pairs = load_dataset(args.data)
    meta = {"data": str(args.data), "dataset_seed": manifest.get("seed")}
    if args.baseline:
        meta["model"] = f"baseline:{args.baseline}"
    else:
        meta["model"] = str(args.ckpt)
        meta["checkpoint_id"] = model.checkpoint_id()
    report = evaluate_suite(model, Suite(pairs, name=str(args.data)), meta)
    write_report(args.out, report)
    print(f"mean_x100 {report.mean_x100:.4f} over {len(pairs)} pairs -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = resolve_config(args)
    _, train_pairs = load_dataset(args.data)
    _, test_pairs = load_dataset(args.test)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated integers, got {args.values!r}") from None
    rows = sweep(args.axis, values, base, train_pairs, Suite(test_pairs))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["axis", "value", "mean_x100"])
        for r in rows:
            w.writerow([r["axis"], r["value"], repr(r["mean_x100"])])
            print(f"{r['axis']}={r['value']}: mean_x100 {r['mean_x100']:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import main_report

    return EXIT_OK if main_report(args.reps, args.seed) else EXIT_NUMERIC


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symmatch", description="Canonical point embeddings for shape correspondence.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic pair dataset")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--pairs", type=int, default=20)
    g.add_argument("--points", type=int, default=1024)
    g.add_argument("--partial", choices=("none", "cut", "hole"), default="none")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train an encoder")
    t.add_argument("--data", required=True, type=Path)
    t.add_argument("--out", required=True, type=Path, help="checkpoint manifest path")
    t.add_argument("--log", type=Path, help="training log CSV (default: next to the checkpoint)")
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("match", help="match a source cloud to a target cloud")
    m.add_argument("--ckpt", type=Path)
    m.add_argument("--source", required=True, type=Path)
    m.add_argument("--target", required=True, type=Path)
    m.add_argument("--out", required=True, type=Path)
    m.add_argument("--k", type=int, help="expected embedding size")
    m.set_defaults(func=cmd_match, baseline=None, seed=0)

    e = sub.add_parser("eval", help="score a checkpoint or baseline on a dataset")
    e.add_argument("--ckpt", type=Path)
    e.add_argument("--baseline", choices=("raw", "untrained"))
    e.add_argument("--data", required=True, type=Path)
    e.add_argument("--out", required=True, type=Path, help="report directory")
    e.add_argument("--k", type=int, help="expected (or, for --baseline untrained, used) embedding size")
    e.add_argument("--seed", type=int, default=0, help="init seed for --baseline untrained")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="train and score one model per value")
    s.add_argument("--data", required=True, type=Path, help="training dataset")
    s.add_argument("--test", required=True, type=Path, help="held-out dataset")
    s.add_argument("--axis", required=True, choices=("embedding_size", "train_size"))
    s.add_argument("--values", required=True, help="comma-separated integers")
    s.add_argument("--out", required=True, type=Path, help="CSV path")
    _add_train_flags(s)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("gradcheck", help="finite-difference checks of every gradient")
    c.add_argument("--reps", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"symmatch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, NonFiniteError, SingularityError) as exc:
        print(f"symmatch: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SymmatchError, OSError, ValueError, KeyError) as exc:
        print(f"symmatch: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
