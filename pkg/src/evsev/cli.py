"""Command-line front end.

Subcommands either run the pipeline up to a named stage (synth, prep,
select-features, resample, train, evaluate, run) or operate on saved
in-context model checkpoints (pfn-pretrain, pfn-predict). Exit codes:
0 success, 2 config error, 3 data error, 4 numeric fault, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .arrayio import load_arrays
from .config import load_config
from .dataset import CLASS_NAMES
from .errors import ArtifactIOError, ConfigError, EvsevError
from .pfn import PretrainConfig, load_pfn, pfn_predict, pretrain_pfn, save_pfn
from .pipeline import run_pipeline

# subcommand -> last pipeline stage executed
_STAGE_OF = {
    "synth": "data",
    "prep": "prep",
    "select-features": "select",
    "resample": "resample",
    "train": "train",
    "evaluate": None,
    "run": None,
}


def _parse_overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        out[key.strip()] = value.strip()
    return out


def _add_config_args(sub):
    sub.add_argument("-c", "--config", required=True, help="config file path")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    sub.add_argument("--out-dir", help="override out_dir")
    sub.add_argument("--seed", type=int, help="override seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="evsev",
        description="Severity classification pipeline for EV crash records.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("synth", "generate the synthetic dataset and stop"),
        ("prep", "stop after preprocessing and splitting"),
        ("select-features", "stop after tree-ensemble feature selection"),
        ("resample", "stop after SMOTE+ENN resampling"),
        ("train", "stop after training the sequence models"),
        ("evaluate", "run everything and emit the report bundle"),
        ("run", "run the full pipeline"),
    ]:
        sub = subs.add_parser(name, help=help_text)
        _add_config_args(sub)
        if name == "run":
            sub.add_argument("--stage", choices=[
                "data", "prep", "select", "resample", "train", "pfn",
                "evaluate"], help="stop after this stage")

    pre = subs.add_parser("pfn-pretrain",
                          help="pretrain the in-context model on prior tasks")
    pre.add_argument("--tasks", type=int, default=200_000)
    pre.add_argument("--batch", type=int, default=32)
    pre.add_argument("--seed", type=int, default=0)
    pre.add_argument("--out", required=True, help="checkpoint path")

    prd = subs.add_parser("pfn-predict",
                          help="one-shot predictions from a saved checkpoint")
    prd.add_argument("--checkpoint", required=True)
    prd.add_argument("--features", required=True,
                     help="features.bin from the prep stage")
    prd.add_argument("--out", required=True, help="predictions CSV path")
    prd.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_pfn_pretrain(args):
    if args.tasks <= 0 or args.batch <= 0:
        raise ConfigError("--tasks and --batch must be positive")
    model, losses = pretrain_pfn(PretrainConfig(
        n_tasks=args.tasks, batch=args.batch, seed=args.seed))
    save_pfn(args.out, model, {"seed": args.seed})
    print(f"pretrained on {args.tasks} tasks; final loss {losses[-1]:.4f}; "
          f"saved {args.out}")


def _cmd_pfn_predict(args):
    model = load_pfn(args.checkpoint)
    arrays, meta = load_arrays(args.features)
    for key in ("X_train", "y_train", "X_test"):
        if key not in arrays:
            raise ArtifactIOError(f"{args.features} lacks array {key!r}")
    probs = pfn_predict(model, arrays["X_train"], arrays["y_train"],
                        arrays["X_test"], subsample=True, seed=args.seed)
    pred = np.argmax(probs, axis=1)
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row", "predicted"] +
                            [f"p_{c}" for c in CLASS_NAMES])
            for i, p in enumerate(pred):
                writer.writerow([i, CLASS_NAMES[p]] +
                                [repr(float(v)) for v in probs[i]])
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote {pred.size} predictions to {args.out}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "pfn-pretrain":
            _cmd_pfn_pretrain(args)
        elif args.command == "pfn-predict":
            _cmd_pfn_predict(args)
        else:
            overrides = _parse_overrides(args.set)
            if args.out_dir is not None:
                overrides["out_dir"] = args.out_dir
            if args.seed is not None:
                overrides["seed"] = str(args.seed)
            cfg = load_config(args.config, overrides=overrides)
            stage = _STAGE_OF[args.command]
            if args.command == "run" and args.stage is not None:
                stage = args.stage
            manifest = run_pipeline(cfg, stop_after=stage)
            print(f"manifest: {manifest}")
    except EvsevError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
