"""Command-line entry point.

Subcommands:
  train               run an experiment from a JSON config
  eval                roll a trained checkpoint on fresh schedules
  decompose           wavelet-decompose a CSV signal
  case-study          representation-tracking demonstration
  motivating-example  noisy-chirp denoising demonstration
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ABLATIONS, ExperimentConfig, desk_config
from .csvio import SERIES_SCHEMA, write_csv
from .demos import decompose_file, motivating_example, run_case_study
from .training import Trainer


def _cmd_train(args):
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = desk_config()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ablation is not None:
        overrides["ablation"] = args.ablation
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    if args.paper_scale:
        cfg = cfg.paper_scale()
    cfg.validate()

    ablations = ABLATIONS if args.ablation == "matrix" else (cfg.ablation,)
    for name in ablations:
        run_cfg = cfg.with_overrides(
            ablation=name,
            out_dir=cfg.out_dir if len(ablations) == 1 else f"{cfg.out_dir}/{name}",
        ).validate()
        if args.resume:
            trainer = Trainer.from_checkpoint(run_cfg, args.resume)
        else:
            trainer = Trainer(run_cfg)
        records = trainer.run()
        final = records[-1].mean_eval_return if records else float("nan")
        print(f"[{name}] finished {trainer.epoch} epochs, "
              f"{trainer.env_steps} env steps, final eval return {final:.3f}")
    return 0


def _cmd_eval(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else desk_config()
    if args.env:
        cfg = cfg.with_overrides(env=args.env).validate()
    trainer = Trainer.from_checkpoint(cfg, args.checkpoint)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [0]
    returns = []
    for seed in seeds:
        record = [] if args.dump_transitions else None
        returns.append(trainer.rollout_return(seed, record=record))
        if record is not None:
            rows = []
            for step, (tr, info) in enumerate(record):
                rows.append([step] + list(tr.s) + list(tr.a) + [tr.r]
                            + list(tr.omega_hidden) + [info["segment"]])
            s_cols = [f"s{i}" for i in range(len(record[0][0].s))]
            a_cols = [f"a{i}" for i in range(len(record[0][0].a))]
            o_cols = [f"omega{i}" for i in range(len(record[0][0].omega_hidden))]
            write_csv(f"{args.out}/transitions_seed{seed}.csv", SERIES_SCHEMA,
                      ["step"] + s_cols + a_cols + ["r"] + o_cols + ["segment"], rows)
    print(json.dumps({
        "seeds": seeds,
        "returns": returns,
        "mean_return": float(np.mean(returns)),
        "std_return": float(np.std(returns)),
    }, indent=2))
    return 0


def _cmd_decompose(args):
    decompose_file(args.input, args.out, args.levels, trainable=not args.haar_fixed)
    print(f"wrote coefficient CSVs for {args.levels} levels to {args.out}")
    return 0


def _cmd_case_study(args):
    summary = run_case_study(args.out, seed=args.seed)
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_motivating(args):
    summary = motivating_example(args.out, seed=args.seed)
    print(json.dumps(summary, indent=2))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="waverl",
                                description="wavelet task representations for "
                                            "non-stationary RL")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run an experiment")
    t.add_argument("--config", help="JSON config file (defaults to the desk config)")
    t.add_argument("--paper-scale", action="store_true",
                   help="restore full-scale buffer/step counts")
    t.add_argument("--ablation", choices=list(ABLATIONS) + ["matrix"],
                   help="variant to run; 'matrix' runs all of them")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory override")
    t.add_argument("--resume", help="checkpoint directory to resume from")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", help="config JSON matching the checkpoint")
    e.add_argument("--env")
    e.add_argument("--seeds", help="comma-separated env seeds")
    e.add_argument("--dump-transitions", action="store_true")
    e.add_argument("--out", default=".")
    e.set_defaults(func=_cmd_eval)

    d = sub.add_parser("decompose", help="wavelet-decompose a CSV signal")
    d.add_argument("--input", required=True)
    d.add_argument("--levels", type=int, default=2)
    d.add_argument("--haar-fixed", action="store_true",
                   help="use the fixed orthonormal Haar bank")
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_decompose)

    c = sub.add_parser("case-study", help="representation tracking demo")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=_cmd_case_study)

    m = sub.add_parser("motivating-example", help="chirp denoising demo")
    m.add_argument("--out", required=True)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=_cmd_motivating)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
