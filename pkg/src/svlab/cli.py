"""Command-line front end.

Subcommands: ``gen`` (synthesize corpora + trial list), ``train`` (run the
fine-tuning recipe, write checkpoint + run record), ``eval`` (score a trial
list against a checkpoint), ``gradcheck`` (finite-difference battery),
``sweep`` (one-axis ablation producing a CSV) and ``weights`` (layer-weight
diagnostics from a checkpoint).

Exit codes: 0 success, 2 usage, 3 configuration, 4 I/O, 5 training
divergence, 6 gradient-check failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import backends, trainer
from .config import ExperimentConfig, load_config, save_config
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    DivergenceError,
    LabelError,
    MetricUndefinedError,
    ShapeError,
)
from .gradcheck import COMPONENTS, run_all
from .metrics import write_report, write_scores
from .synth import export_corpus, load_corpus, make_corpus, split_trials, write_trial_file

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_DIVERGENCE = 5
EXIT_GRADCHECK = 6

GRADCHECK_TOL = 1e-4

_CONFIG_ERRORS = (
    ConfigError,
    CapacityError,
    LabelError,
    ShapeError,
    ContractError,
    MetricUndefinedError,
)


def _load_exp_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace("train", seed=args.seed)
        cfg = cfg.replace("synth", seed=args.seed)
    return cfg


def cmd_gen(args):
    cfg = _load_exp_config(args)
    os.makedirs(args.out, exist_ok=True)
    train_corpus = make_corpus(cfg.synth, cfg.gen.n_train_utts, tag="train")
    eval_corpus = make_corpus(cfg.synth, cfg.gen.n_eval_utts, tag="eval")
    export_corpus(train_corpus, os.path.join(args.out, "train"))
    export_corpus(eval_corpus, os.path.join(args.out, "eval"))
    trials = split_trials(
        eval_corpus, cfg.gen.n_target_trials, cfg.gen.n_nontarget_trials, cfg.synth.seed
    )
    write_trial_file(trials, os.path.join(args.out, "trials.txt"))
    save_config(cfg, os.path.join(args.out, "config.json"))
    print(
        f"gen: {cfg.synth.n_speakers} speakers, "
        f"{len(train_corpus)} train / {len(eval_corpus)} eval utterances, "
        f"{cfg.gen.n_target_trials}/{cfg.gen.n_nontarget_trials} trials -> {args.out}"
    )
    return EXIT_OK


def cmd_train(args):
    cfg = _load_exp_config(args)
    corpus = load_corpus(os.path.join(args.data, "train", "manifest.txt"))
    os.makedirs(args.out, exist_ok=True)
    try:
        system, record = trainer.train(cfg, corpus)
    except DivergenceError as exc:
        print(f"train: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    trainer.save_checkpoint(os.path.join(args.out, "checkpoint.svck"), system)
    trainer.write_run_record(record, args.out)
    print(
        f"train: {len(record.losses)} epochs, final loss {record.losses[-1]:.4f}, "
        f"total drift {sum(record.drift[-1]):.6g} -> {args.out}"
        if record.losses
        else f"train: 0 epochs, checkpoint written -> {args.out}"
    )
    return EXIT_OK


def cmd_eval(args):
    system = trainer.load_checkpoint(args.checkpoint)
    report, scores = trainer.evaluate_files(system, args.trials, args.data, threads=args.threads)
    write_report(report, args.out)
    write_scores(scores, os.path.splitext(args.out)[0] + ".scores")
    print(
        f"eval: eer {report['eer']:.4f}, dcf(0.01) {report['dcf1']:.4f}, "
        f"dcf(0.05) {report['dcf5']:.4f} on {report['n_target']}+{report['n_nontarget']} trials"
    )
    return EXIT_OK


def cmd_gradcheck(args):
    results = run_all(seed=args.seed if args.seed is not None else 0, inject_fault=args.inject_fault)
    worst_ok = True
    for name in COMPONENTS:
        err = results[name]
        ok = err < GRADCHECK_TOL
        worst_ok = worst_ok and ok
        print(f"gradcheck {name}: max rel err {err:.3e} [{'pass' if ok else 'FAIL'}]")
    return EXIT_OK if worst_ok else EXIT_GRADCHECK


def cmd_sweep(args):
    cfg = _load_exp_config(args)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("sweep: --values is empty")
    if args.axis not in trainer.SWEEP_AXES:
        print(
            f"sweep: unknown axis {args.axis!r}; valid axes: {', '.join(trainer.SWEEP_AXES)}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    corpus = load_corpus(os.path.join(args.data, "train", "manifest.txt"))
    trials = trainer.read_trial_file(os.path.join(args.data, "trials.txt"))
    eval_dir = os.path.join(args.data, "eval")

    from .tensor import load_tensor

    def load_frames(rel):
        return load_tensor(os.path.join(eval_dir, rel))

    rows = trainer.sweep(cfg, args.axis, values, corpus, trials, load_frames)
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, f"sweep_{args.axis}.csv")
    trainer.write_sweep_csv(rows, out_csv)
    for r in rows:
        tail = f"eer {r['eer']:.4f}" if r["status"] == "ok" else "diverged (NAN)"
        print(f"sweep {args.axis}={r['value']}: {tail}")
    print(f"sweep: wrote {out_csv}")
    return EXIT_OK


def cmd_weights(args):
    system = trainer.load_checkpoint(args.checkpoint)
    report = backends.layer_weight_report(system.backend)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        if "key" in report:
            w.writerow(["layer", "key_weight", "value_weight"])
            for l, (kw, vw) in enumerate(zip(report["key"], report["value"])):
                w.writerow([l, repr(kw), repr(vw)])
        else:
            w.writerow(["layer", "value_weight"])
            for l, vw in enumerate(report["value"]):
                w.writerow([l, repr(vw)])
    print(f"weights: wrote {args.out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="svlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, out=False, data=False, seed=False, threads=False):
        if config:
            sp.add_argument("--config", help="experiment config file (JSON)")
        if out:
            sp.add_argument("--out", required=True, help="output path")
        if data:
            sp.add_argument("--data", required=True, help="data directory (from `svlab gen`)")
        if seed:
            sp.add_argument("--seed", type=int, help="override the configured seed")
        if threads:
            sp.add_argument("--threads", type=int, default=1,
                            help="worker threads; 1 guarantees determinism")

    sp = sub.add_parser("gen", help="generate synthetic corpora and a trial list")
    common(sp, config=True, out=True, seed=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("train", help="fine-tune encoder + back-end, write checkpoint")
    common(sp, config=True, out=True, data=True, seed=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score a trial list against a checkpoint")
    sp.add_argument("checkpoint", help="checkpoint file")
    sp.add_argument("trials", help="trial list file")
    common(sp, out=True, threads=True)
    sp.add_argument("--data", required=True, help="directory with the trial utterance tensors")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient battery")
    common(sp, config=True, seed=True)
    sp.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("sweep", help="single-axis ablation sweep, CSV output")
    common(sp, config=True, out=True, data=True, seed=True)
    sp.add_argument("--axis", required=True, help=f"one of {', '.join(trainer.SWEEP_AXES)}")
    sp.add_argument("--values", required=True, help="comma-separated axis values")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("weights", help="dump normalized layer weights from a checkpoint")
    sp.add_argument("checkpoint", help="checkpoint file")
    common(sp, out=True)
    sp.set_defaults(func=cmd_weights)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"{args.command}: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (IOError, OSError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
