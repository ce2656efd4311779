"""Command-line entry point ``nsf``. Log verbosity comes from ``NSF_LOG_LEVEL``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .artifacts import ArtifactBundle, load_bundle, save_bundle
from .classifier import ClassifierTrainConfig, build_sampler, predict, train_debiased_head, train_erm_head
from .datasets import FORMATS, describe, read_dataset, write_dataset
from .errors import NoBiasDetected, NSFError
from .evaluate import (
    ablation_grid,
    accuracy_only,
    channel_discard_sweep,
    evaluate,
    grid_rows,
    write_rows,
)
from .grouping import CentroidSet, assign_groups, bias_presence, compute_centroids
from .neutralize import estimate_invariant
from .pipeline import NSFModel, groups_report, run_pipeline, summary_text, write_assignments, write_loss_trace
from .synthgen import SyntheticConfig, generate
from .transform import TransformTrainConfig, train_transform

log = logging.getLogger("nsf")


def _load(args, attr="data"):
    return read_dataset(getattr(args, attr), getattr(args, "format", None))


def _centroids_from_report(path):
    rep = json.loads(Path(path).read_text())["centroids"]
    inv = rep.get("invariant")
    if inv is not None:
        inv = [[np.nan] * len(rep["biased"][0]) if row is None else row for row in inv]
    return CentroidSet(rep["biased"], inv, rep.get("valid_mask"))


def _grouping(data, groups_path=None):
    if groups_path:
        centroids = _centroids_from_report(groups_path)
        return centroids, assign_groups(data, centroids)
    centroids = compute_centroids(data)
    assignment = assign_groups(data, centroids)
    try:
        centroids = estimate_invariant(data, assignment, centroids)
    except NoBiasDetected as exc:
        log.warning("%s", exc)
    return centroids, assignment


def _existing_bundle(path):
    return load_bundle(path) if path and Path(path).exists() else ArtifactBundle()


def cmd_synth(args):
    cfg = SyntheticConfig(n=args.n, dim=args.dim, rho=args.rho, bias_scale=args.bias_scale, seed=args.seed)
    write_dataset(generate(cfg), args.out, args.format)


def cmd_convert(args):
    write_dataset(read_dataset(args.input, args.from_format), args.output, args.to_format)


def cmd_inspect(args):
    print(json.dumps(describe(_load(args)), indent=2))


def cmd_groups(args):
    data = _load(args)
    centroids, assignment = _grouping(data)
    model = NSFModel(centroids, assignment, bias_presence(assignment), None, None, None)
    out = Path(args.out)
    out.write_text(json.dumps(groups_report(model), indent=2))
    write_assignments(data, assignment, out.with_name(out.stem + "_assignments.csv"))
    for entry in model.bias_report["classes"]:
        print(f"class {entry['class']}: |U|={entry['u_count']} |V|={entry['v_count']} "
              f"bias={'yes' if entry['bias_detected'] else 'no'}")


def cmd_fit_transform(args):
    data = _load(args)
    centroids, assignment = _grouping(data, args.groups)
    tcfg = TransformTrainConfig(lam=args.lam, learning_rate=args.lr, steps=args.steps,
                                loss_form=args.loss_form, seed=args.seed)
    fit = train_transform(data, assignment, centroids, tcfg)
    bundle = _existing_bundle(args.out)
    bundle.transform, bundle.centroids = fit.transform, centroids
    bundle.metadata.update({"transform_config": vars(tcfg), "transform_status": fit.status,
                            "optimizer": fit.optimizer})
    save_bundle(bundle, args.out)
    trace = args.trace or str(Path(args.out).with_suffix("")) + "_loss.csv"
    write_loss_trace(fit.losses, trace)
    print(f"transform: {fit.status}; final loss {fit.final_loss:.6g}")


def _clf_config(args):
    return ClassifierTrainConfig(learning_rate=args.lr, steps=args.steps, batch_size=args.batch_size,
                                 weight_decay=args.weight_decay, seed=args.seed)


def cmd_fit_erm(args):
    data = _load(args)
    ccfg = _clf_config(args)
    bundle = _existing_bundle(args.out)
    bundle.erm = train_erm_head(data, ccfg)
    bundle.metadata["erm_config"] = vars(ccfg)
    save_bundle(bundle, args.out)


def cmd_fit_debiased(args):
    data = _load(args)
    bundle = load_bundle(args.bundle)
    if bundle.transform is None or bundle.centroids is None:
        raise NSFError("bundle needs a transform and centroids; run fit-transform first")
    assignment = assign_groups(data, bundle.centroids)
    ccfg = _clf_config(args)
    sampler = build_sampler(data, bundle.transform, bundle.centroids, assignment,
                            batch_size=ccfg.batch_size or 128, seed=args.seed, reference=args.reference)
    bundle.debiased = train_debiased_head(data, bundle.transform, sampler, ccfg)
    bundle.metadata.update({"debiased_config": vars(ccfg), "sampler": sampler.summary()})
    save_bundle(bundle, args.out or args.bundle)
    print(json.dumps(sampler.summary()))


def _head(bundle, name):
    clf = bundle.head(name)
    if clf is None:
        raise NSFError(f"bundle has no {name} head")
    return clf


def cmd_predict(args):
    bundle = load_bundle(args.bundle)
    data = _load(args)
    transform = None if args.no_transform else bundle.transform
    preds = predict(_head(bundle, args.head), data.features, transform)
    values = np.asarray(data.label_values)
    with open(args.out, "w") as fh:
        fh.write("index,label,prediction\n")
        for i, (y, p) in enumerate(zip(data.raw_labels, values[preds])):
            fh.write(f"{i},{y},{p}\n")


def cmd_eval(args):
    bundle = load_bundle(args.bundle)
    data = _load(args)
    transform = None if args.no_transform else bundle.transform
    clf = _head(bundle, args.head)
    rep = accuracy_only(clf, data, transform) if data.groups is None else evaluate(clf, data, transform)
    rep.save(args.out)
    print(rep.to_text())


def cmd_ablate(args):
    rows = grid_rows(ablation_grid(_load(args), load_bundle(args.bundle)))
    write_rows(rows, args.out)
    for r in rows:
        print(r)


def cmd_discard_sweep(args):
    fractions = [float(f) for f in args.fractions.split(",")]
    rows = channel_discard_sweep(_load(args), load_bundle(args.bundle), fractions, seed=args.seed)
    write_rows(rows, args.out)


def _parse_seeds(text):
    if "," in text:
        return [int(s) for s in text.split(",") if s]
    return list(range(int(text)))


def _run_overrides(args):
    over = {}
    if args.synth is not None:
        over["synth"] = dict(item.split("=", 1) for item in args.synth)
    if args.data:
        over.setdefault("input", {})["data"] = args.data
    if args.eval_data:
        over.setdefault("input", {})["eval_data"] = args.eval_data
    if args.seeds:
        over.setdefault("run", {})["seeds"] = ",".join(map(str, _parse_seeds(args.seeds)))
    if args.out:
        over.setdefault("run", {})["output"] = args.out
    for item in args.set or ():
        key, value = item.split("=", 1)
        section, name = key.split(".", 1)
        over.setdefault(section, {})[name] = value
    return over


def cmd_run(args):
    cfg = cfgmod.load_config(args.config, _run_overrides(args))
    result = run_pipeline(cfg)
    print(summary_text(result.summary))
    print(f"outputs in {result.output_dir}")


def cmd_validate(args):
    problems = cfgmod.validate_config(args.config)
    for p in problems:
        print(p)
    if problems:
        return 1
    print("config OK")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="nsf", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, required=True):
        sp.add_argument("--data", required=required)
        sp.add_argument("--format", choices=FORMATS)

    sp = sub.add_parser("synth", help="generate a bias-sampled synthetic dataset")
    sp.add_argument("--n", type=int, default=4000)
    sp.add_argument("--dim", type=int, default=12)
    sp.add_argument("--rho", type=float, default=0.9)
    sp.add_argument("--bias-scale", type=float, default=3.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=FORMATS)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("convert", help="convert a dataset between csv and binary")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.add_argument("--from-format", choices=FORMATS)
    sp.add_argument("--to-format", choices=FORMATS)
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("inspect", help="print dataset shape and class/group sizes")
    data_args(sp)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("groups", help="U/V split, bias flags and centroids")
    data_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_groups)

    t = TransformTrainConfig()
    sp = sub.add_parser("fit-transform", help="learn the channel-wise affine transform")
    data_args(sp)
    sp.add_argument("--groups", help="groups report JSON to take centroids from")
    sp.add_argument("--lambda", dest="lam", type=float, default=t.lam)
    sp.add_argument("--lr", type=float, default=t.learning_rate)
    sp.add_argument("--steps", type=int, default=t.steps)
    sp.add_argument("--loss-form", choices=("squared", "l2norm"), default=t.loss_form)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trace", help="loss trace CSV (default: <out>_loss.csv)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit_transform)

    c = ClassifierTrainConfig()

    def clf_args(sp):
        sp.add_argument("--lr", type=float, default=c.learning_rate)
        sp.add_argument("--steps", type=int, default=c.steps)
        sp.add_argument("--batch-size", type=int, default=c.batch_size)
        sp.add_argument("--weight-decay", type=float, default=c.weight_decay)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("fit-erm", help="train the average-loss baseline head")
    data_args(sp)
    clf_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit_erm)

    sp = sub.add_parser("fit-debiased", help="train the balanced head on transformed features")
    data_args(sp)
    clf_args(sp)
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--reference", choices=("invariant", "transformed"), default="invariant")
    sp.add_argument("--out", help="output bundle (default: update --bundle)")
    sp.set_defaults(func=cmd_fit_debiased)

    for name, func, helptext in (
        ("predict", cmd_predict, "write predictions as CSV"),
        ("eval", cmd_eval, "worst-group and mean accuracy"),
    ):
        sp = sub.add_parser(name, help=helptext)
        data_args(sp)
        sp.add_argument("--bundle", required=True)
        sp.add_argument("--head", choices=("erm", "debiased"), default="debiased")
        sp.add_argument("--no-transform", action="store_true")
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=func)

    sp = sub.add_parser("ablate", help="evaluate {erm, debiased} x {x, t(x)}")
    data_args(sp)
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("discard-sweep", help="WGA after zeroing lowest-|w| or random channels")
    data_args(sp)
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--fractions", default="0,0.1,0.25,0.5")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_discard_sweep)

    sp = sub.add_parser("run", help="full pipeline from a config file and/or flags")
    sp.add_argument("--config")
    sp.add_argument("--synth", nargs="*", metavar="KEY=VALUE",
                    help="synthetic data, e.g. --synth rho=0.9 B=3 dim=12 n=4000")
    sp.add_argument("--data")
    sp.add_argument("--eval-data")
    sp.add_argument("--seeds", help="seed count (e.g. 10) or comma list (e.g. 0,3,7)")
    sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("validate", help="check a run config and list every problem")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("NSF_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except (NSFError, OSError, ValueError) as exc:
        print(f"nsf {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
