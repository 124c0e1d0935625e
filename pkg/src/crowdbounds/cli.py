"""Command-line entry points: simulate, aggregate, bounds, experiment,
summarize.

Exit codes: 0 on success, 1 for validation problems (bad arguments, bad
files, domain errors), 2 for unexpected runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import bounds as bnd
from .core import DomainError, LabelSet, Prior, AssignmentModel, WorkerModel
from .harness import (
    ExperimentConfig,
    load_labels,
    load_truth,
    run_experiment,
    subsample_labels,
    summarize_dataset,
    summarize_rows,
    write_results,
    _run_method,
)
from .core import error_rate
from .simulate import SimConfig, sample_workers_beta, simulate_dataset


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2; usage errors are 1 here
        raise UsageError(message)


def _write_triples(path, labels, label_set: LabelSet):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["worker", "item", "label"])
        workers, items = np.nonzero(labels.mask)
        external = label_set.to_external(labels.data)
        for i, j in zip(workers, items):
            writer.writerow([f"w{i}", f"i{j}", int(external[i, j])])


def _write_truth(path, truth, label_set: LabelSet):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["item", "label"])
        external = label_set.to_external(truth)
        for j, label in enumerate(external):
            writer.writerow([f"i{j}", int(label)])


def _cmd_simulate(args) -> int:
    label_set = LabelSet(args.classes, args.binary)
    if args.accuracies:
        accuracies = np.array([float(x) for x in args.accuracies.split(",")])
        if accuracies.size != args.workers:
            raise DomainError("need one accuracy per worker")
    else:
        target = args.target_mean
        if target is None:
            target = args.beta_a / (args.beta_a + args.beta_b)
        accuracies = sample_workers_beta(args.workers, args.beta_a, args.beta_b,
                                         target, tol=args.tol, seed=args.seed)
    config = SimConfig(args.workers, args.items, args.classes,
                       Prior.uniform(args.classes),
                       AssignmentModel.constant(args.q),
                       WorkerModel.hds(accuracies, args.classes),
                       seed=args.seed)
    out = simulate_dataset(config)
    _write_triples(args.out_labels, out.labels, label_set)
    if args.out_truth:
        _write_truth(args.out_truth, out.truth, label_set)
    print(json.dumps({"workers": args.workers, "items": args.items,
                      "labels": out.labels.num_labels,
                      "mean_accuracy": float(accuracies.mean())}))
    return 0


def _cmd_aggregate(args) -> int:
    label_set = LabelSet(args.classes, args.binary)
    labels, _, item_ids = load_labels(args.infile, args.format, label_set)
    predictions, iterations = _run_method(args.method, labels, {}, None)
    if args.out:
        with open(args.out, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["item", "label"])
            external = label_set.to_external(predictions)
            for item, label in zip(item_ids, external):
                writer.writerow([item, int(label)])
    summary = {"method": args.method, "items": len(item_ids)}
    if iterations is not None:
        summary["iterations"] = iterations
    if args.truth:
        truth = load_truth(args.truth, label_set, item_ids)
        summary["error_rate"] = error_rate(predictions, truth)
    print(json.dumps(summary))
    return 0


def _cmd_bounds(args) -> int:
    params = json.loads(args.params)
    scenario = args.scenario
    if scenario == "wmv-hds":
        quantities = bnd.quantities_wmv_hds(
            params["q"], params["weights"], params["accuracies"], params["L"])
        report = bnd.mean_error_bounds(quantities, params["L"])
    elif scenario == "mv-hds":
        report = bnd.mv_bounds_hds(params["q"], params["mean_accuracy"],
                                   params["M"], params["L"])
    elif scenario == "hyperplane":
        quantities = bnd.quantities_hyperplane(
            params["q"], params["weights"], params.get("shift", 0.0),
            params["p_plus"], params["p_minus"])
        report = bnd.mean_error_bounds(quantities, 2)
    elif scenario == "oswmv":
        report = bnd.one_step_wmv_bound(
            params["accuracies"], params["N"],
            rho_convention=params.get("rho_convention", "proof"))
    elif scenario == "general":
        from .core import DecomposableRule
        rule = DecomposableRule(np.asarray(params["scores"], dtype=float),
                                np.asarray(params["shifts"], dtype=float))
        assignment = AssignmentModel(params.get("assignment_kind", "constant"),
                                     params["assignment"])
        model = WorkerModel.gds(np.asarray(params["tables"], dtype=float))
        quantities = bnd.score_quantities(rule, assignment, model)
        report = bnd.mean_error_bounds(quantities)
    else:
        raise UsageError(f"unknown bounds scenario {scenario!r}")
    extra = {}
    if args.epsilon is not None and scenario in ("wmv-hds", "hyperplane", "general"):
        extra = {"high_probability": bnd.high_probability_bound(
            quantities, params.get("N", 1), args.epsilon).to_dict()}
    print(json.dumps({**report.to_dict(), **extra}, indent=2))
    return 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    rows = run_experiment(config)
    if not config.output and args.out:
        write_results(rows, args.out)
    print(json.dumps(summarize_rows(rows), indent=2))
    return 0


def _cmd_summarize(args) -> int:
    label_set = LabelSet(args.classes, args.binary)
    labels, _, item_ids = load_labels(args.infile, args.format, label_set)
    truth = None
    if args.truth:
        truth = load_truth(args.truth, label_set, item_ids)
    if args.subsample is not None:
        labels = subsample_labels(labels, args.subsample, seed=args.seed)
    summary = summarize_dataset(labels, truth).to_dict()
    summary.pop("labels_per_worker")
    print(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crowdbounds",
                     description="Crowd label aggregation, bounds and experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--workers", type=int, required=True)
    sim.add_argument("--items", type=int, required=True)
    sim.add_argument("--classes", type=int, default=2)
    sim.add_argument("--q", type=float, default=1.0)
    sim.add_argument("--beta-a", type=float, default=2.3)
    sim.add_argument("--beta-b", type=float, default=2.0)
    sim.add_argument("--target-mean", type=float, default=None)
    sim.add_argument("--tol", type=float, default=0.01)
    sim.add_argument("--accuracies", default=None,
                     help="comma-separated per-worker accuracies "
                          "(overrides the beta sampler)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--binary", action="store_true")
    sim.add_argument("--out-labels", required=True)
    sim.add_argument("--out-truth", default=None)
    sim.set_defaults(func=_cmd_simulate)

    agg = sub.add_parser("aggregate", help="aggregate a labels file")
    agg.add_argument("--method", required=True,
                     choices=["mv", "iwmv", "iwmv-log", "oswmv",
                              "em-gds", "em-hds"])
    agg.add_argument("--in", dest="infile", required=True)
    agg.add_argument("--truth", default=None)
    agg.add_argument("--classes", type=int, default=2)
    agg.add_argument("--binary", action="store_true")
    agg.add_argument("--format", default="csv-triples",
                     choices=["csv-triples", "dense-csv"])
    agg.add_argument("--out", default=None)
    agg.set_defaults(func=_cmd_aggregate)

    bds = sub.add_parser("bounds", help="evaluate closed-form bounds")
    bds.add_argument("--scenario", required=True,
                     choices=["wmv-hds", "hyperplane", "mv-hds", "oswmv",
                              "general"])
    bds.add_argument("--params", required=True,
                     help="JSON object with the scenario's parameters")
    bds.add_argument("--epsilon", type=float, default=None,
                     help="also report the high-probability guarantee")
    bds.set_defaults(func=_cmd_bounds)

    exp = sub.add_parser("experiment", help="run a configured experiment")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", default=None)
    exp.set_defaults(func=_cmd_experiment)

    summ = sub.add_parser("summarize", help="summarize a labels file")
    summ.add_argument("--in", dest="infile", required=True)
    summ.add_argument("--truth", default=None)
    summ.add_argument("--classes", type=int, default=2)
    summ.add_argument("--binary", action="store_true")
    summ.add_argument("--format", default="csv-triples",
                      choices=["csv-triples", "dense-csv"])
    summ.add_argument("--subsample", type=float, default=None)
    summ.add_argument("--seed", type=int, default=0)
    summ.set_defaults(func=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"unexpected failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
