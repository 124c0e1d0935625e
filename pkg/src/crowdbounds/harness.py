"""Data ingestion, experiment orchestration and result emission.

Experiments are described by a JSON-serialisable config, run trial by trial
with per-trial derived generators (so serial and pooled execution produce the
same rows), and emitted as a CSV plus an equivalent JSON-lines file whose
only nondeterministic content is a timestamp header line.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bnd
from .aggregate import (
    bound_optimal_weights,
    iwmv,
    majority_vote,
    one_step_wmv,
    oracle_map_predict,
    oracle_map_weights_hds,
    weighted_majority_vote,
)
from .core import (
    AssignmentModel,
    DomainError,
    EmptyMatrix,
    LabelMatrix,
    LabelSet,
    Prior,
    WorkerModel,
    error_rate,
)
from .em import EmConfig, em_fit, em_map_predict
from .simulate import (
    SimConfig,
    derive_rng,
    make_misspecified_dataset,
    sample_workers_beta,
    simulate_dataset,
)

RESULT_COLUMNS = ("scenario", "method", "sweep", "trial", "error_rate",
                  "iterations", "seconds", "bound_upper", "bound_lower",
                  "condition", "error")

KNOWN_METHODS = ("mv", "wmv", "iwmv", "iwmv-log", "oswmv", "em-gds",
                 "em-hds", "oracle-map")


class ParseError(ValueError):
    """A CSV line could not be parsed; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateLabel(ValueError):
    """The same worker labelled the same item twice."""

    def __init__(self, worker, item):
        self.worker = worker
        self.item = item
        super().__init__(f"duplicate label for worker {worker!r}, item {item!r}")


class UnknownLabel(ValueError):
    """A label token is not a member of the declared label set."""


def load_labels(path, fmt: str = "csv-triples",
                label_set: LabelSet | None = None):
    """Read labels from disk into a :class:`LabelMatrix` plus id maps.

    ``csv-triples`` expects a header ``worker,item,label`` and one observed
    label per row; workers and items receive contiguous internal indices in
    first-appearance order and the original ids are returned for
    round-tripping. ``dense-csv`` expects a headerless integer grid, one row
    per worker, with 0 marking missing entries.
    """
    if label_set is None:
        raise DomainError("a label set (class count) is required")
    if fmt == "dense-csv":
        with open(path, newline="") as handle:
            rows = [row for row in csv.reader(handle) if row]
        if not rows:
            raise EmptyMatrix(f"{path} contains no data")
        grid = []
        for line_no, row in enumerate(rows, start=1):
            try:
                grid.append([int(cell) for cell in row])
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from exc
        from .core import validate_label_matrix
        matrix = validate_label_matrix(grid, label_set)
        return (matrix, [str(i) for i in range(matrix.num_workers)],
                [str(j) for j in range(matrix.num_items)])
    if fmt != "csv-triples":
        raise DomainError(f"unknown label format {fmt!r}")

    worker_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    triples: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int]] = set()
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise EmptyMatrix(f"{path} is empty")
        if [cell.strip().lower() for cell in header] != ["worker", "item", "label"]:
            raise ParseError(1, "expected header 'worker,item,label'")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(line_no, f"expected 3 fields, got {len(row)}")
            worker, item, token = (cell.strip() for cell in row)
            try:
                raw_label = int(token)
            except ValueError as exc:
                raise ParseError(line_no, f"label {token!r} is not an integer") from exc
            internal = int(label_set.to_internal(raw_label))
            if not 1 <= internal <= label_set.num_classes:
                raise UnknownLabel(
                    f"line {line_no}: label {raw_label} is not one of the "
                    f"{label_set.num_classes} classes")
            i = worker_index.setdefault(worker, len(worker_index))
            j = item_index.setdefault(item, len(item_index))
            if (i, j) in seen:
                raise DuplicateLabel(worker, item)
            seen.add((i, j))
            triples.append((i, j, internal))
    if not triples:
        raise EmptyMatrix(f"{path} contains no labels")
    data = np.zeros((len(worker_index), len(item_index)), dtype=np.int64)
    for i, j, label in triples:
        data[i, j] = label
    return (LabelMatrix(data, label_set.num_classes),
            list(worker_index), list(item_index))


def load_truth(path, label_set: LabelSet, item_ids: list[str]) -> np.ndarray:
    """Read an ``item,label`` CSV and align it with the loaded item order."""
    by_item: dict[str, int] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise EmptyMatrix(f"{path} is empty")
        if [cell.strip().lower() for cell in header] != ["item", "label"]:
            raise ParseError(1, "expected header 'item,label'")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(line_no, f"expected 2 fields, got {len(row)}")
            item, token = (cell.strip() for cell in row)
            try:
                raw_label = int(token)
            except ValueError as exc:
                raise ParseError(line_no, f"label {token!r} is not an integer") from exc
            internal = int(label_set.to_internal(raw_label))
            if not 1 <= internal <= label_set.num_classes:
                raise UnknownLabel(f"line {line_no}: label {raw_label} is invalid")
            if item in by_item:
                raise DuplicateLabel("<truth>", item)
            by_item[item] = internal
    missing = [item for item in item_ids if item not in by_item]
    if missing:
        raise DomainError(f"truth file lacks labels for {len(missing)} items "
                          f"(first: {missing[0]!r})")
    return np.array([by_item[item] for item in item_ids], dtype=np.int64)


def subsample_labels(labels: LabelMatrix, keep_prob: float,
                     seed: int = 0) -> LabelMatrix:
    """Keep every observed label independently with the given probability."""
    if not 0 <= keep_prob <= 1:
        raise DomainError("keep probability must lie in [0, 1]")
    rng = derive_rng(seed, "subsample")
    keep = rng.random(labels.data.shape) < keep_prob
    return LabelMatrix(np.where(keep, labels.data, 0), labels.num_classes)


@dataclass(frozen=True)
class DatasetSummary:
    num_classes: int
    num_workers: int
    num_items: int
    num_labels: int
    density: float
    labels_per_worker: np.ndarray
    mean_worker_accuracy: float | None = None

    def to_dict(self) -> dict:
        out = {
            "num_classes": self.num_classes,
            "num_workers": self.num_workers,
            "num_items": self.num_items,
            "num_labels": self.num_labels,
            "density": self.density,
            "labels_per_worker": self.labels_per_worker.tolist(),
        }
        if self.mean_worker_accuracy is not None:
            out["mean_worker_accuracy"] = self.mean_worker_accuracy
        return out


def summarize_dataset(labels: LabelMatrix, truth=None) -> DatasetSummary:
    """Counts, density and (given truth) the average worker accuracy."""
    per_worker = labels.labels_per_worker()
    accuracy = None
    if truth is not None:
        truth = np.asarray(truth)
        agree = ((labels.data == truth[None, :]) & labels.mask).sum(axis=1)
        with_labels = per_worker > 0
        if with_labels.any():
            accuracy = float(np.mean(agree[with_labels] / per_worker[with_labels]))
    return DatasetSummary(
        num_classes=labels.num_classes,
        num_workers=labels.num_workers,
        num_items=labels.num_items,
        num_labels=labels.num_labels,
        density=labels.num_labels / (labels.num_workers * labels.num_items),
        labels_per_worker=per_worker,
        mean_worker_accuracy=accuracy,
    )


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    method: str
    sweep: float
    trial: int
    error_rate: float | None
    iterations: int | None
    seconds: float | None
    bound_upper: float | None
    bound_lower: float | None
    condition: bool | None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "method": self.method,
            "sweep": self.sweep, "trial": self.trial,
            "error_rate": self.error_rate, "iterations": self.iterations,
            "seconds": self.seconds, "bound_upper": self.bound_upper,
            "bound_lower": self.bound_lower, "condition": self.condition,
            "error": self.error,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """A full experiment: scenario, sweep grid, methods and seeding.

    ``scenario`` is one of ``hds-sweep`` (synthetic single-accuracy data,
    sweeping one of wbar/M/N/q), ``misspecified`` (block-accuracy data,
    sweep ignored) and ``dataset`` (a labels file subsampled at rate s).
    """

    scenario: str
    methods: tuple
    trials: int
    sweep_variable: str
    sweep_grid: tuple
    master_seed: int
    output: str | None = None
    sim: dict = field(default_factory=dict)
    misspec: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    record_timing: bool = False
    fixed_iterations: int | None = None
    max_workers: int = 1
    record_bounds: bool = True

    def __post_init__(self):
        if self.scenario not in ("hds-sweep", "misspecified", "dataset"):
            raise DomainError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise DomainError("at least one trial is required")
        if not self.methods:
            raise DomainError("at least one method is required")
        unknown = [m for m in self.methods if m not in KNOWN_METHODS]
        if unknown:
            raise DomainError(f"unknown methods: {unknown}")
        if not self.sweep_grid:
            raise DomainError("the sweep grid must not be empty")
        if self.sweep_variable not in ("wbar", "M", "N", "q", "s", "none"):
            raise DomainError(f"unknown sweep variable {self.sweep_variable!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        sweep = raw.get("sweep", {"variable": "none", "grid": [0.0]})
        return cls(
            scenario=raw["scenario"],
            methods=tuple(raw["methods"]),
            trials=int(raw.get("trials", 1)),
            sweep_variable=sweep.get("variable", "none"),
            sweep_grid=tuple(sweep.get("grid", [0.0])),
            master_seed=int(raw.get("master_seed", 0)),
            output=raw.get("output"),
            sim=dict(raw.get("sim", {})),
            misspec=dict(raw.get("misspec", {})),
            dataset=dict(raw.get("dataset", {})),
            record_timing=bool(raw.get("record_timing", False)),
            fixed_iterations=raw.get("fixed_iterations"),
            max_workers=int(raw.get("max_workers", 1)),
            record_bounds=bool(raw.get("record_bounds", True)),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as handle:
            return cls.from_dict(json.load(handle))


_SIM_DEFAULTS = {"M": 31, "N": 200, "L": 3, "q": 0.3, "beta_a": 2.3,
                 "beta_b": 2.0, "wbar": None, "beta_tol": 0.01}
_MISSPEC_DEFAULTS = {"M1": 15, "M2": 15, "N1": 300, "N2": 300,
                     "block": [[0.9, 0.6], [0.5, 0.7]], "q": 0.3}


def _hds_trial_data(config: ExperimentConfig, sweep_index: int, sweep_value,
                    trial: int):
    """Simulate one single-accuracy-model trial of an hds-sweep scenario."""
    sim = {**_SIM_DEFAULTS, **config.sim}
    var = config.sweep_variable
    if var in ("M", "N"):
        sim[var] = int(sweep_value)
    elif var == "q":
        sim["q"] = float(sweep_value)
    elif var == "wbar":
        sim["wbar"] = float(sweep_value)
    M, N, L, q = int(sim["M"]), int(sim["N"]), int(sim["L"]), float(sim["q"])
    if sim["wbar"] is not None:
        target = float(sim["wbar"])
        a = sim["beta_b"] * target / (1.0 - target)
    else:
        a = float(sim["beta_a"])
        target = a / (a + float(sim["beta_b"]))
    seed = int(derive_rng(config.master_seed, "trial-seed", sweep_index, trial)
               .integers(0, 2 ** 62))
    accuracies = sample_workers_beta(M, a, float(sim["beta_b"]), target,
                                     tol=float(sim["beta_tol"]), seed=seed)
    model = WorkerModel.hds(accuracies, L)
    sim_config = SimConfig(M, N, L, Prior.uniform(L),
                           AssignmentModel.constant(q), model, seed=seed)
    out = simulate_dataset(sim_config)
    return out.labels, out.truth, {"accuracies": accuracies, "q": q, "L": L}


def _misspec_trial_data(config: ExperimentConfig, trial: int):
    spec = {**_MISSPEC_DEFAULTS, **config.misspec}
    seed = int(derive_rng(config.master_seed, "trial-seed", 0, trial)
               .integers(0, 2 ** 62))
    out = make_misspecified_dataset(int(spec["M1"]), int(spec["M2"]),
                                    int(spec["N1"]), int(spec["N2"]),
                                    spec["block"], float(spec["q"]), seed=seed)
    return out.labels, out.truth, {}


def _run_method(method: str, labels: LabelMatrix, context: dict,
                fixed_iterations: int | None):
    """Return (predictions, iterations) for one method on one dataset."""
    if method == "mv":
        return majority_vote(labels), None
    if method == "oswmv":
        return one_step_wmv(labels), 1
    if method in ("iwmv", "iwmv-log"):
        mode = "linear" if method == "iwmv" else "log"
        if fixed_iterations is not None:
            result = iwmv(labels, max_iters=fixed_iterations, weight_mode=mode,
                          stop_on_convergence=False)
        else:
            result = iwmv(labels, weight_mode=mode)
        return result.predictions, result.iterations
    if method in ("em-gds", "em-hds"):
        kind = method.split("-")[1]
        if fixed_iterations is not None:
            em_config = EmConfig(model_kind=kind, max_iters=fixed_iterations,
                                 stop_on_convergence=False)
        else:
            em_config = EmConfig(model_kind=kind)
        result = em_fit(labels, em_config)
        return em_map_predict(result), result.iterations
    if method == "wmv":
        accuracies = context.get("accuracies")
        if accuracies is None:
            raise DomainError("the oracle-weighted vote needs true accuracies")
        weights = bound_optimal_weights(accuracies, labels.num_classes)
        return weighted_majority_vote(labels, weights), None
    if method == "oracle-map":
        accuracies = context.get("accuracies")
        if accuracies is None:
            raise DomainError("the oracle MAP rule needs the true model")
        L = labels.num_classes
        model = WorkerModel.hds(accuracies, L)
        return oracle_map_predict(labels, model, Prior.uniform(L)), None
    raise DomainError(f"unknown method {method!r}")


def _method_bound(method: str, labels: LabelMatrix, context: dict):
    """Mean-error bound columns for methods with closed-form quantities."""
    accuracies = context.get("accuracies")
    if accuracies is None:
        return None, None, None
    L = labels.num_classes
    q = context.get("q", 1.0)
    if method == "oracle-map":
        weights = oracle_map_weights_hds(accuracies, L)
    elif method == "wmv":
        weights = bound_optimal_weights(accuracies, L)
    elif method == "mv":
        weights = np.ones(labels.num_workers)
    elif method == "oswmv" and q == 1.0 and L == 2:
        report = bnd.one_step_wmv_bound(accuracies, labels.num_items)
        return (report.values["bound"], None,
                report.condition_holds["upper"])
    else:
        return None, None, None
    quantities = bnd.quantities_wmv_hds(q, weights, accuracies, L)
    report = bnd.mean_error_bounds(quantities, L)
    return (report.values["upper"], report.values["lower"],
            report.condition_holds["upper"])


def _run_trial(config: ExperimentConfig, sweep_index: int, sweep_value,
               trial: int) -> list[ResultRow]:
    if config.scenario == "hds-sweep":
        labels, truth, context = _hds_trial_data(config, sweep_index,
                                                 sweep_value, trial)
    elif config.scenario == "misspecified":
        labels, truth, context = _misspec_trial_data(config, trial)
    else:
        labels, truth, context = config.dataset["_labels"], \
            config.dataset.get("_truth"), {}
        seed = int(derive_rng(config.master_seed, "trial-seed", sweep_index,
                              trial).integers(0, 2 ** 62))
        labels = subsample_labels(labels, float(sweep_value), seed=seed)
    rows = []
    for method in config.methods:
        started = time.perf_counter()
        try:
            predictions, iterations = _run_method(
                method, labels, context, config.fixed_iterations)
            elapsed = time.perf_counter() - started
            rate = error_rate(predictions, truth) if truth is not None else None
            upper = lower = condition = None
            if config.record_bounds and config.scenario == "hds-sweep":
                upper, lower, condition = _method_bound(method, labels, context)
            rows.append(ResultRow(
                config.scenario, method, float(sweep_value), trial, rate,
                iterations, elapsed if config.record_timing else None,
                upper, lower, condition))
        except Exception as exc:  # keep the sweep alive; report per row
            rows.append(ResultRow(
                config.scenario, method, float(sweep_value), trial, None,
                None, None, None, None, None, error=str(exc)))
    return rows


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Run every (sweep value, trial, method) cell and emit result files.

    Each trial derives its own generator from (master seed, sweep, trial),
    so the row content does not depend on execution order; rows are sorted
    before emission.
    """
    if config.scenario == "dataset" and "_labels" not in config.dataset:
        label_set = LabelSet(int(config.dataset.get("L", 2)),
                             bool(config.dataset.get("binary", False)))
        labels, _, item_ids = load_labels(config.dataset["path"],
                                          config.dataset.get("format", "csv-triples"),
                                          label_set)
        truth = None
        if config.dataset.get("truth"):
            truth = load_truth(config.dataset["truth"], label_set, item_ids)
        config.dataset["_labels"] = labels
        config.dataset["_truth"] = truth

    tasks = [(si, sv, t)
             for si, sv in enumerate(config.sweep_grid)
             for t in range(config.trials)]
    if config.max_workers > 1:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            chunks = list(pool.map(
                lambda args: _run_trial(config, *args), tasks))
    else:
        chunks = [_run_trial(config, *task) for task in tasks]
    rows = [row for chunk in chunks for row in chunk]
    method_order = {m: i for i, m in enumerate(config.methods)}
    grid_order = {float(v): i for i, v in enumerate(config.sweep_grid)}
    rows.sort(key=lambda r: (grid_order[r.sweep], r.trial,
                             method_order[r.method]))
    if config.output:
        write_results(rows, config.output)
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(rows: list[ResultRow], stem: str) -> tuple[str, str]:
    """Write ``<stem>.csv`` and ``<stem>.jsonl``.

    Both files start with a timestamp line (a ``#`` comment in the CSV, a
    ``_meta`` record in the JSONL); everything after it is a pure function
    of the rows.
    """
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    csv_path, jsonl_path = f"{stem}.csv", f"{stem}.jsonl"
    with open(csv_path, "w", newline="") as handle:
        handle.write(f"# generated_at={stamp}\n")
        writer = csv.writer(handle)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            record = row.to_dict()
            writer.writerow([_format_cell(record[col]) for col in RESULT_COLUMNS])
    with open(jsonl_path, "w") as handle:
        handle.write(json.dumps({"_meta": {"generated_at": stamp}}) + "\n")
        for row in rows:
            handle.write(json.dumps(row.to_dict()) + "\n")
    return csv_path, jsonl_path


def summarize_rows(rows: list[ResultRow]) -> dict:
    """Aggregate raw rows to per-(sweep, method) means for quick reporting."""
    table: dict[tuple, dict] = {}
    for row in rows:
        if row.error_rate is None:
            continue
        cell = table.setdefault((row.sweep, row.method), {
            "errors": [], "iterations": [], "bounds": []})
        cell["errors"].append(row.error_rate)
        if row.iterations is not None:
            cell["iterations"].append(row.iterations)
        if row.bound_upper is not None:
            cell["bounds"].append(row.bound_upper)
    out = {}
    for (sweep, method), cell in sorted(table.items()):
        out[f"{method}@{sweep}"] = {
            "mean_error": float(np.mean(cell["errors"])),
            "std_error": float(np.std(cell["errors"])),
            "mean_iterations": (float(np.mean(cell["iterations"]))
                                if cell["iterations"] else None),
            "mean_bound_upper": (float(np.mean(cell["bounds"]))
                                 if cell["bounds"] else None),
            "trials": len(cell["errors"]),
        }
    return out
