"""Domain types shared by the aggregation rules, the simulator and the EM fitter.

Labels live internally on ``{1, ..., L}`` with ``0`` marking a missing entry.
Binary problems use the common external convention ``{+1, -1}``; the mapping
``+1 -> 1`` and ``-1 -> 2`` is applied only at I/O boundaries and inside the
hyperplane rule, so every aggregation rule is written once against the
internal coding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Confusion-matrix entries are floored at this value before taking logs so
# that estimated (or degenerate) zero probabilities stay finite.
LOG_FLOOR = 1e-12

PROB_ATOL = 1e-9


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


class DimensionMismatch(ValueError):
    """Shapes of the supplied model, rule and label matrix do not agree."""


class LengthMismatch(ValueError):
    """Two vectors that must be index-aligned have different lengths."""


class EmptyMatrix(ValueError):
    """The label grid contains no cells at all."""


class NotBinary(ValueError):
    """A binary-only operation was invoked with more than two classes."""


class OutOfRangeLabel(ValueError):
    """A grid entry is not a valid label. Positions are 1-based."""

    def __init__(self, worker: int, item: int, value):
        self.worker = worker
        self.item = item
        self.value = value
        super().__init__(f"label {value!r} at worker {worker}, item {item} "
                         f"is not a valid class or 0")


@dataclass(frozen=True)
class LabelSet:
    """The set of classes plus the external coding convention.

    With ``binary_convention`` set (only allowed for two classes), external
    data uses ``{+1, -1}`` while the internal classes remain ``{1, 2}``.
    """

    num_classes: int
    binary_convention: bool = False

    def __post_init__(self):
        if self.num_classes < 2:
            raise DomainError("at least two classes are required")
        if self.binary_convention and self.num_classes != 2:
            raise DomainError("the +/-1 convention only applies to two classes")

    def to_internal(self, values) -> np.ndarray:
        """Map external labels to internal classes; 0 stays 0.

        Unrecognised external values are mapped to -1 so the caller can
        report them (they are never valid internally).
        """
        arr = np.asarray(values)
        if not self.binary_convention:
            return arr.copy()
        out = np.full(arr.shape, -1, dtype=np.int64)
        out[arr == 0] = 0
        out[arr == 1] = 1
        out[arr == -1] = 2
        return out

    def to_external(self, values) -> np.ndarray:
        arr = np.asarray(values)
        if not self.binary_convention:
            return arr.copy()
        out = np.zeros(arr.shape, dtype=np.int64)
        out[arr == 1] = 1
        out[arr == 2] = -1
        return out


@dataclass(frozen=True)
class LabelMatrix:
    """Observed worker-by-item labels with 0 for missing entries.

    ``mask`` is derived on construction: ``mask[i, j]`` is True exactly when
    worker ``i`` labelled item ``j``.
    """

    data: np.ndarray
    num_classes: int
    mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.int64)
        if data.ndim != 2:
            raise DomainError("label grid must be two-dimensional")
        if data.size == 0:
            raise EmptyMatrix("label grid has no cells")
        if self.num_classes < 2:
            raise DomainError("at least two classes are required")
        if data.min() < 0 or data.max() > self.num_classes:
            raise DomainError("entries must lie in {0, ..., num_classes}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", data != 0)

    @property
    def num_workers(self) -> int:
        return self.data.shape[0]

    @property
    def num_items(self) -> int:
        return self.data.shape[1]

    @property
    def num_labels(self) -> int:
        return int(self.mask.sum())

    def labels_per_worker(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def labels_per_item(self) -> np.ndarray:
        return self.mask.sum(axis=0)


def validate_label_matrix(raw, label_set: LabelSet) -> LabelMatrix:
    """Check a raw integer grid and wrap it as a :class:`LabelMatrix`.

    The grid must be rectangular with entries in ``{0, 1, ..., L}`` (or
    ``{0, +1, -1}`` under the binary convention); the first offending entry
    is reported with 1-based worker/item positions.
    """
    try:
        arr = np.asarray(raw)
    except ValueError as exc:
        raise DomainError("label grid must be rectangular") from exc
    if arr.dtype == object or arr.ndim != 2:
        raise DomainError("label grid must be rectangular")
    if arr.size == 0:
        raise EmptyMatrix("label grid has no cells")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise DomainError("labels must be integers")
        arr = arr.astype(np.int64)
    internal = label_set.to_internal(arr)
    bad = (internal < 0) | (internal > label_set.num_classes)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise OutOfRangeLabel(int(i) + 1, int(j) + 1, arr[i, j])
    return LabelMatrix(internal, label_set.num_classes)


@dataclass(frozen=True)
class Prior:
    """Class prevalence probabilities."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise DomainError("prior must be a vector over at least two classes")
        if probs.min() < 0:
            raise DomainError("prior probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_ATOL:
            raise DomainError("prior must sum to one")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, num_classes: int) -> "Prior":
        return cls(np.full(num_classes, 1.0 / num_classes))

    @property
    def num_classes(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class AssignmentModel:
    """Probability that each worker labels each item.

    Three flavours: a full worker-by-item matrix, a per-worker vector
    (every item equally likely for a given worker), or a single constant.
    All probabilities must lie in (0, 1].
    """

    kind: str
    value: object

    def __post_init__(self):
        if self.kind not in ("matrix", "vector", "constant"):
            raise DomainError(f"unknown assignment kind {self.kind!r}")
        value = np.asarray(self.value, dtype=float)
        expected_ndim = {"matrix": 2, "vector": 1, "constant": 0}[self.kind]
        if value.ndim != expected_ndim:
            raise DimensionMismatch(
                f"{self.kind} assignment expects {expected_ndim}-d probabilities")
        if value.size == 0 or value.min() <= 0 or value.max() > 1:
            raise DomainError("assignment probabilities must lie in (0, 1]")
        object.__setattr__(self, "value", value if self.kind != "constant" else float(value))

    @classmethod
    def matrix(cls, probs) -> "AssignmentModel":
        return cls("matrix", probs)

    @classmethod
    def vector(cls, probs) -> "AssignmentModel":
        return cls("vector", probs)

    @classmethod
    def constant(cls, prob: float) -> "AssignmentModel":
        return cls("constant", prob)

    def worker_probs(self, num_workers: int) -> np.ndarray:
        """Per-worker probabilities; only defined for the collapsed kinds."""
        if self.kind == "vector":
            if self.value.size != num_workers:
                raise DimensionMismatch("assignment vector length != worker count")
            return np.asarray(self.value)
        if self.kind == "constant":
            return np.full(num_workers, self.value)
        raise DomainError("a matrix assignment has no per-worker collapse")

    def full(self, num_workers: int, num_items: int) -> np.ndarray:
        if self.kind == "matrix":
            if self.value.shape != (num_workers, num_items):
                raise DimensionMismatch("assignment matrix shape mismatch")
            return np.asarray(self.value)
        return np.broadcast_to(
            self.worker_probs(num_workers)[:, None], (num_workers, num_items))


@dataclass(frozen=True)
class WorkerModel:
    """Per-worker reliability under one of the three Dawid-Skene variants.

    * ``gds``  - a full L-by-L conditional table per worker,
    * ``sds``  - per-class accuracies, errors spread evenly off-diagonal,
    * ``hds``  - a single accuracy per worker.

    Everything downstream consumes the expanded ``gds`` tables, so the two
    restricted variants behave exactly like their expansions.
    """

    kind: str
    params: np.ndarray
    num_classes: int

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        L = self.num_classes
        if L < 2:
            raise DomainError("at least two classes are required")
        if self.kind == "gds":
            if params.ndim != 3 or params.shape[1:] != (L, L):
                raise DimensionMismatch("gds tables must have shape (M, L, L)")
            if params.min() < -PROB_ATOL or params.max() > 1 + PROB_ATOL:
                raise DomainError("confusion probabilities must lie in [0, 1]")
            if np.abs(params.sum(axis=2) - 1.0).max() > PROB_ATOL:
                raise DomainError("each confusion row must sum to one")
        elif self.kind == "sds":
            if params.ndim != 2 or params.shape[1] != L:
                raise DimensionMismatch("sds accuracies must have shape (M, L)")
            if params.min() < 0 or params.max() > 1:
                raise DomainError("per-class accuracies must lie in [0, 1]")
        elif self.kind == "hds":
            if params.ndim != 1:
                raise DimensionMismatch("hds accuracies must have shape (M,)")
            if params.size and (params.min() < 0 or params.max() > 1):
                raise DomainError("accuracies must lie in [0, 1]")
        else:
            raise DomainError(f"unknown worker model kind {self.kind!r}")
        object.__setattr__(self, "params", params)

    @classmethod
    def gds(cls, tables) -> "WorkerModel":
        tables = np.asarray(tables, dtype=float)
        return cls("gds", tables, tables.shape[-1])

    @classmethod
    def sds(cls, per_class_accuracies) -> "WorkerModel":
        acc = np.asarray(per_class_accuracies, dtype=float)
        return cls("sds", acc, acc.shape[-1])

    @classmethod
    def hds(cls, accuracies, num_classes: int) -> "WorkerModel":
        return cls("hds", np.asarray(accuracies, dtype=float), num_classes)

    @property
    def num_workers(self) -> int:
        return self.params.shape[0]

    def as_gds(self) -> np.ndarray:
        """Expand to the full (M, L, L) conditional tables."""
        L = self.num_classes
        if self.kind == "gds":
            return self.params
        if self.kind == "sds":
            diag = self.params
        else:
            diag = np.broadcast_to(self.params[:, None], (self.num_workers, L))
        off = (1.0 - diag) / (L - 1)
        tables = np.repeat(off[:, :, None], L, axis=2)
        idx = np.arange(L)
        tables[:, idx, idx] = diag
        return tables

    def binary_rates(self) -> tuple[np.ndarray, np.ndarray]:
        """Accuracy on positive and on negative items (two classes only)."""
        if self.num_classes != 2:
            raise NotBinary("binary rates require exactly two classes")
        tables = self.as_gds()
        return tables[:, 0, 0], tables[:, 1, 1]


@dataclass(frozen=True)
class DecomposableRule:
    """A prediction rule that scores each class as a per-worker sum.

    ``scores[i, k, h]`` is the contribution to class ``k`` when worker ``i``
    gives label ``h`` (``h = 0`` means missing and must carry one rule-wide
    constant, since missing labels cannot discriminate between classes);
    ``shifts[k]`` is a class offset added once per item.
    """

    scores: np.ndarray
    shifts: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        shifts = np.asarray(self.shifts, dtype=float)
        if scores.ndim != 3 or scores.shape[1] + 1 != scores.shape[2]:
            raise DimensionMismatch("score table must have shape (M, L, L + 1)")
        if shifts.shape != (scores.shape[1],):
            raise DimensionMismatch("shift vector must have one entry per class")
        if not (np.isfinite(scores).all() and np.isfinite(shifts).all()):
            raise DomainError("scores and shifts must be finite")
        missing = scores[:, :, 0]
        if missing.size and np.any(missing != missing.flat[0]):
            raise DomainError("the missing-label score must be one rule-wide constant")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "shifts", shifts)

    @property
    def num_workers(self) -> int:
        return self.scores.shape[0]

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def indicator(cls, num_workers: int, num_classes: int) -> "DecomposableRule":
        """Majority voting: one point to the class the worker named."""
        scores = np.zeros((num_workers, num_classes, num_classes + 1))
        idx = np.arange(num_classes)
        scores[:, idx, idx + 1] = 1.0
        return cls(scores, np.zeros(num_classes))

    @classmethod
    def weighted_indicator(cls, weights, num_classes: int,
                           shifts=None) -> "DecomposableRule":
        """Weighted majority voting with per-worker weights."""
        weights = np.asarray(weights, dtype=float)
        scores = np.zeros((weights.size, num_classes, num_classes + 1))
        idx = np.arange(num_classes)
        scores[:, idx, idx + 1] = weights[:, None]
        if shifts is None:
            shifts = np.zeros(num_classes)
        return cls(scores, np.asarray(shifts, dtype=float))

    @classmethod
    def oracle_map(cls, model: WorkerModel, prior: Prior) -> "DecomposableRule":
        """The Bayes-classifier rule: log confusion entries plus log prior."""
        if prior.num_classes != model.num_classes:
            raise DimensionMismatch("prior and worker model class counts differ")
        tables = model.as_gds()
        scores = np.zeros(
            (model.num_workers, model.num_classes, model.num_classes + 1))
        scores[:, :, 1:] = np.log(np.clip(tables, LOG_FLOOR, None))
        return cls(scores, np.log(np.clip(prior.probs, LOG_FLOOR, None)))


def normalize_log_posteriors(log_scores: np.ndarray) -> np.ndarray:
    """Turn rows of unnormalised log probabilities into probability rows.

    The per-row maximum is subtracted before exponentiating, which makes the
    result invariant (to rounding) under adding any constant to a whole row.
    """
    log_scores = np.asarray(log_scores, dtype=float)
    shifted = log_scores - log_scores.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    return probs / probs.sum(axis=1, keepdims=True)


def posterior(model: WorkerModel, prior: Prior, labels: LabelMatrix) -> np.ndarray:
    """True-label posterior of every item given the worker model and prior.

    Row ``j`` is proportional to the prior times the product of the
    confusion-table entries of every observed label in column ``j``;
    the computation runs in the log domain.
    """
    if model.num_workers != labels.num_workers:
        raise DimensionMismatch("worker model and label matrix worker counts differ")
    if model.num_classes != labels.num_classes:
        raise DimensionMismatch("worker model and label matrix class counts differ")
    if prior.num_classes != labels.num_classes:
        raise DimensionMismatch("prior and label matrix class counts differ")
    log_tables = np.log(np.clip(model.as_gds(), LOG_FLOOR, None))
    log_rho = np.tile(np.log(np.clip(prior.probs, LOG_FLOOR, None)),
                      (labels.num_items, 1))
    for h in range(1, labels.num_classes + 1):
        votes = labels.data == h
        log_rho += votes.T @ log_tables[:, :, h - 1]
    return normalize_log_posteriors(log_rho)


def error_rate(predicted, truth) -> float:
    """Fraction of items whose predicted label differs from the true one."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise LengthMismatch("prediction and truth vectors differ in length")
    if predicted.size == 0:
        raise DomainError("error rate of an empty prediction vector is undefined")
    return float(np.mean(predicted != truth))


def argmax_labels(scores: np.ndarray, tie_break: str = "lowest",
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Predict the class with the highest score for every row.

    Ties resolve deterministically to the smallest class index by default;
    ``tie_break="random"`` picks uniformly among the tied classes using the
    supplied generator.
    """
    scores = np.asarray(scores, dtype=float)
    if tie_break == "lowest":
        return scores.argmax(axis=1) + 1
    if tie_break != "random":
        raise DomainError(f"unknown tie policy {tie_break!r}")
    if rng is None:
        raise DomainError("the random tie policy needs a generator")
    best = scores.max(axis=1, keepdims=True)
    out = scores.argmax(axis=1) + 1
    tied = scores == best
    multi = tied.sum(axis=1) > 1
    for j in np.flatnonzero(multi):
        out[j] = rng.choice(np.flatnonzero(tied[j])) + 1
    return out
