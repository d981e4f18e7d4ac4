"""Nearest-neighbour prediction of commitment schedules from load profiles.

A query profile is compared with every training profile by Euclidean
distance over the flattened ``nb x T`` table, each coordinate standardised
by the training mean and standard deviation.  Every (generator, step) entry
of the prediction is the majority of that entry over the ``K`` nearest
samples, with ties going to ON.  Neighbours are ranked by distance and then
by training index, so predictions are deterministic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyTrainingError, InvalidRangeError, ValidationError
from .model import SCHEMA_VERSION, CommitmentSchedule, LoadProfile, UCInstance


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Solved samples: ``loads`` is ``(S, nb, T)`` and ``labels`` ``(S, ng, T)``."""

    loads: np.ndarray
    labels: np.ndarray
    instance_fingerprint: str

    def __post_init__(self):
        loads = np.asarray(self.loads, dtype=float)
        labels = np.asarray(self.labels)
        if loads.ndim != 3 or labels.ndim != 3:
            raise DimensionMismatchError("training loads and labels must be 3-D arrays")
        if loads.shape[0] != labels.shape[0]:
            raise DimensionMismatchError(f"{loads.shape[0]} load samples but {labels.shape[0]} schedules")
        if loads.shape[2] != labels.shape[2]:
            raise DimensionMismatchError("load and schedule horizons differ")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValidationError("labels", "schedules must be binary")
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "labels", labels.astype(np.int8))

    @classmethod
    def from_pairs(cls, pairs, instance: UCInstance) -> "TrainingSet":
        pairs = list(pairs)
        if not pairs:
            return cls(np.zeros((0, instance.n_buses, instance.horizon)),
                       np.zeros((0, instance.n_generators, instance.horizon)), instance.fingerprint())
        for loads, sched in pairs:
            if loads.values.shape != (instance.n_buses, instance.horizon):
                raise DimensionMismatchError(f"load sample has shape {loads.values.shape}")
            if sched.values.shape != (instance.n_generators, instance.horizon):
                raise DimensionMismatchError(f"schedule has shape {sched.values.shape}")
        return cls(np.stack([p[0].values for p in pairs]), np.stack([p[1].values for p in pairs]),
                   instance.fingerprint())

    def __len__(self) -> int:
        return self.loads.shape[0]


@dataclass(frozen=True, eq=False)
class KNNModel:
    features: np.ndarray  # standardised training rows, (S, nb*T)
    labels: np.ndarray  # (S, ng, T)
    mean: np.ndarray
    scale: np.ndarray
    k: int
    instance_fingerprint: str
    load_shape: tuple
    distance: str = "standardized-euclidean"

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.features, self.labels, self.mean, self.scale):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(f"{self.k}|{self.instance_fingerprint}|{self.distance}".encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "knn",
            "k": self.k,
            "distance": self.distance,
            "instance": self.instance_fingerprint,
            "load_shape": list(self.load_shape),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "features": self.features.tolist(),
            "labels": self.labels.astype(int).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _standardise(loads: np.ndarray):
    X = loads.reshape(loads.shape[0], -1)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    # constant coordinates carry no information; leave them unscaled
    scale = np.where(scale > 1e-12, scale, 1.0)
    return (X - mean) / scale, mean, scale


def train(samples: TrainingSet, k: int) -> KNNModel:
    """Store the standardised training set with neighbour count ``k``."""
    if int(k) != k or k < 1:
        raise ValidationError("k", f"neighbour count must be a positive integer, got {k}")
    if len(samples) == 0:
        raise EmptyTrainingError("training set is empty")
    if len(samples) < k:
        raise ValidationError("k", f"k={k} exceeds the {len(samples)} training samples")
    Z, mean, scale = _standardise(samples.loads)
    return KNNModel(Z, samples.labels.copy(), mean, scale, int(k), samples.instance_fingerprint, samples.loads.shape[1:])


def neighbours(model: KNNModel, loads: LoadProfile) -> np.ndarray:
    """Training indices of the ``K`` nearest samples, nearest first."""
    values = loads.values if isinstance(loads, LoadProfile) else np.asarray(loads, dtype=float)
    if values.shape != tuple(model.load_shape):
        raise DimensionMismatchError(f"query has shape {values.shape}, model expects {tuple(model.load_shape)}")
    q = (values.ravel() - model.mean) / model.scale
    d2 = ((model.features - q) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(d2.size), d2))
    return order[: model.k]


def predict(model: KNNModel, loads: LoadProfile) -> CommitmentSchedule:
    """Entrywise majority vote of the ``K`` nearest schedules; ties are ON."""
    idx = neighbours(model, loads)
    votes = model.labels[idx].sum(axis=0)
    on = 2 * votes >= len(idx)
    return CommitmentSchedule(on.astype(np.int8), provenance="PREDICTED")


def partial_schedule(full: CommitmentSchedule, interval: int) -> CommitmentSchedule:
    """Keep ``full`` only on the steps ``interval, 2*interval, ...``."""
    if int(interval) != interval or interval < 1:
        raise InvalidRangeError(f"interval must be a positive integer, got {interval}")
    steps = tuple(range(interval, full.horizon + 1, interval))
    return CommitmentSchedule(full.values, provenance="PARTIAL", steps=steps)


def error_rate(predicted: CommitmentSchedule, truth: CommitmentSchedule) -> float:
    """Fraction of (generator, step) entries predicted wrongly."""
    if predicted.values.shape != truth.values.shape:
        raise DimensionMismatchError("schedules differ in shape")
    return float(np.mean(predicted.values != truth.values))


def model_from_dict(doc: dict) -> KNNModel:
    if doc.get("kind") != "knn":
        raise ValidationError("kind", "not a KNN model document")
    return KNNModel(
        features=np.asarray(doc["features"], dtype=float),
        labels=np.asarray(doc["labels"], dtype=np.int8),
        mean=np.asarray(doc["mean"], dtype=float),
        scale=np.asarray(doc["scale"], dtype=float),
        k=int(doc["k"]),
        instance_fingerprint=doc["instance"],
        load_shape=tuple(doc["load_shape"]),
        distance=doc.get("distance", "standardized-euclidean"),
    )


def save_model(model: KNNModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model.to_json())


def load_model(path) -> KNNModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
