"""Linear and logistic concept probes on layer activations.

A probe is trained by minimising, per minibatch,

    mean((sigma(w . a + b) - f)^2) + lam * (|w|_1 + |b|)

with the sigmoid dropped for scalar concepts.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .tensor_nn import Tensor, TrainConfig, fit_params
from .tensor_nn import autodiff as ad
from .tensor_nn.layers import Model

log = logging.getLogger(__name__)

KINDS = ("binary", "scalar")
DEFAULT_LAMBDA = 1e-4
PROBE_FORMAT = "conceptbp-probe/1"


class DegenerateConceptError(ValueError):
    """Concept labels carry no signal (a single class or a constant value)."""


@dataclass(frozen=True)
class ConceptFunction:
    name: str
    kind: str
    evaluator: Callable[..., float]
    uses_label: bool = False

    def __call__(self, sample, label=None) -> float:
        value = self.evaluator(sample, label) if self.uses_label else self.evaluator(sample)
        value = float(value)
        if self.kind == "binary" and value not in (0.0, 1.0):
            raise ValueError(f"binary concept {self.name!r} produced {value}")
        if not np.isfinite(value):
            raise ValueError(f"concept {self.name!r} produced a non-finite value")
        return value


@dataclass
class ProbeDataset:
    activations: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    kept: np.ndarray  # indices of the samples that produced a label
    skipped: int = 0


@dataclass
class Probe:
    w: np.ndarray
    b: float
    kind: str
    tap: str
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"probe kind must be one of {KINDS}, got {self.kind!r}")
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        self.b = float(self.b)


@dataclass
class ProbeReport:
    metrics: dict[str, float]
    l1_mass: float
    loss_curve: list[float] = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"metrics": self.metrics, "l1_mass": self.l1_mass, "loss_curve": self.loss_curve,
                "n_train": self.n_train, "n_test": self.n_test}


def build_probe_dataset(model: Model, tap: str, samples: np.ndarray, concept: ConceptFunction,
                        labels: Sequence | None = None) -> ProbeDataset:
    """One (flattened activation, concept value) pair per sample, in order.

    Samples whose concept cannot be evaluated are skipped and counted.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    values, kept = [], []
    for i, s in enumerate(samples):
        try:
            values.append(concept(s, None if labels is None else labels[i]))
            kept.append(i)
        except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
            log.debug("sample %d skipped: %s", i, exc)
    kept_idx = np.array(kept, dtype=np.int64)
    skipped = len(samples) - len(kept)
    if not kept:
        return ProbeDataset(np.zeros((0, 0)), np.zeros(0), kept_idx, skipped)
    acts = model.activations(np.asarray(samples)[kept_idx], tap)
    return ProbeDataset(acts.reshape(len(kept), -1), np.array(values), kept_idx, skipped)


def probe_output(probe: Probe, activation: Tensor) -> Tensor:
    """Differentiable probe on a batch of activations; returns shape (n,)."""
    flat = ad.reshape(activation, (activation.shape[0], -1))
    if flat.shape[1] != probe.w.size:
        raise ValueError(f"probe expects {probe.w.size} activations, got {flat.shape[1]}")
    z = ad.add(ad.matmul(flat, Tensor(probe.w[:, None])), probe.b)
    z = ad.reshape(z, (flat.shape[0],))
    return ad.sigmoid(z) if probe.kind == "binary" else z


def probe_predict(probe: Probe, activation: np.ndarray) -> float:
    a = np.asarray(activation, dtype=np.float64).reshape(-1)
    if a.size != probe.w.size:
        raise ValueError(f"probe expects {probe.w.size} activations, got {a.size}")
    return float(probe_output(probe, Tensor(a[None])).data[0])


def probe_predict_batch(probe: Probe, activations: np.ndarray) -> np.ndarray:
    acts = np.asarray(activations, dtype=np.float64).reshape(len(activations), -1)
    return probe_output(probe, Tensor(acts)).data


def split_indices(n: int, seed: int, test_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(n * test_fraction))) if n > 1 else 0
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def roc_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney estimate of the area under the ROC curve."""
    labels = np.asarray(labels) > 0.5
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def r_squared(y: np.ndarray, pred: np.ndarray) -> float:
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")


def evaluate_probe(probe: Probe, acts: np.ndarray, labels: np.ndarray) -> dict[str, float]:
    pred = probe_predict_batch(probe, acts)
    if probe.kind == "binary":
        return {"accuracy": float(np.mean((pred > 0.5) == (labels > 0.5))),
                "auc": roc_auc(labels, pred)}
    return {"r2": r_squared(labels, pred), "mse": float(np.mean((labels - pred) ** 2))}


def train_probe(acts: np.ndarray, labels: np.ndarray, kind: str, lam: float = DEFAULT_LAMBDA,
                config: TrainConfig | None = None, tap: str = "") -> tuple[Probe, ProbeReport]:
    if kind not in KINDS:
        raise ValueError(f"probe kind must be one of {KINDS}, got {kind!r}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    config = config or TrainConfig(lr=1e-2, batch_size=64, epochs=100)
    acts = np.asarray(acts, dtype=np.float64).reshape(len(acts), -1)
    labels = np.asarray(labels, dtype=np.float64)
    distinct = np.unique(labels)
    if len(distinct) < 2:
        raise DegenerateConceptError(f"all {len(labels)} concept labels equal {distinct}")
    train_idx, test_idx = split_indices(len(labels), config.seed)
    if kind == "binary" and len(np.unique(labels[train_idx])) < 2:
        raise DegenerateConceptError("training split contains a single class")

    def loss_fn(params, xb, yb):
        z = ad.add(ad.matmul(Tensor(xb), params["w"]), params["b"])
        out = ad.sigmoid(z) if kind == "binary" else z
        err = ad.mean(ad.power(out - Tensor(yb[:, None]), 2.0))
        if lam == 0:
            return err
        return err + lam * (ad.l1_norm(params["w"]) + ad.l1_norm(params["b"]))

    init = {"w": np.zeros((acts.shape[1], 1)), "b": np.zeros(1)}
    params, curve = fit_params(init, loss_fn, acts[train_idx], labels[train_idx], config)
    probe = Probe(params["w"][:, 0], float(params["b"][0]), kind, tap, lam)
    held_acts, held_labels = (acts[test_idx], labels[test_idx]) if len(test_idx) else (acts, labels)
    report = ProbeReport(evaluate_probe(probe, held_acts, held_labels), float(np.abs(probe.w).sum()),
                         curve, len(train_idx), len(test_idx))
    return probe, report


# ---------------------------------------------------------------------------
# files


def probe_to_text(probe: Probe) -> str:
    return json.dumps({"format": PROBE_FORMAT, "kind": probe.kind, "tap": probe.tap,
                       "lambda": probe.lam, "b": probe.b, "w": probe.w.tolist()}) + "\n"


def probe_from_text(text: str) -> Probe:
    d = json.loads(text)
    if d.get("format") != PROBE_FORMAT:
        raise ValueError(f"not a probe file (format {d.get('format')!r})")
    return Probe(np.array(d["w"], dtype=np.float64), d["b"], d["kind"], d["tap"], d["lambda"])


def save_probe(probe: Probe, path: str | Path) -> None:
    Path(path).write_text(probe_to_text(probe))


def load_probe(path: str | Path) -> Probe:
    return probe_from_text(Path(path).read_text())
