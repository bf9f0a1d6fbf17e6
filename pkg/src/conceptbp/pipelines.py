"""End-to-end pipelines: data, trained models, probe, adapter and samples.

A pipeline is described by a JSON-compatible dict. ``resolve_config`` merges
user values over the defaults of the named pipeline and rejects unknown keys.
Models and probes are cached in the output directory keyed by a fingerprint
of the config sections they depend on, so ``maximise`` can follow ``train``
and ``probe`` without retraining, or run on its own.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import reports
from .adapters import BoardAdapter, ImageAdapter, ModalityAdapter, TabularAdapter, \
    train_legality_classifier
from .data import board as chess
from .data.images import (ImageDataset, concept_lightness, concept_loopiness, load_idx_images,
                          synthetic_digits, synthetic_fashion)
from .data.tabular import (FEATURES, TabularDataset, concept_bedrooms_ratio, load_tabular_csv, normalize,
                           synthetic_housing)
from .maximiser import MaximiseConfig, PerturbationResult, maximise, sweep_lambdas
from .probing import (ConceptFunction, Probe, ProbeReport, build_probe_dataset, load_probe,
                      probe_predict, save_probe, train_probe)
from .tensor_nn import Model, Tensor, TrainConfig, build_model, load_model, save_model, train_supervised
from .tensor_nn.layers import layer_from_spec

log = logging.getLogger(__name__)

PIPELINES = ("toy", "housing", "digits", "fashion", "chess")


class ConfigError(ValueError):
    """Malformed or unknown configuration."""


def _dense(name, n_in, n_out):
    return {"kind": "dense", "name": name, "n_in": n_in, "n_out": n_out}


def _conv(name, c_in, c_out, kernel=3):
    return {"kind": "conv2d", "name": name, "c_in": c_in, "c_out": c_out, "kernel": kernel}


def _act(kind, name):
    return {"kind": kind, "name": name}


def _autoencoder(latent: int) -> list[dict]:
    return [_conv("c1", 1, 8), _act("relu", "r1"), _act("flatten", "f"), _dense("e1", 6272, 128),
            _act("relu", "er1"), _dense("latent", 128, latent), _dense("d1", latent, 128),
            _act("relu", "dr1"), _dense("d2", 128, 784), _act("sigmoid", "ds"),
            {"kind": "reshape", "name": "img", "shape": [1, 28, 28]}]


def _board_convs(channels: int, depth: int) -> list[dict]:
    layers, c_in = [], chess.N_PLANES
    for k in range(1, depth + 1):
        layers += [_conv(f"c{k}", c_in, channels), _act("relu", f"r{k}")]
        c_in = channels
    return layers


_MAXIMISE = {"lambda1": 1.0, "lambda2": 1.0, "target": 1.0, "target_delta": None, "max_steps": 2000,
             "lr": 1e-2, "tol": 0.05, "optimizer": "adam", "noise": 1e-3, "samples": None,
             "n_samples": 20}
_PROBE = {"tap": "", "lambda": 1e-4, "lr": 1e-2, "batch_size": 64, "epochs": 100}
_TRAIN = {"lr": 1e-3, "batch_size": 64, "epochs": 10, "optimizer": "adam"}


def _section(base: dict, **over) -> dict:
    out = copy.deepcopy(base)
    out.update(over)
    return out


DEFAULTS: dict[str, dict[str, Any]] = {
    "toy": {
        "data": {"points": [[0.0, 0.0]]},
        "models": {},
        "probe": {"w": [1.0, 0.0], "b": 0.0},
        "maximise": _section(_MAXIMISE, n_samples=1),
        "sweep": {"lambda2": [0.1, 0.75, 5.0]},
    },
    "housing": {
        "data": {"path": None, "n": 5000, "seed": 0, "test_fraction": 0.2},
        "models": {"regressor": {
            "layers": [_dense("d1", 6, 32), _act("relu", "r1"), _dense("d2", 32, 16),
                       _act("relu", "r2"), _dense("out", 16, 1)],
            "train": _section(_TRAIN, lr=3e-3, epochs=60)}},
        "probe": _section(_PROBE, tap="r1", epochs=200),
        "maximise": _section(_MAXIMISE, lambda2=0.05, target_delta=0.15),
        "sweep": {"lambda2": [0.01, 0.05, 0.25]},
    },
    "digits": {
        "data": {"images": None, "labels": None, "n": 12000, "seed": 0, "n_train": 10000},
        "models": {"autoencoder": {"layers": _autoencoder(16), "train": _section(_TRAIN, epochs=8)}},
        "probe": _section(_PROBE, tap="latent", **{"lambda": 1e-2}),
        "maximise": _section(_MAXIMISE, lambda2=1e-3, lr=0.05, max_steps=1000),
        "sweep": {"lambda2": [1e-3, 1e-2, 1e-1]},
    },
    "fashion": {
        "data": {"images": None, "labels": None, "n": 7000, "seed": 1, "n_train": 6000},
        "models": {
            "autoencoder": {"layers": _autoencoder(16), "train": _section(_TRAIN, epochs=6)},
            "classifier": {
                "layers": [_act("flatten", "f"), _dense("h", 784, 64), _act("relu", "hidden"),
                           _dense("logits", 64, 10), _act("sigmoid", "out")],
                "train": _section(_TRAIN, epochs=10)}},
        "probe": _section(_PROBE, tap="hidden", epochs=200),
        "maximise": _section(_MAXIMISE, lr=0.05, max_steps=300, n_samples=10),
        "sweep": {"lambda2": [0.1, 0.75, 5.0]},
    },
    "chess": {
        "data": {"n_concept": 20000, "n_probe": 3000, "n_legal": 5000, "legal_extra": [2, 20],
                 "corruptions": ["extra_king", "missing_king", "back_rank_pawn", "stacked"],
                 "n_eval": 400, "seed": 0},
        "models": {
            "concept": {
                "layers": _board_convs(32, 4) + [_act("flatten", "f"), _dense("h", 1152, 64),
                                                 _act("relu", "hidden"), _dense("out", 64, 6)],
                "train": _section(_TRAIN, lr=2e-3, epochs=15)},
            "legality": {
                "layers": [_conv("c0", chess.N_PLANES, 24, 1), _act("relu", "r0"),
                           _conv("c1", 24, 32, 3), _act("relu", "r1"), _act("sumpool", "pool"),
                           _dense("h", 32, 32), _act("relu", "rh"), _dense("o", 32, 1),
                           _act("sigmoid", "illegal")],
                "train": _section(_TRAIN, lr=2e-3, epochs=30)}},
        "probe": _section(_PROBE, tap="hidden"),
        "maximise": _section(_MAXIMISE, lambda2=0.1, lr=0.1, optimizer="sgd", max_steps=1000),
        "sweep": {"lambda2": [0.1, 0.75, 5.0]},
    },
}


# ---------------------------------------------------------------------------
# config


def _merge(base: Any, over: Any, path: str) -> Any:
    if not isinstance(base, dict):
        return copy.deepcopy(over)
    if not isinstance(over, dict):
        raise ConfigError(f"'{path}' must be an object")
    out = copy.deepcopy(base)
    for key, value in over.items():
        sub = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{sub}'")
        out[key] = _merge(base[key], value, sub)
    return out


def resolve_config(raw: dict[str, Any], seed: int | None = None) -> dict[str, Any]:
    """Defaults of ``raw['pipeline']`` overlaid with ``raw``; ``seed`` overrides."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    name = raw.get("pipeline")
    if name not in PIPELINES:
        raise ConfigError(f"unknown pipeline {name!r}; expected one of {', '.join(PIPELINES)}")
    base = {"pipeline": name, "seed": 0, **copy.deepcopy(DEFAULTS[name])}
    cfg = _merge(base, raw, "")
    if seed is not None:
        cfg["seed"] = int(seed)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("'seed' must be a non-negative integer")
    if not isinstance(cfg["sweep"]["lambda2"], list) or not cfg["sweep"]["lambda2"]:
        raise ConfigError("'sweep.lambda2' must be a non-empty list")
    try:
        maximise_config(cfg)
        for name in cfg["models"]:
            train_config(cfg, name)
        probe_train_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path, seed: int | None = None) -> dict[str, Any]:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return resolve_config(raw, seed)


def train_config(cfg: dict, model: str) -> TrainConfig:
    t = cfg["models"][model]["train"]
    return TrainConfig(lr=float(t["lr"]), batch_size=int(t["batch_size"]), epochs=int(t["epochs"]),
                       optimizer=t["optimizer"], seed=cfg["seed"])


def probe_train_config(cfg: dict) -> TrainConfig:
    p = cfg["probe"]
    if cfg["pipeline"] == "toy":
        return TrainConfig()
    return TrainConfig(lr=float(p["lr"]), batch_size=int(p["batch_size"]), epochs=int(p["epochs"]),
                       seed=cfg["seed"])


def maximise_config(cfg: dict, **over) -> MaximiseConfig:
    m = cfg["maximise"]
    keys = ("lambda1", "lambda2", "target", "max_steps", "lr", "tol", "optimizer", "noise")
    values = {k: m[k] for k in keys}
    values["max_steps"] = int(values["max_steps"])
    return MaximiseConfig(seed=cfg["seed"], **{**values, **over})


def fingerprint(*parts: Any) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# data


@dataclass
class Data:
    train: np.ndarray
    test: np.ndarray
    train_labels: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def _images(cfg: dict, make: Callable[[int, int], ImageDataset]) -> ImageDataset:
    d = cfg["data"]
    if d["images"]:
        if not d["labels"]:
            raise ConfigError("'data.labels' is required with 'data.images'")
        return load_idx_images(d["images"], d["labels"])
    return make(int(d["n"]), int(d["seed"]))


def load_data(cfg: dict) -> Data:
    name, d = cfg["pipeline"], cfg["data"]
    if name == "toy":
        pts = np.asarray(d["points"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ConfigError("'data.points' must be a list of 2-D points")
        return Data(pts, pts)
    if name == "housing":
        ds = load_tabular_csv(d["path"]) if d["path"] else synthetic_housing(int(d["n"]), int(d["seed"]))
        ds = normalize(ds)
        order = np.random.default_rng(int(d["seed"])).permutation(len(ds.rows))
        n_test = int(round(len(order) * float(d["test_fraction"])))
        tr, te = np.sort(order[n_test:]), np.sort(order[:n_test])
        return Data(ds.rows[tr], ds.rows[te], ds.target[tr], ds.target[te], {"dataset": ds})
    if name in ("digits", "fashion"):
        ds = _images(cfg, synthetic_digits if name == "digits" else synthetic_fashion)
        x = ds.as_model_input()
        n_train = int(d["n_train"])
        if not 0 < n_train < len(x):
            raise ConfigError(f"'data.n_train' must lie in (0, {len(x)})")
        return Data(x[:n_train], x[n_train:], ds.labels[:n_train], ds.labels[n_train:])
    seed = int(d["seed"])
    n = int(d["n_concept"])
    boards = np.concatenate([chess.generate_boards(n - n // 2, seed).boards,
                             chess.generate_boards(n // 2, seed + 1, with_queen=True).boards])
    boards = boards[np.random.default_rng(seed).permutation(len(boards))]
    targets = np.stack([chess.aux_targets(b) for b in boards])
    evaluation = chess.generate_boards(int(d["n_eval"]), seed + 2, with_queen=True).boards
    return Data(boards, evaluation, targets, None)


# ---------------------------------------------------------------------------
# models


def _build(cfg: dict, model: str, input_shape: tuple[int, ...]) -> Model:
    try:
        layers = [layer_from_spec(spec) for spec in cfg["models"][model]["layers"]]
        return build_model(layers, cfg["seed"], input_shape)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"models.{model}.layers: {exc}") from exc


def _model_key(cfg: dict, model: str) -> str:
    return fingerprint(cfg["pipeline"], cfg["seed"], cfg["data"], cfg["models"][model])


def _cached(out: Path | None, model: str, key: str) -> Model | None:
    if out is None or not (out / f"{model}.model").exists():
        return None
    m = load_model(out / f"{model}.model")
    return m if m.meta.get("fingerprint") == key else None


def _store(out: Path | None, model: str, m: Model, curve, manifest) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    save_model(m, out / f"{model}.model")
    path = reports.write_curve(out / f"{model}_loss.csv", curve)
    if manifest is not None:
        manifest.record(out / f"{model}.model")
        manifest.record(path)


def legality_sets(cfg: dict) -> tuple[np.ndarray, np.ndarray]:
    """Generated legal boards and corrupted (illegal) boards, equally many."""
    d = cfg["data"]
    n, seed = int(d["n_legal"]), int(d["seed"])
    lo, hi = (int(v) for v in d["legal_extra"])
    kinds = list(d["corruptions"])
    unknown = [k for k in kinds if k not in chess.CORRUPTIONS]
    if not kinds or unknown:
        raise ConfigError(f"'data.corruptions' must name some of {', '.join(chess.CORRUPTIONS)}")
    legal = chess.generate_boards(n, seed + 3, extra=(lo, hi)).boards
    rng = np.random.default_rng(seed + 4)
    sources = chess.generate_boards(n, seed + 5, extra=(lo, hi)).boards
    illegal = np.stack([chess.corrupt_board(b, rng, kinds[i % len(kinds)]) for i, b in enumerate(sources)])
    return legal, illegal


def train_models(cfg: dict, data: Data, out: Path | None = None, manifest=None,
                 metrics: dict | None = None) -> dict[str, Model]:
    """Train (or load from ``out``) every model of the pipeline."""
    name = cfg["pipeline"]
    metrics = {} if metrics is None else metrics
    models: dict[str, Model] = {}
    if name == "toy":
        return {"identity": build_model([], cfg["seed"], (2,))}
    for model in cfg["models"]:
        key = _model_key(cfg, model)
        cached = _cached(out, model, key)
        if cached is not None:
            if manifest is not None:
                manifest.inputs.append(f"{model}.model")
            models[model] = cached
            metrics[model] = cached.meta.get("metrics", {})
            continue
        tc = train_config(cfg, model)
        if model == "legality":
            legal, illegal = legality_sets(cfg)
            m, curve, report = train_legality_classifier(legal, illegal, tc,
                                                         _build(cfg, model, legal.shape[1:]))
            info = report
        else:
            x, y, loss = data.train, None, "mse"
            if name == "housing":
                y = data.train_labels[:, None]
            elif model == "autoencoder":
                y = x
            elif model == "classifier":
                y, loss = np.eye(10)[data.train_labels], "bce"
            elif model == "concept":
                y = data.train_labels
            else:
                y = data.train_labels[:, None]
            m = _build(cfg, model, x.shape[1:])
            m, curve = train_supervised(m, x, y, loss, tc)
            info = {"final_loss": curve[-1] if curve else None}
            if model == "autoencoder":
                rec = m.predict(data.test)
                info["reconstruction_mse_per_pixel"] = float(np.mean((rec - data.test) ** 2))
            elif model == "classifier":
                info["test_accuracy"] = float(np.mean(m.predict(data.test).argmax(1) == data.test_labels))
            elif name == "housing":
                info["test_mse"] = float(np.mean((m.predict(data.test)[:, 0] - data.test_labels) ** 2))
        m.meta = {"fingerprint": key, "pipeline": name, "model": model, "metrics": info}
        metrics[model] = info
        _store(out, model, m, curve, manifest)
        models[model] = m
    return models


# ---------------------------------------------------------------------------
# probe


PROBED = {"housing": "regressor", "digits": "autoencoder", "fashion": "classifier", "chess": "concept",
          "toy": "identity"}


def concept_for(cfg: dict, data: Data) -> ConceptFunction:
    name = cfg["pipeline"]
    if name == "housing":
        ds: TabularDataset = data.extra["dataset"]
        return ConceptFunction("bedrooms_ratio", "scalar",
                               lambda s: concept_bedrooms_ratio(ds.original(s[None])[0]))
    if name == "digits":
        return ConceptFunction("loopiness", "binary", lambda s, y: concept_loopiness(int(y)),
                               uses_label=True)
    if name == "fashion":
        return ConceptFunction("lightness", "scalar", lambda s: concept_lightness(s[0]))
    return ConceptFunction("queen_threat", "binary", chess.queen_threat)


def probe_samples(cfg: dict, data: Data) -> tuple[np.ndarray, np.ndarray | None]:
    if cfg["pipeline"] == "chess":
        d = cfg["data"]
        return chess.generate_boards(int(d["n_probe"]), int(d["seed"]) + 6, with_queen=True).boards, None
    return data.train, data.train_labels


def fit_probe(cfg: dict, data: Data, models: dict[str, Model], out: Path | None = None,
              manifest=None) -> tuple[Probe, ProbeReport | None]:
    name = cfg["pipeline"]
    p = cfg["probe"]
    if name == "toy":
        return Probe(np.asarray(p["w"], dtype=np.float64), p["b"], "scalar", "input", 0.0), None
    model = models[PROBED[name]]
    key = fingerprint(model.meta.get("fingerprint"), p, cfg["seed"])
    if out is not None and (out / "probe.json").exists() and (out / "probe_report.json").exists():
        saved = json.loads((out / "probe_report.json").read_text())
        if saved.get("fingerprint") == key:
            report = ProbeReport(saved["metrics"], saved["l1_mass"], saved["loss_curve"],
                                 saved["n_train"], saved["n_test"])
            if manifest is not None:
                manifest.inputs.append("probe.json")
            return load_probe(out / "probe.json"), report
    samples, labels = probe_samples(cfg, data)
    concept = concept_for(cfg, data)
    pds = build_probe_dataset(model, p["tap"], samples, concept, labels)
    probe, report = train_probe(pds.activations, pds.labels, concept.kind, float(p["lambda"]),
                                probe_train_config(cfg), tap=p["tap"])
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_probe(probe, out / "probe.json")
        body = {**report.to_dict(), "fingerprint": key, "concept": concept.name, "tap": p["tap"],
                "skipped": pds.skipped, "manifest": manifest.name if manifest else None}
        reports.write_json(out / "probe_report.json", body)
        if manifest is not None:
            manifest.record(out / "probe.json")
            manifest.record(out / "probe_report.json")
    return probe, report


# ---------------------------------------------------------------------------
# adapters and samples


def make_adapter(cfg: dict, models: dict[str, Model]) -> ModalityAdapter:
    name = cfg["pipeline"]
    if name in ("toy", "housing"):
        return TabularAdapter(2 if name == "toy" else 6)
    if name in ("digits", "fashion"):
        ae = models["autoencoder"]
        latent = ae.params["latent.b"].size
        return ImageAdapter(ae.slice(None, "latent"), ae.slice("latent", None), latent)
    return BoardAdapter(models["legality"])


def eligible(cfg: dict, data: Data) -> np.ndarray:
    """Held-out samples the maximisation may be run on."""
    name = cfg["pipeline"]
    if name == "digits":
        return data.test[np.array([concept_loopiness(int(y)) == 0 for y in data.test_labels], dtype=bool)]
    if name == "chess":
        keep = [i for i, b in enumerate(data.test) if chess.queen_threat(b) == 0]
        return data.test[keep]
    return data.test


def select_samples(cfg: dict, data: Data) -> list[tuple[int, np.ndarray]]:
    pool = eligible(cfg, data)
    m = cfg["maximise"]
    if m["samples"] is not None:
        idx = [int(i) for i in m["samples"]]
        bad = [i for i in idx if not 0 <= i < len(pool)]
        if bad:
            raise ConfigError(f"'maximise.samples' out of range (pool has {len(pool)}): {bad}")
    else:
        idx = list(range(min(int(m["n_samples"]), len(pool))))
    return [(i, pool[i]) for i in idx]


@dataclass
class PipelineRun:
    cfg: dict[str, Any]
    data: Data
    models: dict[str, Model]
    probe: Probe | None
    probe_report: ProbeReport | None
    adapter: ModalityAdapter
    metrics: dict[str, Any] = field(default_factory=dict)

    @property
    def model(self) -> Model:
        return self.models[PROBED[self.cfg["pipeline"]]]

    def initial_probe(self, s: np.ndarray) -> float:
        return probe_predict(self.probe, self.model.activations(np.asarray(s)[None], self.probe.tap)[0])

    def config_for(self, s: np.ndarray, **over) -> MaximiseConfig:
        delta = self.cfg["maximise"]["target_delta"]
        if delta is not None and "target" not in over:
            over["target"] = self.initial_probe(s) + float(delta)
        return maximise_config(self.cfg, **over)


def prepare(cfg: dict, out: Path | None = None, manifest=None, with_probe: bool = True) -> PipelineRun:
    """Load data, train or load the models and, unless ``with_probe`` is off, the probe."""
    data = load_data(cfg)
    metrics: dict[str, Any] = {}
    models = train_models(cfg, data, out, manifest, metrics)
    probe, report = fit_probe(cfg, data, models, out, manifest) if with_probe else (None, None)
    return PipelineRun(cfg, data, models, probe, report, make_adapter(cfg, models), metrics)


def run_maximise(run: PipelineRun) -> list[tuple[int, np.ndarray, PerturbationResult]]:
    results = []
    for i, s in select_samples(run.cfg, run.data):
        results.append((i, s, maximise(run.model, run.probe, run.adapter, s, run.config_for(s))))
    return results


def run_sweep(run: PipelineRun) -> list[tuple[int, np.ndarray, list[PerturbationResult]]]:
    lambdas = [float(v) for v in run.cfg["sweep"]["lambda2"]]
    results = []
    for i, s in select_samples(run.cfg, run.data):
        results.append((i, s, sweep_lambdas(run.model, run.probe, run.adapter, s, run.config_for(s),
                                            lambdas)))
    return results


# ---------------------------------------------------------------------------
# artifacts


def write_result(run: PipelineRun, index: int, s: np.ndarray, result: PerturbationResult,
                 out: Path, prefix: str, manifest=None, **extra) -> dict[str, Any]:
    """Emit the per-sample artifacts of one maximisation; returns its report."""
    name = run.cfg["pipeline"]
    written: list[Path] = []
    out.mkdir(parents=True, exist_ok=True)
    report = reports.run_report(result, manifest.name if manifest else None, pipeline=name,
                                sample=index, **extra)
    if name == "housing" and result.perturbation:
        ds: TabularDataset = run.data.extra["dataset"]
        deltas = result.perturbation["delta"] * ds.std
        report["deltas_original_units"] = dict(zip(FEATURES, deltas.tolist()))
    elif name in ("digits", "fashion") and result.perturbation:
        written.append(reports.write_pgm(out / f"{prefix}_original.pgm", s))
        written.append(reports.write_pgm(out / f"{prefix}_reconstruction.pgm", run.adapter.reconstruction(s)))
        written.append(reports.write_pgm(out / f"{prefix}_maximised.pgm", result.perturbed))
        report["changed_pixels"] = int(np.sum(reports.pgm_bytes(result.perturbed) !=
                                              reports.pgm_bytes(run.adapter.reconstruction(s))))
    elif name == "chess" and result.perturbation:
        board_path = out / f"{prefix}_board.txt"
        board_path.write_text(reports.board_text(s, result.perturbed, result))
        written.append(board_path)
        report["before"] = reports.board_verdicts(s)
        report["after"] = reports.board_verdicts(result.perturbed)
        report["removed"], report["added"] = reports.board_diff(s, result.perturbed)
        # the effective masks, exactly binary, replace the raw pre-binarization values
        removed, added = run.adapter.masks(s, {k: Tensor(v) for k, v in result.perturbation.items()})
        report["perturbation"] = {"remove": removed.data.tolist(), "add": added.data.tolist()}
    written.append(reports.write_json(out / f"{prefix}_report.json", report))
    if manifest is not None:
        for path in written:
            manifest.record(path)
    return report


def delta_table(run: PipelineRun, results) -> reports.DeltaTable:
    ds: TabularDataset = run.data.extra["dataset"]
    table = reports.DeltaTable()
    for i, _, res in results:
        delta = res.perturbation.get("delta", np.full(len(ds.std), np.nan))
        table.add(i, np.asarray(delta) * ds.std, res.initial_probe, res.probe_output, res.status)
    return table


def sweep_summary(results) -> str:
    lines = ["sample,lambda2,probe_output,distance,status"]
    for i, _, runs in results:
        for res in runs:
            lam = res.extras.get("lambda2", res.config.lambda2)
            lines.append(f"{i},{lam:.6g},{res.probe_output:.6g},{res.distance:.6g},{res.status}")
    return "\n".join(lines) + "\n"
