"""Artifact writers: PGM images, delta tables, JSON run reports, board diagrams.

Artifacts never carry timestamps so reruns are byte-identical; wall-clock
times live only in the run manifest.
"""
from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .data import board as chess
from .data.tabular import FEATURES
from .maximiser import PerturbationResult

def manifest_name(command: str) -> str:
    return f"manifest_{command}.json"


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable, allow_nan=True) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


# ---------------------------------------------------------------------------
# images


def pgm_bytes(image: np.ndarray) -> bytes:
    """Binary greyscale PGM (P5, maxval 255) of an image with values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    img = img.reshape(img.shape[-2:]) if img.ndim > 2 else img
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {np.shape(image)}")
    pixels = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    return f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path: str | Path, image: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pgm_bytes(image))
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM file")
    width, height, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pixels = np.frombuffer(parts[4][:width * height], dtype=np.uint8)
    if pixels.size != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).astype(np.float64) / maxval


# ---------------------------------------------------------------------------
# tabular deltas


@dataclass
class DeltaRow:
    index: int
    deltas: np.ndarray  # original units, FEATURES order
    probe_before: float
    probe_after: float
    status: str


@dataclass
class DeltaTable:
    rows: list[DeltaRow] = field(default_factory=list)
    features: tuple[str, ...] = FEATURES

    def add(self, index: int, deltas, probe_before: float, probe_after: float, status: str) -> None:
        deltas = np.asarray(deltas, dtype=np.float64).reshape(-1)
        if deltas.size != len(self.features):
            raise ValueError(f"expected {len(self.features)} deltas, got {deltas.size}")
        self.rows.append(DeltaRow(int(index), deltas, float(probe_before), float(probe_after), status))

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["sample", *self.features, "probe_before", "probe_after", "status"])
        for row in self.rows:
            out.writerow([row.index, *(f"{v:.6g}" for v in row.deltas),
                          f"{row.probe_before:.6g}", f"{row.probe_after:.6g}", row.status])
        return buf.getvalue()

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


# ---------------------------------------------------------------------------
# run reports


def run_report(result: PerturbationResult, manifest: str | None = None, **extra) -> dict[str, Any]:
    report = {
        "status": result.status,
        "error": result.error,
        "initial_probe": result.initial_probe,
        "probe_output": result.probe_output,
        "distance": result.distance,
        "objective": result.objective,
        "steps": result.steps,
        "config": result.config.to_dict(),
        "trajectory": [[t.probe, t.distance, t.objective] for t in result.trajectory],
        "perturbation": {k: np.asarray(v).tolist() for k, v in sorted(result.perturbation.items())},
        "manifest": manifest,
    }
    report.update(result.extras)
    report.update(extra)
    return report


def write_curve(path: str | Path, curve: Sequence[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("epoch,loss\n" + "".join(f"{i + 1},{v:.17g}\n" for i, v in enumerate(curve)))
    return path


# ---------------------------------------------------------------------------
# boards


def board_verdicts(enc: np.ndarray) -> dict[str, Any]:
    """Rule-based oracle verdicts for a (possibly invalid) board encoding."""
    violations = chess.legality_violations(enc)
    verdict: dict[str, Any] = {"legal": not violations, "violations": violations}
    try:
        verdict["queen_threatened"] = bool(chess.queen_threat(enc)) if chess.is_valid_encoding(enc) else None
    except chess.NoQueenError:
        verdict["queen_threatened"] = None
    return verdict


def board_diff(before: np.ndarray, after: np.ndarray) -> tuple[list[str], list[str]]:
    """Human-readable removed and added pieces, e.g. ``q@c4``."""
    removed, added = [], []
    for p, r, c in zip(*np.nonzero(before[:chess.N_PIECE_PLANES] > after[:chess.N_PIECE_PLANES])):
        removed.append(f"{chess.PIECES[p]}@{chess.square_name(r, c)}")
    for p, r, c in zip(*np.nonzero(after[:chess.N_PIECE_PLANES] > before[:chess.N_PIECE_PLANES])):
        added.append(f"{chess.PIECES[p]}@{chess.square_name(r, c)}")
    return removed, added


def board_text(before: np.ndarray, after: np.ndarray, result: PerturbationResult | None = None) -> str:
    """Before/after diagrams side by side with oracle verdicts."""
    left = chess.format_board(before).splitlines()
    right = chess.format_board(after).splitlines() if chess.is_valid_encoding(after) else \
        ["(multi-hot board)"] + [""] * (len(left) - 1)
    lines = ["before    after"]
    lines += [f"{a:<8}  {b}" for a, b in zip(left, right)]
    removed, added = board_diff(before, after)
    lines.append(f"removed: {' '.join(removed) or '-'}")
    lines.append(f"added: {' '.join(added) or '-'}")
    for tag, enc in (("before", before), ("after", after)):
        v = board_verdicts(enc)
        threat = {True: "yes", False: "no", None: "n/a"}[v["queen_threatened"]]
        lines.append(f"{tag}: legal={'yes' if v['legal'] else 'no'} queen_threatened={threat}"
                     + (f" ({'; '.join(v['violations'])})" if v["violations"] else ""))
    if result is not None:
        lines.append(f"probe {result.initial_probe:.4f} -> {result.probe_output:.4f} [{result.status}]")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    seed: int
    root: str = "."
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    started: float = field(default_factory=time.time)
    finished: float | None = None
    versions: dict[str, str] = field(default_factory=dict)

    def record(self, path: str | Path) -> None:
        """Add an output, stored relative to ``root``."""
        try:
            rel = str(Path(path).resolve().relative_to(Path(self.root).resolve()))
        except ValueError:
            rel = str(path)
        if rel not in self.outputs:
            self.outputs.append(rel)

    @property
    def name(self) -> str:
        return manifest_name(self.command)

    def write(self) -> Path:
        from . import __version__

        self.finished = time.time()
        self.versions = {"conceptbp": __version__, "numpy": np.__version__,
                         "python": platform.python_version()}
        return write_json(Path(self.root) / self.name, asdict(self))
