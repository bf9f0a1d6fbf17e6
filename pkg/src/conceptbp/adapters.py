"""Perturbation spaces: how a perturbation is applied and what it costs.

Each adapter maps a sample ``s`` and a dict of perturbation tensors to the
perturbed sample (``combine``) and a non-negative scalar cost (``distance``),
both differentiable in the perturbation.
"""
from __future__ import annotations

import logging
from typing import Any, Mapping

import numpy as np

from .data import board as chess
from .tensor_nn import Tensor, TrainConfig, train_supervised
from .tensor_nn import autodiff as ad
from .tensor_nn.autodiff import ShapeError, binarize_ste, exclusive_binarize_ste
from .tensor_nn.layers import (Conv2d, Dense, Model, ReLU, Sigmoid, SumPool, build_model)

log = logging.getLogger(__name__)

MAX_IMBALANCE = 100.0

Perturbation = dict[str, np.ndarray]


def _tensors(pert: Mapping[str, np.ndarray | Tensor]) -> dict[str, Tensor]:
    return {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in pert.items()}


class ModalityAdapter:
    """Base class; subclasses implement ``zero`` and ``forward``."""

    name = "adapter"

    def zero(self, s: np.ndarray) -> Perturbation:
        raise NotImplementedError

    def init(self, s: np.ndarray, rng: np.random.Generator, noise: float = 1e-3) -> Perturbation:
        return {k: v + rng.uniform(-noise, noise, size=v.shape) for k, v in self.zero(s).items()}

    def forward(self, s: np.ndarray, pert: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
        """(perturbed sample, distance)."""
        raise NotImplementedError

    def combine(self, s: np.ndarray, pert) -> Tensor:
        return self.forward(s, _tensors(pert))[0]

    def distance(self, s: np.ndarray, pert) -> Tensor:
        return self.forward(s, _tensors(pert))[1]

    def project(self, pert: Perturbation) -> Perturbation:
        return pert


class TabularAdapter(ModalityAdapter):
    """``s + delta`` with cost ``||delta||_2``."""

    name = "tabular"

    def __init__(self, n: int):
        self.n = int(n)

    def zero(self, s):
        return {"delta": np.zeros(self.n)}

    def forward(self, s, pert):
        s = np.asarray(s, dtype=np.float64)
        delta = pert["delta"]
        if s.shape != (self.n,) or delta.shape != (self.n,):
            raise ShapeError(f"tabular adapter expects shape ({self.n},), got {s.shape} and {delta.shape}")
        return ad.add(Tensor(s), delta), ad.l2_norm(delta)


def tabular_combine(s, delta) -> np.ndarray:
    return TabularAdapter(len(s)).combine(s, {"delta": np.asarray(delta, dtype=np.float64)}).data


def tabular_distance(s, delta) -> float:
    return TabularAdapter(len(s)).distance(s, {"delta": np.asarray(delta, dtype=np.float64)}).item()


class ImageAdapter(ModalityAdapter):
    """Edit the autoencoder embedding: ``D(E(s) + z)`` with cost ``||D(E(s) + z) - s||^2``."""

    name = "image"

    def __init__(self, encoder: Model, decoder: Model, latent_dim: int):
        self.encoder, self.decoder, self.latent_dim = encoder, decoder, int(latent_dim)
        self._cache: tuple[bytes, np.ndarray] | None = None

    def embed(self, s: np.ndarray) -> np.ndarray:
        key = np.asarray(s, dtype=np.float64).tobytes()
        if self._cache is None or self._cache[0] != key:
            z = self.encoder.activations(np.asarray(s, dtype=np.float64)[None], None)[0]
            if z.shape != (self.latent_dim,):
                raise ShapeError(f"encoder produced {z.shape}, expected ({self.latent_dim},)")
            self._cache = (key, z)
        return self._cache[1]

    def zero(self, s):
        return {"latent": np.zeros(self.latent_dim)}

    def forward(self, s, pert):
        s = np.asarray(s, dtype=np.float64)
        z = pert["latent"]
        if z.shape != (self.latent_dim,):
            raise ShapeError(f"latent perturbation must have shape ({self.latent_dim},), got {z.shape}")
        code = ad.add(Tensor(self.embed(s)), z)
        decoded, _ = self.decoder.forward(ad.reshape(code, (1, self.latent_dim)))
        if decoded.size != s.size:
            raise ShapeError(f"decoder output {decoded.shape} does not match sample {s.shape}")
        image = ad.reshape(decoded, s.shape)
        return image, ad.l2_norm_sq(image - Tensor(s))

    def reconstruction(self, s: np.ndarray) -> np.ndarray:
        return self.combine(s, self.zero(s)).data


def image_combine(s, z, encoder: Model, decoder: Model) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return ImageAdapter(encoder, decoder, z.size).combine(s, {"latent": z}).data


def image_distance(s, z, encoder: Model, decoder: Model) -> float:
    z = np.asarray(z, dtype=np.float64)
    return ImageAdapter(encoder, decoder, z.size).distance(s, {"latent": z}).item()


class BoardAdapter(ModalityAdapter):
    """Binary removal/addition masks over the ten piece planes.

    Removals only act on occupied cells. Additions only land on squares left
    vacant after removals, one piece per square (largest raw activation
    wins). Cost is the legality classifier's illegality score plus the
    number of removed and added pieces.
    """

    name = "board"
    shape = (chess.N_PIECE_PLANES, chess.SIZE, chess.SIZE)

    def __init__(self, legality: Model | None):
        self.legality = legality

    def zero(self, s):
        return {"remove": np.zeros(self.shape), "add": np.zeros(self.shape)}

    def masks(self, s: np.ndarray, pert: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
        """Effective (removal, addition) masks, exactly binary."""
        s = np.asarray(s, dtype=np.float64)
        if not chess.is_valid_encoding(s):
            raise chess.BoardFormatError("input is not a one-hot-or-empty board encoding")
        for key in ("remove", "add"):
            if pert[key].shape != self.shape:
                raise ShapeError(f"{key} mask must have shape {self.shape}, got {pert[key].shape}")
        pieces = Tensor(s[:chess.N_PIECE_PLANES])
        removed = ad.mul(binarize_ste(pert["remove"]), pieces)
        vacancy = 1.0 - ad.sum(pieces - removed, axis=0)
        added = ad.mul(exclusive_binarize_ste(pert["add"]), vacancy)
        return removed, added

    def forward(self, s, pert):
        s = np.asarray(s, dtype=np.float64)
        removed, added = self.masks(s, pert)
        pieces = Tensor(s[:chess.N_PIECE_PLANES]) - removed + added
        board = ad.concat([pieces, Tensor(s[chess.SIDE_PLANE:])], axis=0)
        cost = ad.add(ad.l1_norm(added), ad.l1_norm(removed))
        if self.legality is not None:
            score, _ = self.legality.forward(ad.reshape(board, (1, *board.shape)))
            cost = ad.add(ad.reshape(score, ()), cost)
        return board, cost


def binarize(x: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return binarize_ste(Tensor(x), threshold).data


def board_combine(s, remove, add) -> np.ndarray:
    pert = {"remove": np.asarray(remove, dtype=np.float64), "add": np.asarray(add, dtype=np.float64)}
    return BoardAdapter(None).combine(s, pert).data


def board_distance(s, remove, add, legality: Model | None) -> float:
    pert = {"remove": np.asarray(remove, dtype=np.float64), "add": np.asarray(add, dtype=np.float64)}
    return BoardAdapter(legality).distance(s, pert).item()


def default_legality_model(seed: int = 0) -> Model:
    """Per-square features, a 3x3 neighbourhood convolution, then piece-count style pooling.

    Zero padding lets the 3x3 layer tell edge ranks apart, which back-rank
    pawn rules need.
    """
    return build_model([Conv2d("c0", chess.N_PLANES, 24, 1), ReLU("r0"), Conv2d("c1", 24, 32, 3),
                        ReLU("r1"), SumPool("pool"), Dense("h", 32, 32), ReLU("rh"), Dense("o", 32, 1),
                        Sigmoid("illegal")], seed, (chess.N_PLANES, chess.SIZE, chess.SIZE))


def train_legality_classifier(legal: np.ndarray, illegal: np.ndarray, config: TrainConfig,
                              model: Model | None = None, test_fraction: float = 0.2
                              ) -> tuple[Model, list[float], dict[str, Any]]:
    """Fit an illegality-probability classifier (1 = illegal) on the two board sets.

    A seeded ``test_fraction`` of the pooled boards is held out for the
    reported accuracy. Returns the model, its loss curve and a report.
    """
    legal, illegal = np.asarray(legal, dtype=np.float64), np.asarray(illegal, dtype=np.float64)
    if len(legal) == 0 or len(illegal) == 0:
        raise ValueError("both legal and illegal boards are required")
    warnings = []
    ratio = max(len(legal), len(illegal)) / min(len(legal), len(illegal))
    if ratio > MAX_IMBALANCE:
        warnings.append(f"class imbalance {len(legal)} legal : {len(illegal)} illegal exceeds "
                        f"{MAX_IMBALANCE:.0f}:1")
        log.warning(warnings[-1])
    x = np.concatenate([legal, illegal])
    y = np.concatenate([np.zeros(len(legal)), np.ones(len(illegal))])[:, None]
    order = np.random.default_rng(config.seed).permutation(len(x))
    n_test = int(round(len(x) * test_fraction)) if len(x) >= 10 else 0
    test, train = order[:n_test], order[n_test:]
    model = model if model is not None else default_legality_model(config.seed)
    trained, curve = train_supervised(model, x[train], y[train], "bce", config)
    held = test if n_test else train
    pred = trained.predict(x[held])[:, 0] > 0.5
    report = {
        "held_out_accuracy": float(np.mean(pred == (y[held, 0] > 0.5))),
        "n_legal": len(legal), "n_illegal": len(illegal), "n_test": int(n_test),
        "start_position_score": float(trained.predict(chess.start_position()[None])[0, 0]),
        "warnings": warnings,
        "final_loss": curve[-1] if curve else None,
    }
    return trained, curve, report
