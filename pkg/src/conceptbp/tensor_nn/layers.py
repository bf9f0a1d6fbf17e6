"""Sequential models built from a small set of layers.

Each layer's output is recorded under its name, so any layer can be used as a
probe tap. ``"input"`` is always a tap as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .graph import ComputationGraph, UnknownTapError, evaluate


class Layer:
    kind: str = ""
    name: str

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def fan_in(self) -> int:
        return 1

    def forward(self, x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
        raise NotImplementedError

    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "name": self.name}


class Dense(Layer):
    kind = "dense"

    def __init__(self, name: str, n_in: int, n_out: int):
        self.name, self.n_in, self.n_out = name, int(n_in), int(n_out)

    def param_shapes(self):
        return {f"{self.name}.W": (self.n_in, self.n_out), f"{self.name}.b": (self.n_out,)}

    def fan_in(self):
        return self.n_in

    def forward(self, x, params):
        if x.data.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"{self.name}: expected (N, {self.n_in}) input, got {x.shape}")
        return ad.add(ad.matmul(x, params[f"{self.name}.W"]), params[f"{self.name}.b"])

    def spec(self):
        return {**super().spec(), "n_in": self.n_in, "n_out": self.n_out}


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, name: str, c_in: int, c_out: int, kernel: int = 3):
        self.name, self.c_in, self.c_out, self.kernel = name, int(c_in), int(c_out), int(kernel)

    def param_shapes(self):
        k = self.kernel
        return {f"{self.name}.W": (self.c_out, self.c_in, k, k), f"{self.name}.b": (self.c_out,)}

    def fan_in(self):
        return self.c_in * self.kernel * self.kernel

    def forward(self, x, params):
        return ad.conv2d(x, params[f"{self.name}.W"], params[f"{self.name}.b"])

    def spec(self):
        return {**super().spec(), "c_in": self.c_in, "c_out": self.c_out, "kernel": self.kernel}


class ReLU(Layer):
    kind = "relu"

    def __init__(self, name: str):
        self.name = name

    def forward(self, x, params):
        return ad.relu(x)


class Sigmoid(Layer):
    kind = "sigmoid"

    def __init__(self, name: str):
        self.name = name

    def forward(self, x, params):
        return ad.sigmoid(x)


class Flatten(Layer):
    kind = "flatten"

    def __init__(self, name: str):
        self.name = name

    def forward(self, x, params):
        return ad.reshape(x, (x.shape[0], -1))


class SumPool(Layer):
    """Sum over the spatial axes: (n, c, h, w) -> (n, c)."""

    kind = "sumpool"

    def __init__(self, name: str):
        self.name = name

    def forward(self, x, params):
        if len(x.shape) != 4:
            raise ShapeError(f"sum pooling expects (n, c, h, w), got {x.shape}")
        return ad.sum(x, axis=(2, 3))


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, name: str, shape):
        self.name, self.shape = name, tuple(int(d) for d in shape)

    def forward(self, x, params):
        return ad.reshape(x, (x.shape[0], *self.shape))

    def spec(self):
        return {**super().spec(), "shape": list(self.shape)}


LAYER_KINDS: dict[str, type[Layer]] = {
    cls.kind: cls for cls in (Dense, Conv2d, ReLU, Sigmoid, Flatten, SumPool, Reshape)
}


def layer_from_spec(spec: Mapping[str, Any]) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    return cls(**spec)


@dataclass
class Model:
    layers: list[Layer]
    params: dict[str, np.ndarray]
    seed: int = 0
    input_shape: tuple[int, ...] = ()
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def layer_taps(self) -> list[str]:
        return ["input"] + [layer.name for layer in self.layers]

    def forward(self, x: Tensor, params: Mapping[str, Tensor] | None = None,
                stop_at: str | None = None) -> tuple[Tensor, dict[str, Tensor]]:
        """Run the layers on batch ``x``; returns the output and every tap."""
        if params is None:
            params = {name: Tensor(value) for name, value in self.params.items()}
        if stop_at is not None and stop_at not in self.layer_taps:
            raise UnknownTapError(stop_at)
        taps = {"input": x}
        out = x
        if stop_at != "input":
            for layer in self.layers:
                out = layer.forward(out, params)
                taps[layer.name] = out
                if layer.name == stop_at:
                    break
        return out, taps

    @property
    def graph(self) -> ComputationGraph:
        def fn(leaves):
            out, taps = self.forward(leaves["x"], leaves)
            return {"output": out, **taps}

        return ComputationGraph(fn, ("x",), self.params)

    def predict(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        return self.activations(x, None, batch_size)

    def activations(self, x: np.ndarray, tap: str | None, batch_size: int = 512) -> np.ndarray:
        """Batched forward values at ``tap`` (the model output when ``None``)."""
        if tap is not None and tap not in self.layer_taps:
            raise UnknownTapError(tap)
        params = {name: Tensor(value) for name, value in self.params.items()}
        chunks = []
        for i in range(0, len(x), batch_size):
            out, _ = self.forward(Tensor(x[i:i + batch_size]), params, stop_at=tap)
            chunks.append(out.data)
        if not chunks:
            return np.zeros((0,))
        return np.concatenate(chunks, axis=0)

    def slice(self, start: str | None = None, stop: str | None = None) -> "Model":
        """Sub-model from just after layer ``start`` up to and including ``stop``."""
        names = [layer.name for layer in self.layers]
        i = 0 if start is None else names.index(start) + 1
        j = len(names) if stop is None else names.index(stop) + 1
        layers = self.layers[i:j]
        keep = {key for layer in layers for key in layer.param_shapes()}
        return Model(layers, {k: v for k, v in self.params.items() if k in keep}, self.seed)

    def copy(self) -> "Model":
        return Model(list(self.layers), {k: v.copy() for k, v in self.params.items()},
                     self.seed, self.input_shape, dict(self.meta))


def build_model(layers: list[Layer], seed: int, input_shape: tuple[int, ...] = ()) -> Model:
    """Seeded uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization."""
    names = [layer.name for layer in layers]
    if len(set(names)) != len(names) or "input" in names:
        raise ValueError("layer names must be unique and not 'input'")
    rng = np.random.default_rng(seed)
    params = {}
    for layer in layers:
        bound = np.sqrt(1.0 / layer.fan_in())
        for pname, shape in layer.param_shapes().items():
            params[pname] = rng.uniform(-bound, bound, size=shape)
    return Model(list(layers), params, seed, tuple(input_shape))


def activations_at(model: Model, layer: str, sample: np.ndarray) -> np.ndarray:
    """Activation of a single (unbatched) sample at ``layer``."""
    if layer not in model.layer_taps:
        raise UnknownTapError(layer)
    values = evaluate(model.graph, {"x": np.asarray(sample, dtype=np.float64)[None]})
    return values[layer][0]
