"""Named-input computation graphs with layer taps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward, leaf


class MissingBindingError(KeyError):
    pass


class UnknownTapError(KeyError):
    pass


GraphFn = Callable[[Mapping[str, Tensor]], Mapping[str, Tensor]]


@dataclass(frozen=True)
class ComputationGraph:
    """A differentiable function of named leaves.

    ``fn`` receives one ``Tensor`` per leaf (inputs and parameters alike) and
    returns a mapping of named nodes; every returned name is an output or a
    layer tap. ``params`` holds the trainable leaves' current values, the
    entries of ``inputs`` must be bound on every call.
    """

    fn: GraphFn
    inputs: tuple[str, ...]
    params: Mapping[str, np.ndarray] = field(default_factory=dict)

    def trace(self, bindings: Mapping[str, np.ndarray], wrt: tuple[str, ...] = ()):
        missing = [name for name in self.inputs if name not in bindings]
        if missing:
            raise MissingBindingError(f"no binding for input(s): {', '.join(missing)}")
        leaves: dict[str, Tensor] = {}
        for name, value in self.params.items():
            leaves[name] = leaf(value, name=name, requires_grad=name in wrt)
        for name in self.inputs:
            leaves[name] = leaf(bindings[name], name=name, requires_grad=name in wrt)
        unknown = [name for name in wrt if name not in leaves]
        if unknown:
            raise KeyError(f"not a leaf of this graph: {', '.join(unknown)}")
        return leaves, dict(self.fn(leaves))


def evaluate(graph: ComputationGraph, bindings: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Forward values of every named node.

    Raises ``NumericOverflowError`` if any intermediate becomes non-finite.
    """
    _, nodes = graph.trace(bindings)
    return {name: node.data.copy() for name, node in nodes.items()}


def gradient(graph: ComputationGraph, bindings: Mapping[str, np.ndarray],
             wrt: tuple[str, ...], output: str) -> dict[str, np.ndarray]:
    leaves, nodes = graph.trace(bindings, tuple(wrt))
    if output not in nodes:
        raise UnknownTapError(output)
    grads = backward(nodes[output], [leaves[name] for name in wrt])
    return dict(zip(wrt, grads))
