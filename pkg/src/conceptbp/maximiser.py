"""Gradient search for a small input perturbation that drives a probe to a target.

The minimised objective is

    lambda1 * |P(L(combine(s, p))) - target| + lambda2 * distance(s, p)

where ``L`` is the probed layer of the model, ``P`` the probe and
``combine``/``distance`` come from the modality adapter.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .adapters import ModalityAdapter, Perturbation
from .probing import Probe, probe_output
from .tensor_nn import NumericOverflowError, Tensor
from .tensor_nn import autodiff as ad
from .tensor_nn.layers import Model
from .tensor_nn.training import make_optimizer

log = logging.getLogger(__name__)

CONVERGED, STEP_LIMIT, DIVERGED, FAILED = "converged", "step-limit", "diverged", "failed"


@dataclass(frozen=True)
class MaximiseConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    target: float = 1.0
    max_steps: int = 2000
    lr: float = 1e-2
    tol: float = 0.05
    seed: int = 0
    optimizer: str = "adam"
    noise: float = 1e-3

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_steps < 1:
            raise ValueError("step limit must be at least 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Objective:
    total: Tensor
    concept: Tensor
    distance: Tensor
    probe_value: float
    perturbed: Tensor


@dataclass
class TrajectoryStep:
    probe: float
    distance: float
    objective: float


@dataclass
class PerturbationResult:
    perturbation: Perturbation
    perturbed: np.ndarray
    probe_output: float
    distance: float
    objective: float
    initial_probe: float
    trajectory: list[TrajectoryStep]
    status: str
    config: MaximiseConfig
    error: str | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def steps(self) -> int:
        return len(self.trajectory)


def objective(model: Model, probe: Probe, adapter: ModalityAdapter, s: np.ndarray,
              pert: dict[str, Tensor], config: MaximiseConfig) -> Objective:
    perturbed, dist = adapter.forward(s, pert)
    _, taps = model.forward(ad.reshape(perturbed, (1, *perturbed.shape)), stop_at=probe.tap)
    p = ad.reshape(probe_output(probe, taps[probe.tap]), ())
    concept = ad.absolute(p - config.target)
    total = ad.add(config.lambda1 * concept, config.lambda2 * dist)
    return Objective(total, concept, dist, p.item(), perturbed)


def _result(pert, obj: Objective, initial: float, traj, status, config, error=None):
    return PerturbationResult(
        perturbation={k: np.array(v, dtype=np.float64) for k, v in pert.items()},
        perturbed=obj.perturbed.data.copy(),
        probe_output=obj.probe_value,
        distance=obj.distance.item(),
        objective=obj.total.item(),
        initial_probe=initial,
        trajectory=traj,
        status=status,
        config=config,
        error=error,
    )


def maximise(model: Model, probe: Probe, adapter: ModalityAdapter, s: np.ndarray,
             config: MaximiseConfig = MaximiseConfig()) -> PerturbationResult:
    """Search for a perturbation bringing the probe within ``tol`` of the target.

    Stops at the first iterate inside the tolerance. If the unperturbed sample
    already satisfies it, the zero-effect perturbation is returned at step 0.
    """
    s = np.asarray(s, dtype=np.float64)
    zero = adapter.zero(s)
    base = objective(model, probe, adapter, s, {k: Tensor(v) for k, v in zero.items()}, config)
    initial = base.probe_value
    step0 = TrajectoryStep(base.probe_value, base.distance.item(), base.total.item())
    if abs(initial - config.target) <= config.tol:
        return _result(zero, base, initial, [step0], CONVERGED, config)

    rng = np.random.default_rng(config.seed)
    pert = adapter.init(s, rng, config.noise)
    opt = make_optimizer(config.optimizer, config.lr)
    names = sorted(pert)
    traj: list[TrajectoryStep] = []
    last: tuple[Perturbation, Objective] | None = None
    for _ in range(config.max_steps):
        try:
            leaves = {k: Tensor(pert[k], requires_grad=True, name=k) for k in names}
            obj = objective(model, probe, adapter, s, leaves, config)
        except NumericOverflowError as exc:
            if last is None:
                return _result(zero, base, initial, traj, DIVERGED, config, str(exc))
            return _result(*last, initial, traj, DIVERGED, config, str(exc))
        traj.append(TrajectoryStep(obj.probe_value, obj.distance.item(), obj.total.item()))
        last = (pert, obj)
        if abs(obj.probe_value - config.target) <= config.tol:
            return _result(pert, obj, initial, traj, CONVERGED, config)
        grads = ad.backward(obj.total, [leaves[k] for k in names])
        pert = dict(pert)
        opt.step(pert, dict(zip(names, grads)))
        pert = adapter.project(pert)
    return _result(*last, initial, traj, STEP_LIMIT, config)


def sweep_lambdas(model: Model, probe: Probe, adapter: ModalityAdapter, s: np.ndarray,
                  base: MaximiseConfig, lambda2s: Sequence[float]) -> list[PerturbationResult]:
    """One maximisation per lambda2, same seed and lambda1, in input order.

    A run that raises is recorded with status ``failed`` instead of aborting
    the sweep.
    """
    if len(lambda2s) == 0:
        raise ValueError("lambda2 list is empty")
    results = []
    for lam in lambda2s:
        try:
            config = replace(base, lambda2=float(lam))
            results.append(maximise(model, probe, adapter, s, config))
        except Exception as exc:  # noqa: BLE001 - recorded per run
            log.warning("sweep run lambda2=%s failed: %s", lam, exc)
            nan = float("nan")
            results.append(PerturbationResult({}, np.zeros(0), nan, nan, nan, nan, [], FAILED, base,
                                              str(exc), {"lambda2": lam}))
    return results
