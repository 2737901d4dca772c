"""Adam and learning-rate schedules."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import ShapeMismatch
from .params import ParamSet


def adam_step(params: ParamSet, grads: Optional[dict] = None, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> ParamSet:
    """One bias-corrected Adam update, in place.  Missing gradients count as zero."""
    if grads is None:
        grads = params.grads()
    for name in grads:
        if name not in params.params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name}: {g.shape} vs parameter {p.shape}")
        m = params.m.get(name)
        if m is None:
            m = params.m[name] = np.zeros_like(p.data)
            params.v[name] = np.zeros_like(p.data)
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)
    return params


@dataclass(frozen=True)
class Constant:
    rate: float = 1e-3


@dataclass(frozen=True)
class InverseSqrtWarmup:
    d_model: int = 256
    warmup: int = 4000


@dataclass(frozen=True)
class PlateauReduce:
    initial: float = 1e-3
    factor: float = 0.2
    patience: int = 2
    min_delta: float = 1e-4
    floor: float = 1e-6


LrSchedule = Union[Constant, InverseSqrtWarmup, PlateauReduce]


def lr_at(schedule: LrSchedule, step: int = 1) -> float:
    """Rate at optimizer step ``step`` (1-based)."""
    if isinstance(schedule, Constant):
        return schedule.rate
    if isinstance(schedule, InverseSqrtWarmup):
        if step < 1:
            raise ValueError("step must be >= 1")
        return schedule.d_model ** -0.5 * min(step ** -0.5, step * schedule.warmup ** -1.5)
    if isinstance(schedule, PlateauReduce):
        return schedule.initial
    raise TypeError(f"unknown schedule {schedule!r}")


def plateau_step(schedule: PlateauReduce, history: Sequence[float]) -> float:
    """Rate after replaying a validation-loss history.

    An evaluation improves when it beats the best loss so far by more than
    ``min_delta``.  Whenever the last ``patience`` evaluations all failed to
    improve, the rate is multiplied by ``factor`` (never below ``floor``).
    """
    if len(history) == 0:
        raise ValueError("empty validation history")
    rate = schedule.initial
    best = math.inf
    wait = 0
    for loss in history:
        if loss < best - schedule.min_delta:
            best = loss
            wait = 0
            continue
        wait += 1
        if wait >= schedule.patience:
            rate = max(rate * schedule.factor, schedule.floor)
    return rate


def schedule_to_json(schedule: LrSchedule) -> dict:
    return {"kind": type(schedule).__name__, **schedule.__dict__}


def schedule_from_json(d: dict) -> LrSchedule:
    d = dict(d)
    kind = d.pop("kind")
    return {"Constant": Constant, "InverseSqrtWarmup": InverseSqrtWarmup,
            "PlateauReduce": PlateauReduce}[kind](**d)
