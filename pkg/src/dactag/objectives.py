"""Losses, the expected-risk objective, optimizers, clipping and the LR schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nx
from .model import token_nll
from .numerics import Node

__all__ = [
    "token_nll", "cost", "risk_loss", "batch_risk_loss", "OptimizerState", "adam_step", "Optimizer",
    "clip_gradients", "ScheduleState", "PlateauScheduler",
]

_MASKED = -1e30


def cost(candidate, gold, mode: str = "last_tag", real=None) -> float:
    """0/1 loss of a candidate tag sequence against gold.

    ``last_tag``: 1 when the final (target) tags differ.
    ``hamming``: fraction of real slots that differ.
    ``paper_literal``: 1 when the final tags agree (the printed form of the
    cost, kept for fidelity experiments; minimizing it rewards errors).
    """
    candidate = np.asarray(candidate)
    gold = np.asarray(gold)
    if candidate.shape != gold.shape:
        raise ValueError("candidate and gold must have equal length")
    if mode == "last_tag":
        return float(candidate[-1] != gold[-1])
    if mode == "paper_literal":
        return float(candidate[-1] == gold[-1])
    if mode == "hamming":
        real = np.ones(len(gold), dtype=bool) if real is None else np.asarray(real, dtype=bool)
        return float((candidate[real] != gold[real]).mean())
    raise ValueError(f"unknown cost mode {mode!r}")


def batch_risk_loss(seq_logp: Node, costs: np.ndarray, valid: np.ndarray | None = None) -> Node:
    """Mean over windows of sum_c cost_c * P(c) / sum_c' P(c').

    seq_logp: [N, K] candidate log-probabilities; costs, valid: [N, K]. The
    renormalization is a softmax over each window's valid candidates, so it
    never divides by an underflowed total.
    """
    costs = np.asarray(costs, dtype=np.float64)
    N, K = costs.shape
    if K < 1:
        raise ValueError("risk_loss needs at least one candidate")
    logits = seq_logp
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if not valid.any(axis=1).all():
            raise ValueError("a window has no candidates")
        logits = nx.add(seq_logp, np.where(valid, 0.0, _MASKED))
    weights = nx.softmax(logits, axis=1)
    return nx.scale(nx.sum(nx.mul(weights, costs)), 1.0 / N)


def risk_loss(seq_logp: Node, costs: Sequence[float]) -> Node:
    """Expected risk over one window's candidate set; ``seq_logp`` is [K]."""
    costs = np.asarray(costs, dtype=np.float64).reshape(1, -1)
    return batch_risk_loss(nx.reshape(seq_logp, (1, -1)), costs)


@dataclass
class OptimizerState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = False
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState) -> None:
    """One bias-corrected Adam update, in place.

    Coupled decay (Adam) adds ``wd * theta`` to the gradient; decoupled
    decay (AdamW) subtracts ``lr * wd * theta`` next to the Adam step.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        if state.weight_decay and not state.decoupled:
            g = g + state.weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay and state.decoupled:
            update = update + state.weight_decay * p
        p -= state.lr * update


def clip_gradients(grads: Sequence[np.ndarray], max_norm: float = 5.0) -> tuple[list[np.ndarray], float]:
    """Rescale so the global L2 norm is at most ``max_norm``; returns (grads, norm before)."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if norm > max_norm:
        factor = max_norm / norm
        return [g * factor for g in grads], norm
    return list(grads), norm


class Optimizer:
    """Adam/AdamW over a list of parameter nodes."""

    def __init__(self, params: Sequence[Node], lr: float, weight_decay: float = 0.0,
                 decoupled: bool = False, clip: float | None = 5.0):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, weight_decay=weight_decay, decoupled=decoupled)
        self.clip = clip
        self.last_norm = 0.0

    @classmethod
    def from_config(cls, params, config) -> "Optimizer":
        return cls(params, config.lr, config.weight_decay, config.optimizer == "adamw", config.clip)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        grads = [p.grad for p in self.params]
        if self.clip:
            grads, self.last_norm = clip_gradients(grads, self.clip)
        adam_step([p.value for p in self.params], grads, self.state)


@dataclass
class ScheduleState:
    lr: float
    patience: int
    decay: float
    best: float = -np.inf
    stagnant: int = 0


class PlateauScheduler:
    """Multiply the LR by ``decay`` once the dev metric has stalled ``patience`` epochs."""

    def __init__(self, lr: float, patience: int, decay: float):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.state = ScheduleState(lr, patience, decay)

    @property
    def lr(self) -> float:
        return self.state.lr

    def step(self, metric: float) -> float:
        s = self.state
        if metric > s.best:
            s.best = metric
            s.stagnant = 0
        else:
            s.stagnant += 1
            if s.stagnant >= s.patience:
                s.lr *= s.decay
                s.stagnant = 0
        return s.lr
