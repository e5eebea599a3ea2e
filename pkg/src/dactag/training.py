"""Training loops: token-level MLE and expected-risk fine-tuning."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from . import numerics as nx
from .beam import beam_search
from .corpus import ContextWindow, Conversation, encode_batch, windows_for
from .harness.metrics import last_tag_accuracy
from .model import Seq2SeqTagger, Tagger
from .numerics import Rng
from .objectives import Optimizer, PlateauScheduler, batch_risk_loss, cost

log = logging.getLogger("dactag")

EVAL_BATCH = 64


def labeled_targets(windows: Sequence[ContextWindow]) -> list[ContextWindow]:
    return [w for w in windows if w.target.tag is not None]


def batches(windows: Sequence[ContextWindow], size: int, order: np.ndarray | None = None):
    idx = np.arange(len(windows)) if order is None else order
    for s in range(0, len(idx), size):
        yield [windows[i] for i in idx[s : s + size]]


def predict_windows(model: Tagger, windows: Sequence[ContextWindow], beam: int = 1,
                    batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Best tag sequence per window, [N, W]."""
    out = [model.predict(encode_batch(chunk, model.vocab, model.tagset), beam)
           for chunk in batches(windows, batch_size)]
    if not out:
        return np.zeros((0, 0), dtype=np.int64)
    return np.concatenate(out, axis=0)


def gold_last(windows: Sequence[ContextWindow], tagset) -> np.ndarray:
    return np.array([tagset.encode(w.target.tag) for w in windows], dtype=np.int64)


def dev_accuracy(model: Tagger, windows: Sequence[ContextWindow], beam: int = 1) -> float:
    windows = labeled_targets(windows)
    if not windows:
        return 0.0
    return last_tag_accuracy(predict_windows(model, windows, beam)[:, -1], gold_last(windows, model.tagset))


def _risk_targets(hyps, batch, K: int, mode: str):
    N, W = batch.size, batch.width
    seqs = np.full((N, K, W), batch.pad_tag, dtype=np.int64)
    costs = np.zeros((N, K))
    valid = np.zeros((N, K), dtype=bool)
    logp = np.full((N, K), -np.inf)
    for n, row in enumerate(hyps):
        for i, h in enumerate(row):
            seqs[n, i] = h.tags
            valid[n, i] = True
            logp[n, i] = h.logp
            costs[n, i] = cost(h.tags, batch.tags[n], mode, batch.labeled[n])
        seqs[n, len(row):] = row[0].tags
    return seqs, costs, valid, logp


def expected_risk(model: Seq2SeqTagger, windows: Sequence[ContextWindow], B: int, mode: str = "last_tag",
                  alpha_lp: float = 0.65, batch_size: int = EVAL_BATCH) -> float:
    """Mean over windows of the beam-renormalized expected cost (evaluation mode)."""
    windows = labeled_targets(windows)
    total = 0.0
    for chunk in batches(windows, batch_size):
        batch = encode_batch(chunk, model.vocab, model.tagset)
        _, costs, valid, logp = _risk_targets(beam_search(model, batch, B, alpha_lp), batch, B, mode)
        shifted = np.where(valid, logp - logp.max(axis=1, keepdims=True), -np.inf)
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        total += float((p * costs).sum())
    return total / max(len(windows), 1)


def _snapshot(model: Tagger) -> dict[str, np.ndarray]:
    return {k: p.value.copy() for k, p in model.params.items()}


def _restore(model: Tagger, snap: dict[str, np.ndarray]) -> None:
    for k, v in snap.items():
        model.params[k].value[...] = v


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dev_acc: float
    lr: float
    dev_risk: float | None = None

    def line(self) -> str:
        cells = [str(self.epoch), f"{self.loss:.6f}", f"{self.dev_acc:.6f}"]
        if self.dev_risk is not None:
            cells.append(f"{self.dev_risk:.6f}")
        cells.append(f"{self.lr:.6g}")
        return "\t".join(cells)


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev: float = -1.0
    best_risk: float | None = None


def _write(out: TextIO | None, text: str) -> None:
    if out is not None:
        out.write(text + "\n")
        out.flush()


def train(model: Tagger, train_convs: Sequence[Conversation], dev_convs: Sequence[Conversation], config,
          metric_log: TextIO | None = None, stop: Callable[[EpochRecord], bool] | None = None) -> TrainResult:
    """Token-level training with per-epoch dev selection; leaves the best-dev weights in ``model``.

    ``stop`` may end training early after any epoch (e.g. once a target accuracy is hit).
    """
    W = config.context_window
    train_w = windows_for(train_convs, W)
    dev_w = windows_for(dev_convs, W)
    if not train_w:
        raise ValueError("no training windows")
    base = Rng(config.seed)
    opt = Optimizer.from_config(model.parameters(), config)
    sched = PlateauScheduler(config.lr, config.patience, config.decay)
    result = TrainResult()
    best = _snapshot(model)
    _write(metric_log, "epoch\ttrain_loss\tdev_acc\tlr")
    for epoch in range(1, config.max_epochs + 1):
        order = base.derive(1, epoch).permutation(len(train_w))
        drop = base.derive(2, epoch)
        total, count = 0.0, 0
        for chunk in batches(train_w, config.batch_size, order):
            batch = encode_batch(chunk, model.vocab, model.tagset)
            if not batch.labeled.any():
                continue
            opt.zero_grad()
            loss = model.loss(batch, training=True, rng=drop)
            nx.backward(loss)
            opt.step()
            total += loss.item() * batch.size
            count += batch.size
        acc = dev_accuracy(model, dev_w)
        rec = EpochRecord(epoch, total / max(count, 1), acc, opt.lr)
        result.history.append(rec)
        _write(metric_log, rec.line())
        log.info("epoch %d loss %.4f dev %.4f lr %.3g", epoch, rec.loss, acc, opt.lr)
        if acc > result.best_dev:
            result.best_dev, result.best_epoch = acc, epoch
            best = _snapshot(model)
        opt.lr = sched.step(acc)
        if opt.lr < config.min_lr:
            break
        if config.early_stop and epoch - result.best_epoch >= config.early_stop:
            break
        if stop is not None and stop(rec):
            break
    _restore(model, best)
    return result


def finetune_risk(model: Seq2SeqTagger, train_convs: Sequence[Conversation], dev_convs: Sequence[Conversation],
                  config, metric_log: TextIO | None = None, epochs: int | None = None,
                  B_train: int | None = None) -> TrainResult:
    """Minimize expected risk over beam candidate sets.

    Candidates come from a beam of ``B_train`` run without gradients; their
    log-probabilities are then recomputed under teacher forcing so the
    loss is differentiable. Dev selection keys on last-tag accuracy with
    beam ``B_inf``, ties broken by lower dev risk; epoch 0 (the starting
    weights) is a candidate.
    """
    if not isinstance(model, Seq2SeqTagger):
        raise ValueError("risk fine-tuning applies to seq2seq models only")
    W = config.context_window
    K = B_train or config.B_train
    epochs = config.risk_epochs if epochs is None else epochs
    train_w = labeled_targets(windows_for(train_convs, W))
    dev_w = windows_for(dev_convs, W)
    if not train_w:
        raise ValueError("no labeled training windows")
    base = Rng(config.seed).derive(7)
    opt = Optimizer.from_config(model.parameters(), config)
    sched = PlateauScheduler(config.lr, config.patience, config.decay)

    def dev_metrics():
        return (dev_accuracy(model, dev_w, config.B_inf),
                expected_risk(model, dev_w, K, config.risk_cost, config.alpha_lp))

    acc0, risk0 = dev_metrics()
    result = TrainResult(best_epoch=0, best_dev=acc0, best_risk=risk0)
    result.history.append(EpochRecord(0, float("nan"), acc0, opt.lr, risk0))
    best = _snapshot(model)
    _write(metric_log, "epoch\ttrain_risk\tdev_acc\tdev_risk\tlr")
    _write(metric_log, result.history[0].line())
    for epoch in range(1, epochs + 1):
        order = base.derive(1, epoch).permutation(len(train_w))
        drop = base.derive(2, epoch)
        total, count = 0.0, 0
        for chunk in batches(train_w, config.batch_size, order):
            batch = encode_batch(chunk, model.vocab, model.tagset)
            hyps = beam_search(model, batch, K, config.alpha_lp)
            seqs, costs, valid, _ = _risk_targets(hyps, batch, K, config.risk_cost)
            rows = np.repeat(np.arange(batch.size), K)
            opt.zero_grad()
            logp = model.sequence_logp(batch, seqs.reshape(-1, W), rows, training=True, rng=drop)
            loss = batch_risk_loss(nx.reshape(logp, (batch.size, K)), costs, valid)
            nx.backward(loss)
            opt.step()
            total += loss.item() * batch.size
            count += batch.size
        acc, risk = dev_metrics()
        rec = EpochRecord(epoch, total / max(count, 1), acc, opt.lr, risk)
        result.history.append(rec)
        _write(metric_log, rec.line())
        log.info("risk epoch %d train %.4f dev acc %.4f risk %.4f", epoch, rec.loss, acc, risk)
        if (acc, -risk) > (result.best_dev, -result.best_risk):
            result.best_dev, result.best_risk, result.best_epoch = acc, risk, epoch
            best = _snapshot(model)
        opt.lr = sched.step(acc)
        if opt.lr < config.min_lr:
            break
    _restore(model, best)
    return result
