"""Next-token training with early stopping, LR scheduling and checkpoints.

A run directory holds ``best.ckpt`` (weights of the best validation epoch),
``last.ckpt`` (everything needed to resume), ``train_log.csv`` /
``train_log.json`` and ``timing.json``.  Wall-clock times live only in
``timing.json`` so that logs of two identical runs compare byte-for-byte.
"""

import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .corpus import Vocabulary, WindowBatch
from .errors import EmptySplit, NanLoss
from .models import ModelConfig, forward, l2_term
from .rng import TRAIN, make_rng, restore_rng, rng_state
from .tensor import (
    Constant,
    InverseSqrtWarmup,
    ParamSet,
    PlateauReduce,
    adam_step,
    load_checkpoint,
    lr_at,
    no_grad,
    plateau_step,
    save_checkpoint,
    sparse_ce_loss,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs_max: int = 50
    batch: int = 64
    patience: int = 5
    min_delta: float = 1e-4
    seed: int = 1
    lr_policy: str = "plateau"  # "plateau" (constant + reduce on plateau) or "warmup"
    lr: float = 1e-3
    warmup: int = 4000
    plateau_factor: float = 0.2
    plateau_patience: int = 2
    lr_floor: float = 1e-6
    max_steps_per_epoch: Optional[int] = None
    max_val_windows: Optional[int] = None
    target_loss: Optional[float] = None  # stop once an epoch's training loss drops below this

    def __post_init__(self):
        if self.patience < 1 or self.batch < 1 or self.epochs_max < 1:
            raise ValueError("patience, batch and epochs_max must be >= 1")
        if self.lr_policy not in ("plateau", "warmup", "constant"):
            raise ValueError(f"unknown lr policy {self.lr_policy!r}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def default_train_config(variant: str, **overrides) -> TrainConfig:
    policy = "warmup" if variant == "transformer" else "plateau"
    return TrainConfig(lr_policy=policy, **overrides)


def schedule_for(tcfg: TrainConfig, cfg: ModelConfig):
    if tcfg.lr_policy == "warmup":
        return InverseSqrtWarmup(cfg.d_model, tcfg.warmup)
    if tcfg.lr_policy == "constant":
        return Constant(tcfg.lr)
    return PlateauReduce(tcfg.lr, tcfg.plateau_factor, tcfg.plateau_patience,
                         tcfg.min_delta, tcfg.lr_floor)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    lr: float
    l2: float
    steps: int


COLUMNS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc", "lr", "l2", "steps")


@dataclass
class TrainLog:
    """Per-epoch records.  ``train_loss`` is the data negative log-likelihood;
    the L2 penalty that was added to it for the gradient is in ``l2``."""

    records: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    def val_history(self):
        return [r.val_loss for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.records:
            w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in COLUMNS[1:-1]] + [r.steps])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"best_epoch": self.best_epoch, "stop_reason": self.stop_reason,
                "records": [dataclasses.asdict(r) for r in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls([EpochRecord(**r) for r in d["records"]], d["best_epoch"], d["stop_reason"])

    def write(self, run_dir):
        run_dir = Path(run_dir)
        (run_dir / "train_log.csv").write_text(self.to_csv(), encoding="utf-8")
        (run_dir / "train_log.json").write_text(self.to_json(), encoding="utf-8")


def evaluate(params: ParamSet, cfg: ModelConfig, windows: WindowBatch, batch: int = 256,
             forward_fn: Optional[Callable] = None):
    """Mean next-token NLL and top-1 accuracy over ``windows``, dropout off."""
    n = len(windows)
    if n == 0:
        raise EmptySplit("no windows to evaluate")
    fwd = forward_fn or (lambda idx: forward(params, cfg, idx, train=False))
    total, correct = 0.0, 0
    with no_grad():
        for lo in range(0, n, batch):
            idx = windows.inputs[lo:lo + batch]
            tgt = windows.targets[lo:lo + batch]
            logits = fwd(idx)
            total += float(sparse_ce_loss(logits, tgt).item()) * len(tgt)
            correct += int((np.argmax(logits.data, axis=1) == tgt).sum())
    return total / n, correct / n


def _checkpoint_meta(cfg, tcfg, vocab, extra=None):
    meta = {"model_config": cfg.to_dict(), "train_config": tcfg.to_dict(),
            "vocab": None if vocab is None else vocab.symbols}
    meta.update(extra or {})
    return meta


def load_model(path):
    """Return ``(params, ModelConfig, Vocabulary or None, meta)`` from a checkpoint."""
    params, meta = load_checkpoint(path)
    cfg = ModelConfig.from_dict(meta["model_config"])
    vocab = Vocabulary(meta["vocab"]) if meta.get("vocab") is not None else None
    return params, cfg, vocab, meta


def train(params: ParamSet, cfg: ModelConfig, train_windows: WindowBatch, val_windows: WindowBatch,
          tcfg: TrainConfig, run_dir=None, vocab: Optional[Vocabulary] = None, resume: bool = False,
          val_hook: Optional[Callable[[int, float], float]] = None):
    """Train in place; returns ``(params, log)`` with the best weights restored.

    ``val_hook(epoch, val_loss)`` may replace the measured validation loss,
    which tests use to inject plateaus.
    """
    if len(train_windows) == 0:
        raise EmptySplit("training split has no windows")
    if len(val_windows) == 0:
        raise EmptySplit("validation split has no windows")
    if tcfg.max_val_windows is not None and len(val_windows) > tcfg.max_val_windows:
        val_windows = val_windows.subset(np.arange(tcfg.max_val_windows))
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    schedule = schedule_for(tcfg, cfg)
    rng = make_rng(tcfg.seed, TRAIN)
    log = TrainLog()
    best_val, wait, start_epoch = math.inf, 0, 1
    best_snap = params.snapshot()
    timing = []

    if resume and run_dir is not None and (run_dir / "last.ckpt").exists():
        saved, meta = load_checkpoint(run_dir / "last.ckpt")
        _adopt(params, saved)
        rng = restore_rng(meta["rng_state"])
        log = TrainLog.from_dict(meta["log"])
        best_val, wait = meta["best_val"], meta["wait"]
        start_epoch = log.records[-1].epoch + 1 if log.records else 1
        if (run_dir / "timing.json").exists():
            timing = json.loads((run_dir / "timing.json").read_text())["epoch_seconds"]
        if (run_dir / "best.ckpt").exists():
            best, _ = load_checkpoint(run_dir / "best.ckpt")
            best_snap = best.snapshot()
        if log.stop_reason == "epochs_max":
            log.stop_reason = ""  # a raised epoch limit lets the run continue
        if log.stop_reason:
            params.load_snapshot(best_snap)
            return params, log

    n = len(train_windows)
    for epoch in range(start_epoch, tcfg.epochs_max + 1):
        t0 = time.perf_counter()
        if isinstance(schedule, PlateauReduce):
            rate = plateau_step(schedule, log.val_history()) if log.records else schedule.initial
        order = rng.permutation(n)
        batches = [order[i:i + tcfg.batch] for i in range(0, n, tcfg.batch)]
        if tcfg.max_steps_per_epoch is not None:
            batches = batches[:tcfg.max_steps_per_epoch]
        nll_sum, correct, seen, l2_val = 0.0, 0, 0, 0.0
        for rows in batches:
            if not isinstance(schedule, PlateauReduce):
                rate = lr_at(schedule, params.step + 1)
            params.zero_grad()
            idx = train_windows.inputs[rows]
            tgt = train_windows.targets[rows]
            logits = forward(params, cfg, idx, train=True, rng=rng)
            nll = sparse_ce_loss(logits, tgt)
            penalty = l2_term(params, cfg)
            loss = nll + penalty if cfg.l2_lambda > 0 else nll
            if not np.isfinite(loss.item()):
                raise NanLoss(f"epoch {epoch} step {params.step + 1}: loss {loss.item()} "
                              f"(nll {nll.item()}, l2 {penalty.item()})")
            loss.backward()
            adam_step(params, lr=rate)
            nll_sum += nll.item() * len(rows)
            correct += int((np.argmax(logits.data, axis=1) == tgt).sum())
            seen += len(rows)
            l2_val = float(penalty.item())
        val_loss, val_acc = evaluate(params, cfg, val_windows)
        if val_hook is not None:
            val_loss = float(val_hook(epoch, val_loss))
        log.records.append(EpochRecord(epoch, nll_sum / seen, val_loss, correct / seen, val_acc,
                                       float(rate), l2_val, len(batches)))
        if val_loss < best_val - tcfg.min_delta:
            best_val, wait = val_loss, 0
            log.best_epoch = epoch
            best_snap = params.snapshot()
            if run_dir is not None:
                save_checkpoint(run_dir / "best.ckpt", params,
                                _checkpoint_meta(cfg, tcfg, vocab, {"epoch": epoch, "val_loss": val_loss}))
        else:
            wait += 1
        if wait >= tcfg.patience:
            log.stop_reason = "early_stopping"
        elif tcfg.target_loss is not None and log.records[-1].train_loss < tcfg.target_loss:
            log.stop_reason = "target_reached"
        elif epoch == tcfg.epochs_max:
            log.stop_reason = "epochs_max"
        timing.append(time.perf_counter() - t0)
        if run_dir is not None:
            save_checkpoint(run_dir / "last.ckpt", params, _checkpoint_meta(cfg, tcfg, vocab, {
                "rng_state": rng_state(rng), "log": log.to_dict(), "best_val": best_val,
                "wait": wait}))
            log.write(run_dir)
            (run_dir / "timing.json").write_text(json.dumps({"epoch_seconds": timing}, indent=1) + "\n")
        if log.stop_reason:
            break

    params.load_snapshot(best_snap)
    return params, log


def _adopt(params: ParamSet, saved: ParamSet):
    for name, t in saved.params.items():
        params.params[name].data = t.data.copy()
    for name, b in saved.buffers.items():
        params.buffers[name][...] = b
    params.m = {k: v.copy() for k, v in saved.m.items()}
    params.v = {k: v.copy() for k, v in saved.v.items()}
    params.step = saved.step
