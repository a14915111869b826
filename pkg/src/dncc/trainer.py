"""Deterministic mini-batch SGD training for head ensembles.

Each step sums the correlation-regularized losses of all heads, runs a single
backward pass and applies momentum SGD to every parameter. Training is a pure
function of the configuration and the data: batch order depends only on
``(seed, epoch)`` and model initialisation only on the model seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import BatchIterator, Dataset
from .errors import ConfigurationError, InternalConsistencyError, NumericError, TrainingAborted
from .losses import (
    IDENTITY_TOL,
    DnccConfig,
    LambdaSchedule,
    decompose,
    decompose_log_probs,
    dncc_objective,
    lambda_at,
)
from .model import EnsembleModel, ensemble_probabilities

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    initial_lr: float = 0.1
    lr_decay_factor: float = 0.1
    lr_milestones: tuple = (60, 120, 160)
    momentum: float = 0.9
    weight_decay: float = 0.0
    dncc: DnccConfig = field(default_factory=DnccConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lr_milestones", tuple(int(m) for m in self.lr_milestones))
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        ms = self.lr_milestones
        if any(b <= a for a, b in zip(ms, ms[1:])) or any(m < 0 or m >= self.epochs for m in ms):
            raise ConfigurationError(
                f"milestones {list(ms)} must be strictly increasing and below epochs={self.epochs}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        d["dncc"] = {
            "lambda_schedule": str(self.dncc.lambda_schedule),
            "detach_ensemble_mean": self.dncc.detach_ensemble_mean,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        dn = d.pop("dncc")
        dncc = DnccConfig(LambdaSchedule.parse(dn["lambda_schedule"]), dn["detach_ensemble_mean"])
        return cls(dncc=dncc, **d)


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Step decay: multiply by the decay factor at every milestone already reached."""
    passed = sum(1 for m in cfg.lr_milestones if m <= epoch)
    return cfg.initial_lr * cfg.lr_decay_factor**passed


def sgd_step(params, grads, velocities, lr, momentum) -> None:
    """In place: ``v <- momentum * v + g``, ``theta <- theta - lr * v``."""
    for p, g, v in zip(params, grads, velocities):
        v *= momentum
        v += g
        p -= lr * v


# -- metrics -----------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    lam: float
    lr: float
    train_ensemble_loss: float
    train_mean_individual_loss: float
    train_bregman_information: float
    val_ensemble_loss: float
    val_mean_individual_loss: float
    val_bregman_information: float
    val_ensemble_accuracy: float
    val_head_accuracy: list
    wall_time: float = 0.0

    def deterministic(self) -> dict:
        d = asdict(self)
        d.pop("wall_time")
        return d


class MetricsLog:
    """Per-epoch records.

    Metrics files omit wall time so that repeated runs produce identical
    bytes; timings go to a separate JSONL file.
    """

    def __init__(self, records=None):
        self.records: list[EpochRecord] = list(records or [])

    def append(self, rec: EpochRecord) -> None:
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        if not isinstance(other, MetricsLog):
            return NotImplemented
        return [r.deterministic() for r in self] == [r.deterministic() for r in other]

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.deterministic()) + "\n")

    def write_timing(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps({"epoch": r.epoch, "wall_time": r.wall_time}) + "\n")

    def write_csv(self, path) -> None:
        if not self.records:
            open(path, "w").close()
            return
        M = len(self.records[0].val_head_accuracy)
        scalar = [k for k in self.records[0].deterministic() if k != "val_head_accuracy"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(scalar + [f"val_head{m}_accuracy" for m in range(M)])
            for r in self.records:
                d = r.deterministic()
                w.writerow([repr(d[k]) for k in scalar] + [repr(a) for a in d["val_head_accuracy"]])

    @classmethod
    def read_jsonl(cls, path) -> "MetricsLog":
        with open(path) as fh:
            return cls(EpochRecord(**json.loads(line)) for line in fh if line.strip())

    @classmethod
    def read_csv(cls, path) -> "MetricsLog":
        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                heads = sorted(
                    (k for k in row if k.startswith("val_head")),
                    key=lambda k: int(k[len("val_head"):-len("_accuracy")]),
                )
                d = {k: v for k, v in row.items() if k not in heads}
                rec = {k: (int(v) if k == "epoch" else float(v)) for k, v in d.items()}
                rec["val_head_accuracy"] = [float(row[k]) for k in heads]
                records.append(EpochRecord(**rec))
        return cls(records)


# -- evaluation --------------------------------------------------------------


def evaluate(model: EnsembleModel, ds: Dataset) -> dict:
    """Accuracy and loss decomposition of ``model`` on ``ds`` without touching parameters.

    Raises :class:`InternalConsistencyError` if the ensemble loss exceeds the
    mean head loss.
    """
    if len(ds) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    logits = [l.data for l in model.forward(ds.features)]
    bd = decompose(logits, ds.labels)
    if bd.ensemble_loss > bd.mean_individual_loss + IDENTITY_TOL:
        raise InternalConsistencyError(
            f"ensemble loss {bd.ensemble_loss!r} above mean head loss {bd.mean_individual_loss!r}"
        )
    probs = ensemble_probabilities(logits)
    return {
        "ensemble_accuracy": float(np.mean(probs.argmax(axis=1) == ds.labels)),
        "per_head_accuracy": [float(np.mean(l.argmax(axis=1) == ds.labels)) for l in logits],
        "ensemble_loss": bd.ensemble_loss,
        "mean_individual_loss": bd.mean_individual_loss,
        "bregman_information": bd.bregman_information,
    }


# -- training ------------------------------------------------------------------


@dataclass
class TrainState:
    """Optimizer state carried across epochs and through checkpoints."""

    velocities: dict
    next_epoch: int = 0

    @classmethod
    def fresh(cls, model: EnsembleModel) -> "TrainState":
        return cls({k: np.zeros_like(t.data) for k, t in model.parameters()})


def save_training_checkpoint(path, model, state: TrainState, cfg: TrainConfig, extra=None):
    save_checkpoint(
        path,
        model,
        velocities=state.velocities,
        epoch=state.next_epoch,
        rng_state={"batch_seed": cfg.seed, "next_epoch": state.next_epoch},
        extra={"train_config": cfg.to_dict(), **(extra or {})},
    )


def load_training_checkpoint(path) -> tuple[EnsembleModel, TrainState, Checkpoint]:
    ck = load_checkpoint(path)
    return ck.model, TrainState(dict(ck.velocities), ck.epoch), ck


def train(
    model: EnsembleModel,
    train_ds: Dataset,
    val_ds: Dataset,
    cfg: TrainConfig,
    state: TrainState | None = None,
    metrics: MetricsLog | None = None,
    checkpoint_path=None,
    stop_after: int | None = None,
) -> tuple[EnsembleModel, MetricsLog]:
    """Train ``model`` in place from ``state.next_epoch`` up to ``cfg.epochs``.

    ``stop_after`` ends the run early after that many epochs (the schedule
    still refers to ``cfg.epochs``), which together with ``state`` and
    ``metrics`` lets a run be split across processes. A checkpoint, if a path
    is given, is rewritten after every completed epoch; on a non-finite loss
    the previous one is left untouched and :class:`TrainingAborted` is raised.
    """
    if train_ds.dim != model.spec.input_dim or val_ds.dim != model.spec.input_dim:
        raise ConfigurationError("dataset width does not match the model input_dim")
    state = state or TrainState.fresh(model)
    metrics = metrics if metrics is not None else MetricsLog()
    names = list(model.params)
    params = [model.params[k] for k in names]
    vel = [state.velocities[k] for k in names]
    batches = BatchIterator(train_ds, cfg.batch_size, seed=cfg.seed)
    detach = cfg.dncc.detach_ensemble_mean

    last = cfg.epochs if stop_after is None else min(cfg.epochs, state.next_epoch + stop_after)
    for epoch in range(state.next_epoch, last):
        t0 = time.perf_counter()
        lam = lambda_at(cfg.dncc.lambda_schedule, epoch, cfg.epochs)
        lr = lr_at(cfg, epoch)
        sums = np.zeros(3)
        seen = 0
        for step, idx in enumerate(batches.batches(epoch)):
            X, y = train_ds.features[idx], train_ds.labels[idx]
            try:
                total, _, lps, _ = dncc_objective(model.forward(X), y, lam, detach=detach)
            except NumericError as exc:
                raise TrainingAborted(
                    f"epoch {epoch}, step {step}: {exc}", epoch=epoch, step=step
                ) from exc
            if not math.isfinite(total.item()):
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch}, step {step}", epoch=epoch, step=step
                )
            bd = decompose_log_probs(np.stack([l.data for l in lps], axis=1))
            sums += len(idx) * np.array(
                [bd.ensemble_loss, bd.mean_individual_loss, bd.bregman_information]
            )
            seen += len(idx)
            model.zero_grad()
            total.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            if cfg.weight_decay:
                grads = [g + cfg.weight_decay * p.data for g, p in zip(grads, params)]
            sgd_step([p.data for p in params], grads, vel, lr, cfg.momentum)
        model.zero_grad()

        ev = evaluate(model, val_ds)
        tr = sums / seen
        rec = EpochRecord(
            epoch=epoch,
            lam=lam,
            lr=lr,
            train_ensemble_loss=float(tr[0]),
            train_mean_individual_loss=float(tr[1]),
            train_bregman_information=float(tr[2]),
            val_ensemble_loss=ev["ensemble_loss"],
            val_mean_individual_loss=ev["mean_individual_loss"],
            val_bregman_information=ev["bregman_information"],
            val_ensemble_accuracy=ev["ensemble_accuracy"],
            val_head_accuracy=ev["per_head_accuracy"],
            wall_time=time.perf_counter() - t0,
        )
        gap = abs(rec.train_ensemble_loss - (rec.train_mean_individual_loss
                                             - rec.train_bregman_information))
        if not gap < IDENTITY_TOL:
            raise InternalConsistencyError(f"epoch {epoch}: training decomposition gap {gap:.3e}")
        metrics.append(rec)
        state.next_epoch = epoch + 1
        log.info(
            "epoch %d lam=%.3g lr=%.3g train=%.4f val_acc=%.4f",
            epoch, lam, lr, rec.train_ensemble_loss, rec.val_ensemble_accuracy,
        )
        if checkpoint_path is not None:
            save_training_checkpoint(checkpoint_path, model, state, cfg)
    return model, metrics

