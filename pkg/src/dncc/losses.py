"""Cross-entropy losses for head ensembles and the correlation-regularized objective.

All per-sample work happens on correct-class log-probabilities. The ensemble
probability of the labelled class is averaged in the log domain with
log-sum-exp, and the ``-log`` Bregman penalty uses
:func:`~dncc.bregman.itakura_saito_log_domain`, so no probability is ever
exponentiated on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .bregman import itakura_saito_log_domain
from .errors import ContractError, DimensionError, InternalConsistencyError
from .tensor import Tensor

IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class LambdaSchedule:
    """``constant`` returns ``value`` at every epoch; ``ramp`` grows linearly to it."""

    kind: str = "ramp"
    value: float = 1e-2

    def __post_init__(self):
        if self.kind not in ("constant", "ramp"):
            raise ContractError(f"unknown lambda schedule {self.kind!r}")
        if not math.isfinite(self.value):
            raise ContractError("lambda must be finite")

    @classmethod
    def parse(cls, text: str) -> "LambdaSchedule":
        """Parse ``const:<v>`` or ``ramp:<base>``."""
        kind, sep, val = text.partition(":")
        if not sep:
            raise ContractError(f"lambda schedule must look like const:v or ramp:base, got {text!r}")
        kind = {"const": "constant", "constant": "constant", "ramp": "ramp"}.get(kind)
        if kind is None:
            raise ContractError(f"unknown lambda schedule in {text!r}")
        return cls(kind, float(val))

    def __str__(self):
        return f"{'const' if self.kind == 'constant' else 'ramp'}:{self.value!r}"


@dataclass(frozen=True)
class DnccConfig:
    lambda_schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    detach_ensemble_mean: bool = False


def lambda_at(schedule: LambdaSchedule, epoch: int, total_epochs: int) -> float:
    """Penalty weight for a 0-based ``epoch``; the ramp reaches its base at the last epoch."""
    if total_epochs <= 0:
        raise ContractError("total_epochs must be positive")
    if not 0 <= epoch < total_epochs:
        raise ContractError(f"epoch {epoch} outside [0, {total_epochs})")
    if schedule.kind == "constant":
        return schedule.value
    return (epoch + 1) / total_epochs * schedule.value


# -- differentiable pieces ---------------------------------------------------


def _check_labels(labels, n, K):
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n,):
        raise DimensionError(f"{y.shape[0] if y.ndim else 0} labels for {n} rows")
    bad = np.flatnonzero((y < 0) | (y >= K))
    if bad.size:
        i = int(bad[0])
        raise ContractError(f"label {int(y[i])} at index {i} outside [0, {K})")
    return y


def correct_class_log_probs(logits, labels) -> Tensor:
    logits = T.as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be n x K, got {logits.shape}")
    y = _check_labels(labels, logits.shape[0], logits.shape[1])
    return T.take_rows(T.log_softmax_rows(logits), y)


def _head_log_probs(per_head_logits, labels) -> list[Tensor]:
    if len(per_head_logits) < 1:
        raise ContractError("need at least one head")
    shape = T.as_tensor(per_head_logits[0]).shape
    for l in per_head_logits:
        if T.as_tensor(l).shape != shape:
            raise DimensionError("all heads must produce logits of the same shape")
    return [correct_class_log_probs(l, labels) for l in per_head_logits]


def ensemble_log_prob(head_log_probs: Sequence[Tensor]) -> Tensor:
    """``log((1/M) sum_m p_m)`` per sample."""
    M = len(head_log_probs)
    return T.logsumexp_rows(T.stack_columns(head_log_probs)) - math.log(M)


def individual_ce(logits, labels) -> Tensor:
    return T.neg(correct_class_log_probs(logits, labels)).mean()


def ensemble_ce(per_head_logits, labels) -> Tensor:
    """Cross-entropy of the head-averaged softmax."""
    return T.neg(ensemble_log_prob(_head_log_probs(per_head_logits, labels))).mean()


def log_domain_penalty(log_p: Tensor, log_q: Tensor) -> Tensor:
    """Differentiable ``d_{-log}(p, q) = (log q - log p) + expm1(log p - log q)``."""
    diff = log_p - log_q
    return T.expm1(diff) - diff


def _head_objective(lp: Tensor, lq: Tensor, lam: float) -> Tensor:
    # lp - lq <= log M because the ensemble average is at least p_m / M, so
    # the exponent inside the penalty is bounded without any clamping.
    return (T.neg(lp) + lam * log_domain_penalty(lp, lq)).mean()


def dncc_head_loss(m, per_head_logits, labels, lam, detach=False) -> Tensor:
    """Cross-entropy of head ``m`` plus ``lam`` times its divergence from the ensemble.

    With ``detach`` the ensemble probability is a constant; otherwise gradients
    flow through it, including head ``m``'s own share.
    """
    if not 0 <= m < len(per_head_logits):
        raise ContractError(f"head index {m} outside [0, {len(per_head_logits)})")
    lps = _head_log_probs(per_head_logits, labels)
    lq = ensemble_log_prob(lps)
    if detach:
        lq = lq.detach()
    return _head_objective(lps[m], lq, lam)


def dncc_objective(per_head_logits, labels, lam, detach=False, frozen_log_mean=None):
    """Sum over heads of :func:`dncc_head_loss`, sharing one forward graph.

    Returns ``(total, head_losses, head_log_probs, ensemble_log_prob)``.
    ``frozen_log_mean``, if given, replaces the ensemble term by a constant
    array; finite-difference checks of the detached objective use it.
    """
    lps = _head_log_probs(per_head_logits, labels)
    lq = ensemble_log_prob(lps)
    lq_used = lq
    if frozen_log_mean is not None:
        lq_used = Tensor(frozen_log_mean)
    elif detach:
        lq_used = lq.detach()
    losses = [_head_objective(lp, lq_used, lam) for lp in lps]
    total = losses[0]
    for l in losses[1:]:
        total = total + l
    return total, losses, lps, lq


# -- decomposition -----------------------------------------------------------


@dataclass
class LossBreakdown:
    ensemble_loss: float
    individual_losses: list
    bregman_information: float
    per_head_penalty: list
    dncc_losses: list = field(default_factory=list)
    lam: float = 0.0

    @property
    def mean_individual_loss(self) -> float:
        return float(np.mean(self.individual_losses))

    @property
    def identity_gap(self) -> float:
        return abs(self.ensemble_loss - (self.mean_individual_loss - self.bregman_information))


def decompose_log_probs(head_log_probs: np.ndarray, lam: float = 0.0) -> LossBreakdown:
    """Breakdown from an n x M array of correct-class log-probabilities."""
    lp = np.asarray(head_log_probs, dtype=np.float64)
    n, M = lp.shape
    mx = lp.max(axis=1, keepdims=True)
    lq = (mx + np.log(np.exp(lp - mx).sum(axis=1, keepdims=True)))[:, 0] - math.log(M)
    pen = itakura_saito_log_domain(lp, lq[:, None])  # n x M
    individual = (-lp).mean(axis=0)
    per_head_penalty = pen.mean(axis=0)
    bd = LossBreakdown(
        ensemble_loss=float((-lq).mean()),
        individual_losses=[float(v) for v in individual],
        bregman_information=float(pen.mean(axis=1).mean()),
        per_head_penalty=[float(v) for v in per_head_penalty],
        dncc_losses=[float(v) for v in individual + lam * per_head_penalty],
        lam=float(lam),
    )
    if not bd.identity_gap < IDENTITY_TOL:
        raise InternalConsistencyError(
            f"ensemble loss {bd.ensemble_loss!r} != mean individual {bd.mean_individual_loss!r}"
            f" - information {bd.bregman_information!r} (gap {bd.identity_gap:.3e})"
        )
    return bd


def decompose(per_head_logits, labels, lam: float = 0.0) -> LossBreakdown:
    """Ensemble loss, per-head losses and Bregman information from one evaluation.

    Raises :class:`InternalConsistencyError` if the ensemble loss differs from
    the mean individual loss minus the Bregman information by 1e-9 or more.
    """
    lps = _head_log_probs(per_head_logits, labels)
    return decompose_log_probs(np.stack([l.data for l in lps], axis=1), lam)
