"""Pairwise diversity and accuracy of ensemble heads.

Two heads are compared through the per-class weight vectors of their linear
classifiers: diversity is one minus the mean cosine similarity of matching
class rows, so identical classifiers score 0 and opposite ones score 2.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .errors import ContractError, DegenerateWeightError, DimensionError
from .model import softmax_rows


@dataclass(frozen=True)
class PairRecord:
    i: int
    j: int
    diversity: float
    mean_accuracy: float


@dataclass
class DiversityReport:
    pairs: list
    ensemble_accuracy: float
    per_head_accuracy: list

    @property
    def num_heads(self) -> int:
        return len(self.per_head_accuracy)

    @property
    def mean_diversity(self) -> float:
        if not self.pairs:
            return float("nan")
        return float(np.mean([p.diversity for p in self.pairs]))

    def summary(self) -> dict:
        return {
            "ensemble_accuracy": self.ensemble_accuracy,
            "per_head_accuracy": list(self.per_head_accuracy),
            "mean_diversity": self.mean_diversity,
        }

    def write(self, csv_path, json_path) -> None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair_i", "pair_j", "diversity", "mean_accuracy"])
            for p in self.pairs:
                w.writerow([p.i, p.j, repr(p.diversity), repr(p.mean_accuracy)])
        with open(json_path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)

    @classmethod
    def read(cls, csv_path, json_path) -> "DiversityReport":
        with open(csv_path, newline="") as fh:
            pairs = [
                PairRecord(int(r["pair_i"]), int(r["pair_j"]), float(r["diversity"]),
                           float(r["mean_accuracy"]))
                for r in csv.DictReader(fh)
            ]
        with open(json_path) as fh:
            s = json.load(fh)
        return cls(pairs, s["ensemble_accuracy"], s["per_head_accuracy"])


def pairwise_diversity(W_i, W_j, heads=(None, None)) -> float:
    """Mean over classes of ``1 - cos(W_i[k], W_j[k])``.

    ``heads`` only labels the error message when a class row has zero norm.
    """
    A = np.asarray(W_i, dtype=np.float64)
    B = np.asarray(W_j, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 2:
        raise DimensionError(f"weight matrices must be equal-shape K x d, got {A.shape} and {B.shape}")
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    for head, norms in zip(heads, (na, nb)):
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            k = int(zero[0])
            raise DegenerateWeightError(
                f"head {head} has an all-zero weight row for class {k}", head=head, klass=k
            )
    cos = np.sum(A * B, axis=1) / (na * nb)
    return float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))


def pairwise_report(model, features, labels) -> DiversityReport:
    """Diversity and mean standalone accuracy for every unordered head pair."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ContractError("evaluation set is empty")
    logits = [l.data for l in model.forward(features)]
    probs = [softmax_rows(l) for l in logits]
    head_acc = [float(np.mean(p.argmax(axis=1) == labels)) for p in probs]
    ens_acc = float(np.mean(np.mean(probs, axis=0).argmax(axis=1) == labels))
    W = model.head_weight_matrices()
    pairs = [
        PairRecord(i, j, pairwise_diversity(W[i], W[j], heads=(i, j)),
                   (head_acc[i] + head_acc[j]) / 2.0)
        for i, j in combinations(range(len(W)), 2)
    ]
    return DiversityReport(pairs, ens_acc, head_acc)


def compare_reports(a: DiversityReport, b: DiversityReport) -> list[dict]:
    """Per-pair ``a - b`` differences in accuracy and diversity, ordered by (i, j)."""
    if a.num_heads != b.num_heads:
        raise ContractError(f"reports have different ensemble sizes: {a.num_heads} vs {b.num_heads}")
    pa = sorted(a.pairs, key=lambda p: (p.i, p.j))
    pb = sorted(b.pairs, key=lambda p: (p.i, p.j))
    return [
        {
            "pair_index": n,
            "pair_i": x.i,
            "pair_j": x.j,
            "accuracy_delta": x.mean_accuracy - y.mean_accuracy,
            "diversity_delta": x.diversity - y.diversity,
        }
        for n, (x, y) in enumerate(zip(pa, pb))
    ]


def report_as_dict(report: DiversityReport) -> dict:
    d = report.summary()
    d["pairs"] = [asdict(p) for p in report.pairs]
    return d
