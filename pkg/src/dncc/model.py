"""Shared-backbone multi-head ensemble classifier.

The backbone is a ReLU MLP. Its first ``len(hidden_widths) - branch_depth``
layers are shared by every head; the trailing ``branch_depth`` layers are
replicated per head. The penultimate feature vector is partitioned into M
equal, disjoint slices (``split``), or first mapped linearly to M times its
width and then partitioned (``expand_split``). Head m is a linear classifier
over slice m.

When layers are branched, head m's copy of the last hidden layer produces
only slice m, so the concatenated branch outputs play the role of the shared
feature vector.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError
from .tensor import Tensor

FEATURE_MODES = ("split", "expand_split")


@dataclass(frozen=True)
class BackboneSpec:
    input_dim: int
    hidden_widths: tuple = (64, 64)
    activation: str = "relu"
    branch_depth: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ConfigurationError("input_dim must be positive")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ConfigurationError("hidden_widths must be a non-empty list of positive ints")
        if self.activation != "relu":
            raise ConfigurationError(f"unsupported activation {self.activation!r}")
        if not 0 <= self.branch_depth <= len(self.hidden_widths):
            raise ConfigurationError(
                f"branch_depth must be in [0, {len(self.hidden_widths)}], got {self.branch_depth}"
            )


@dataclass(frozen=True)
class EnsembleConfig:
    num_heads: int = 8
    num_classes: int = 10
    feature_mode: str = "split"
    seed: int = 0

    def __post_init__(self):
        if self.num_heads < 1:
            raise ConfigurationError("num_heads must be >= 1")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigurationError(f"feature_mode must be one of {FEATURE_MODES}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @property
    def expansion_factor(self) -> int:
        return self.num_heads if self.feature_mode == "expand_split" else 1


def _glorot(rng, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


@dataclass
class _Layer:
    W: Tensor
    b: Tensor


class EnsembleModel:
    """M linear heads on disjoint feature slices of a (partly) shared MLP."""

    def __init__(self, spec: BackboneSpec, cfg: EnsembleConfig):
        widths = spec.hidden_widths
        M = cfg.num_heads
        if cfg.feature_mode == "split" and widths[-1] % M:
            raise ConfigurationError(
                f"last hidden width {widths[-1]} must be divisible by num_heads={M} in split mode"
            )
        self.spec = spec
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        n_shared = len(widths) - spec.branch_depth
        # slice width seen by each head
        self.slice_width = widths[-1] if cfg.feature_mode == "expand_split" else widths[-1] // M

        rng = np.random.default_rng([cfg.seed, 0])
        self.shared: list[_Layer] = []
        fan_in = spec.input_dim
        for q in range(n_shared):
            self.shared.append(self._make(f"shared.{q}", rng, fan_in, widths[q]))
            fan_in = widths[q]
        trunk_out = fan_in

        self.branches: list[list[_Layer]] = []
        self.expansions: list[_Layer | None] = []
        self.heads: list[_Layer] = []
        for m in range(M):
            rng = np.random.default_rng([cfg.seed, 1, m])
            layers, fin = [], trunk_out
            for q in range(n_shared, len(widths)):
                out = widths[q]
                if q == len(widths) - 1 and cfg.feature_mode == "split":
                    out = self.slice_width
                layers.append(self._make(f"head{m}.branch{q}", rng, fin, out))
                fin = out
            self.branches.append(layers)
            if not layers and cfg.feature_mode == "split":
                fin = self.slice_width
            if cfg.feature_mode == "expand_split":
                self.expansions.append(self._make(f"head{m}.expand", rng, fin, self.slice_width))
                fin = self.slice_width
            else:
                self.expansions.append(None)
            self.heads.append(self._make(f"head{m}.out", rng, fin, cfg.num_classes))

    def _make(self, name, rng, fan_in, fan_out) -> _Layer:
        W = Tensor(_glorot(rng, fan_in, fan_out), requires_grad=True)
        b = Tensor(np.zeros(fan_out), requires_grad=True)
        self.params[f"{name}.W"] = W
        self.params[f"{name}.b"] = b
        return _Layer(W, b)

    # -- parameters --------------------------------------------------------

    @property
    def num_heads(self) -> int:
        return self.cfg.num_heads

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        """``(name, tensor)`` pairs in declaration order."""
        return iter(self.params.items())

    def param_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def shared_param_count(self) -> int:
        return sum(t.size for k, t in self.params.items() if k.startswith("shared."))

    def shared_param_fraction(self) -> float:
        return self.shared_param_count() / self.param_count()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def head_weight_matrices(self) -> list[np.ndarray]:
        """Per-head classifier weights as K x d arrays (row k = weights of class k)."""
        return [h.W.data.T.copy() for h in self.heads]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_state_arrays(self, arrays: dict) -> None:
        if set(arrays) != set(self.params):
            raise ConfigurationError("parameter names do not match the model layout")
        for k, t in self.params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.shape:
                raise DimensionError(f"{k}: expected shape {t.shape}, got {a.shape}")
            t.data = a.copy()

    # -- computation ---------------------------------------------------------

    def shared_features(self, batch) -> Tensor:
        x = T.as_tensor(batch)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise DimensionError(
                f"batch shape {x.shape} does not match input_dim {self.spec.input_dim}"
            )
        h = x
        for layer in self.shared:
            h = T.relu(h @ layer.W + layer.b)
        return h

    def heads_from_features(self, h: Tensor) -> list[Tensor]:
        out = []
        d = self.slice_width
        for m in range(self.num_heads):
            z = h
            if self.branches[m]:
                for layer in self.branches[m]:
                    z = T.relu(z @ layer.W + layer.b)
            elif self.cfg.feature_mode == "split" and self.num_heads > 1:
                z = T.slice_columns(h, m * d, (m + 1) * d)
            if self.expansions[m] is not None:
                e = self.expansions[m]
                z = z @ e.W + e.b
            head = self.heads[m]
            out.append(z @ head.W + head.b)
        return out

    def forward(self, batch) -> list[Tensor]:
        """Per-head logits, each an n x K tensor on the autodiff graph."""
        return self.heads_from_features(self.shared_features(batch))

    def predict(self, batch) -> tuple[np.ndarray, np.ndarray]:
        """Labels and averaged softmax probabilities over heads.

        Ties in the argmax go to the lowest class index.
        """
        probs = ensemble_probabilities([l.data for l in self.forward(batch)])
        return probs.argmax(axis=1), probs

    def describe(self) -> dict:
        return {"spec": asdict(self.spec), "cfg": asdict(self.cfg)}

    @classmethod
    def from_description(cls, desc: dict) -> "EnsembleModel":
        spec = dict(desc["spec"])
        spec["hidden_widths"] = tuple(spec["hidden_widths"])
        return cls(BackboneSpec(**spec), EnsembleConfig(**desc["cfg"]))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ensemble_probabilities(per_head_logits) -> np.ndarray:
    return np.mean([softmax_rows(np.asarray(l)) for l in per_head_logits], axis=0)
