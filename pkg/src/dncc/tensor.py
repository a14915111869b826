"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation on a :class:`Tensor` that requires a gradient records its
parents and a backward closure on the output. Calling :meth:`Tensor.backward`
on a scalar walks that graph in reverse topological order. The graph is
rebuilt on every forward pass; nothing is cached between passes.

Broadcasting is deliberately narrow: operands must have equal shapes, or one
of them is a scalar, or a row vector (``(k,)`` or ``(1, k)``) combined with an
``(n, k)`` matrix. Anything else raises :class:`DimensionError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NumericError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _op=""):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = None
        self.op = _op

    # -- basic protocol --------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return reduce("sum", self, axis)

    def mean(self, axis=None):
        return reduce("mean", self, axis)

    # -- differentiation -------------------------------------------------

    def backward(self) -> None:
        """Accumulate ``d self / d t`` into ``t.grad`` for every reachable leaf ``t``.

        Repeated calls accumulate; call :meth:`zero_grad` on leaves to reset.
        """
        if self.data.ndim != 0:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward() on a tensor that does not require grad")
        order = tape(self)
        grads = {id(self): np.ones((), dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def tape(root: Tensor) -> list:
    """Nodes reachable from ``root`` in topological order (inputs first)."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, op, backward):
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), _op=op)
    if needs:
        out._backward = backward
    return out


# -- broadcasting ---------------------------------------------------------


def _check_broadcast(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    big, small = (a, b) if a.ndim >= b.ndim else (b, a)
    if big.ndim == 2 and small.ndim == 1 and small.shape[0] == big.shape[1]:
        return
    if big.ndim == 2 and small.shape == (1, big.shape[1]):
        return
    raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    if len(shape) == 1:
        return g.sum(axis=0)
    return g.sum(axis=0, keepdims=True)


# -- elementwise ----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data)
    return _result(
        a.data + b.data,
        (a, b),
        "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data)
    return _result(
        a.data - b.data,
        (a, b),
        "sub",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data)
    return _result(
        a.data * b.data,
        (a, b),
        "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), "neg", lambda g: (-g,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0  # subgradient 0 at 0
    return _result(np.where(mask, a.data, 0.0), (a,), "relu", lambda g: (g * mask,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), "exp", lambda g: (g * out,))


def expm1(a) -> Tensor:
    """``exp(a) - 1`` without cancellation near zero."""
    a = as_tensor(a)
    return _result(np.expm1(a.data), (a,), "expm1", lambda g: (g * np.exp(a.data),))


def log(a) -> Tensor:
    a = as_tensor(a)
    bad = ~(a.data > 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"log of non-positive value {a.data[idx]!r} at index {idx}", index=idx)
    return _result(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def elementwise(op: str, a, b=None) -> Tensor:
    """Dispatch by name: one of add, sub, mul, relu, exp, log."""
    binary = {"add": add, "sub": sub, "mul": mul}
    unary = {"relu": relu, "exp": exp, "log": log}
    if op in binary:
        if b is None:
            raise ContractError(f"{op} needs two operands")
        return binary[op](a, b)
    if op in unary:
        return unary[op](a)
    raise ContractError(f"unknown elementwise op {op!r}")


# -- linear algebra and reductions -----------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _result(
        a.data @ b.data,
        (a, b),
        "matmul",
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def reduce(op: str, a, axis=None) -> Tensor:
    a = as_tensor(a)
    if op not in ("sum", "mean"):
        raise ContractError(f"unknown reduction {op!r}")
    if axis is not None and not (-a.ndim <= axis < a.ndim):
        raise DimensionError(f"axis {axis} invalid for shape {a.shape}")
    count = a.size if axis is None else a.shape[axis]
    out = a.data.sum(axis=axis)
    if op == "mean":
        out = out / count
    scale = 1.0 / count if op == "mean" else 1.0

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * scale, a.shape).copy(),)

    return _result(out, (a,), op, backward)


def log_softmax_rows(logits) -> Tensor:
    """Row-wise ``x - logsumexp(x)`` using max subtraction."""
    x = as_tensor(logits)
    if x.ndim != 2 or x.shape[1] < 2:
        raise DimensionError(f"log_softmax_rows needs an n x K matrix with K >= 2, got {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("non-finite logits")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    soft = np.exp(out)
    return _result(
        out, (x,), "log_softmax", lambda g: (g - soft * g.sum(axis=1, keepdims=True),)
    )


def logsumexp_rows(a) -> Tensor:
    """Row-wise log-sum-exp of an n x k matrix, returning a length-n vector."""
    x = as_tensor(a)
    if x.ndim != 2:
        raise DimensionError(f"logsumexp_rows needs a matrix, got {x.shape}")
    m = x.data.max(axis=1, keepdims=True)
    out = (m + np.log(np.exp(x.data - m).sum(axis=1, keepdims=True)))[:, 0]
    weights = np.exp(x.data - out[:, None])
    return _result(out, (x,), "logsumexp", lambda g: (g[:, None] * weights,))


# -- indexing -------------------------------------------------------------


def take_rows(a, cols: Sequence[int]) -> Tensor:
    """Pick ``a[i, cols[i]]`` for every row ``i``."""
    x = as_tensor(a)
    cols = np.asarray(cols, dtype=np.int64)
    if x.ndim != 2 or cols.shape != (x.shape[0],):
        raise DimensionError(f"take_rows: {x.shape} with {cols.shape[0]} indices")
    rows = np.arange(x.shape[0])

    def backward(g):
        full = np.zeros_like(x.data)
        full[rows, cols] = g
        return (full,)

    return _result(x.data[rows, cols], (x,), "take_rows", backward)


def slice_columns(a, start: int, stop: int) -> Tensor:
    x = as_tensor(a)
    if x.ndim != 2 or not (0 <= start < stop <= x.shape[1]):
        raise DimensionError(f"column slice [{start}:{stop}] invalid for shape {x.shape}")

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return _result(x.data[:, start:stop], (x,), "slice", backward)


def stack_columns(vectors: Sequence[Tensor]) -> Tensor:
    """Stack k length-n vectors into an n x k matrix."""
    vs = [as_tensor(v) for v in vectors]
    if not vs or any(v.ndim != 1 or v.shape != vs[0].shape for v in vs):
        raise DimensionError("stack_columns needs equal-length vectors")
    return _result(
        np.stack([v.data for v in vs], axis=1),
        vs,
        "stack",
        lambda g: tuple(g[:, j].copy() for j in range(len(vs))),
    )


# -- gradient checking ----------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: dict
    passed: bool
    step: float
    tolerance: float
    failure: str | None = None
    worst: dict = field(default_factory=dict)

    @property
    def overall_max(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def gradient_check(
    f: Callable[[], Tensor],
    params: Iterable,
    h: float = 1e-6,
    tol: float = 1e-6,
    analytic: Callable[[], Tensor] | None = None,
) -> GradCheckReport:
    """Compare autodiff gradients of ``f`` with central differences.

    ``params`` is an iterable of tensors or ``(name, tensor)`` pairs. ``f`` is
    called with no arguments and must read the current parameter values. The
    step for coordinate ``i`` is ``h * max(1, |theta_i|)``. ``analytic``, if
    given, builds the graph that is differentiated instead of ``f`` (used for
    surrogates whose gradient is taken with some inputs held fixed); it must
    agree with ``f`` in value at the current point.
    """
    if h <= 0:
        raise ContractError("h must be positive")
    named = []
    for i, p in enumerate(params):
        named.append(p if isinstance(p, tuple) else (f"param{i}", p))
    for _, t in named:
        t.grad = None
    loss = (analytic or f)()
    loss.backward()
    errors, worst = {}, {}
    for name, t in named:
        grad = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        worst_err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            step = h * max(1.0, abs(orig))
            flat[i] = orig + step
            fp = float(f().data)
            flat[i] = orig - step
            fm = float(f().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            a = float(grad.reshape(-1)[i])
            if not (np.isfinite(fp) and np.isfinite(fm) and np.isfinite(a)):
                errors[name] = float("nan")
                return GradCheckReport(
                    errors, False, h, tol, failure=f"non-finite value at {name}[{i}]"
                )
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            if err > worst_err:
                worst_err = err
                worst[name] = (i, a, numeric)
        errors[name] = worst_err
        t.grad = None
    passed = all(e < tol for e in errors.values())
    failure = None
    if not passed:
        name = max(errors, key=errors.get)
        failure = f"{name}: rel. error {errors[name]:.3e} at flat index {worst[name][0]}"
    return GradCheckReport(errors, passed, h, tol, failure=failure, worst=worst)
