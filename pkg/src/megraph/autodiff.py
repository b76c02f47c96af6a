"""Dense float64 tensors with reverse-mode differentiation.

A small tape: every operation computes its value with numpy and records a
closure mapping the output gradient back to parent gradients. Graphs are
plain DAGs of :class:`Tensor` nodes which `backward` walks once in reverse
topological order. Scalars are 0-d tensors; everything else in this package
is 2-d.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "tensor",
    "constant",
    "backward",
    "grad_check",
    "GradCheckResult",
    "finite_checks",
    "set_check_finite",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "relu",
    "transpose",
    "concat_rows",
    "slice_rows",
    "softmax_rows",
    "l1_rowsum",
    "sq_frobenius",
    "sum_all",
    "mean_over_batch",
    "affine",
    "graph_affine",
    "affine_sum",
    "cross_entropy",
]


class ShapeError(ValueError):
    """Operands do not satisfy an op's shape contract."""


_CHECK_FINITE = False


def set_check_finite(enabled: bool) -> bool:
    """Toggle NaN/Inf checking after every op. Returns the previous setting."""
    global _CHECK_FINITE
    previous = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return previous


@contextlib.contextmanager
def finite_checks():
    """Context manager that enables the per-op NaN/Inf check."""
    previous = set_check_finite(True)
    try:
        yield
    finally:
        set_check_finite(previous)


class Tensor:
    """Array value plus an optional gradient accumulator.

    Leaves created with ``requires_grad=True`` accumulate gradients across
    ``backward`` calls until :meth:`zero_grad`. Interior nodes hold the
    gradient of the most recent backward pass, for inspection.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has shape {self.shape}, not scalar")
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], back) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out._parents = parents
    out._backward = back
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("op produced a non-finite value")
    return out


def _require_2d(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 2:
            raise ShapeError(f"{op}: expected 2-d tensor, got shape {t.shape}")


def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    Gradients of ``requires_grad`` leaves accumulate across calls; interior
    nodes are overwritten with this call's gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")

    # Iterative post-order DFS; `seen` marks first visit so each node is
    # appended exactly once, after all of its parents' subtrees.
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.get(id(node))
        if g is None:
            continue
        if node._backward is not None:
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    for node in topo:
        g = grads.get(id(node))
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        else:
            node.grad = g


# ---------------------------------------------------------------------------
# elementwise and structural ops


def _scalar_reduce(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return np.asarray(g.sum(), dtype=np.float64).reshape(shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out, (a, b), back)


def _elementwise_pair(op: str, a: Tensor, b: Tensor):
    """Classify an elementwise pair: same-shape, scalar-left, or scalar-right."""
    if a.shape == b.shape:
        return "same"
    if a.data.size == 1:
        return "scalar_left"
    if b.data.size == 1:
        return "scalar_right"
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    kind = _elementwise_pair("add", a, b)
    out = a.data + b.data

    def back(g):
        if kind == "same":
            return g, g
        if kind == "scalar_left":
            return _scalar_reduce(g, a.shape), g
        return g, _scalar_reduce(g, b.shape)

    return _node(out, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    kind = _elementwise_pair("sub", a, b)
    out = a.data - b.data

    def back(g):
        if kind == "same":
            return g, -g
        if kind == "scalar_left":
            return _scalar_reduce(g, a.shape), -g
        return g, -_scalar_reduce(g, b.shape)

    return _node(out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    kind = _elementwise_pair("mul", a, b)
    out = a.data * b.data

    def back(g):
        ga = g * b.data
        gb = g * a.data
        if kind == "scalar_left":
            ga = _scalar_reduce(ga, a.shape)
        elif kind == "scalar_right":
            gb = _scalar_reduce(gb, b.shape)
        return ga, gb

    return _node(out, (a, b), back)


def div(a: Tensor, b: Tensor) -> Tensor:
    kind = _elementwise_pair("div", a, b)
    out = a.data / b.data

    def back(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        if kind == "scalar_left":
            ga = _scalar_reduce(ga, a.shape)
        elif kind == "scalar_right":
            gb = _scalar_reduce(gb, b.shape)
        return ga, gb

    return _node(out, (a, b), back)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a non-differentiated python constant."""
    c = float(factor)
    out = a.data * c

    def back(g):
        return (g * c,)

    return _node(out, (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = np.where(mask, a.data, 0.0)

    def back(g):
        return (g * mask,)

    return _node(out, (a,), back)


def transpose(a: Tensor) -> Tensor:
    _require_2d("transpose", a)
    out = a.data.T.copy()

    def back(g):
        return (g.T,)

    return _node(out, (a,), back)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_rows: need at least one tensor")
    _require_2d("concat_rows", *parts)
    cols = parts[0].shape[1]
    for p in parts:
        if p.shape[1] != cols:
            raise ShapeError(
                f"concat_rows: column mismatch {p.shape} vs (*, {cols})"
            )
    sizes = [p.shape[0] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=0)
    boundaries = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, boundaries, axis=0))

    return _node(out, tuple(parts), back)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("slice_rows", a)
    if not (0 <= start < stop <= a.shape[0]):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {a.shape}")
    out = a.data[start:stop].copy()

    def back(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _node(out, (a,), back)


def softmax_rows(a: Tensor) -> Tensor:
    _require_2d("softmax_rows", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (a,), back)


def l1_rowsum(a: Tensor) -> Tensor:
    """Row-wise L1 norm: (R, C) -> (R, 1)."""
    _require_2d("l1_rowsum", a)
    out = np.abs(a.data).sum(axis=1, keepdims=True)

    def back(g):
        return (np.sign(a.data) * g,)

    return _node(out, (a,), back)


def sq_frobenius(a: Tensor) -> Tensor:
    """Sum of squared entries, as a 0-d scalar."""
    out = np.asarray((a.data * a.data).sum())

    def back(g):
        return (2.0 * a.data * g,)

    return _node(out, (a,), back)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())

    def back(g):
        return (np.broadcast_to(g, a.shape).astype(np.float64),)

    return _node(out, (a,), back)


def mean_over_batch(a: Tensor) -> Tensor:
    """Mean along axis 0 with keepdims: (N, C) -> (1, C)."""
    _require_2d("mean_over_batch", a)
    n = a.shape[0]
    out = a.data.mean(axis=0, keepdims=True)

    def back(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _node(out, (a,), back)


# ---------------------------------------------------------------------------
# fused ops (keep tape graphs small on the hot path)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with bias shape (1, D)."""
    _require_2d("affine", x, w, b)
    if x.shape[1] != w.shape[0] or b.shape != (1, w.shape[1]):
        raise ShapeError(f"affine: shapes {x.shape} @ {w.shape} + {b.shape}")
    out = x.data @ w.data + b.data

    def back(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0, keepdims=True)

    return _node(out, (x, w, b), back)


def graph_affine(adj: np.ndarray, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """adj @ x @ w + b with a constant (non-differentiated) adjacency."""
    _require_2d("graph_affine", x, w, b)
    if adj.ndim != 2 or adj.shape[1] != x.shape[0]:
        raise ShapeError(f"graph_affine: adjacency {adj.shape} vs features {x.shape}")
    if x.shape[1] != w.shape[0] or b.shape != (1, w.shape[1]):
        raise ShapeError(f"graph_affine: shapes {x.shape} @ {w.shape} + {b.shape}")
    pooled = adj @ x.data
    out = pooled @ w.data + b.data

    def back(g):
        return (
            adj.T @ (g @ w.data.T),
            pooled.T @ g,
            g.sum(axis=0, keepdims=True),
        )

    return _node(out, (x, w, b), back)


def affine_sum(xs: Sequence[Tensor], ws: Sequence[Tensor], b: Tensor) -> Tensor:
    """sum_i xs[i] @ ws[i] + b; the temporal-convolution workhorse."""
    if len(xs) != len(ws) or not xs:
        raise ShapeError("affine_sum: need matching, non-empty input/weight lists")
    _require_2d("affine_sum", *xs, *ws, b)
    d = ws[0].shape[1]
    r = xs[0].shape[0]
    for x, w in zip(xs, ws):
        if x.shape[0] != r or x.shape[1] != w.shape[0] or w.shape[1] != d:
            raise ShapeError(
                f"affine_sum: inconsistent term {x.shape} @ {w.shape}"
            )
    if b.shape != (1, d):
        raise ShapeError(f"affine_sum: bias shape {b.shape}, expected (1, {d})")
    out = b.data.copy()
    out = out + sum(x.data @ w.data for x, w in zip(xs, ws))

    def back(g):
        gxs = tuple(g @ w.data.T for w in ws)
        gws = tuple(x.data.T @ g for x in xs)
        return (*gxs, *gws, g.sum(axis=0, keepdims=True))

    return _node(out, (*xs, *ws, b), back)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of (N, K) logits against integer labels."""
    _require_2d("cross_entropy", logits)
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != logits.shape[0]:
        raise ShapeError(
            f"cross_entropy: labels shape {y.shape} vs logits {logits.shape}"
        )
    if not np.issubdtype(y.dtype, np.integer):
        raise ShapeError("cross_entropy: labels must be integers")
    n, k = logits.shape
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"cross_entropy: label out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = np.asarray(-log_probs[np.arange(n), y].mean())

    def back(g):
        p = np.exp(log_probs)
        p[np.arange(n), y] -= 1.0
        return (p * (g / n),)

    return _node(out, (logits,), back)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


@dataclass
class GradCheckResult:
    """Outcome of one central-difference gradient check."""

    max_rel_err: float
    passed: bool
    n_coords: int
    worst_coord: tuple[int, ...] | None = None
    failure: str | None = None

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        detail = f"max_rel_err={self.max_rel_err:.3e}"
        if self.failure:
            detail += f" ({self.failure})"
        return f"{status} {detail}"


def grad_check(f, x: Tensor, h: float = 1e-5, tol: float = 1e-4) -> GradCheckResult:
    """Compare the tape gradient of scalar-valued ``f`` at ``x`` to central
    differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1)``; the floor
    keeps near-zero gradients from inflating rounding noise.
    """
    if h <= 0:
        raise ValueError("grad_check: h must be positive")
    was_leaf = x.requires_grad
    x.requires_grad = True
    saved_grad = x.grad
    x.grad = None
    try:
        out = f(x)
        if out.data.size != 1:
            raise ShapeError(f"grad_check: f must be scalar-valued, got {out.shape}")
        backward(out)
        analytic = (
            np.zeros_like(x.data) if x.grad is None else np.array(x.grad, copy=True)
        )
    finally:
        x.grad = saved_grad
        x.requires_grad = was_leaf

    if not np.all(np.isfinite(analytic)):
        bad = np.unravel_index(int(np.argmin(np.isfinite(analytic))), x.shape)
        return GradCheckResult(
            max_rel_err=np.inf,
            passed=False,
            n_coords=x.data.size,
            worst_coord=bad,
            failure=f"non-finite analytic gradient at {bad}",
        )

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        fp = float(f(x).data)
        flat[i] = original - h
        fm = float(f(x).data)
        flat[i] = original
        if not (np.isfinite(fp) and np.isfinite(fm)):
            coord = np.unravel_index(i, x.shape)
            return GradCheckResult(
                max_rel_err=np.inf,
                passed=False,
                n_coords=flat.size,
                worst_coord=coord,
                failure=f"non-finite finite-difference value at {coord}",
            )
        num_flat[i] = (fp - fm) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel))
    max_rel = float(rel.reshape(-1)[worst])
    return GradCheckResult(
        max_rel_err=max_rel,
        passed=max_rel <= tol,
        n_coords=flat.size,
        worst_coord=np.unravel_index(worst, x.shape) if flat.size else None,
    )
