"""Dense tensors with a reverse-mode differentiation tape.

A :class:`Tensor` wraps a contiguous numpy array.  Every operation applied to
a tracked tensor records a node holding its parents and a backward rule; the
node carries a monotonically increasing recording index, so ``backward``
replays exactly the reverse recording order over the ancestors of the root.

No broadcasting is performed anywhere: binary operations demand equal shapes.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_record_index = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""

    def __init__(self, message: str, *shapes: tuple):
        self.shapes = shapes
        super().__init__(message)


def _shape_mismatch(op: str, a: tuple, b: tuple) -> ShapeError:
    return ShapeError(f"{op}: shape mismatch {list(a)} vs {list(b)}", a, b)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


def make_rng(seed: int) -> np.random.Generator:
    """The single seeded generator type used for all randomness (PCG64)."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_index")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else DEFAULT_DTYPE
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._index = -1

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype}{tag})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other: "Tensor") -> "Tensor":
        return ew_binary(self, other, "add")

    def __sub__(self, other: "Tensor") -> "Tensor":
        return ew_binary(self, other, "sub")

    def __mul__(self, other: "Tensor") -> "Tensor":
        return ew_binary(self, other, "mul")

    def backward(self) -> None:
        backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x), dtype=dtype)


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data))


def _record(data: np.ndarray, parents: Sequence[Tensor], rule: Callable) -> Tensor:
    """Wrap ``data`` and, if any parent is tracked, put the node on the tape.

    ``rule(grad_out)`` returns one gradient (or None) per parent.
    """
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = rule
        out._index = next(_record_index)
    return out


# -- elementwise ------------------------------------------------------------
def ew_binary(a: Tensor, b: Tensor, op: str) -> Tensor:
    if a.shape != b.shape:
        raise _shape_mismatch(op, a.shape, b.shape)
    if op == "add":
        return _record(a.data + b.data, (a, b), lambda g: (g, g))
    if op == "sub":
        return _record(a.data - b.data, (a, b), lambda g: (g, -g))
    if op == "mul":
        ad, bd = a.data, b.data
        return _record(ad * bd, (a, b), lambda g: (g * bd, g * ad))
    raise ValueError(f"unknown elementwise op {op!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    return ew_binary(a, b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return ew_binary(a, b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return ew_binary(a, b, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _record(np.abs(a.data), (a,), lambda g: (g * sign,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _record(ad * ad, (a,), lambda g: (2 * g * ad,))


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so large |x| never overflows exp
    x = a.data
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype, copy=False)
    return _record(s, (a,), lambda g: (g * s * (1 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _record(t, (a,), lambda g: (g * (1 - t * t),))


ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh}


def activation(a: Tensor, kind: str) -> Tensor:
    try:
        return ACTIVATIONS[kind](a)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}") from None


# -- reductions and shape plumbing -----------------------------------------
def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape, dtype = a.shape, a.dtype
    return _record(np.asarray(a.data.sum(dtype=dtype)).reshape(1), (a,),
                   lambda g: (np.full(shape, g[0], dtype=dtype),))


def mean(a: Tensor) -> Tensor:
    n = a.size
    shape, dtype = a.shape, a.dtype
    return _record(np.asarray(a.data.mean(dtype=dtype)).reshape(1), (a,),
                   lambda g: (np.full(shape, g[0] / n, dtype=dtype),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    cuts = np.cumsum(sizes)[:-1]
    return _record(data, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


def split(a: Tensor, sizes: Sequence[int], axis: int = 1) -> list[Tensor]:
    """Split along ``axis`` into consecutive chunks of the given sizes."""
    if np.sum(sizes) != a.shape[axis]:
        raise ShapeError(f"split: sizes {list(sizes)} do not cover extent {a.shape[axis]}", a.shape)
    outs = []
    start = 0
    for n in sizes:
        idx = [slice(None)] * a.data.ndim
        idx[axis] = slice(start, start + n)
        idx = tuple(idx)

        def rule(g, idx=idx):
            full = np.zeros(a.shape, dtype=g.dtype)
            full[idx] = g
            return (full,)

        outs.append(_record(a.data[idx], (a,), rule))
        start += n
    return outs


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != first:
            raise _shape_mismatch("stack", first, t.shape)
    data = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)
    return _record(data, tensors,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# -- differentiation -------------------------------------------------------
def _tape_for(root: Tensor) -> list[Tensor]:
    """Tracked ancestors of ``root`` in reverse recording order."""
    seen = {id(root)}
    nodes = []
    stack_ = [root]
    while stack_:
        node = stack_.pop()
        if node._backward is not None:
            nodes.append(node)
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                stack_.append(p)
    nodes.sort(key=lambda n: n._index, reverse=True)
    return nodes


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every tracked leaf."""
    if root.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {list(root.shape)}", root.shape)
    if not root.requires_grad:
        raise ValueError("backward: root is not on the tape")
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape, dtype=root.dtype)}
    for node in _tape_for(root):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._backward is None:
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
    if root._backward is None:
        root.grad = grads[id(root)]


def grad_check(f: Callable[[], Tensor] | Callable[[Tensor], Tensor],
               x: Tensor | Iterable[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` is called with ``x`` when a single tensor is given, and with no
    arguments when a list of tensors is given (it closes over them).  The
    error of each entry is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    single = isinstance(x, Tensor)
    params = [x] if single else list(x)
    call = (lambda: f(x)) if single else f

    for p in params:
        p.requires_grad = True
        p.grad = None
    out = call()
    if out.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar, got {list(out.shape)}", out.shape)
    backward(out)

    worst = 0.0
    with no_grad():
        for p in params:
            analytic = np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = float(call().data.reshape(-1)[0])
                flat[i] = orig - eps
                down = float(call().data.reshape(-1)[0])
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
                worst = max(worst, err)
    return worst
