"""Spatial primitives: same-padded convolution and its adjoint, 2x2 max
pooling, nearest-neighbour upsampling and orthogonal initialisation.

Convolutions are stride 1 with zero padding of ``(k - 1) // 2`` so spatial
extents are preserved.  Kernels are ``[out_ch, in_ch, k, k]`` with odd ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _record


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Patches of a padded batch as ``[b, k*k*c, h*w]`` (shift-major)."""
    b, c, h, w = x.shape
    p = k // 2
    # zero buffer, copy only the in-bounds part of each shift (no padded copy)
    cols = np.zeros((b, k * k, c, h, w), dtype=x.dtype)
    for s in range(k * k):
        di, dj = s // k - p, s % k - p
        cols[:, s, :, max(0, -di):h - max(0, di), max(0, -dj):w - max(0, dj)] = \
            x[:, :, max(0, di):h + min(0, di), max(0, dj):w + min(0, dj)]
    return cols.reshape(b, k * k * c, h * w)


def _flat_kernel(w: np.ndarray) -> np.ndarray:
    # [o, c, k, k] -> [o, k*k*c] matching the shift-major patch layout
    o = w.shape[0]
    return w.transpose(0, 2, 3, 1).reshape(o, -1)


def _unflat_kernel(wf: np.ndarray, c: int, k: int) -> np.ndarray:
    o = wf.shape[0]
    return wf.reshape(o, k, k, c).transpose(0, 3, 1, 2)


def _adjoint_kernel(w: np.ndarray) -> np.ndarray:
    """Kernel whose same-padded convolution is the adjoint of ``w``'s."""
    return np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])


def _conv_forward(x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b, c, h, wd = x.shape
    o, _, k, _ = w.shape
    cols = _im2col(x, k)
    y = np.matmul(_flat_kernel(w), cols).reshape(b, o, h, wd)
    return y, cols


def _conv_weight_grad(cols: np.ndarray, gy: np.ndarray, c: int, k: int) -> np.ndarray:
    b, o, h, w = gy.shape
    gf = np.matmul(gy.reshape(b, o, h * w), cols.transpose(0, 2, 1)).sum(axis=0)
    return _unflat_kernel(gf, c, k)


def _check_kernel(x: Tensor, weight: Tensor, bias: Tensor | None, in_axis: int, op: str) -> None:
    if x.data.ndim != 4:
        raise ShapeError(f"{op}: expected [b, c, h, w] input, got {list(x.shape)}", x.shape)
    o, c, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"{op}: kernel must be square with odd size, got {kh}x{kw}", weight.shape)
    expected = weight.shape[in_axis]
    if x.shape[1] != expected:
        raise ShapeError(f"{op}: expected {expected} input channels, got {x.shape[1]}",
                         x.shape, weight.shape)
    out_ch = weight.shape[1 - in_axis]
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeError(f"{op}: bias shape {list(bias.shape)} does not match {out_ch} output channels",
                         bias.shape)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-padded stride-1 cross-correlation plus bias."""
    _check_kernel(x, weight, bias, 1, "conv2d")
    c, k = weight.shape[1], weight.shape[2]
    wd = weight.data
    y, cols = _conv_forward(x.data, wd)
    if bias is not None:
        y += bias.data[None, :, None, None]

    def rule(g):
        gx = _conv_forward(g, _adjoint_kernel(wd))[0] if x.requires_grad else None
        gw = _conv_weight_grad(cols, g, c, k) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(y, parents, rule)


def conv2d_transpose(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Adjoint of :func:`conv2d` w.r.t. its input, plus bias.

    ``weight`` has the layout of the forward convolution it transposes,
    ``[c_fwd_out, c_fwd_in, k, k]``; this maps ``c_fwd_out -> c_fwd_in``
    channels and ``bias`` has ``c_fwd_in`` entries.
    """
    _check_kernel(x, weight, bias, 0, "conv2d_transpose")
    k = weight.shape[2]
    wt = _adjoint_kernel(weight.data)
    y, cols = _conv_forward(x.data, wt)
    if bias is not None:
        y += bias.data[None, :, None, None]

    def rule(g):
        gx = _conv_forward(g, weight.data)[0] if x.requires_grad else None
        gw = None
        if weight.requires_grad:
            gw = _adjoint_kernel(_conv_weight_grad(cols, g, x.shape[1], k))
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _record(y, parents, rule)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient goes to the first maximum."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2: spatial extents must be even, got {h}x{w}", x.shape)
    blocks = x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)  # row-major scan, first max wins
    y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def rule(g):
        gb = np.zeros((b, c, h // 2, w // 2, 4), dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gb.reshape(b, c, h, w),)

    return _record(np.ascontiguousarray(y), (x,), rule)


def upsample_nearest2(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    y = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    return _record(y, (x,), lambda g: (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),))


def orthogonal_init(rows: int, cols: int, rng: np.random.Generator, dtype=np.float32) -> Tensor:
    """Orthogonal matrix from the QR factorisation of a Gaussian draw.

    Columns are orthonormal when ``cols <= rows``, rows otherwise.  The sign
    of each column is fixed so that ``diag(R) > 0``.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"orthogonal_init: extents must be positive, got ({rows}, {cols})")
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if cols > rows:
        q = q.T
    return Tensor(q.astype(dtype))


def orthogonal_kernel(out_ch: int, in_ch: int, k: int, rng: np.random.Generator,
                      dtype=np.float32) -> Tensor:
    """Kernel ``[out_ch, in_ch, k, k]`` reshaped from an orthogonal
    ``[out_ch, in_ch*k*k]`` matrix."""
    w = orthogonal_init(out_ch, in_ch * k * k, rng, dtype)
    return Tensor(w.data.reshape(out_ch, in_ch, k, k))


@dataclass(eq=False)
class ConvKernel:
    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, out_ch: int, in_ch: int, k: int, rng: np.random.Generator | None = None,
               dtype=np.float32) -> "ConvKernel":
        """Orthogonal weights (zeros when ``rng`` is None) and zero bias."""
        if k % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {k}")
        if rng is None:
            weight = Tensor(np.zeros((out_ch, in_ch, k, k), dtype=dtype))
        else:
            weight = orthogonal_kernel(out_ch, in_ch, k, rng, dtype)
        return cls(weight, Tensor(np.zeros(out_ch, dtype=dtype)))

    @property
    def size(self) -> int:
        return self.weight.shape[2]

    def conv(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)
