"""Convolutional GRU gates and the bijective GRU layer.

A bijective layer owns two gate sets.  The forward set updates the layer
state from the state below it; the backward set updates the state below from
the layer state, treating the lower state as its own recurrent state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_ops import conv2d, maxpool2, orthogonal_kernel, upsample_nearest2
from .tensor import ShapeError, Tensor, concat, sigmoid, split, tanh

GATES = ("z", "r", "h")


@dataclass(eq=False)
class GruGateSet:
    """Update (z), reset (r) and candidate (h) gates.

    ``w_*`` map source channels to target channels, ``u_*`` map the target
    state onto itself.  All kernels share one odd spatial size.
    """

    w_z: Tensor
    w_r: Tensor
    w_h: Tensor
    u_z: Tensor
    u_r: Tensor
    u_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    @classmethod
    def create(cls, source: int, target: int, kernel: int,
               rng: np.random.Generator | None = None, dtype=np.float32) -> "GruGateSet":
        """Orthogonally initialised kernels (all zero without ``rng``), zero biases."""
        if kernel % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel}")

        def kern(cin):
            if rng is None:
                return Tensor(np.zeros((target, cin, kernel, kernel), dtype=dtype))
            return orthogonal_kernel(target, cin, kernel, rng, dtype)

        fields = {}
        for g in GATES:
            fields[f"w_{g}"] = kern(source)
        for g in GATES:
            fields[f"u_{g}"] = kern(target)
        for g in GATES:
            fields[f"b_{g}"] = Tensor(np.zeros(target, dtype=dtype))
        return cls(**fields)

    @property
    def source_channels(self) -> int:
        return self.w_z.shape[1]

    @property
    def target_channels(self) -> int:
        return self.w_z.shape[0]

    @property
    def kernel(self) -> int:
        return self.w_z.shape[2]

    def parameters(self) -> dict[str, Tensor]:
        return {f"{kind}_{g}": getattr(self, f"{kind}_{g}") for kind in "wub" for g in GATES}

    def weight_count(self) -> int:
        """Number of kernel weights, biases excluded."""
        return int(np.sum([t.size for n, t in self.parameters().items() if not n.startswith("b")]))


def gru_step(x: Tensor, h_prev: Tensor, gates: GruGateSet) -> Tensor:
    """One convolutional GRU update of ``h_prev`` given input ``x``.

    z = sigmoid(Wz*x + Uz*h + bz), r = sigmoid(Wr*x + Ur*h + br),
    c = tanh(Wh*x + Uh*(r . h) + bh), result (1 - z) . h + z . c
    """
    if x.shape[1] != gates.source_channels:
        raise ShapeError(f"gru_step: input has {x.shape[1]} channels, gates expect "
                         f"{gates.source_channels}", x.shape)
    if h_prev.shape[1] != gates.target_channels:
        raise ShapeError(f"gru_step: state has {h_prev.shape[1]} channels, gates expect "
                         f"{gates.target_channels}", h_prev.shape)
    if x.shape[0] != h_prev.shape[0] or x.shape[2:] != h_prev.shape[2:]:
        raise ShapeError(f"gru_step: input {list(x.shape)} and state {list(h_prev.shape)} "
                         "disagree on batch or spatial extents", x.shape, h_prev.shape)
    c = gates.target_channels
    # three input convolutions and two state convolutions fused along channels
    xin = conv2d(x, concat([gates.w_z, gates.w_r, gates.w_h]),
                 concat([gates.b_z, gates.b_r, gates.b_h]))
    x_z, x_r, x_h = split(xin, (c, c, c), axis=1)
    h_z, h_r = split(conv2d(h_prev, concat([gates.u_z, gates.u_r])), (c, c), axis=1)
    z = sigmoid(x_z + h_z)
    r = sigmoid(x_r + h_r)
    cand = tanh(x_h + conv2d(r * h_prev, gates.u_h))
    return h_prev + z * (cand - h_prev)


@dataclass(eq=False)
class BGruLayer:
    forward_gates: GruGateSet
    backward_gates: GruGateSet
    pooled: bool = False

    @classmethod
    def create(cls, channels_in: int, channels_out: int, kernel: int, pooled: bool = False,
               rng: np.random.Generator | None = None, dtype=np.float32) -> "BGruLayer":
        fwd = GruGateSet.create(channels_in, channels_out, kernel, rng, dtype)
        bwd = GruGateSet.create(channels_out, channels_in, kernel, rng, dtype)
        return cls(fwd, bwd, pooled)

    @property
    def channels_in(self) -> int:
        return self.forward_gates.source_channels

    @property
    def channels_out(self) -> int:
        return self.forward_gates.target_channels

    @property
    def kernel(self) -> int:
        return self.forward_gates.kernel

    def parameters(self) -> dict[str, Tensor]:
        params = {f"fwd.{k}": v for k, v in self.forward_gates.parameters().items()}
        params.update({f"bwd.{k}": v for k, v in self.backward_gates.parameters().items()})
        return params

    def weight_count(self) -> int:
        return self.forward_gates.weight_count() + self.backward_gates.weight_count()


def bgru_forward(layer: BGruLayer, h_below: Tensor, h_prev: Tensor) -> Tensor:
    """New layer state from the current state below and the previous layer state."""
    x = maxpool2(h_below) if layer.pooled else h_below
    return gru_step(x, h_prev, layer.forward_gates)


def bgru_backward(layer: BGruLayer, h_layer: Tensor, h_below_prev: Tensor) -> Tensor:
    """New state below from the current layer state and the previous state below.

    Pooled layers compute their gates at the coarse resolution, against the
    max-pooled lower state, and write back by nearest-neighbour upsampling.
    """
    if not layer.pooled:
        return gru_step(h_layer, h_below_prev, layer.backward_gates)
    coarse = gru_step(h_layer, maxpool2(h_below_prev), layer.backward_gates)
    return upsample_nearest2(coarse)


def param_count_shared(d_in: int, d_out: int, kernel_area: int = 1) -> int:
    """Weights of one forward+backward gate pair sharing states."""
    return 3 * kernel_area * (d_in * d_in + d_out * d_out + 2 * d_in * d_out)


def param_count_bridged(d_in: int, d_out: int, kernel_area: int = 1) -> int:
    """Weights of the equivalent encoder/decoder pair with bridge connections."""
    return 3 * kernel_area * (d_in * d_in + d_out * d_out + 4 * d_in * d_out)
