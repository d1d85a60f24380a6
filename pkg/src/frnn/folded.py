"""Folded recurrent stack: stateless pre-convolutions, bijective GRU layers
with shared states, and a stateless transposed post-transform.

Encoding a frame runs the pre-convolutions and every forward gate set.
Predicting a frame refreshes the deepest (bridge) state with the last forward
gate set, sweeps the backward gate sets from the top down and decodes the
lowest state.  The emitted frame is never fed back into the stack.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .cells import BGruLayer, bgru_backward, bgru_forward, param_count_bridged, param_count_shared
from .nn_ops import ConvKernel, conv2d_transpose, orthogonal_kernel
from .tensor import ACTIVATIONS, ShapeError, Tensor, activation, stack


@dataclass(frozen=True)
class ConvSpec:
    channels: int
    kernel: int = 5
    activation: str = "tanh"


@dataclass(frozen=True)
class LayerSpec:
    channels: int
    kernel: int = 3
    pooled: bool = False


@dataclass(frozen=True)
class TopologySpec:
    pre_convs: tuple[ConvSpec, ...]
    bgru_layers: tuple[LayerSpec, ...]
    image: tuple[int, int, int] = (1, 64, 64)
    output_activation: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "pre_convs", tuple(self.pre_convs))
        object.__setattr__(self, "bgru_layers", tuple(self.bgru_layers))
        object.__setattr__(self, "image", tuple(int(v) for v in self.image))
        self.validate()

    def validate(self) -> None:
        if not self.pre_convs:
            raise ValueError("topology needs at least one pre-convolution")
        c, h, w = self.image
        if min(c, h, w) < 1:
            raise ValueError(f"invalid image shape {self.image}")
        kernels = [s.kernel for s in self.pre_convs] + [s.kernel for s in self.bgru_layers]
        if any(k < 1 or k % 2 == 0 for k in kernels):
            raise ValueError(f"kernel sizes must be odd and positive, got {kernels}")
        acts = [s.activation for s in self.pre_convs] + [self.output_activation]
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        pools = sum(s.pooled for s in self.bgru_layers)
        if h % 2 ** pools or w % 2 ** pools:
            raise ValueError(f"image extents {h}x{w} not divisible by 2^{pools} for {pools} pooled layers")

    @property
    def n_layers(self) -> int:
        return len(self.bgru_layers)

    def state_shapes(self, batch: int) -> list[tuple[int, int, int, int]]:
        """Shapes of h[0..n] for a batch."""
        _, h, w = self.image
        shapes = [(batch, self.pre_convs[-1].channels, h, w)]
        for spec in self.bgru_layers:
            if spec.pooled:
                h, w = h // 2, w // 2
            shapes.append((batch, spec.channels, h, w))
        return shapes

    def layer_dims(self) -> list[tuple[int, int, int, int]]:
        """(d_in, d_out, kernel, spatial positions) per bijective layer."""
        dims = []
        d_in = self.pre_convs[-1].channels
        for spec, shape in zip(self.bgru_layers, self.state_shapes(1)[1:]):
            dims.append((d_in, spec.channels, spec.kernel, shape[2] * shape[3]))
            d_in = spec.channels
        return dims

    def truncated(self, k: int) -> "TopologySpec":
        return TopologySpec(self.pre_convs, self.bgru_layers[:self.n_layers - k], self.image,
                            self.output_activation)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TopologySpec":
        return cls(pre_convs=[ConvSpec(**c) for c in d["pre_convs"]],
                   bgru_layers=[LayerSpec(**l) for l in d["bgru_layers"]],
                   image=tuple(d["image"]), output_activation=d["output_activation"])

    @classmethod
    def paper(cls, image: tuple[int, int, int] = (1, 64, 64)) -> "TopologySpec":
        """Two 5x5 tanh convolutions and eight bijective layers, pooling every two."""
        channels = (128, 128, 256, 256, 512, 512, 256, 256)
        kernels = (5, 5, 5, 5, 3, 3, 3, 3)
        return cls(pre_convs=(ConvSpec(32, 5, "tanh"), ConvSpec(64, 5, "tanh")),
                   bgru_layers=tuple(LayerSpec(c, k, i % 2 == 0)
                                     for i, (c, k) in enumerate(zip(channels, kernels))),
                   image=image)

    @classmethod
    def tiny(cls, image: tuple[int, int, int] = (1, 32, 32)) -> "TopologySpec":
        """Desk-scale stack: one 8-channel convolution, layers 16/16/32/32."""
        return cls(pre_convs=(ConvSpec(8, 5, "tanh"),),
                   bgru_layers=(LayerSpec(16, 3, True), LayerSpec(16, 3, False),
                                LayerSpec(32, 3, True), LayerSpec(32, 3, False)),
                   image=image)


@dataclass
class StateSet:
    """Shared recurrent states; ``h[0]`` is the input representation and
    ``h[-1]`` the bridge state."""

    h: list[Tensor]

    def __len__(self) -> int:
        return len(self.h)

    def __getitem__(self, i: int) -> Tensor:
        return self.h[i]

    def shapes(self) -> list[tuple]:
        return [t.shape for t in self.h]

    def copy(self) -> "StateSet":
        return StateSet([Tensor(t.data.copy()) for t in self.h])


@dataclass(eq=False)
class FoldedStack:
    spec: TopologySpec
    pre: list[ConvKernel]
    layers: list[BGruLayer]
    post: list[ConvKernel]
    calls: Counter = field(default_factory=Counter, repr=False)

    @classmethod
    def create(cls, spec: TopologySpec, rng: np.random.Generator | None = None,
               dtype=np.float32) -> "FoldedStack":
        """Build a stack; orthogonal weights from ``rng``, or all zeros without it."""
        chans = [spec.image[0]] + [c.channels for c in spec.pre_convs]
        pre = [ConvKernel.create(chans[i + 1], chans[i], s.kernel, rng, dtype)
               for i, s in enumerate(spec.pre_convs)]
        layers = []
        d_in = chans[-1]
        for s in spec.bgru_layers:
            layers.append(BGruLayer.create(d_in, s.channels, s.kernel, s.pooled, rng, dtype))
            d_in = s.channels
        # transposed counterparts, applied in reverse order, with their own weights
        post = []
        for i in reversed(range(len(spec.pre_convs))):
            k = spec.pre_convs[i].kernel
            if rng is None:
                w = Tensor(np.zeros((chans[i + 1], chans[i], k, k), dtype=dtype))
            else:
                w = orthogonal_kernel(chans[i + 1], chans[i], k, rng, dtype)
            post.append(ConvKernel(w, Tensor(np.zeros(chans[i], dtype=dtype))))
        stack_ = cls(spec, pre, layers, post)
        for t in stack_.parameters().values():
            t.requires_grad = True
        return stack_

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for i, k in enumerate(self.pre):
            params[f"pre{i}.weight"], params[f"pre{i}.bias"] = k.weight, k.bias
        for i, layer in enumerate(self.layers):
            params.update({f"layer{i}.{n}": t for n, t in layer.parameters().items()})
        for i, k in enumerate(self.post):
            params[f"post{i}.weight"], params[f"post{i}.bias"] = k.weight, k.bias
        return params

    def astype(self, dtype) -> "FoldedStack":
        """Copy with every parameter cast to ``dtype``."""
        clone = FoldedStack.create(self.spec, None, dtype)
        src = self.parameters()
        for name, t in clone.parameters().items():
            t.data = src[name].data.astype(dtype)
        return clone

    def __eq__(self, other) -> bool:
        if not isinstance(other, FoldedStack) or self.spec != other.spec:
            return False
        a, b = self.parameters(), other.parameters()
        return a.keys() == b.keys() and all(np.array_equal(a[k].data, b[k].data) for k in a)

    __hash__ = None

    # -- stateless transforms ------------------------------------------------
    def pre_transform(self, frame: Tensor) -> Tensor:
        self.calls["pre"] += 1
        x = frame
        for kern, s in zip(self.pre, self.spec.pre_convs):
            x = activation(kern.conv(x), s.activation)
        return x

    def post_transform(self, h0: Tensor) -> Tensor:
        self.calls["post"] += 1
        acts = [s.activation for s in self.spec.pre_convs[:-1]][::-1] + [self.spec.output_activation]
        x = h0
        for kern, act in zip(self.post, acts):
            x = activation(conv2d_transpose(x, kern.weight, kern.bias), act)
        return x

    # -- recurrent operations ------------------------------------------------
    def reset_states(self, batch: int) -> StateSet:
        if batch < 1:
            raise ValueError(f"batch must be >= 1, got {batch}")
        dtype = self.pre[0].weight.dtype
        return StateSet([Tensor(np.zeros(s, dtype=dtype)) for s in self.spec.state_shapes(batch)[:self.n_layers + 1]])

    def encode_frame(self, frame: Tensor, states: StateSet) -> StateSet:
        c, h, w = self.spec.image
        if frame.data.ndim != 4 or frame.shape[1:] != (c, h, w):
            raise ShapeError(f"encode_frame: expected frame [b, {c}, {h}, {w}], got {list(frame.shape)}",
                             frame.shape)
        new = [self.pre_transform(frame)]
        for l, layer in enumerate(self.layers, start=1):
            new.append(bgru_forward(layer, new[l - 1], states[l]))
        return StateSet(new)

    def predict_frame(self, states: StateSet) -> tuple[Tensor, StateSet]:
        h = list(states.h)
        n = self.n_layers
        if n:
            h[n] = bgru_forward(self.layers[-1], h[n - 1], h[n])
            for l in range(n, 0, -1):
                h[l - 1] = bgru_backward(self.layers[l - 1], h[l], h[l - 1])
        return self.post_transform(h[0]), StateSet(h)

    def run_sequence(self, inputs, p: int) -> Tensor:
        """Encode the ``g`` given frames ``[b, g, c, h, w]``, then emit ``p`` frames."""
        data = inputs.values if hasattr(inputs, "values") else inputs
        data = data.data if isinstance(data, Tensor) else np.asarray(data)
        if data.ndim != 5 or data.shape[1] < 1:
            raise ShapeError(f"run_sequence: expected non-empty [b, g, c, h, w] input, got {list(data.shape)}",
                             data.shape)
        if p < 1:
            raise ValueError(f"run_sequence: p must be >= 1, got {p}")
        dtype = self.pre[0].weight.dtype
        states = self.reset_states(data.shape[0])
        for t in range(data.shape[1]):
            states = self.encode_frame(Tensor(data[:, t], dtype=dtype), states)
        frames = []
        for _ in range(p):
            frame, states = self.predict_frame(states)
            frames.append(frame)
        return stack(frames, axis=1)

    def truncate(self, k: int) -> "FoldedStack":
        """Stack without its ``k`` deepest layers; weights are shared, not copied."""
        if not 0 <= k <= self.n_layers:
            raise ValueError(f"truncate: k must be in [0, {self.n_layers}], got {k}")
        return FoldedStack(self.spec.truncated(k), self.pre, self.layers[:self.n_layers - k], self.post)


def _ratio(a: int, b: int) -> float:
    return a / b if b else float("nan")


@dataclass
class CostReport:
    """Folded stack versus an encoder/decoder with bridge connections and the
    same state sizes.  Gate evaluations count one GRU cell application (three
    gates) as one unit; MACs weight each application by its kernel weights
    times spatial positions."""

    g: int
    p: int
    layers: list[dict]
    weights_folded: int
    weights_bridged: int
    gate_evals_folded: int
    gate_evals_bridged: int
    macs_folded: int
    macs_bridged: int
    peak_states_folded: int
    peak_states_bridged: int

    @property
    def weight_ratio(self) -> float:
        return _ratio(self.weights_bridged, self.weights_folded)

    @property
    def gate_eval_ratio(self) -> float:
        return _ratio(self.gate_evals_bridged, self.gate_evals_folded)

    @property
    def mac_ratio(self) -> float:
        return _ratio(self.macs_bridged, self.macs_folded)

    @property
    def memory_ratio(self) -> float:
        return _ratio(self.peak_states_bridged, self.peak_states_folded)

    def to_text(self) -> str:
        rows = ["layer  d_in  d_out  kernel  shared      bridged     ratio"]
        for i, r in enumerate(self.layers, start=1):
            rows.append(f"{i:>5}  {r['d_in']:>4}  {r['d_out']:>5}  {r['kernel']:>4}x{r['kernel']:<1}"
                        f"  {r['shared']:>10}  {r['bridged']:>10}  {r['ratio']:.4f}")
        rows += [
            f"total weights     folded {self.weights_folded}  bridged {self.weights_bridged}"
            f"  ratio {self.weight_ratio:.2f}",
            f"gate evaluations  folded {self.gate_evals_folded}  bridged {self.gate_evals_bridged}"
            f"  ratio {self.gate_eval_ratio:.4f}  (g={self.g}, p={self.p})",
            f"MACs              folded {self.macs_folded}  bridged {self.macs_bridged}"
            f"  ratio {self.mac_ratio:.4f}",
            f"peak live states  folded {self.peak_states_folded}  bridged {self.peak_states_bridged}"
            f"  ratio {self.memory_ratio:.2f}",
        ]
        return "\n".join(rows)


def cost_report(spec: TopologySpec, g: int, p: int) -> CostReport:
    if g < 1 or p < 1:
        raise ValueError(f"g and p must be >= 1, got g={g}, p={p}")
    n = spec.n_layers
    rows = []
    fwd_macs, bwd_macs, bridged_macs = [], [], []
    for d_in, d_out, k, positions in spec.layer_dims():
        area = k * k
        shared = param_count_shared(d_in, d_out, area)
        bridged = param_count_bridged(d_in, d_out, area)
        rows.append(dict(d_in=d_in, d_out=d_out, kernel=k, shared=shared, bridged=bridged,
                         ratio=bridged / shared))
        # both gate sets of a layer run at that layer's resolution
        fwd_macs.append(3 * area * (d_in * d_out + d_out * d_out) * positions)
        bwd_macs.append(3 * area * (d_out * d_in + d_in * d_in) * positions)
        bridged_macs.append(bridged * positions)
    macs_folded = g * sum(fwd_macs) + p * ((fwd_macs[-1] if n else 0) + sum(bwd_macs))
    return CostReport(
        g=g, p=p, layers=rows,
        weights_folded=sum(r["shared"] for r in rows),
        weights_bridged=sum(r["bridged"] for r in rows),
        gate_evals_folded=g * n + p * (n + 1),
        gate_evals_bridged=(g + p) * 2 * n,
        macs_folded=macs_folded,
        macs_bridged=(g + p) * sum(bridged_macs),
        peak_states_folded=n + 1,
        peak_states_bridged=2 * (n + 1),
    )
