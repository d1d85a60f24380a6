"""L1 objective, RMSProp, the encode-then-predict training loop and checkpoints."""
from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .folded import FoldedStack, TopologySpec
from .tensor import ShapeError, Tensor, make_rng

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"FRNN"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed, truncated or incompatible checkpoint file."""


@dataclass
class TrainConfig:
    g: int = 10
    p: int = 10
    learning_rate: float = 1e-4
    batch_size: int = 12
    steps: int = 1000
    seed: int = 0
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8

    def __post_init__(self):
        for name in ("g", "p", "batch_size", "steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass
class RMSProp:
    """Plain RMSProp: no momentum, no centering."""

    learning_rate: float = 1e-4
    decay: float = 0.9
    epsilon: float = 1e-8
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "RMSProp":
        return cls(cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon)

    def step(self, params: dict[str, Tensor]) -> None:
        grads = {name: p.grad if p.grad is not None else np.zeros_like(p.data)
                 for name, p in params.items()}
        rmsprop_step(params, grads, self.accumulators, self.learning_rate, self.decay, self.epsilon)
        self.step_count += 1


def rmsprop_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
                 accumulators: dict[str, np.ndarray], learning_rate: float,
                 decay: float = 0.9, epsilon: float = 1e-8) -> None:
    """In place: ``acc = decay*acc + (1-decay)*g^2``; ``param -= lr*g/(sqrt(acc)+eps)``."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"rmsprop: gradient {list(g.shape)} vs parameter {list(p.shape)} for {name}",
                             g.shape, p.shape)
        dtype = p.data.dtype
        acc = accumulators.get(name)
        if acc is None:
            acc = accumulators[name] = np.zeros_like(p.data)
        acc *= dtype.type(decay)
        acc += dtype.type(1 - decay) * g * g
        p.data -= dtype.type(learning_rate) * g / (np.sqrt(acc) + dtype.type(epsilon))


def l1_loss(pred, target) -> Tensor:
    """Mean absolute error over all elements."""
    pred = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred))
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target), dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: shape mismatch {list(pred.shape)} vs {list(target.shape)}",
                         pred.shape, target.shape)
    return T.mean(T.absolute(pred - target))


def init_model(spec: TopologySpec, seed: int) -> FoldedStack:
    """Orthogonal kernels and zero biases drawn from one seeded generator."""
    return FoldedStack.create(spec, make_rng(seed))


def sample_batch(data: np.ndarray, cfg: TrainConfig, step: int) -> np.ndarray:
    """Random sub-sequences of length g+p for one step, drawn with replacement.

    The generator is derived from (seed, step) so a resumed run draws the
    same batches as an uninterrupted one.
    """
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, step])
    n, t = data.shape[:2]
    length = cfg.g + cfg.p
    idx = rng.integers(0, n, size=cfg.batch_size)
    start = rng.integers(0, t - length + 1, size=cfg.batch_size)
    return np.stack([data[i, s:s + length] for i, s in zip(idx, start)])


def train_step(stack: FoldedStack, batch: np.ndarray, cfg: TrainConfig, optimizer: RMSProp) -> float:
    params = stack.parameters()
    for p in params.values():
        p.grad = None
    pred = stack.run_sequence(batch[:, :cfg.g], cfg.p)
    loss = l1_loss(pred, batch[:, cfg.g:cfg.g + cfg.p])
    loss.backward()
    optimizer.step(params)
    return loss.item()


def train(stack: FoldedStack, dataset, cfg: TrainConfig, optimizer: RMSProp | None = None,
          log_every: int = 0) -> tuple[FoldedStack, list[float]]:
    """Run ``cfg.steps`` optimisation steps, continuing from ``optimizer.step_count``.

    Each step differentiates the full unroll of g encoded and p predicted frames.
    """
    data = dataset.values if hasattr(dataset, "values") else np.asarray(dataset)
    if data.ndim != 5:
        raise ShapeError(f"train: dataset must be [n, t, c, h, w], got {list(data.shape)}", data.shape)
    if data.shape[1] < cfg.g + cfg.p:
        raise ValueError(f"train: sequences of length {data.shape[1]} are shorter than g+p = {cfg.g + cfg.p}")
    if data.shape[2:] != stack.spec.image:
        raise ShapeError(f"train: frames {list(data.shape[2:])} do not match topology image "
                         f"{list(stack.spec.image)}", data.shape)
    optimizer = optimizer or RMSProp.from_config(cfg)
    history = []
    start = optimizer.step_count
    for step in range(start, start + cfg.steps):
        batch = sample_batch(data, cfg, step).astype(stack.pre[0].weight.dtype, copy=False)
        history.append(train_step(stack, batch, cfg, optimizer))
        if log_every and (step + 1) % log_every == 0:
            log.info("step %d loss %.6f", step + 1, history[-1])
    return stack, history


# -- checkpoints --------------------------------------------------------------
def _write_records(buf: io.BytesIO, records: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(records)))
    for name, arr in records.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"truncated file: needed {n} bytes at offset {self.pos}, "
                                  f"{len(self.raw) - self.pos} left")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def records(self) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        out = {}
        for _ in range(count):
            (n,) = self.unpack("<I")
            name = self.take(n).decode("utf-8")
            (ndim,) = self.unpack("<I")
            shape = self.unpack(f"<{ndim}I")
            size = int(np.prod(shape))
            out[name] = np.frombuffer(self.take(4 * size), dtype="<f4").astype(np.float32).reshape(shape)
        return out


def save_checkpoint(path, stack: FoldedStack, optimizer: RMSProp, seed: int,
                    config: TrainConfig | None = None) -> None:
    """Write weights, optimizer accumulators, seed and step counter."""
    meta = {"topology": stack.spec.to_dict(),
            "optimizer": {"learning_rate": optimizer.learning_rate, "decay": optimizer.decay,
                          "epsilon": optimizer.epsilon},
            "train": asdict(config) if config is not None else None}
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)
    _write_records(buf, {k: v.data for k, v in stack.parameters().items()})
    _write_records(buf, optimizer.accumulators)
    buf.write(struct.pack("<QQ", seed & 0xFFFFFFFFFFFFFFFF, optimizer.step_count))
    Path(path).write_bytes(buf.getvalue())


@dataclass
class Checkpoint:
    stack: FoldedStack
    optimizer: RMSProp
    seed: int
    config: TrainConfig | None


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"magic mismatch: expected {CHECKPOINT_MAGIC!r}, got {magic!r}")
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    (n,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(n).decode("utf-8"))
        spec = TopologySpec.from_dict(meta["topology"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"bad checkpoint metadata: {exc}") from exc
    weights = r.records()
    accumulators = r.records()
    seed, step_count = r.unpack("<QQ")
    if r.pos != len(r.raw):
        raise CheckpointError(f"{len(r.raw) - r.pos} trailing bytes after footer")

    stack = FoldedStack.create(spec)
    params = stack.parameters()
    if params.keys() != weights.keys():
        raise CheckpointError("checkpoint tensors do not match the stored topology")
    for name, t in params.items():
        if t.shape != weights[name].shape:
            raise CheckpointError(f"tensor {name}: shape {list(weights[name].shape)}, "
                                  f"topology expects {list(t.shape)}")
        t.data = weights[name].copy()
    opt = meta["optimizer"]
    optimizer = RMSProp(opt["learning_rate"], opt["decay"], opt["epsilon"],
                        {k: v.copy() for k, v in accumulators.items()}, step_count)
    config = TrainConfig(**meta["train"]) if meta.get("train") else None
    return Checkpoint(stack, optimizer, seed, config)
