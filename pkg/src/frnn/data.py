"""Moving-sprite sequences, IDX image ingestion, the last-frame baseline and
the binary sequence file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import make_rng

SEQ_MAGIC = b"FRSQ"
SEQ_VERSION = 1
SEQ_HEADER = 4 + 4 + 5 * 4


class SequenceFileError(ValueError):
    pass


class IdxError(ValueError):
    pass


class SequenceBatch:
    """Frames ``[batch, time, channel, height, width]`` with values in [0, 1]."""

    def __init__(self, values):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim != 5:
            raise ValueError(f"sequence batch must be 5-D [b, t, c, h, w], got shape {list(values.shape)}")
        if values.size and not (np.isfinite(values).all() and values.min() >= 0 and values.max() <= 1):
            raise ValueError("sequence values must lie in [0, 1]")
        self.values = values

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, idx) -> "SequenceBatch":
        if isinstance(idx, int):
            idx = slice(idx, idx + 1)
        return SequenceBatch(self.values[idx])

    def __eq__(self, other) -> bool:
        return isinstance(other, SequenceBatch) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"SequenceBatch(shape={list(self.shape)})"

    def split(self, g: int) -> tuple["SequenceBatch", "SequenceBatch"]:
        """Inputs (first g frames) and the remaining frames."""
        return SequenceBatch(self.values[:, :g]), SequenceBatch(self.values[:, g:])


@dataclass
class SpriteConfig:
    canvas: tuple[int, int] = (32, 32)
    frames: int = 20
    sprites: int = 2
    sprite_size: int = 5
    kind: str = "blob"  # "blob" | "block" | "glyph"
    speed: tuple[int, int] = (1, 3)  # integer pixels/frame per axis, inclusive
    seed: int = 0
    glyphs: np.ndarray | None = None  # [n, h, w] images in [0, 1], used when kind == "glyph"

    def sprite_shape(self) -> tuple[int, int]:
        if self.kind == "glyph":
            if self.glyphs is None or len(self.glyphs) == 0:
                raise ValueError("glyph sprites need an image set")
            return tuple(self.glyphs.shape[1:])
        return (self.sprite_size, self.sprite_size)

    def validate(self) -> None:
        sh, sw = self.sprite_shape()
        ch, cw = self.canvas
        if sh >= ch or sw >= cw:
            raise ValueError(f"sprite {sh}x{sw} does not fit the {ch}x{cw} canvas")
        if self.frames < 2:
            raise ValueError(f"frames must be >= 2, got {self.frames}")
        if self.sprites < 1:
            raise ValueError(f"sprites must be >= 1, got {self.sprites}")
        lo, hi = self.speed
        if lo < 0 or hi < lo or hi == 0:
            raise ValueError(f"invalid speed range {self.speed}")
        if self.kind not in ("blob", "block", "glyph"):
            raise ValueError(f"unknown sprite kind {self.kind!r}")


def blob(size: int) -> np.ndarray:
    """Radial bump peaking at 1 in the centre."""
    r = np.arange(size) - (size - 1) / 2
    d2 = r[:, None] ** 2 + r[None, :] ** 2
    return np.exp(-d2 / (2 * (size / 4) ** 2)).astype(np.float32)


def reflect(pos: int, vel: int, bound: int) -> tuple[int, int]:
    """Advance one coordinate inside [0, bound], bouncing off either end."""
    nxt = pos + vel
    if nxt > bound:
        return 2 * bound - nxt, -vel
    if nxt < 0:
        return -nxt, -vel
    return nxt, vel


def paste_max(canvas: np.ndarray, sprite: np.ndarray, y: int, x: int) -> None:
    """Composite by per-pixel maximum."""
    h, w = sprite.shape
    if y < 0 or x < 0 or y + h > canvas.shape[0] or x + w > canvas.shape[1]:
        raise ValueError(f"sprite at ({y}, {x}) leaves the {canvas.shape[0]}x{canvas.shape[1]} canvas")
    region = canvas[y:y + h, x:x + w]
    np.maximum(region, sprite, out=region)


def _clamped_speed(cfg: SpriteConfig, bound: int) -> tuple[int, int]:
    # one reflection per step must be enough to stay inside [0, bound]
    lo, hi = cfg.speed
    hi = min(hi, bound)
    return min(lo, hi), hi


def _sample_velocity(rng: np.random.Generator, lo: int, hi: int) -> int:
    mag = int(rng.integers(lo, hi + 1))
    return mag if rng.random() < 0.5 else -mag


def sample_tracks(cfg: SpriteConfig, rng: np.random.Generator) -> np.ndarray:
    """Top-left positions ``[sprites, frames, 2]`` (y, x) of bouncing sprites.

    Each sprite moves independently with an integer velocity, reflecting off
    the canvas edges; overlapping sprites never interact.
    """
    ch, cw = cfg.canvas
    sh, sw = cfg.sprite_shape()
    bound_y, bound_x = ch - sh, cw - sw
    speed_y, speed_x = _clamped_speed(cfg, bound_y), _clamped_speed(cfg, bound_x)
    tracks = np.zeros((cfg.sprites, cfg.frames, 2), dtype=np.int64)
    for k in range(cfg.sprites):
        while True:
            vy = _sample_velocity(rng, *speed_y)
            vx = _sample_velocity(rng, *speed_x)
            if vy or vx:
                break
        y, x = int(rng.integers(bound_y + 1)), int(rng.integers(bound_x + 1))
        for t in range(cfg.frames):
            tracks[k, t] = y, x
            y, vy = reflect(y, vy, bound_y)
            x, vx = reflect(x, vx, bound_x)
    return tracks


def render(tracks: np.ndarray, sprites: list[np.ndarray], canvas: tuple[int, int]) -> np.ndarray:
    """Frames ``[frames, h, w]`` compositing each sprite along its track."""
    frames = np.zeros((tracks.shape[1], *canvas), dtype=np.float32)
    for sprite, track in zip(sprites, tracks):
        for t, (y, x) in enumerate(track):
            paste_max(frames[t], sprite, y, x)
    return frames


def gen_sequences(cfg: SpriteConfig, count: int) -> SequenceBatch:
    """Sprites bouncing around a canvas, deterministic given ``cfg.seed``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    cfg.validate()
    rng = make_rng(cfg.seed)
    sh, sw = cfg.sprite_shape()
    base = blob(cfg.sprite_size) if cfg.kind == "blob" else np.ones((sh, sw), np.float32)
    out = np.zeros((count, cfg.frames, 1, *cfg.canvas), dtype=np.float32)
    for n in range(count):
        if cfg.kind == "glyph":
            sprites = [cfg.glyphs[i].astype(np.float32)
                       for i in rng.integers(len(cfg.glyphs), size=cfg.sprites)]
        else:
            sprites = [base] * cfg.sprites
        out[n, :, 0] = render(sample_tracks(cfg, rng), sprites, cfg.canvas)
    return SequenceBatch(out)


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode an unsigned-byte IDX container into floats scaled to [0, 1]."""
    if len(raw) < 4:
        raise IdxError(f"truncated IDX header: {len(raw)} bytes")
    if raw[0] != 0 or raw[1] != 0:
        raise IdxError(f"bad IDX magic {raw[:4].hex()}")
    if raw[2] != 0x08:
        raise IdxError(f"unsupported IDX element type 0x{raw[2]:02x}, only unsigned bytes (0x08)")
    ndim = raw[3]
    if ndim < 1:
        raise IdxError("IDX dimension count must be >= 1")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxError(f"truncated IDX header: need {header} bytes, got {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise IdxError(f"truncated IDX payload: need {size} bytes, got {len(raw) - header}")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header)
    return (data.astype(np.float32) / 255.0).reshape(dims)


def read_idx(path) -> np.ndarray:
    import gzip

    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def last_frame_baseline(inputs, p: int) -> SequenceBatch:
    """Repeat the final input frame ``p`` times."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    values = inputs.values if isinstance(inputs, SequenceBatch) else np.asarray(inputs)
    last = values[:, -1:]
    return SequenceBatch(np.repeat(last, p, axis=1))


def write_seq(path, batch: SequenceBatch) -> None:
    values = batch.values if isinstance(batch, SequenceBatch) else np.asarray(batch, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(SEQ_MAGIC)
        fh.write(struct.pack("<I5I", SEQ_VERSION, *values.shape))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_seq(path) -> SequenceBatch:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != SEQ_MAGIC:
        raise SequenceFileError(f"magic mismatch: expected {SEQ_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < SEQ_HEADER:
        raise SequenceFileError(f"truncated header: {len(raw)} bytes")
    version, *shape = struct.unpack("<I5I", raw[4:SEQ_HEADER])
    if version != SEQ_VERSION:
        raise SequenceFileError(f"unsupported sequence file version {version}")
    size = int(np.prod(shape))
    if len(raw) != SEQ_HEADER + 4 * size:
        raise SequenceFileError(f"payload is {len(raw) - SEQ_HEADER} bytes, shape {shape} needs {4 * size}")
    values = np.frombuffer(raw, dtype="<f4", offset=SEQ_HEADER).astype(np.float32).reshape(shape)
    return SequenceBatch(values)
