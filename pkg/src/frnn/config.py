"""Line-oriented run configuration: ``section.key = value``.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected.
``FRNN_SEED`` in the environment overrides ``train.seed`` and ``data.seed``.

Recognised keys (defaults in brackets)::

    topology.preset             tiny | paper                 [tiny]
    topology.image              channels,height,width        [1,<data.canvas>]
    topology.pre_channels       comma list                   [preset]
    topology.pre_kernels        comma list, odd              [preset]
    topology.pre_activations    comma list of tanh|sigmoid   [preset]
    topology.bgru_channels      comma list                   [preset]
    topology.bgru_kernels       comma list, odd              [preset]
    topology.bgru_pooled        comma list of true|false     [preset]
    topology.output_activation  sigmoid | tanh               [sigmoid]
    train.g / train.p           ints                         [10 / 10]
    train.learning_rate         float                        [0.0001]
    train.batch_size            int                          [12]
    train.steps                 int                          [1000]
    train.seed                  int                          [0]
    train.rmsprop_decay         float                        [0.9]
    train.rmsprop_epsilon       float                        [1e-8]
    data.canvas                 height,width                 [32,32]
    data.frames                 int                          [20]
    data.sprites                int                          [2]
    data.sprite_size            int                          [5]
    data.kind                   blob | block | glyph         [blob]
    data.speed                  min,max pixels per frame     [1,3]
    data.seed                   int                          [0]
    data.idx                    path to an IDX image file    [none; implies kind=glyph]
    eval.g / eval.p             ints                         [10 / 10]
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import SpriteConfig
from .folded import ConvSpec, LayerSpec, TopologySpec
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _ints(v: str) -> list[int]:
    return [int(x) for x in v.split(",") if x.strip()]


def _bools(v: str) -> list[bool]:
    out = []
    for x in v.split(","):
        x = x.strip().lower()
        if x in ("true", "1", "yes"):
            out.append(True)
        elif x in ("false", "0", "no"):
            out.append(False)
        else:
            raise ValueError(f"not a boolean: {x!r}")
    return out


def _words(v: str) -> list[str]:
    return [x.strip() for x in v.split(",") if x.strip()]


TOPOLOGY_KEYS = {
    "preset": str, "image": _ints, "pre_channels": _ints, "pre_kernels": _ints,
    "pre_activations": _words, "bgru_channels": _ints, "bgru_kernels": _ints,
    "bgru_pooled": _bools, "output_activation": str,
}
TRAIN_KEYS = {"g": int, "p": int, "learning_rate": float, "batch_size": int, "steps": int,
              "seed": int, "rmsprop_decay": float, "rmsprop_epsilon": float}
DATA_KEYS = {"canvas": _ints, "frames": int, "sprites": int, "sprite_size": int, "kind": str,
             "speed": _ints, "seed": int, "idx": str}
EVAL_KEYS = {"g": int, "p": int}
SECTIONS = {"topology": TOPOLOGY_KEYS, "train": TRAIN_KEYS, "data": DATA_KEYS, "eval": EVAL_KEYS}


@dataclass
class RunConfig:
    topology: TopologySpec
    train: TrainConfig
    data: SpriteConfig
    eval_g: int = 10
    eval_p: int = 10
    raw: dict = field(default_factory=dict, repr=False)


def parse_text(text: str) -> dict[str, dict[str, object]]:
    """Parse and type-check config text into ``{section: {key: value}}``."""
    out: dict[str, dict[str, object]] = {s: {} for s in SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        name, value = (s.strip() for s in line.split("=", 1))
        section, _, key = name.partition(".")
        if section not in SECTIONS or key not in SECTIONS[section]:
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        try:
            out[section][key] = SECTIONS[section][key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {name}: {exc}") from None
    return out


def _topology(t: dict, canvas: tuple[int, int]) -> TopologySpec:
    preset = t.get("preset", "tiny")
    if preset not in ("tiny", "paper"):
        raise ConfigError(f"unknown topology preset {preset!r}")
    image = tuple(t.get("image", (1, *canvas)))
    if len(image) != 3:
        raise ConfigError("topology.image needs channels,height,width")
    base = TopologySpec.paper((1, 64, 64)) if preset == "paper" else TopologySpec.tiny((1, 32, 32))
    pre_ch = t.get("pre_channels", [c.channels for c in base.pre_convs])
    pre_k = t.get("pre_kernels", [c.kernel for c in base.pre_convs][:1] * len(pre_ch))
    pre_a = t.get("pre_activations", [base.pre_convs[0].activation] * len(pre_ch))
    ch = t.get("bgru_channels", [l.channels for l in base.bgru_layers])
    default_k = [l.kernel for l in base.bgru_layers]
    default_p = [l.pooled for l in base.bgru_layers]
    k = t.get("bgru_kernels", default_k if len(ch) == len(default_k) else [3] * len(ch))
    pooled = t.get("bgru_pooled", default_p if len(ch) == len(default_p)
                   else [i % 2 == 0 for i in range(len(ch))])
    if len(pre_k) == 1:
        pre_k = pre_k * len(pre_ch)
    if len(pre_a) == 1:
        pre_a = pre_a * len(pre_ch)
    if len(k) == 1:
        k = k * len(ch)
    if not (len(pre_ch) == len(pre_k) == len(pre_a)):
        raise ConfigError("topology.pre_* lists differ in length")
    if not (len(ch) == len(k) == len(pooled)):
        raise ConfigError("topology.bgru_* lists differ in length")
    try:
        return TopologySpec(
            pre_convs=[ConvSpec(c, kk, a) for c, kk, a in zip(pre_ch, pre_k, pre_a)],
            bgru_layers=[LayerSpec(c, kk, pp) for c, kk, pp in zip(ch, k, pooled)],
            image=image, output_activation=t.get("output_activation", "sigmoid"))
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from None


def build(sections: dict[str, dict[str, object]], env: dict | None = None) -> RunConfig:
    env = os.environ if env is None else env
    d = dict(sections["data"])
    tr = dict(sections["train"])
    if env.get("FRNN_SEED"):
        try:
            seed = int(env["FRNN_SEED"])
        except ValueError:
            raise ConfigError(f"FRNN_SEED must be an integer, got {env['FRNN_SEED']!r}") from None
        tr["seed"] = d["seed"] = seed
    for key, n in (("canvas", 2), ("speed", 2)):
        if key in d and len(d[key]) != n:
            raise ConfigError(f"data.{key} needs {n} comma-separated integers")
    glyphs = None
    if "idx" in d:
        from .data import read_idx

        glyphs = read_idx(d.pop("idx"))
        if glyphs.ndim != 3:
            raise ConfigError(f"IDX glyph file must be 3-D [n, h, w], got {list(glyphs.shape)}")
        d.setdefault("kind", "glyph")
    for key in ("canvas", "speed"):
        if key in d:
            d[key] = tuple(d[key])
    try:
        sprites = SpriteConfig(glyphs=glyphs, **d)
        sprites.validate()
        train = TrainConfig(**tr)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    topo = _topology(sections["topology"], sprites.canvas)
    ev = sections["eval"]
    return RunConfig(topo, train, sprites, ev.get("g", 10), ev.get("p", 10), raw=sections)


def load(path: str | Path | None, env: dict | None = None) -> RunConfig:
    text = Path(path).read_text() if path else ""
    return build(parse_text(text), env)


def with_overrides(cfg: RunConfig, **train_overrides) -> RunConfig:
    """Apply non-None command-line overrides to the train section."""
    changes = {k: v for k, v in train_overrides.items() if v is not None}
    if changes:
        try:
            cfg.train = dataclasses.replace(cfg.train, **changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg
