import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frnn.data import (IdxError, SequenceBatch, SequenceFileError, SpriteConfig, blob, gen_sequences,
                       last_frame_baseline, paste_max, parse_idx, read_seq, reflect, render,
                       sample_tracks, write_seq)
from frnn.metrics import evaluate
from frnn.tensor import make_rng


def test_reflection_rule():
    # 4-wide sprite on a 32-wide canvas: positions in [0, 28]
    assert reflect(28, 3, 28) == (25, -3)
    assert reflect(1, -3, 28) == (2, 3)
    assert reflect(10, 3, 28) == (13, 3)


def test_overlap_takes_maximum():
    canvas = np.zeros((4, 4), np.float32)
    paste_max(canvas, np.full((2, 2), 0.8, np.float32), 0, 0)
    paste_max(canvas, np.full((2, 2), 0.6, np.float32), 1, 1)
    assert canvas[1, 1] == np.float32(0.8)
    assert canvas[2, 2] == np.float32(0.6)


def test_paste_outside_canvas_rejected():
    with pytest.raises(ValueError):
        paste_max(np.zeros((4, 4), np.float32), np.ones((2, 2), np.float32), 3, 0)


def test_generation_deterministic():
    a = gen_sequences(SpriteConfig(seed=3), 4)
    assert a.shape == (4, 20, 1, 32, 32)
    assert a == gen_sequences(SpriteConfig(seed=3), 4)
    assert a != gen_sequences(SpriteConfig(seed=4), 4)


def test_sprite_too_large():
    with pytest.raises(ValueError):
        gen_sequences(SpriteConfig(canvas=(8, 8), sprite_size=8), 1)


def test_values_in_unit_interval():
    v = gen_sequences(SpriteConfig(seed=0, sprites=3), 8).values
    assert v.min() >= 0 and v.max() <= 1 and v.max() == 1.0


def test_blob_peak():
    b = blob(5)
    assert b.shape == (5, 5) and b[2, 2] == 1.0 and np.all(b > 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(6, 20), st.integers(1, 5), st.integers(1, 12))
def test_sprites_never_leave_canvas(seed, canvas, size, speed):
    size = min(size, canvas - 1)
    cfg = SpriteConfig(canvas=(canvas, canvas + 3), frames=12, sprites=1, sprite_size=size,
                       kind="block", speed=(1, speed), seed=seed)
    frames = gen_sequences(cfg, 1).values[0, :, 0]
    assert np.all(frames.sum(axis=(1, 2)) == size * size)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_crossing_sprites_keep_their_tracks(seed):
    cfg = SpriteConfig(canvas=(16, 16), frames=15, sprites=2, sprite_size=5, speed=(1, 4), seed=seed)
    tracks = sample_tracks(cfg, make_rng(seed))
    assert np.all(np.abs(np.diff(tracks, axis=1)) >= 0)
    a = np.full((5, 5), 0.7, np.float32)
    b = blob(5)
    both = render(tracks, [a, b], cfg.canvas)
    alone = np.maximum(render(tracks[:1], [a], cfg.canvas), render(tracks[1:], [b], cfg.canvas))
    assert np.array_equal(both, alone)


def test_velocity_never_zero():
    cfg = SpriteConfig(canvas=(12, 12), frames=3, sprites=50, sprite_size=3, speed=(0, 1), seed=0)
    tracks = sample_tracks(cfg, make_rng(0))
    assert np.all(np.any(tracks[:, 1] != tracks[:, 0], axis=1))


def test_glyph_sprites():
    glyphs = make_rng(0).uniform(0, 1, (3, 6, 6)).astype(np.float32)
    batch = gen_sequences(SpriteConfig(canvas=(16, 16), kind="glyph", glyphs=glyphs, seed=1), 2)
    assert batch.shape == (2, 20, 1, 16, 16)
    with pytest.raises(ValueError):
        gen_sequences(SpriteConfig(kind="glyph"), 1)


def idx_bytes(dims, payload, type_byte=0x08):
    return bytes([0, 0, type_byte, len(dims)]) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)


def test_idx_hand_payload():
    out = parse_idx(idx_bytes((1, 2, 2), [0, 255, 128, 64]))
    assert out.shape == (1, 2, 2)
    np.testing.assert_allclose(out[0], [[0, 1.0], [0.50196, 0.25098]], atol=1e-5)


def test_idx_image_header_is_three_dimensional():
    # header layout of the MNIST image files: magic 0x00000803, then n, rows, cols
    raw = bytes.fromhex("00000803") + struct.pack(">3I", 2, 28, 28) + bytes(2 * 28 * 28)
    assert parse_idx(raw).shape == (2, 28, 28)


def test_idx_errors():
    with pytest.raises(IdxError, match="truncated"):
        parse_idx(idx_bytes((2, 2, 2), [1, 2, 3]))
    with pytest.raises(IdxError, match="magic"):
        parse_idx(bytes([1, 0, 8, 1, 0, 0, 0, 1, 5]))
    with pytest.raises(IdxError, match="element type"):
        parse_idx(idx_bytes((1,), [0], type_byte=0x0D))
    with pytest.raises(IdxError):
        parse_idx(b"\x00\x00")


def test_baseline_repeats_last_frame():
    inputs = make_rng(0).uniform(0, 1, (2, 4, 1, 5, 5))
    out = last_frame_baseline(SequenceBatch(inputs), 3).values
    assert out.shape == (2, 3, 1, 5, 5)
    for t in range(3):
        np.testing.assert_array_equal(out[:, t], inputs[:, -1].astype(np.float32))
    with pytest.raises(ValueError):
        last_frame_baseline(inputs, 0)


def test_baseline_static_scene_is_exact():
    static = np.repeat(make_rng(1).uniform(0, 1, (2, 1, 1, 12, 12)).astype(np.float32), 6, axis=1)
    report = evaluate(last_frame_baseline(static[:, :3], 3), static[:, 3:])
    assert np.all(report.mse == 0)


def test_baseline_error_grows_with_monotone_motion():
    # one block sliding right by 1 px per frame, far from the walls
    cfg = SpriteConfig(canvas=(16, 40), frames=12, sprites=1, sprite_size=5, kind="block", seed=0)
    tracks = np.array([[[5, 2 + t] for t in range(12)]])
    frames = render(tracks, [np.ones((5, 5), np.float32)], cfg.canvas)[None, :, None]
    report = evaluate(last_frame_baseline(frames[:, :4], 8), frames[:, 4:])
    assert np.all(np.diff(report.mse) >= 0) and report.mse[-1] > report.mse[0]


def test_sequence_file_round_trip(tmp_path):
    batch = SequenceBatch(make_rng(0).uniform(0, 1, (3, 4, 1, 6, 5)))
    path = tmp_path / "x.seq"
    write_seq(path, batch)
    assert path.stat().st_size == 4 + 4 + 20 + 4 * 3 * 4 * 6 * 5
    assert read_seq(path) == batch


def test_sequence_file_errors(tmp_path):
    path = tmp_path / "x.seq"
    write_seq(path, SequenceBatch(np.zeros((1, 2, 1, 3, 3))))
    raw = path.read_bytes()
    (tmp_path / "short").write_bytes(raw[:-1])
    with pytest.raises(SequenceFileError):
        read_seq(tmp_path / "short")
    (tmp_path / "ver").write_bytes(raw[:4] + struct.pack("<I", 2) + raw[8:])
    with pytest.raises(SequenceFileError, match="version"):
        read_seq(tmp_path / "ver")
    from frnn.training import CheckpointError, load_checkpoint
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_sequence_batch_range_enforced():
    with pytest.raises(ValueError):
        SequenceBatch(np.full((1, 1, 1, 2, 2), 1.5))
    with pytest.raises(ValueError):
        SequenceBatch(np.zeros((2, 2, 2)))
