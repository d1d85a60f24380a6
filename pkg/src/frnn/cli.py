"""Command-line entry point: ``frnn <command> [options]``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .data import SequenceBatch, gen_sequences, last_frame_baseline, read_seq, write_seq
from .folded import FoldedStack, cost_report
from .metrics import EvalReport, evaluate
from .tensor import no_grad
from .training import RMSProp, init_model, load_checkpoint, save_checkpoint, train

log = logging.getLogger("frnn")

CHUNK = 16


class CliError(Exception):
    pass


def predict_batch(stack: FoldedStack, inputs: np.ndarray, p: int, chunk: int = CHUNK) -> np.ndarray:
    """Inference over ``[n, g, c, h, w]`` inputs in chunks, without a tape."""
    out = []
    with no_grad():
        for i in range(0, len(inputs), chunk):
            out.append(stack.run_sequence(inputs[i:i + chunk], p).data)
    return np.concatenate(out)


def write_grid(path, inputs: np.ndarray, targets: np.ndarray | None, preds: np.ndarray) -> tuple[int, int]:
    """Binary PGM with three rows (inputs, targets, predictions) of frames.

    Arrays are ``[t, c, h, w]`` for a single sequence; channel 0 is drawn and
    missing cells stay black.  Returns (rows, columns).
    """
    g, p = len(inputs), len(preds)
    cols = max(g, p)
    h, w = preds.shape[-2:]
    canvas = np.zeros((3 * h, cols * w), dtype=np.float32)
    for row, frames in enumerate((inputs, targets, preds)):
        if frames is None:
            continue
        for j, f in enumerate(frames[:cols]):
            canvas[row * h:(row + 1) * h, j * w:(j + 1) * w] = f[0]
    pixels = np.clip(np.rint(canvas * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols * w} {3 * h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return 3, cols


def _load_data(path, g: int, p: int | None = None) -> SequenceBatch:
    data = read_seq(path)
    need = g + (p or 0)
    if data.shape[1] < need:
        raise CliError(f"sequences in {path} have {data.shape[1]} frames, need at least {need}")
    return data


def _load_model(path, data: SequenceBatch):
    ckpt = load_checkpoint(path)
    if tuple(data.shape[2:]) != ckpt.stack.spec.image:
        raise CliError(f"checkpoint topology expects frames {list(ckpt.stack.spec.image)}, "
                       f"data has {list(data.shape[2:])}")
    return ckpt


# -- commands -------------------------------------------------------------------
def cmd_gen_data(args) -> int:
    cfg = config_mod.load(args.config)
    if args.seed is not None:
        cfg.data.seed = args.seed
    batch = gen_sequences(cfg.data, args.count)
    write_seq(args.out, batch)
    print(f"wrote {args.out}: shape {list(batch.shape)}")
    return 0


def cmd_train(args) -> int:
    cfg = config_mod.with_overrides(config_mod.load(args.config), steps=args.steps, g=args.g, p=args.p,
                                    learning_rate=args.lr, batch_size=args.batch_size, seed=args.seed)
    tc = cfg.train
    data = _load_data(args.data, tc.g, tc.p)
    if args.resume:
        ckpt = _load_model(args.resume, data)
        stack, optimizer, seed = ckpt.stack, ckpt.optimizer, ckpt.seed
        tc.seed = seed
    else:
        if tuple(data.shape[2:]) != cfg.topology.image:
            raise CliError(f"topology image {list(cfg.topology.image)} does not match data "
                           f"frames {list(data.shape[2:])}")
        stack = init_model(cfg.topology, tc.seed)
        optimizer = RMSProp.from_config(tc)
    first = optimizer.step_count
    stack, history = train(stack, data, tc, optimizer, log_every=args.log_every)
    save_checkpoint(args.checkpoint_out, stack, optimizer, tc.seed, tc)
    loss_log = args.loss_log or f"{args.checkpoint_out}.loss.txt"
    with open(loss_log, "w") as fh:
        for i, loss in enumerate(history):
            fh.write(f"{first + i + 1} {loss!r}\n")
    print(f"trained steps {first + 1}..{optimizer.step_count}; final loss {history[-1]:.6f}")
    print(f"wrote {args.checkpoint_out} and {loss_log}")
    return 0


def cmd_predict(args) -> int:
    cfg = config_mod.load(args.config)
    g = args.g if args.g is not None else cfg.eval_g
    p = args.p if args.p is not None else cfg.eval_p
    data = _load_data(args.data, g)
    ckpt = _load_model(args.checkpoint, data)
    stack = ckpt.stack
    preds = predict_batch(stack, data.values[:, :g], p)
    write_seq(args.out, SequenceBatch(preds))
    chunks = -(-len(data) // CHUNK)
    print(f"wrote {args.out}: shape {list(preds.shape)}")
    print(f"encoder (pre-transform) calls per sequence: {stack.calls['pre'] // chunks}; "
          f"decoder (post-transform) calls per sequence: {stack.calls['post'] // chunks}")
    if args.grid:
        i = args.index
        targets = data.values[i, g:g + p] if data.shape[1] > g else None
        rows, cols = write_grid(args.grid, data.values[i, :g], targets, preds[i])
        print(f"wrote {args.grid}: {rows} rows x {cols} columns")
    return 0


def _evaluate(stack: FoldedStack, data: SequenceBatch, g: int, p: int) -> tuple[EvalReport, np.ndarray]:
    preds = predict_batch(stack, data.values[:, :g], p)
    return evaluate(preds, data.values[:, g:g + p]), preds


def _emit(title: str, report: EvalReport, path=None) -> None:
    print(f"## {title}")
    print(report.to_text(), end="")
    if path:
        report.write(path)


def cmd_evaluate(args) -> int:
    cfg = config_mod.load(args.config)
    g = args.g if args.g is not None else cfg.eval_g
    p = args.p if args.p is not None else cfg.eval_p
    data = _load_data(args.data, g, p)
    ckpt = _load_model(args.checkpoint, data)
    report, _ = _evaluate(ckpt.stack, data, g, p)
    _emit("model", report, args.out)
    if args.baseline:
        base = evaluate(last_frame_baseline(data.values[:, :g], p), data.values[:, g:g + p])
        _emit("baseline last-frame", base, f"{args.out}.baseline" if args.out else None)
    return 0


def cmd_ablate(args) -> int:
    cfg = config_mod.load(args.config)
    g = args.g if args.g is not None else cfg.eval_g
    p = args.p if args.p is not None else cfg.eval_p
    data = _load_data(args.data, g, p)
    stack = _load_model(args.checkpoint, data).stack
    n = stack.n_layers
    max_remove = n if args.max_remove is None else args.max_remove
    if not 0 <= max_remove <= n:
        raise CliError(f"--max-remove must be in [0, {n}], got {max_remove}")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(max_remove + 1):
        report, preds = _evaluate(stack.truncate(k), data, g, p)
        _emit(f"removed {k} of {n} layers", report, out_dir / f"ablate_k{k}.txt" if out_dir else None)
        if out_dir:
            write_grid(out_dir / f"ablate_k{k}.pgm", data.values[args.index, :g],
                       data.values[args.index, g:g + p], preds[args.index])
    return 0


def cmd_cost(args) -> int:
    cfg = config_mod.load(args.config)
    g = args.g if args.g is not None else cfg.eval_g
    p = args.p if args.p is not None else cfg.eval_p
    print(cost_report(cfg.topology, g, p).to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frnn", description="Folded recurrent video prediction toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="run configuration file (section.key = value)")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "generate moving-sprite sequences")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = command("train", cmd_train, "train a folded stack")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--loss-log", help="loss log path [<checkpoint-out>.loss.txt]")
    p.add_argument("--g", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-every", type=int, default=0)

    for name, func, help_ in (("predict", cmd_predict, "predict future frames"),
                              ("evaluate", cmd_evaluate, "per-step MSE/PSNR/DSSIM table"),
                              ("ablate", cmd_ablate, "evaluate with the deepest layers removed")):
        p = command(name, func, help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--g", type=int)
        p.add_argument("--p", type=int)
        if name == "predict":
            p.add_argument("--out", required=True)
            p.add_argument("--grid", help="portable graymap of inputs/targets/predictions")
            p.add_argument("--index", type=int, default=0, help="sequence drawn in the grid")
        elif name == "evaluate":
            p.add_argument("--baseline", choices=["last-frame"])
            p.add_argument("--out", help="write the model table here")
        else:
            p.add_argument("--max-remove", type=int)
            p.add_argument("--out-dir", help="directory for per-k tables and grids")
            p.add_argument("--index", type=int, default=0)

    p = command("cost", cmd_cost, "weight, gate-evaluation and memory accounting")
    p.add_argument("--g", type=int)
    p.add_argument("--p", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, KeyError) as exc:
        print(f"frnn {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
