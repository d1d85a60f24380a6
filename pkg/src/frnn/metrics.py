"""Frame metrics (MSE, PSNR, DSSIM) and per-timestep evaluation reports."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

WINDOW = 11
SIGMA = 1.5
DATA_RANGE = 1.0


def _pair(a, b, op: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    b = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {list(a.shape)} vs {list(b.shape)}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b, "mse")
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(err: float, data_range: float = DATA_RANGE) -> float:
    return float("inf") if err == 0 else float(10 * np.log10(data_range ** 2 / err))


def psnr(a, b, data_range: float = DATA_RANGE) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical frames."""
    return psnr_from_mse(mse(a, b), data_range)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    k = win.shape[0]
    return np.tensordot(sliding_window_view(img, (k, k)), win, axes=([-2, -1], [0, 1]))


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = DATA_RANGE) -> np.ndarray:
    """Local SSIM over every fully covered 11x11 window of two 2-D images."""
    win = gaussian_window()
    if a.shape[0] < WINDOW or a.shape[1] < WINDOW:
        raise ValueError(f"ssim: frames of {a.shape[0]}x{a.shape[1]} are smaller than the "
                         f"{WINDOW}x{WINDOW} window")
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a ** 2
    var_b = _filter_valid(b * b, win) - mu_b ** 2
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim(a, b, data_range: float = DATA_RANGE) -> float:
    """Mean SSIM of [h, w] or [c, h, w] frames, channels averaged."""
    a, b = _pair(a, b, "ssim")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ValueError(f"ssim: expected [h, w] or [c, h, w] frames, got {list(a.shape)}")
    return float(np.mean([ssim_map(x, y, data_range).mean() for x, y in zip(a, b)]))


def dssim(a, b, data_range: float = DATA_RANGE) -> float:
    """Structural dissimilarity ``(1 - SSIM) / 2``."""
    return (1 - ssim(a, b, data_range)) / 2


@dataclass
class EvalReport:
    mse: np.ndarray
    psnr: np.ndarray
    dssim: np.ndarray
    psnr_infinite: np.ndarray = field(default=None)  # per step count of excluded infinite PSNRs

    @property
    def steps(self) -> int:
        return len(self.mse)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def mean_dssim(self) -> float:
        return float(np.mean(self.dssim))

    def to_text(self) -> str:
        rows = ["# step mse psnr dssim"]
        for i in range(self.steps):
            rows.append(f"{i + 1} {self.mse[i]:.8g} {self.psnr[i]:.8g} {self.dssim[i]:.8g}")
        rows.append(f"# mean {self.mean_mse:.8g} {self.mean_psnr:.8g} {self.mean_dssim:.8g}")
        return "\n".join(rows) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


def evaluate(predictions, targets) -> EvalReport:
    """Per-timestep metric means over a batch of predicted sequences.

    Infinite PSNRs (exact predictions) are left out of their step's mean and
    counted in ``psnr_infinite``; a step with only exact predictions has
    PSNR ``inf``.
    """
    pred, targ = _pair(predictions, targets, "evaluate")
    if pred.ndim != 5:
        raise ValueError(f"evaluate: expected [b, p, c, h, w] sequences, got {list(pred.shape)}")
    n, p = pred.shape[:2]
    m, ps, ds, infs = (np.zeros(p) for _ in range(4))
    for t in range(p):
        errs = [mse(pred[i, t], targ[i, t]) for i in range(n)]
        vals = np.array([psnr_from_mse(e) for e in errs])
        finite = vals[np.isfinite(vals)]
        m[t] = np.mean(errs)
        ps[t] = finite.mean() if finite.size else float("inf")
        infs[t] = n - finite.size
        ds[t] = np.mean([dssim(pred[i, t], targ[i, t]) for i in range(n)])
    return EvalReport(m, ps, ds, infs.astype(int))
