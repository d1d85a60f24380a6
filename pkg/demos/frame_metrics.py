"""
Frame metrics
=============

MSE, PSNR and DSSIM on a few hand-made frames.
"""
import numpy as np

from frnn import dssim, mse, psnr
from frnn.tensor import make_rng

rng = make_rng(0)
frame = rng.uniform(0, 1, (32, 32))

print("identical     psnr", psnr(frame, frame), " dssim", dssim(frame, frame))
print("offset 0.1    psnr %.2f dB" % psnr(frame, np.clip(frame + 0.1, 0, 1)))
noisy = np.clip(frame + rng.normal(0, 0.05, frame.shape), 0, 1)
print("noise 0.05    mse %.5f  psnr %.2f  dssim %.4f" % (mse(frame, noisy), psnr(frame, noisy), dssim(frame, noisy)))
# a shifted copy keeps the pixel histogram but not the structure
shifted = np.roll(frame, 3, axis=1)
print("shifted 3 px  mse %.5f  dssim %.4f" % (mse(frame, shifted), dssim(frame, shifted)))
print("black vs white dssim %.5f" % dssim(np.zeros((16, 16)), np.ones((16, 16))))
