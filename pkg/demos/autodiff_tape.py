"""
Reverse-mode gradients on a tape
================================

Every operation records itself on a global tape; backward replays the
ancestors of the loss in reverse recording order.
"""
import numpy as np

import frnn.tensor as T
from frnn.tensor import Tensor, grad_check, make_rng

rng = make_rng(0)

# a tiny expression: sum(sigmoid(a * b) + tanh(a))
a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
b = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
loss = T.sum(T.sigmoid(a * b) + T.tanh(a))
loss.backward()

# compare with the closed form
s = 1 / (1 + np.exp(-a.data * b.data))
print("tape   da:", np.round(a.grad, 5).ravel())
print("closed da:", np.round(s * (1 - s) * b.data + 1 - np.tanh(a.data) ** 2, 5).ravel())

# the same check done numerically, in 64-bit
x = Tensor(rng.standard_normal((3, 4)))
print("max relative error vs central differences:",
      grad_check(lambda t: T.mean(T.square(T.tanh(t))), x))

# no_grad skips recording, which is what inference uses
with T.no_grad():
    y = T.sigmoid(x)
print("recorded under no_grad:", y.requires_grad)
