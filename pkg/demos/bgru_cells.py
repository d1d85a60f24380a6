"""
Bijective GRU layers
====================

A bGRU layer owns two gate sets over two states.  The forward gates update
the layer's own state from the state below (encoding); the backward gates
update the state below from the layer's state (decoding).
"""
import numpy as np

from frnn.cells import BGruLayer, bgru_backward, bgru_forward, param_count_bridged, param_count_shared
from frnn.tensor import Tensor, make_rng

rng = make_rng(1)
layer = BGruLayer.create(channels_in=4, channels_out=8, kernel=3, pooled=True, rng=rng)

below = Tensor(rng.uniform(0, 1, (1, 4, 16, 16)))
state = Tensor(np.zeros((1, 8, 8, 8), np.float32))

# encode: pool the fine state and update the coarse one
state = bgru_forward(layer, below, state)
print("layer state after one encode:", state.shape)

# decode: the coarse state rewrites the fine one
below = bgru_backward(layer, state, below)
print("state below after one decode:", below.shape)

# a folded layer shares its states, a bridged encoder/decoder pair keeps a copy
for d_in, d_out in ((4, 4), (2, 4), (64, 128)):
    shared, bridged = param_count_shared(d_in, d_out), param_count_bridged(d_in, d_out)
    print(f"d_in={d_in:3d} d_out={d_out:3d}: shared {shared:6d}  bridged {bridged:6d}  "
          f"ratio {bridged / shared:.4f}")
print("weights in this layer:", layer.weight_count())
