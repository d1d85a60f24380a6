"""
Removing the deepest layers
===========================

Truncating a trained stack keeps the shallow layers and the convolutional
ends.  With every recurrent layer gone, what is left maps the last encoded
frame back to pixels.
"""
import numpy as np

from frnn import SpriteConfig, TopologySpec, TrainConfig, gen_sequences, init_model, no_grad, train

blobs = dict(sprite_size=13, speed=(1, 1))
data = gen_sequences(SpriteConfig(seed=1, **blobs), 128)
cfg = TrainConfig(g=5, p=5, learning_rate=1e-3, batch_size=8, steps=150, seed=0)
stack, _ = train(init_model(TopologySpec.tiny(), 0), data, cfg)

test = gen_sequences(SpriteConfig(seed=2, **blobs), 16).values
x, y = test[:, :5], test[:, 5:10]
for k in range(stack.n_layers + 1):
    with no_grad():
        pred = stack.truncate(k).run_sequence(x, 5).data
    err = np.mean((pred - y) ** 2)
    near_last = np.mean((pred[:, 0] - x[:, -1]) ** 2)
    print(f"removed {k}: mse vs future {err:.4f}, first prediction vs last input {near_last:.4f}")
