"""
Training on bouncing blobs
==========================

A short run of the tiny stack on generated two-blob clips, compared with
repeating the last input frame.  Takes about a minute on one core.
"""
import numpy as np

from frnn import (RMSProp, SpriteConfig, TopologySpec, TrainConfig, evaluate, gen_sequences, init_model,
                  last_frame_baseline, no_grad, train)

blobs = dict(sprite_size=13, speed=(1, 1))
train_set = gen_sequences(SpriteConfig(seed=1, **blobs), 256)
held_out = gen_sequences(SpriteConfig(seed=2, **blobs), 32)

cfg = TrainConfig(g=5, p=5, learning_rate=1e-3, batch_size=8, steps=200, seed=0)
stack = init_model(TopologySpec.tiny(), cfg.seed)
optimizer = RMSProp.from_config(cfg)
_, history = train(stack, train_set, cfg, optimizer)
print("L1 loss, first and last 20 steps: %.4f -> %.4f" % (np.mean(history[:20]), np.mean(history[-20:])))

x, y = held_out.values[:, :5], held_out.values[:, 5:10]
with no_grad():
    preds = stack.run_sequence(x, 5).data

print("model")
print(evaluate(preds, y).to_text())
print("last frame repeated")
print(evaluate(last_frame_baseline(x, 5), y).to_text())
