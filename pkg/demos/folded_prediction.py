"""
Predicting with a folded stack
==============================

Inputs go through the encoder only; predictions come from the decoder only.
Emitted frames are never fed back in, which the call counters make visible.
"""
from frnn import SpriteConfig, TopologySpec, gen_sequences, init_model

spec = TopologySpec.tiny()
print("state shapes:", spec.state_shapes(batch=1))

stack = init_model(spec, seed=0)
clips = gen_sequences(SpriteConfig(seed=3, frames=12), 2).values

preds = stack.run_sequence(clips[:, :6], p=6)
print("predicted:", preds.shape)
print("pre-transform calls:", stack.calls["pre"], " post-transform calls:", stack.calls["post"])

# untrained weights: outputs hover around the sigmoid midpoint
print("mean output: %.3f" % preds.data.mean())
