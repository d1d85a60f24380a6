"""
What folding saves
==================

Weights, cell applications and peak live state for the folded stack against
an encoder/decoder with bridge connections of the same sizes.
"""
from frnn import TopologySpec, cost_report

for name, spec in (("tiny", TopologySpec.tiny()), ("full", TopologySpec.paper())):
    print(f"--- {name} topology, 10 frames in, 10 out")
    print(cost_report(spec, 10, 10).to_text())
    print()

# the counts scale linearly with the horizon
for g, p in ((1, 1), (5, 5), (10, 20)):
    r = cost_report(TopologySpec.paper(), g, p)
    print(f"g={g:2d} p={p:2d}: {r.gate_evals_folded:4d} vs {r.gate_evals_bridged:4d} cell applications")
