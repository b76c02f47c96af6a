"""
One forward pass, stage by stage
================================

The full model runs four stages: a graph-convolution + temporal-convolution
backbone over the three keyframes, a soft decomposition of each facial
component into action slots, a relation stage that scores the slots over a
complete graph and pools them, and a linear classifier head.
"""

import numpy as np

from megraph.graph import build_graph
from megraph.landmarks import synthesize_dataset
from megraph.model import ActionRelationNet, ModelConfig

sample = synthesize_dataset(n_subjects=1, samples_per_subject=1, seed=0)[0]
graph = build_graph(sample)

config = ModelConfig(variant="full", channels=16, n_actions=3,
                     relation_channels=16, n_classes=5)
model = ActionRelationNet(config, seed=0)
print("parameters:", model.params.n_values())

result = model.forward(graph)

# Backbone: three (31, 2) coordinate frames collapse to one (31, 16)
# feature matrix; the temporal convolutions fold the frames together.
print("node features:", result.node_features.shape)

# Decomposition: each component's nodes spread unit mass over 3 action
# slots. The assignment rows are softmax outputs, so they sum to one.
for comp, assign in result.action_maps.items():
    row_sums = assign.data.sum(axis=1)
    print(f"  {comp:<8} assignment {assign.shape}, "
          f"row sums in [{row_sums.min():.9f}, {row_sums.max():.9f}]")
print("action features:", result.action_features.shape)

# Relation: every slot gets a scalar weight (normalized to the simplex by
# default) and the pooled recognition feature is the weighted slot mean.
w = result.weights.data.ravel()
print("slot weights:", np.round(w, 4), f"sum {w.sum():.12f}")
print("recognition feature:", result.recognition_feature.shape)
print("logits:", np.round(result.logits.data.ravel(), 4))

# The two reduced variants reuse the same backbone weights layout: the
# backbone variant classifies mean node features, the actions variant
# classifies mean action features, so their outputs differ.
for variant in ("backbone", "actions"):
    reduced = ActionRelationNet(
        ModelConfig(variant=variant, channels=16, n_actions=3,
                    relation_channels=16, n_classes=5),
        seed=0,
    )
    out = reduced.forward(graph)
    print(f"{variant:<9} logits: {np.round(out.logits.data.ravel(), 4)}")
