"""
What the trained model looks at
===============================

Integrated Gradients on a briefly trained model: per-feature scores over
sampled target nodes, and the spatial spread of one node's attribution.
In the toy world fire rises with temperature and lightning and falls with
humidity and rain, so humidity should come out negative.
"""

import numpy as np

from firegnn.attribution import IgConfig, feature_importance, integrated_gradients, node_attribution
from firegnn.graph import build_adjacency, compute_threshold, normalize_adjacency
from firegnn.grid import stack_features
from firegnn.model import ModelConfig, init_parameters
from firegnn.synth import TEST_MEMBER, SynthConfig, generate
from firegnn.train import TrainConfig, Windows, make_windows, train

world = generate(SynthConfig(seed=1))
climate = [world.climate[k] for k in ("T", "Hum", "R", "L")]
series = {m.id: stack_features(climate, m.fire) for m in world.members}
burnt = np.concatenate([series[i][:, 4] for i in (1, 2, 3, 5)], axis=1)
graph = build_adjacency(burnt, compute_threshold(burnt))
adj = normalize_adjacency(graph)

train_w = Windows.concat([make_windows(series[i], 12, 12, 0, 96) for i in (1, 2, 3, 5)])
val_w = make_windows(series[5], 12, 12, 84, 120)
model, hist = train(init_parameters(ModelConfig(gcn_out=16, lstm_hidden=16), 1), adj, train_w, val_w,
                    TrainConfig(epochs=15, patience=5, seed=1))
print("validation mse", round(hist.best_val, 5))

#%%
test = series[TEST_MEMBER]
blocks = np.stack([test[:, :, 12 * k:12 * k + 12] for k in range(9)])
for horizon in (0, 10):
    scores, stats = feature_importance(model, adj, blocks, 40, horizon, seed=0, steps=32)
    print(f"\nhorizon {horizon + 1} month(s):")
    for name, s in stats.items():
        print(f"  {name:>3}: median {s['median']:+.4f}   [q1 {s['q1']:+.4f}, q3 {s['q3']:+.4f}]")

#%%
# completeness: attributions add up to the change in output from the zero input
x = blocks[0]
g = integrated_gradients(model, adj, x, IgConfig(node=5, horizon=0, steps=200))
print("\nsum of attributions", g.sum().round(5))

#%%
# a northern node draws on the whole northern continent, not the southern one
target = int(np.flatnonzero(world.hemisphere > 0)[0])
vec, img = node_attribution(model, adj, x, target, 0, mask=world.mask, steps=32)
north = world.hemisphere > 0
print("attribution mass north / south:", np.abs(vec[north]).sum().round(4), "/", np.abs(vec[~north]).sum().round(4))
print("neighbours in graph:", int((graph.adjacency[target] != 0).sum()))
