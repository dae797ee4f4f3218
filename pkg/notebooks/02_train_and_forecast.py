"""
Graph model against a plain LSTM
================================

Train the graph-convolutional LSTM and the same network with an identity
graph on ten years of the toy world, roll both out three years on the
held-out member and compare the four image metrics year by year.
Takes about a minute on one core.
"""

import numpy as np

from firegnn.forecast import RolloutPlan, rollout
from firegnn.graph import build_adjacency, compute_threshold, identity_adjacency, normalize_adjacency
from firegnn.grid import stack_features
from firegnn.metrics import evaluate_nodes, format_table, yearly_report
from firegnn.grid import inflate
from firegnn.model import ModelConfig, init_parameters
from firegnn.synth import TEST_MEMBER, SynthConfig, generate
from firegnn.train import TrainConfig, Windows, make_windows, train

SEED = 0
world = generate(SynthConfig(months=156, seed=SEED))
climate = [world.climate[k] for k in ("T", "Hum", "R", "L")]
series = {m.id: stack_features(climate, m.fire) for m in world.members}
print({k: v.shape for k, v in series.items()})

# years 1-10 for training; member 5's last two years validate
burnt = np.concatenate([series[i][:, 4, :120] for i in (1, 2, 3, 5)], axis=1)
graph = build_adjacency(burnt, compute_threshold(burnt))
train_w = Windows.concat([make_windows(series[i], 12, 12, 0, 120) for i in (1, 2, 3)]
                         + [make_windows(series[5], 12, 12, 0, 96)])
val_w = make_windows(series[5], 12, 12, 84, 120)
print(len(train_w), "training windows,", len(val_w), "validation windows")

#%%
cfg = ModelConfig(gcn_out=16, lstm_hidden=16)
tc = TrainConfig(epochs=25, patience=10, seed=SEED)
test = series[TEST_MEMBER]
plan = RolloutPlan(120, 3, test[:, :4])
truth = test[:, 4, 120:156]

reports, preds = {}, {}
for name, adj in (("GCN-LSTM", normalize_adjacency(graph)),
                  ("LSTM", identity_adjacency(world.mask.node_count))):
    model, hist = train(init_parameters(cfg, SEED), adj, train_w, val_w, tc)
    print(f"{name}: best validation mse {hist.best_val:.5f} at epoch {hist.best_epoch}")
    preds[name] = rollout(model, adj, test[:, :, 108:120], plan)
    reports[name] = evaluate_nodes(preds[name], truth, world.mask)

print()
print(format_table(reports))

#%%
# error grows with lead time because each year feeds on the previous forecast
for name, pred in preds.items():
    years = yearly_report(inflate(pred.T, world.mask), inflate(truth.T, world.mask))
    print(name, "yearly mse:", " ".join(f"{r.mse:.5f}" for r in years))

# land-only scores are larger: ocean zeros are trivially right
print("land-only mse:", {k: round(evaluate_nodes(p, truth, world.mask, land_only=True).mse, 5)
                         for k, p in preds.items()})
