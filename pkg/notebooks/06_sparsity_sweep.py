"""
Fidelity against sparsity
=========================

Keep the top fraction of candidate events and check whether the prediction
survives. A useful ranking should survive earlier than a random one.
"""

import numpy as np

from tgib import ModelConfig, PlantedRuleConfig, TrainConfig, generate, make_split, sparsity_sweep, train

g, truth = generate(PlantedRuleConfig(num_nodes=150, num_hubs=10, num_targets=250,
                                      num_background_events=60, window=20_000, seed=1))
split = make_split(g)
model, _ = train(g, split, ModelConfig(d=8, d_time=8, f_edge=2, neighbors=5),
                 TrainConfig(epochs=2, val_max_events=100))

targets = [p for p in split.test if int(g.event_ids[p]) in truth][:40]
learned = sparsity_sweep(model, g, targets)
shuffled = sparsity_sweep(model, g, targets, ranker="random")
for s in (0.0, 0.01, 0.05, 0.1, 0.2, 0.3):
    i = int(np.argmin(np.abs(learned.levels - s)))
    print(f"sparsity {s:.2f}: learned {learned.match_rate[i]:.2f}  random {shuffled.match_rate[i]:.2f}")
print(f"AUC learned {learned.auc:.3f}, random {shuffled.auc:.3f}")
