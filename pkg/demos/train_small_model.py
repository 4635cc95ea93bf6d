"""
Training the performance predictor
==================================

Fits the sequence model on simulator data from a small batch of layouts,
then checks how well it ranks tasks on a layout it has never seen. Takes
around a minute; scale n_layouts / epochs up for a stronger fit.
"""

import numpy as np

from layoutforge.crowd import simulate_dataset, training_examples
from layoutforge.layout import generate_random_layout
from layoutforge.model import TrainConfig, predict_sequence, target_level_r2, train
from layoutforge.tasks import build_photo_editing_sequence
from layoutforge.templates import photo_template

n_layouts = 8
sequence = build_photo_editing_sequence(n_photos=2, seed=1)

# the last layout never enters training; it is the probe for generalization
layouts = [generate_random_layout(photo_template(), seed=100 + i)
           for i in range(n_layouts + 1)]
ids = [f"layout-{i}" for i in range(n_layouts + 1)]
dataset = simulate_dataset(layouts, sequence, n_users=3, seed=2,
                           layout_ids=ids)

examples = training_examples(dataset, dict(zip(ids, layouts)), sequence)
train_set = [e for e in examples if e.name != ids[-1]]

config = TrainConfig(epochs=40, learning_rate=1e-3, seed=0)
result = train(train_set, config)

print("loss curve (variance-ratio, lower is better):")
for epoch in (0, 4, 9, 19, 39):
    print(f"  epoch {epoch:>3}: train {result.train_history[epoch]:.4f} "
          f"val {result.val_history[epoch]:.4f}")
print(f"best validation epoch: {result.best_epoch}")


def r2_for(layout, lid):
    pred = predict_sequence(layout, sequence, result.params)
    obs = dataset.metrics_for(lid)
    keys = [(t.target_id, t.trial_index) for t in sequence.tasks]
    return target_level_r2(pred.task_ms, obs, keys)


print(f"\ntarget-level R2, seen layout:   {r2_for(layouts[0], ids[0]):.3f}")
print(f"target-level R2, unseen layout: {r2_for(layouts[-1], ids[-1]):.3f}")

pred = predict_sequence(layouts[-1], sequence, result.params)
obs = dataset.metrics_for(ids[-1])
print("\nunseen layout, first five tasks (predicted vs observed ms):")
for i in range(5):
    print(f"  {sequence.tasks[i].target_id:<18} "
          f"{pred.task_ms[i]:>7.0f} {obs[i]:>9.0f}")
