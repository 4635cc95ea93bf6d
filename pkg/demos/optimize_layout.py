"""
Improving a layout by gradient descent on its geometry
======================================================

Trains the predictor on two dozen randomized photo-editing layouts, then
nudges element positions downhill on the predicted sequence time while
penalty terms keep the layout feasible. Min-size constraints pin every
element at its starting extents so the search moves things around instead
of shrinking them. Finishes with a before/after verdict from the
simulator, the honest judge. Takes three to four minutes; the training
run is the bulk of it.
"""

import numpy as np

from layoutforge.crowd import simulate_dataset, training_examples
from layoutforge.layout import export_css, generate_random_layout
from layoutforge.model import TrainConfig, train
from layoutforge.optimizer import (
    Constraint,
    OptimizerConfig,
    PenaltyConfig,
    optimize,
)
from layoutforge.tasks import build_photo_editing_sequence
from layoutforge.templates import photo_template

sequence = build_photo_editing_sequence(n_photos=3, seed=7)

layouts = [generate_random_layout(photo_template(), seed=1000 + i)
           for i in range(24)]
ids = [f"train-{i:02d}" for i in range(24)]
print("simulating the training corpus (24 layouts, 4 users)...")
dataset = simulate_dataset(layouts, sequence, n_users=4, seed=5,
                           layout_ids=ids)
examples = training_examples(dataset, dict(zip(ids, layouts)), sequence)
print("training 150 epochs...")
result = train(examples, TrainConfig(epochs=150, learning_rate=1e-3, seed=3))
print(f"done, best validation epoch {result.best_epoch}")

# a fresh starting layout the model has never seen
start = generate_random_layout(photo_template(), seed=9001)

constraints = PenaltyConfig(constraints=[
    Constraint("min-size", (ent.id,), min_w=ent.rect.w, min_h=ent.rect.h)
    for ent in start.top_level_entities() + start.hosted_drop_targets()])

trace = optimize(start, sequence, result.params,
                 OptimizerConfig(steps=200), constraints)

print("\nobjective trajectory (predicted ms + penalties):")
for i in (0, 25, 50, 100, 150, 200):
    snap = trace.steps[i]
    mark = "  <- best" if i == trace.best_step else ""
    print(f"  step {i:>3}: {snap.objective:>9.0f} "
          f"feasible={snap.feasible}{mark}")
chosen = trace.steps[trace.best_step]
print(f"best feasible step: {trace.best_step} "
      f"(predicted {chosen.predicted_ms:.0f} ms vs "
      f"{trace.steps[0].predicted_ms:.0f} ms at start)")

best = trace.best_layout()
verdict = simulate_dataset([start, best], sequence, n_users=8, seed=778,
                           layout_ids=["before", "after"])
before = verdict.metrics_for("before").sum()
after = verdict.metrics_for("after").sum()
print(f"\nsimulator verdict: {before:.0f} ms -> {after:.0f} ms "
      f"({(before - after) / before * 100:+.1f}% improvement)")

print("\nfirst lines of the optimized layout's style sheet:")
print("\n".join(export_css(best).splitlines()[:6]))
