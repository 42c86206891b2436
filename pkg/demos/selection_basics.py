# Selection basics: loss-weighted centroids, with and without the diversity term.
#
# Builds a three-cluster pool where one cluster's losses are boosted 10x,
# then shows where the picks land and how far apart the centroids end up.

import numpy as np

from capsel.core import LossProfile, OdsConfig
from capsel.selection import optimize, select
from capsel.synth import SynthSpec, boosted_loss_scale, synth_dataset


def pick_fractions(diversity_weight, data, losses, budget=12, seed=0):
    config = OdsConfig(diversity_weight=diversity_weight, max_iterations=4000)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    model, trace = optimize(data.train, losses, budget, config, rng)
    picks = select(data.train, model)
    unit = model.centroids / np.linalg.norm(model.centroids, axis=1, keepdims=True)
    sims = unit @ unit.T
    spread = float(sims[~np.eye(budget, dtype=bool)].mean())
    per_class = np.bincount(data.train.labels[picks], minlength=data.train.class_count)
    return per_class / budget, spread, len(trace.objectives)


def main():
    spec = SynthSpec(class_count=3, samples_per_class=150, eval_per_class=1, dim=16,
                     cluster_spread=0.7, loss_boost_classes=(0,), boost_factor=10.0, seed=3)
    data = synth_dataset(spec)
    losses = LossProfile(boosted_loss_scale(data.metadata))
    print(f"pool: {data.train.count} samples, 3 clusters, class 0 losses boosted 10x")

    for weight in (0.0, 1.0, 10.0):
        mix, spread, iters = pick_fractions(weight, data, losses)
        mix_text = " ".join(f"{m:.2f}" for m in mix)
        print(f"diversity_weight={weight:>4}: pick mix per class [{mix_text}] "
              f"mean centroid cosine {spread:+.3f} ({iters} iterations)")
    print("the diversity term drives centroids apart (cosine column drops); "
          "the boosted cluster still holds most picks")


if __name__ == "__main__":
    main()
