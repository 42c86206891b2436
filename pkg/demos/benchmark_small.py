# A scaled-down convergence benchmark: how many training batches does each
# selection strategy need before the surrogate probe reaches 90% accuracy?
#
# Runs in well under a minute. The acceptance-grade benchmark (5000-sample
# pool, five seeds) lives in tests/test_acceptance.py.

import time

import numpy as np

from capsel.augment import CeaConfig
from capsel.harness import RunConfig, run
from capsel.probe import TrainConfig
from capsel.selection import OdsConfig
from capsel.synth import SynthSpec, boosted_loss_scale, synth_dataset


def bench(data, strategy, eta, seed):
    config = RunConfig(
        loops=3, selection_ratio=0.02, strategy=strategy, total_batches=150,
        eval_every=2, target_accuracy=0.9, seed=seed,
        ods=OdsConfig(max_iterations=800, ensemble_size=1, diversity_weight=0.5),
        cea=CeaConfig(eta=25.0 if eta else 0.0),
        train=TrainConfig(batch_size=30, learning_rate=0.05),
    )
    return run(data.train, data.captions, data.eval_pool, config,
               loss_scale=boosted_loss_scale(data.metadata))


def main():
    started = time.time()
    rows = {name: {"b2a": [], "acc": []} for name in ("vecaf", "diversity_only", "random")}
    for seed in range(3):
        spec = SynthSpec(class_count=5, samples_per_class=300, eval_per_class=60, dim=16,
                         cluster_spread=0.15, equal_angle_deg=45.0, close_pair_angle_deg=18.0,
                         class_share=(0.05, 0.05, 0.30, 0.30, 0.30),
                         loss_boost_classes=(0, 1), boost_factor=5.0, seed=seed)
        data = synth_dataset(spec)
        for name in rows:
            report = bench(data, name, eta=(name == "vecaf"), seed=seed)
            value = report.b2a
            rows[name]["b2a"].append(np.inf if isinstance(value, str) else value)
            rows[name]["acc"].append(report.final_accuracy)

    print(f"3 seeds, 1500-sample pool, 2% budget per loop ({time.time() - started:.0f}s)")
    print(f"{'strategy':<16} {'batches to 0.90 (median)':<26} final accuracy (median)")
    for name, values in rows.items():
        b2a = np.median(values["b2a"])
        b2a_text = "never" if np.isinf(b2a) else f"{b2a:.0f}"
        print(f"{name:<16} {b2a_text:<26} {np.median(values['acc']):.3f}")


if __name__ == "__main__":
    main()
