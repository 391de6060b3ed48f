"""
Transfer to an unlabeled stratum with oracle-labeled augmentation
=================================================================

Labels only exist for the source stratum, but the deployment mix also
contains a target stratum the base model has never seen labeled. The recipe:
work out how many extra rows are needed and from which strata so the
training pool matches the deployment mix, draw them from the unlabeled
pool, label them with the oracle, and retrain with a relaxed loss that
tolerates oracle noise inside a slack band.
"""

import dataclasses

import numpy as np

from scorefusion import (
    ExperimentConfig,
    MethodSpec,
    OracleSettings,
    StratumDensity,
    TransferSettings,
    derive_p3,
    feasibility_threshold,
    run_transfer_experiment,
    sigmoid,
)
from scorefusion.config import BaseSettings
from scorefusion.data import LabeledDataset

# --- two strata with disjoint informative coordinates ---
# Stratum A activates features 0-4, stratum B features 5-9. A model fit on
# A alone learns nothing about the coordinates that matter for B.


def make_dataset(seed):
    rng = np.random.default_rng([171, seed])
    n_a, n_b = 2500, 3000
    Xa = np.hstack([rng.standard_normal((n_a, 5)) + 1.0, np.zeros((n_a, 5))])
    Xb = np.hstack([np.zeros((n_b, 5)), rng.standard_normal((n_b, 5)) + 1.0])
    X = np.vstack([Xa, Xb])
    logits = X[:, :5] @ np.array([1.0, -1.0, 1.0, -1.0, 1.0]) \
        + X[:, 5:] @ np.array([1.0, 1.0, -1.0, -1.0, 1.0])
    y = (rng.uniform(size=n_a + n_b) < sigmoid(logits)).astype(int)
    return LabeledDataset.from_arrays(
        X, y=y, strata=["A"] * n_a + ["B"] * n_b, prefix=f"shift{seed}_"
    )


# --- how much augmentation does the mixture identity require? ---
p1 = StratumDensity({"A": 1.0, "B": 0.0})   # labeled rows: all source
p2 = StratumDensity({"A": 0.45, "B": 0.55})  # deployment mix
n_labeled = 2000
threshold = feasibility_threshold(p1, p2, n_labeled)
print(f"minimum augmentation for an exact mixture match: m >= {threshold:.0f}")
for m in (1000, int(np.ceil(threshold)), 4000):
    p3, clamped = derive_p3(p1, p2, n_labeled, m)
    note = "clamped" if clamped else "exact"
    mix = ", ".join(f"{tag}: {p:.3f}" for tag, p in sorted(p3.weights.items()))
    print(f"  m = {m:5d}: sample augmentation as {{{mix}}}  ({note})")

# --- run it: source-only model vs augmented retraining, 5 seeds ---
cfg = ExperimentConfig(
    methods=(MethodSpec("transfer", (2000,)),),
    k=5,
    base=BaseSettings(reg_lambda=1e-3, max_iter=600, tol=1e-5),
    oracle=OracleSettings(kind="synthetic", accuracy=0.85, seed=11),
    transfer=TransferSettings(source_strata=("A",), target_strata=("B",)),
)

rows = {"ml@source": [], "ml@target": [], "transfer(2000)@source": [], "transfer(2000)@target": []}
for seed in range(5):
    report = run_transfer_experiment(
        dataclasses.replace(cfg, seeds=(seed,)), dataset=make_dataset(seed)
    )
    for name in rows:
        rows[name].append(report.mean(name))

print()
print("mean test accuracy over 5 seeds:")
for name, values in rows.items():
    print(f"  {name:24s} {np.mean(values):.3f}")
print()
gain = np.mean(rows["transfer(2000)@target"]) - np.mean(rows["ml@target"])
drop = np.mean(rows["ml@source"]) - np.mean(rows["transfer(2000)@source"])
print(f"target stratum gain: {gain:+.3f}   source stratum change: {-drop:+.3f}")
