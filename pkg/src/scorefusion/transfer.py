"""Covariate-shift transfer training with oracle-labeled augmentation.

The labeled pool was drawn with stratum density p1 but the deployment
distribution is p2 (same label-given-features law). Augmenting the n labeled
rows with m extra rows drawn from the sampling density

    p3(s) = p2(s) + (n/m) * (p2(s) - p1(s))

makes the combined pool match p2 exactly whenever p3 is a proper density;
otherwise the negative part is clamped to zero and the rest renormalized.
The extra rows carry oracle scores instead of labels, so training uses a
slack-banded squared loss on them: residuals within ``slack_a`` of the oracle
score are not penalized at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Instance, LabeledDataset
from .logistic import BaseModel, TrainMeta, TrainingError, minimize_gd, sigmoid, standardization
from .oracle import score_batch

DENSITY_TOL = 1e-9


class TransferError(ValueError):
    """Raised for invalid densities, infeasible plans, or exhausted pools."""


@dataclass(frozen=True)
class StratumDensity:
    """Discrete probability distribution over stratum tags."""

    weights: dict

    def __post_init__(self):
        weights = {str(tag): float(p) for tag, p in dict(self.weights).items()}
        if not weights:
            raise TransferError("a stratum density needs at least one tag")
        if any(p < 0 for p in weights.values()):
            raise TransferError(f"negative stratum probability in {weights}")
        total = sum(weights.values())
        if abs(total - 1.0) > DENSITY_TOL:
            raise TransferError(f"stratum probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_counts(cls, counts, tags=None) -> "StratumDensity":
        """Normalize nonnegative counts; ``tags`` widens the universe with zeros."""
        counts = {str(t): float(c) for t, c in dict(counts).items()}
        for tag in tags or ():
            counts.setdefault(str(tag), 0.0)
        total = sum(counts.values())
        if total <= 0:
            raise TransferError("cannot normalize counts that sum to zero")
        return cls({t: c / total for t, c in counts.items()})

    @property
    def tags(self) -> tuple:
        return tuple(sorted(self.weights))

    def prob(self, tag) -> float:
        return self.weights.get(str(tag), 0.0)

    def support(self) -> tuple:
        return tuple(t for t in self.tags if self.weights[t] > 0)

    def as_array(self, tags) -> np.ndarray:
        return np.array([self.prob(t) for t in tags])


@dataclass(frozen=True)
class RelaxedLoss:
    """Squared loss with a dead band: l0(x, y) = max(|x - y| - slack_a, 0)^2."""

    slack_a: float = 0.1
    base: str = "l2"

    def __post_init__(self):
        if self.base != "l2":
            raise TransferError(f"unsupported base loss {self.base!r}; only 'l2' is implemented")
        if not self.slack_a >= 0:
            raise TransferError(f"slack_a must be >= 0, got {self.slack_a}")

    def value(self, pred, target):
        excess = np.maximum(np.abs(np.asarray(pred, dtype=float) - target) - self.slack_a, 0.0)
        out = excess**2
        return out if out.ndim else float(out)

    def grad(self, pred, target):
        """Derivative in the prediction: 0 inside the band, shrunk residual outside."""
        diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
        excess = np.maximum(np.abs(diff) - self.slack_a, 0.0)
        out = 2.0 * excess * np.sign(diff)
        return out if out.ndim else float(out)


def _check_same_tags(p1: StratumDensity, p2: StratumDensity):
    if set(p1.weights) != set(p2.weights):
        raise TransferError(
            f"densities cover different tag sets: {sorted(p1.weights)} vs {sorted(p2.weights)}"
        )


def derive_p3(p1: StratumDensity, p2: StratumDensity, n: int, m: int):
    """Sampling density making n rows of p1 plus m rows of p3 mix to p2.

    Returns (p3, clamped). The exact solution is
    raw(s) = p2(s) + (n/m)(p2(s) - p1(s)); when some raw mass is negative the
    exact mixture is infeasible at this m, so the negative part is zeroed and
    the remainder renormalized, with ``clamped`` set to True.
    """
    _check_same_tags(p1, p2)
    if n < 1 or m < 1:
        raise TransferError(f"derive_p3 needs n, m >= 1, got n={n}, m={m}")
    tags = p1.tags
    raw = p2.as_array(tags) + (n / m) * (p2.as_array(tags) - p1.as_array(tags))
    if np.all(raw >= 0):
        return StratumDensity(dict(zip(tags, raw))), False
    clipped = np.maximum(raw, 0.0)
    clipped = clipped / clipped.sum()
    return StratumDensity(dict(zip(tags, clipped))), True


def feasibility_threshold(p1: StratumDensity, p2: StratumDensity, n: int) -> float:
    """Smallest augmentation count m for which derive_p3 needs no clamping.

    Equals n * max over target-supported strata of (p1(s) - p2(s)) / p2(s),
    floored at 0. Strata with p2(s) = 0 but p1(s) > 0 can never be mixed away,
    so the threshold is infinite there.
    """
    _check_same_tags(p1, p2)
    if n < 1:
        raise TransferError(f"feasibility threshold needs n >= 1, got n={n}")
    worst = 0.0
    for tag in p1.tags:
        a, b = p1.prob(tag), p2.prob(tag)
        if b > 0:
            worst = max(worst, (a - b) / b)
        elif a > 0:
            return float("inf")
    return n * worst


@dataclass(frozen=True)
class TransferPlan:
    """Everything needed to reproduce one augmentation run."""

    n: int
    m: int
    source: StratumDensity
    target: StratumDensity
    sampling: StratumDensity
    slack_a: float = 0.1
    clamped: bool = False

    def __post_init__(self):
        if not self.slack_a >= 0:
            raise TransferError(f"slack_a must be >= 0, got {self.slack_a}")
        if not self.clamped:
            for tag in self.target.tags:
                mixed = (self.n * self.source.prob(tag) + self.m * self.sampling.prob(tag)) / (
                    self.n + self.m
                )
                if abs(mixed - self.target.prob(tag)) > DENSITY_TOL:
                    raise TransferError(
                        f"unclamped plan fails the mixture identity at stratum {tag!r}: "
                        f"{mixed!r} != {self.target.prob(tag)!r}"
                    )

    def to_json(self) -> str:
        doc = {
            "kind": "transfer_plan",
            "n": self.n,
            "m": self.m,
            "slack_a": self.slack_a,
            "clamped": self.clamped,
            "source": self.source.weights,
            "target": self.target.weights,
            "sampling": self.sampling.weights,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TransferPlan":
        doc = json.loads(text)
        return cls(
            n=int(doc["n"]),
            m=int(doc["m"]),
            source=StratumDensity(doc["source"]),
            target=StratumDensity(doc["target"]),
            sampling=StratumDensity(doc["sampling"]),
            slack_a=float(doc["slack_a"]),
            clamped=bool(doc["clamped"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TransferPlan":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def make_plan(
    p1: StratumDensity, p2: StratumDensity, n: int, m: int, slack_a: float = 0.1
) -> TransferPlan:
    p3, clamped = derive_p3(p1, p2, n, m)
    return TransferPlan(
        n=n, m=m, source=p1, target=p2, sampling=p3, slack_a=slack_a, clamped=clamped
    )


def sample_augmentation(
    pool: LabeledDataset, p3: StratumDensity, m: int, seed: int
) -> LabeledDataset:
    """Draw m pool instances: stratum counts multinomial(m, p3), then without
    replacement within each stratum. Rows keep their pool order."""
    if m < 0:
        raise TransferError(f"augmentation count must be >= 0, got {m}")
    if m == 0:
        return LabeledDataset((), pool.dim)
    groups = {str(tag): rows for tag, rows in pool.by_stratum().items() if tag is not None}
    missing = [t for t in p3.support() if t not in groups]
    if missing:
        raise TransferError(f"pool has no instances in stratum {missing[0]!r} (p3 > 0 there)")
    tags = p3.support()
    probs = p3.as_array(tags)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(m, probs / probs.sum())
    chosen_ids = []
    for tag, count in zip(tags, counts):
        if count == 0:
            continue
        rows = groups[tag]
        if count > len(rows):
            raise TransferError(
                f"stratum {tag!r} exhausted: need {count} instances, pool has {len(rows)}"
            )
        picked = rng.choice(len(rows), size=count, replace=False)
        chosen_ids.extend(rows[i].id for i in picked)
    return pool.subset(chosen_ids)


def label_with_oracle(ds: LabeledDataset, provider) -> LabeledDataset:
    """Attach oracle scores to every instance and drop any labels."""
    if ds.n == 0:
        return ds
    scored = dict(score_batch(provider, ds.instances))
    rows = tuple(
        Instance(inst.id, inst.features, scored[inst.id], None, inst.stratum)
        for inst in ds.instances
    )
    return LabeledDataset(rows, ds.dim)


def augmented_objective_and_grad(
    theta: np.ndarray,
    X_labeled: np.ndarray,
    y: np.ndarray,
    X_aug: np.ndarray,
    z: np.ndarray,
    slack_a: float,
    reg_lambda: float,
):
    """Objective and gradient of the augmented squared-loss training problem.

    Feature matrices must already be standardized. The objective is
    (1/(n+m)) * [sum over labeled (sigmoid - y)^2
                 + sum over augmented max(|sigmoid - z| - slack_a, 0)^2]
    + (reg_lambda/2)||w||^2, with the intercept (last theta entry) unpenalized.
    """
    d = X_labeled.shape[1] if X_labeled.size else X_aug.shape[1]
    w, b = theta[:d], theta[d]
    loss0 = RelaxedLoss(slack_a)
    n, m = len(y), len(z)
    total = n + m
    if total == 0:
        raise TransferError("augmented objective needs at least one row")

    value = 0.0
    grad = np.zeros(d + 1)
    if n:
        p = np.atleast_1d(sigmoid(X_labeled @ w + b))
        resid = p - y
        value += float(np.sum(resid**2))
        back = 2.0 * resid * p * (1.0 - p)
        grad[:d] += X_labeled.T @ back
        grad[d] += float(np.sum(back))
    if m:
        q = np.atleast_1d(sigmoid(X_aug @ w + b))
        value += float(np.sum(loss0.value(q, z)))
        back = np.atleast_1d(loss0.grad(q, z)) * q * (1.0 - q)
        grad[:d] += X_aug.T @ back
        grad[d] += float(np.sum(back))
    value = value / total + 0.5 * reg_lambda * float(np.dot(w, w))
    grad = grad / total
    grad[:d] += reg_lambda * w
    return value, grad


def train_augmented(
    labeled: LabeledDataset,
    augmented: LabeledDataset | None = None,
    slack_a: float = 0.1,
    reg_lambda: float = 1e-3,
    max_iter: int = 5000,
    tol: float = 1e-6,
    seed: int = 0,
    round_oracle_scores: bool = False,
) -> BaseModel:
    """Train the logistic scorer on labeled rows (squared loss) plus
    oracle-labeled rows (slack-banded squared loss).

    Standardization statistics come from the labeled rows only, so adding
    augmentation never changes how inputs are scaled. With an empty
    ``augmented`` set this is plain squared-loss training.
    ``round_oracle_scores`` snaps each z to {0, 1} (z > 0.5 rounds up) before
    training, for oracles whose confidence should not be trusted as a soft
    target.
    """
    if labeled.n < 1:
        raise TrainingError("cannot train on an empty labeled dataset")
    if not labeled.has_labels:
        raise TrainingError("labeled dataset has instances with missing labels")
    if reg_lambda < 0:
        raise TrainingError(f"reg_lambda must be >= 0, got {reg_lambda}")
    if augmented is None:
        augmented = LabeledDataset((), labeled.dim)
    if augmented.dim != labeled.dim:
        raise TrainingError(
            f"dimension mismatch: labeled d={labeled.dim}, augmented d={augmented.dim}"
        )
    if augmented.n and not augmented.has_oracle_scores:
        raise TrainingError("augmented dataset has instances with missing oracle scores")

    X = labeled.feature_matrix()
    y = labeled.labels()
    if not np.all(np.isfinite(X)):
        raise TrainingError("labeled dataset contains non-finite features")
    mean, scale = standardization(X)
    Xs = (X - mean) / scale
    if augmented.n:
        Xa = (augmented.feature_matrix() - mean) / scale
        z = augmented.oracle_scores()
        if round_oracle_scores:
            z = (z > 0.5).astype(float)
    else:
        Xa = np.zeros((0, labeled.dim))
        z = np.zeros(0)

    def value_and_grad(theta):
        return augmented_objective_and_grad(theta, Xs, y, Xa, z, slack_a, reg_lambda)

    theta, iterations, objective = minimize_gd(
        value_and_grad, np.zeros(labeled.dim + 1), max_iter=max_iter, tol=tol
    )
    return BaseModel(
        weights=theta[: labeled.dim],
        intercept=float(theta[labeled.dim]),
        reg_lambda=reg_lambda,
        feature_mean=mean,
        feature_scale=scale,
        train_meta=TrainMeta(iterations=iterations, objective=objective, seed=seed),
    )
