"""Linear fusion of base-classifier scores with oracle scores.

The fused prediction is alpha(s) * s + (1 - alpha(s)) * z where s is the base
score and z the oracle score. The weight function alpha is piecewise constant
on a uniform partition of [0, 1] into r pieces; r = 1 recovers a single
constant weight. Weights are fitted on out-of-fold base scores by squared
error, for which each piece has a closed-form solution: the unconstrained
scalar regression coefficient, projected onto [0, 1] (exact for a 1-d convex
quadratic).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EnsembleError(ValueError):
    """Raised for mismatched, empty, or out-of-range fitting inputs."""


def _validate_inputs(y_cv, z, y):
    y_cv = np.asarray(y_cv, dtype=float)
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (y_cv.shape == z.shape == y.shape) or y_cv.ndim != 1:
        raise EnsembleError(
            f"inputs must be equal-length vectors, got shapes {y_cv.shape}, {z.shape}, {y.shape}"
        )
    if y_cv.size == 0:
        raise EnsembleError("cannot fit a fusion weight on empty input")
    if np.any((y_cv < 0) | (y_cv > 1)) or np.any((z < 0) | (z > 1)):
        raise EnsembleError("base and oracle scores must lie in [0, 1]")
    if np.any((y != 0) & (y != 1)):
        raise EnsembleError("labels must be 0 or 1")
    return y_cv, z, y


def _check_loss(loss):
    if loss != "l2":
        raise EnsembleError(f"only the 'l2' fitting loss is supported, got {loss!r}")


def fit_constant_weight(y_cv, z, y, loss: str = "l2") -> float:
    """Best constant fusion weight in [0, 1] under squared error.

    Equivalent to regressing (y - z) on (y_cv - z) and projecting the
    coefficient onto [0, 1]. When y_cv and z coincide everywhere the weight is
    immaterial; 1.0 is returned so the base model stays nominal.
    """
    _check_loss(loss)
    y_cv, z, y = _validate_inputs(y_cv, z, y)
    num = float(np.dot(y - z, y_cv - z))
    den = float(np.dot(y_cv - z, y_cv - z))
    if den == 0.0:
        return 1.0
    return min(1.0, max(0.0, num / den))


def piece_index(value: float, r: int) -> int:
    """0-based index of the partition piece containing ``value``.

    Pieces are [(j-1)/r, j/r) for j < r and [(r-1)/r, 1] for the last piece.
    """
    idx = int(np.floor(value * r))
    return min(max(idx, 0), r - 1)


@dataclass(frozen=True)
class WeightFunction:
    """Piecewise-constant fusion weight on a uniform partition of [0, 1]."""

    r: int
    weights: tuple
    support_counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "support_counts", tuple(int(c) for c in self.support_counts))
        if self.r < 1:
            raise EnsembleError(f"piece count must be >= 1, got {self.r}")
        if len(self.weights) != self.r or len(self.support_counts) != self.r:
            raise EnsembleError("weights and support_counts must both have length r")
        if any(not 0.0 <= w <= 1.0 for w in self.weights):
            raise EnsembleError("piece weights must lie in [0, 1]")

    @classmethod
    def constant(cls, alpha: float, support_count: int = 0) -> "WeightFunction":
        return cls(r=1, weights=(alpha,), support_counts=(support_count,))

    @property
    def breakpoints(self) -> tuple:
        """(lo, hi) bounds of each piece; the last piece is closed at 1."""
        return tuple((j / self.r, (j + 1) / self.r) for j in range(self.r))

    def alpha(self, base_score):
        """Weight of the piece containing each base score (scalar or array)."""
        s = np.asarray(base_score, dtype=float)
        idx = np.clip(np.floor(s * self.r).astype(int), 0, self.r - 1)
        out = np.asarray(self.weights)[idx]
        return out if out.ndim else float(out)

    def to_json(self) -> str:
        doc = {
            "kind": "piecewise_weight",
            "r": self.r,
            "weights": list(self.weights),
            "support_counts": list(self.support_counts),
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "WeightFunction":
        doc = json.loads(text)
        return cls(r=int(doc["r"]), weights=doc["weights"], support_counts=doc["support_counts"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "WeightFunction":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def fit_adaptive_weights(
    y_cv, z, y, r: int, loss: str = "l2", empty_piece_weight: float = 0.0
) -> WeightFunction:
    """Fit one constant weight per partition piece of the base-score axis.

    Samples are routed to pieces by their out-of-fold base score; each piece
    solves the same scalar problem as ``fit_constant_weight``. Pieces with no
    samples get ``empty_piece_weight`` (default 0: defer fully to the oracle,
    the only estimator with evidence there) and support count 0.
    """
    _check_loss(loss)
    if r < 1:
        raise EnsembleError(f"piece count must be >= 1, got {r}")
    if not 0.0 <= empty_piece_weight <= 1.0:
        raise EnsembleError("empty_piece_weight must lie in [0, 1]")
    y_cv, z, y = _validate_inputs(y_cv, z, y)
    idx = np.clip(np.floor(y_cv * r).astype(int), 0, r - 1)
    weights, counts = [], []
    for j in range(r):
        mask = idx == j
        count = int(mask.sum())
        if count == 0:
            weights.append(empty_piece_weight)
        else:
            weights.append(fit_constant_weight(y_cv[mask], z[mask], y[mask], loss=loss))
        counts.append(count)
    return WeightFunction(r=r, weights=tuple(weights), support_counts=tuple(counts))


def fuse(weight: WeightFunction, y_hat, z):
    """Convex combination alpha(y_hat) * y_hat + (1 - alpha(y_hat)) * z.

    Inputs are scores in [0, 1]; the output is automatically in [0, 1].
    Accepts scalars or equal-shaped arrays.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    z = np.asarray(z, dtype=float)
    a = weight.alpha(y_hat)
    out = a * y_hat + (1.0 - a) * z
    return out if np.ndim(out) else float(out)


def fusion_objective(weight: WeightFunction, y_cv, z, y) -> float:
    """Mean squared error of the fused scores against labels."""
    y_cv, z, y = _validate_inputs(y_cv, z, y)
    fused = fuse(weight, y_cv, z)
    return float(np.mean((fused - y) ** 2))


@dataclass(frozen=True)
class FusionReport:
    """Per-piece fitting diagnostics.

    ``objective_before`` is each piece's mean squared error of the raw base
    scores (weight 1); ``objective_after`` uses the fitted weight, so it never
    exceeds the former. Empty pieces report NaN objectives.
    """

    piece_weights: tuple
    piece_counts: tuple
    objective_before: tuple
    objective_after: tuple
    cv_objective: float


def fusion_report(weight: WeightFunction, y_cv, z, y) -> FusionReport:
    """Evaluate a fitted weight function piece by piece on its fitting data."""
    y_cv, z, y = _validate_inputs(y_cv, z, y)
    idx = np.clip(np.floor(y_cv * weight.r).astype(int), 0, weight.r - 1)
    before, after, counts = [], [], []
    for j in range(weight.r):
        mask = idx == j
        count = int(mask.sum())
        counts.append(count)
        if count == 0:
            before.append(float("nan"))
            after.append(float("nan"))
            continue
        w = weight.weights[j]
        before.append(float(np.mean((y_cv[mask] - y[mask]) ** 2)))
        fused = w * y_cv[mask] + (1.0 - w) * z[mask]
        after.append(float(np.mean((fused - y[mask]) ** 2)))
    return FusionReport(
        piece_weights=weight.weights,
        piece_counts=tuple(counts),
        objective_before=tuple(before),
        objective_after=tuple(after),
        cv_objective=fusion_objective(weight, y_cv, z, y),
    )
