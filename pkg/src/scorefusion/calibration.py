"""Grid-discretized calibration of a base scorer against an oracle score.

Scores are rounded to uniform grids ({i/M} for the base score, {j/M'} for the
oracle score); the pair of rounded values indexes a cell. Two post-hoc
correctors are provided:

* ``CellCalibrator`` stores one offset per cell, the mean training residual
  y - f(x) there: (M+1)(M'+1) parameters, exactly unbiased per nonempty cell.
* ``AdditiveCalibrator`` stores one offset per base-grid level plus one per
  oracle-grid level, fitted jointly by least squares: M+M'+2 parameters, with
  residual sums zero over every occupied row and column level.

Both produce f(x) + offset, clamped to [0, 1] at application time; the
pre-clamp value is exposed separately because the unbiasedness properties are
statements about the unclamped corrector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CalibrationError(ValueError):
    """Raised for invalid grids or unusable fitting inputs."""


@dataclass(frozen=True)
class GridSpec:
    """Grid resolutions: base scores round to {i/base_res}, oracle scores to {j/oracle_res}."""

    base_res: int
    oracle_res: int

    def __post_init__(self):
        if self.base_res < 1 or self.oracle_res < 1:
            raise CalibrationError(
                f"grid resolutions must be positive integers, got ({self.base_res}, {self.oracle_res})"
            )


def grid_index(v, res: int):
    """Index of the nearest grid point i/res, ties broken toward the lower point."""
    v = np.asarray(v, dtype=float)
    if np.any((v < 0) | (v > 1)):
        raise CalibrationError("grid rounding requires values in [0, 1]")
    idx = np.ceil(v * res - 0.5).astype(int)
    idx = np.clip(idx, 0, res)
    return idx if idx.ndim else int(idx)


def grid_round(v: float, res: int) -> float:
    """Round a score in [0, 1] to the nearest point of the grid {i/res}."""
    return grid_index(v, res) / res


def _validate_fit_inputs(base_scores, oracle_scores, labels):
    f = np.asarray(base_scores, dtype=float)
    z = np.asarray(oracle_scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if not (f.shape == z.shape == y.shape) or f.ndim != 1:
        raise CalibrationError(
            f"inputs must be equal-length vectors, got shapes {f.shape}, {z.shape}, {y.shape}"
        )
    if f.size == 0:
        raise CalibrationError("cannot fit a calibrator on empty input")
    if np.any((f < 0) | (f > 1)) or np.any((z < 0) | (z > 1)):
        raise CalibrationError("base and oracle scores must lie in [0, 1]")
    if np.any((y != 0) & (y != 1)):
        raise CalibrationError("labels must be 0 or 1")
    return f, z, y


@dataclass(frozen=True)
class CellCalibrator:
    """Per-cell mean-residual offsets on the (base grid) x (oracle grid) table."""

    grid: GridSpec
    delta: np.ndarray  # (base_res+1, oracle_res+1)
    counts: np.ndarray

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        counts = np.asarray(self.counts, dtype=int)
        shape = (self.grid.base_res + 1, self.grid.oracle_res + 1)
        if delta.shape != shape or counts.shape != shape:
            raise CalibrationError(f"delta/counts must have shape {shape}")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "counts", counts)

    @property
    def parameter_count(self) -> int:
        return (self.grid.base_res + 1) * (self.grid.oracle_res + 1)

    def offset(self, base_score, oracle_score):
        i = grid_index(base_score, self.grid.base_res)
        j = grid_index(oracle_score, self.grid.oracle_res)
        out = self.delta[i, j]
        return out if np.ndim(out) else float(out)

    def calibrate_raw(self, base_score, oracle_score):
        """Corrected score before clamping; unbiasedness holds for this value."""
        out = np.asarray(base_score, dtype=float) + self.offset(base_score, oracle_score)
        return out if out.ndim else float(out)

    def calibrate(self, base_score, oracle_score):
        out = np.clip(self.calibrate_raw(base_score, oracle_score), 0.0, 1.0)
        return out if np.ndim(out) else float(out)

    def to_json(self) -> str:
        doc = {
            "kind": "cell_calibrator",
            "base_res": self.grid.base_res,
            "oracle_res": self.grid.oracle_res,
            "delta": [[float(v) for v in row] for row in self.delta],
            "counts": [[int(c) for c in row] for row in self.counts],
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CellCalibrator":
        doc = json.loads(text)
        grid = GridSpec(int(doc["base_res"]), int(doc["oracle_res"]))
        return cls(grid, np.array(doc["delta"], dtype=float), np.array(doc["counts"], dtype=int))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CellCalibrator":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class AdditiveCalibrator:
    """Row-plus-column offsets: cell (i, j) adds row_offsets[i] + col_offsets[j]."""

    grid: GridSpec
    row_offsets: np.ndarray  # base_res+1
    col_offsets: np.ndarray  # oracle_res+1

    def __post_init__(self):
        rows = np.asarray(self.row_offsets, dtype=float)
        cols = np.asarray(self.col_offsets, dtype=float)
        if rows.shape != (self.grid.base_res + 1,) or cols.shape != (self.grid.oracle_res + 1,):
            raise CalibrationError("offset vectors do not match the grid resolutions")
        object.__setattr__(self, "row_offsets", rows)
        object.__setattr__(self, "col_offsets", cols)

    @property
    def parameter_count(self) -> int:
        return (self.grid.base_res + 1) + (self.grid.oracle_res + 1)

    def offset(self, base_score, oracle_score):
        i = grid_index(base_score, self.grid.base_res)
        j = grid_index(oracle_score, self.grid.oracle_res)
        out = self.row_offsets[i] + self.col_offsets[j]
        return out if np.ndim(out) else float(out)

    def calibrate_raw(self, base_score, oracle_score):
        out = np.asarray(base_score, dtype=float) + self.offset(base_score, oracle_score)
        return out if out.ndim else float(out)

    def calibrate(self, base_score, oracle_score):
        out = np.clip(self.calibrate_raw(base_score, oracle_score), 0.0, 1.0)
        return out if np.ndim(out) else float(out)

    def to_json(self) -> str:
        doc = {
            "kind": "additive_calibrator",
            "base_res": self.grid.base_res,
            "oracle_res": self.grid.oracle_res,
            "row_offsets": [float(v) for v in self.row_offsets],
            "col_offsets": [float(v) for v in self.col_offsets],
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AdditiveCalibrator":
        doc = json.loads(text)
        grid = GridSpec(int(doc["base_res"]), int(doc["oracle_res"]))
        return cls(
            grid,
            np.array(doc["row_offsets"], dtype=float),
            np.array(doc["col_offsets"], dtype=float),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AdditiveCalibrator":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def load_calibrator(path):
    """Load either calibrator kind from its JSON file."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("kind") == "cell_calibrator":
        return CellCalibrator.from_json(json.dumps(doc))
    if doc.get("kind") == "additive_calibrator":
        return AdditiveCalibrator.from_json(json.dumps(doc))
    raise CalibrationError(f"unrecognized calibrator kind {doc.get('kind')!r} in {path}")


def fit_cell_calibrator(base_scores, oracle_scores, labels, grid: GridSpec) -> CellCalibrator:
    """Offsets are the mean of y - f(x) per cell; empty cells stay at 0."""
    f, z, y = _validate_fit_inputs(base_scores, oracle_scores, labels)
    rows = grid_index(f, grid.base_res)
    cols = grid_index(z, grid.oracle_res)
    shape = (grid.base_res + 1, grid.oracle_res + 1)
    total = np.zeros(shape)
    counts = np.zeros(shape, dtype=int)
    np.add.at(total, (rows, cols), y - f)
    np.add.at(counts, (rows, cols), 1)
    delta = np.divide(total, counts, out=np.zeros(shape), where=counts > 0)
    return CellCalibrator(grid=grid, delta=delta, counts=counts)


def fit_additive_calibrator(base_scores, oracle_scores, labels, grid: GridSpec) -> AdditiveCalibrator:
    """Least-squares offsets; the rank-deficient system takes the minimum-norm solution.

    The design regresses the residuals y - f(x) on indicator columns for each
    base-grid level and each oracle-grid level. Any constant can shift the row
    offsets and counter-shift the column offsets without changing predictions,
    so the pseudo-inverse (minimum-norm) solution is used to make the fitted
    parameters reproducible.
    """
    f, z, y = _validate_fit_inputs(base_scores, oracle_scores, labels)
    rows = grid_index(f, grid.base_res)
    cols = grid_index(z, grid.oracle_res)
    n = f.size
    n_row = grid.base_res + 1
    design = np.zeros((n, n_row + grid.oracle_res + 1))
    design[np.arange(n), rows] = 1.0
    design[np.arange(n), n_row + cols] = 1.0
    solution, *_ = np.linalg.lstsq(design, y - f, rcond=None)
    return AdditiveCalibrator(
        grid=grid, row_offsets=solution[:n_row], col_offsets=solution[n_row:]
    )


def apply_calibrator(calibrator, base_score, oracle_score, clip: bool = True):
    """Corrected score for a (base score, oracle score) pair.

    With ``clip=False`` the pre-clamp value is returned; this is the quantity
    the per-cell and per-level zero-bias properties refer to.
    """
    if clip:
        return calibrator.calibrate(base_score, oracle_score)
    return calibrator.calibrate_raw(base_score, oracle_score)


def _index_folds(n: int, k: int, seed: int):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [perm[start::k] for start in range(k)]


def choose_grid(
    base_scores,
    oracle_scores,
    labels,
    candidate_res,
    oracle_res: int,
    kind: str = "cell",
    k: int = 5,
    seed: int = 0,
) -> GridSpec:
    """Pick the base-grid resolution minimizing k-fold squared error.

    Each candidate is scored by fitting the calibrator on k-1 folds and
    averaging the squared error of its clamped output on the held-out fold.
    Ties break toward the smaller resolution. A single candidate is returned
    as-is without cross-validation.
    """
    candidates = sorted(set(int(m) for m in candidate_res))
    if not candidates:
        raise CalibrationError("choose_grid needs at least one candidate resolution")
    if kind not in ("cell", "additive"):
        raise CalibrationError(f"unknown calibrator kind {kind!r}")
    if len(candidates) == 1:
        return GridSpec(candidates[0], oracle_res)
    f, z, y = _validate_fit_inputs(base_scores, oracle_scores, labels)
    k = min(k, f.size)
    if k < 2:
        raise CalibrationError("choose_grid needs at least 2 samples for cross-validation")
    folds = _index_folds(f.size, k, seed)
    fitter = fit_cell_calibrator if kind == "cell" else fit_additive_calibrator

    best_res, best_loss = None, math.inf
    for res in candidates:
        grid = GridSpec(res, oracle_res)
        total = 0.0
        for held in folds:
            mask = np.ones(f.size, dtype=bool)
            mask[held] = False
            cal = fitter(f[mask], z[mask], y[mask], grid)
            pred = cal.calibrate(f[held], z[held])
            total += float(np.sum((pred - y[held]) ** 2))
        loss = total / f.size
        if loss < best_loss:
            best_res, best_loss = res, loss
    return GridSpec(best_res, oracle_res)
