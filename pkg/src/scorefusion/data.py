"""Datasets of feature vectors with optional oracle scores and binary labels.

A dataset row couples a dense feature vector with up to three optional
annotations: an oracle score ``z`` in [0, 1] (an external judge's estimate of
the label), a binary label ``y``, and a stratum tag (a discrete category used
by the transfer-learning utilities). Datasets are immutable after
construction; every randomized operation takes an explicit seed and uses
numpy's PCG64 generator, so results are reproducible across runs and
platforms.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for schema violations, malformed rows, or invalid parameters."""


def _as_feature_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DatasetError(f"features must be a flat vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Instance:
    """One row: feature vector plus optional oracle score, label, stratum."""

    id: str
    features: np.ndarray
    oracle_score: float | None = None
    label: int | None = None
    stratum: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _as_feature_array(self.features))
        if self.oracle_score is not None:
            z = float(self.oracle_score)
            if not 0.0 <= z <= 1.0:
                raise DatasetError(
                    f"instance {self.id!r}: oracle score {z} outside [0, 1]"
                )
            object.__setattr__(self, "oracle_score", z)
        if self.label is not None:
            y = self.label
            if y not in (0, 1):
                raise DatasetError(f"instance {self.id!r}: label {y!r} not in {{0, 1}}")
            object.__setattr__(self, "label", int(y))

    @property
    def dim(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable ordered collection of instances sharing one feature dimension."""

    instances: tuple[Instance, ...]
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        seen = set()
        for inst in self.instances:
            if inst.dim != self.dim:
                raise DatasetError(
                    f"instance {inst.id!r} has dimension {inst.dim}, expected {self.dim}"
                )
            if inst.id in seen:
                raise DatasetError(f"duplicate instance id {inst.id!r}")
            seen.add(inst.id)

    @classmethod
    def from_instances(cls, instances) -> "LabeledDataset":
        instances = tuple(instances)
        if not instances:
            raise DatasetError("cannot infer dimension of an empty dataset")
        return cls(instances, instances[0].dim)

    @classmethod
    def from_arrays(cls, X, y=None, z=None, strata=None, ids=None, prefix="r"):
        """Build a dataset from parallel arrays; omitted annotations stay absent."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DatasetError(f"feature matrix must be 2-d, got shape {X.shape}")
        n = X.shape[0]
        if ids is None:
            width = max(6, len(str(max(n - 1, 0))))
            ids = [f"{prefix}{i:0{width}d}" for i in range(n)]
        rows = []
        for i in range(n):
            rows.append(
                Instance(
                    id=str(ids[i]),
                    features=X[i],
                    oracle_score=None if z is None else float(z[i]),
                    label=None if y is None else int(y[i]),
                    stratum=None if strata is None else str(strata[i]),
                )
            )
        return cls(tuple(rows), X.shape[1])

    @property
    def n(self) -> int:
        return len(self.instances)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def ids(self) -> list[str]:
        return [inst.id for inst in self.instances]

    def feature_matrix(self) -> np.ndarray:
        if not self.instances:
            return np.zeros((0, self.dim))
        return np.stack([inst.features for inst in self.instances])

    @property
    def has_labels(self) -> bool:
        return all(inst.label is not None for inst in self.instances)

    @property
    def has_oracle_scores(self) -> bool:
        return all(inst.oracle_score is not None for inst in self.instances)

    def labels(self) -> np.ndarray:
        missing = [inst.id for inst in self.instances if inst.label is None]
        if missing:
            raise DatasetError(f"missing labels for {len(missing)} instance(s), e.g. {missing[0]!r}")
        return np.array([inst.label for inst in self.instances], dtype=float)

    def oracle_scores(self) -> np.ndarray:
        missing = [inst.id for inst in self.instances if inst.oracle_score is None]
        if missing:
            raise DatasetError(
                f"missing oracle scores for {len(missing)} instance(s), e.g. {missing[0]!r}"
            )
        return np.array([inst.oracle_score for inst in self.instances], dtype=float)

    def subset(self, ids) -> "LabeledDataset":
        """Dataset restricted to the given ids, keeping this dataset's order."""
        wanted = set(ids)
        unknown = wanted - set(self.ids())
        if unknown:
            raise DatasetError(f"unknown instance id(s): {sorted(unknown)[:3]}")
        kept = tuple(inst for inst in self.instances if inst.id in wanted)
        return LabeledDataset(kept, self.dim)

    def filter(self, predicate) -> "LabeledDataset":
        return LabeledDataset(tuple(i for i in self.instances if predicate(i)), self.dim)

    def with_oracle_scores(self, scores: dict) -> "LabeledDataset":
        """Copy with oracle scores attached from an id -> z mapping."""
        rows = []
        for inst in self.instances:
            if inst.id not in scores:
                raise DatasetError(f"no oracle score provided for instance {inst.id!r}")
            rows.append(
                Instance(inst.id, inst.features, float(scores[inst.id]), inst.label, inst.stratum)
            )
        return LabeledDataset(tuple(rows), self.dim)

    def without_labels(self) -> "LabeledDataset":
        rows = tuple(
            Instance(i.id, i.features, i.oracle_score, None, i.stratum) for i in self.instances
        )
        return LabeledDataset(rows, self.dim)

    def by_stratum(self) -> dict:
        groups: dict[str, list[Instance]] = {}
        for inst in self.instances:
            groups.setdefault(inst.stratum, []).append(inst)
        return groups

    def stratum_frequencies(self) -> dict:
        """Empirical stratum distribution; untagged rows count under None."""
        groups = self.by_stratum()
        total = self.n
        return {tag: len(rows) / total for tag, rows in groups.items()}

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        if other.dim != self.dim:
            raise DatasetError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return LabeledDataset(self.instances + other.instances, self.dim)


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced assignment of instance ids to folds 1..k."""

    k: int
    fold_of: dict = field(default_factory=dict)
    seed: int = 0

    def members(self, fold: int) -> list[str]:
        return [i for i, f in self.fold_of.items() if f == fold]

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.fold_of.values():
            sizes[f - 1] += 1
        return sizes


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic logistic-model dataset.

    Feature vectors are standard normal per coordinate, optionally shifted by
    a per-stratum mean vector; labels are Bernoulli draws from
    sigmoid(w . x + b) where ``true_weights`` lists w followed by the
    intercept b (length d + 1). ``strata`` entries are
    (tag, mean-shift vector, mixture weight) triples.
    """

    d: int
    n: int
    true_weights: tuple
    strata: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "true_weights", tuple(float(w) for w in self.true_weights))
        if self.d < 1 or self.n < 1:
            raise DatasetError("synthetic spec needs d >= 1 and n >= 1")
        if len(self.true_weights) != self.d + 1:
            raise DatasetError(
                f"true_weights must have length d+1={self.d + 1}, got {len(self.true_weights)}"
            )
        if self.strata is not None:
            strata = tuple(
                (str(tag), tuple(float(s) for s in shift), float(w))
                for tag, shift, w in self.strata
            )
            object.__setattr__(self, "strata", strata)
            weights = [w for _, _, w in strata]
            if any(w < 0 for w in weights):
                raise DatasetError("stratum mixture weights must be nonnegative")
            if abs(sum(weights) - 1.0) > 1e-9:
                raise DatasetError(f"stratum mixture weights sum to {sum(weights)}, expected 1")
            for tag, shift, _ in strata:
                if len(shift) != self.d:
                    raise DatasetError(f"stratum {tag!r} mean shift must have length d={self.d}")


# ---------------------------------------------------------------------------
# loading and saving
# ---------------------------------------------------------------------------

_FORMATS = ("csv", "jsonl")


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in _FORMATS:
            raise DatasetError(f"unknown dataset format {fmt!r}; expected one of {_FORMATS}")
        return fmt
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in _FORMATS:
        return suffix
    raise DatasetError(f"cannot infer format from {path!r}; pass format='csv' or 'jsonl'")


def _parse_optional_float(text, row_num, column):
    if text is None or text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise DatasetError(f"row {row_num}: bad {column} value {text!r}") from None


def _check_label(value, row_num):
    if value is None:
        return None
    if value not in (0.0, 1.0):
        raise DatasetError(f"row {row_num}: y={value} not in {{0, 1}}")
    return int(value)


def _check_score(value, row_num):
    if value is None:
        return None
    if not 0.0 <= value <= 1.0:
        raise DatasetError(f"row {row_num}: z={value} outside [0, 1]")
    return value


def load_dataset(path, format: str | None = None) -> LabeledDataset:
    """Read a dataset from CSV or JSONL.

    CSV schema: header ``id,f0,...,f{d-1}[,z][,y][,stratum]``. JSONL schema:
    one object per line with keys ``id`` and ``features`` plus optional ``z``,
    ``y``, ``stratum``. The feature dimension is inferred from the first row;
    every later row must match it. Missing z/y columns or keys yield
    instances with those fields absent.
    """
    fmt = _infer_format(path, format)
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    if fmt == "csv":
        return _load_csv(path)
    return _load_jsonl(path)


def _load_csv(path) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"empty CSV file: {path}") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "id":
            raise DatasetError(f"CSV header must start with 'id', got {header[:1]}")
        d = 0
        while 1 + d < len(header) and header[1 + d] == f"f{d}":
            d += 1
        if d == 0:
            raise DatasetError("CSV header has no feature columns f0..f{d-1}")
        extras = header[1 + d :]
        allowed = [c for c in ("z", "y", "stratum")]
        if [c for c in extras if c not in allowed] or extras != [
            c for c in allowed if c in extras
        ]:
            raise DatasetError(
                f"unexpected trailing CSV columns {extras}; expected subset of [z, y, stratum] in order"
            )
        col = {name: 1 + d + i for i, name in enumerate(extras)}

        rows = []
        for row_num, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(header):
                raise DatasetError(
                    f"row {row_num}: expected {len(header)} cells, got {len(cells)}"
                )
            try:
                feats = [float(c) for c in cells[1 : 1 + d]]
            except ValueError:
                raise DatasetError(f"row {row_num}: malformed feature value") from None
            z = _check_score(
                _parse_optional_float(cells[col["z"]] if "z" in col else None, row_num, "z"),
                row_num,
            )
            y = _check_label(
                _parse_optional_float(cells[col["y"]] if "y" in col else None, row_num, "y"),
                row_num,
            )
            stratum = cells[col["stratum"]] if "stratum" in col else None
            rows.append(Instance(cells[0], feats, z, y, stratum or None))
    if not rows:
        raise DatasetError(f"no data rows in {path}")
    return LabeledDataset(tuple(rows), d)


def _load_jsonl(path) -> LabeledDataset:
    rows = []
    d = None
    with open(path, encoding="utf-8") as fh:
        for row_num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"row {row_num}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or "features" not in obj:
                raise DatasetError(f"row {row_num}: each line needs 'id' and 'features'")
            feats = obj["features"]
            if not isinstance(feats, list):
                raise DatasetError(f"row {row_num}: 'features' must be an array")
            if d is None:
                d = len(feats)
            elif len(feats) != d:
                raise DatasetError(
                    f"row {row_num}: dimension {len(feats)} inconsistent with first row ({d})"
                )
            z = obj.get("z")
            z = _check_score(None if z is None else float(z), row_num)
            y = obj.get("y")
            y = _check_label(None if y is None else float(y), row_num)
            stratum = obj.get("stratum")
            rows.append(Instance(str(obj["id"]), feats, z, y, stratum))
    if not rows:
        raise DatasetError(f"no data rows in {path}")
    return LabeledDataset(tuple(rows), d)


def save_dataset(ds: LabeledDataset, path, format: str | None = None) -> None:
    """Write a dataset in the CSV or JSONL schema accepted by ``load_dataset``.

    Optional columns are emitted when at least one instance carries the field;
    instances missing it get an empty cell (CSV) or no key (JSONL).
    """
    fmt = _infer_format(path, format)
    path = Path(path)
    has_z = any(i.oracle_score is not None for i in ds.instances)
    has_y = any(i.label is not None for i in ds.instances)
    has_stratum = any(i.stratum is not None for i in ds.instances)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["id"] + [f"f{j}" for j in range(ds.dim)]
            header += ["z"] * has_z + ["y"] * has_y + ["stratum"] * has_stratum
            writer.writerow(header)
            for inst in ds.instances:
                row = [inst.id] + [repr(float(v)) for v in inst.features]
                if has_z:
                    row.append("" if inst.oracle_score is None else repr(inst.oracle_score))
                if has_y:
                    row.append("" if inst.label is None else str(inst.label))
                if has_stratum:
                    row.append(inst.stratum or "")
                writer.writerow(row)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for inst in ds.instances:
                obj = {"id": inst.id, "features": [float(v) for v in inst.features]}
                if inst.oracle_score is not None:
                    obj["z"] = inst.oracle_score
                if inst.label is not None:
                    obj["y"] = inst.label
                if inst.stratum is not None:
                    obj["stratum"] = inst.stratum
                fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# splitting and folding
# ---------------------------------------------------------------------------


def split(ds: LabeledDataset, test_fraction: float, seed: int):
    """Random disjoint (train, test) partition with round(n * test_fraction) test rows."""
    if ds.n < 2:
        raise DatasetError(f"cannot split a dataset with n={ds.n}")
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(round(ds.n * test_fraction))
    if n_test == 0 or n_test == ds.n:
        raise DatasetError(
            f"split leaves an empty side: n={ds.n}, test_fraction={test_fraction}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    test_idx = set(perm[:n_test].tolist())
    train_rows = tuple(ds.instances[i] for i in range(ds.n) if i not in test_idx)
    test_rows = tuple(ds.instances[i] for i in range(ds.n) if i in test_idx)
    return LabeledDataset(train_rows, ds.dim), LabeledDataset(test_rows, ds.dim)


def make_folds(ds: LabeledDataset, k: int, seed: int) -> FoldAssignment:
    """Assign every instance to one of k balanced folds (sizes differ by <= 1)."""
    if k < 2:
        raise DatasetError(f"fold count must be >= 2, got {k}")
    if k > ds.n:
        raise DatasetError(f"cannot make {k} folds from {ds.n} instances")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    fold_of = {}
    for pos, idx in enumerate(perm):
        fold_of[ds.instances[idx].id] = (pos % k) + 1
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed)


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def _sigmoid(t):
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def synthesize(spec: SyntheticSpec) -> LabeledDataset:
    """Draw a dataset from the configured logistic model, deterministically per seed."""
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n, spec.d
    if spec.strata is not None:
        tags = [tag for tag, _, _ in spec.strata]
        shifts = np.array([shift for _, shift, _ in spec.strata])
        mix = np.array([w for _, _, w in spec.strata])
        assignment = rng.choice(len(tags), size=n, p=mix / mix.sum())
    else:
        tags, shifts, assignment = None, None, None

    X = rng.standard_normal((n, d))
    if assignment is not None:
        X = X + shifts[assignment]
    w = np.array(spec.true_weights[:d])
    b = spec.true_weights[d]
    p = _sigmoid(X @ w + b)
    y = (rng.uniform(size=n) < p).astype(int)

    width = max(6, len(str(n - 1)))
    rows = []
    for i in range(n):
        rows.append(
            Instance(
                id=f"syn{i:0{width}d}",
                features=X[i],
                label=int(y[i]),
                stratum=None if assignment is None else tags[assignment[i]],
            )
        )
    return LabeledDataset(tuple(rows), d)


# ---------------------------------------------------------------------------
# text featurization (plumbing stand-in for precomputed embeddings)
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _bucket(token: str, buckets: int) -> int:
    # md5 rather than hash() so vectors are stable across interpreter runs
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % buckets


def featurize_text(query: str, doc: str, dim: int) -> np.ndarray:
    """Hash token counts of (query, doc) into dim/2 buckets per side, concatenated."""
    if dim < 2 or dim % 2 != 0:
        raise DatasetError(f"featurize_text needs an even dim >= 2, got {dim}")
    half = dim // 2
    vec = np.zeros(dim)
    for offset, text in ((0, query), (half, doc)):
        for token in _TOKEN_RE.findall(text.lower()):
            vec[offset + _bucket(token, half)] += 1.0
    return vec
