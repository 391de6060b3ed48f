"""Experiment orchestration: split, train, score, fuse, evaluate, report.

``run_experiment`` reproduces the fusion evaluation protocol: per seed, the
data is split, the base model is trained on the training side only, oracle
scores are fetched for both sides, fusion weights and calibrators are fitted
on out-of-fold training predictions, and every requested method is evaluated
on the held-out side. ``run_transfer_experiment`` does the covariate-shift
variant, where training labels exist only in the source strata and each
Transfer(m) method augments them with m oracle-labeled rows sampled from the
target pool.

Reports are deterministic: identical config plus seeds (and a cached or
synthetic oracle) produce byte-identical JSON and CSV, since nothing
timestamped or machine-specific is recorded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import GridSpec, choose_grid, fit_cell_calibrator
from .config import ExperimentConfig, MethodSpec
from .data import LabeledDataset, load_dataset, make_folds, split, synthesize
from .ensemble import WeightFunction, fit_adaptive_weights, fit_constant_weight, fuse, fusion_objective
from .logistic import cv_predict, train
from .metrics import accuracy, brier_score, log_loss
from .oracle import CachedOracle, HttpOracle, HttpOracleConfig, OracleCache, SyntheticOracle, SyntheticOracleSpec, score_batch
from .transfer import StratumDensity, label_with_oracle, make_plan, sample_augmentation, train_augmented


class HarnessError(RuntimeError):
    """Raised when an experiment cannot be run as configured."""


def child_seed(*parts) -> int:
    """Deterministic derived seed for an independent substream."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def build_provider(settings, truth: dict | None = None):
    """Construct the oracle provider described by OracleSettings.

    A synthetic or http provider with ``oracle.cache`` set is wrapped so the
    cache is consulted first and extended with fresh scores.
    """
    cache = OracleCache(settings.cache_path) if settings.cache_path else None
    if settings.kind == "cached":
        return CachedOracle(cache)
    if settings.kind == "synthetic":
        spec = SyntheticOracleSpec(
            accuracy=settings.accuracy, mode=settings.mode,
            noise=settings.noise, seed=settings.seed,
        )
        inner = SyntheticOracle(spec, truth=truth)
        # explicit None check: an empty OracleCache is falsy via __len__
        return CachedOracle(cache, fallback=inner) if cache is not None else inner
    return HttpOracle(
        HttpOracleConfig(
            url=settings.url, model=settings.model,
            prompt_template=settings.prompt_template, auth_env=settings.auth_env,
            timeout=settings.timeout, retries=settings.retries,
            backoff=settings.backoff, max_concurrency=settings.max_concurrency,
        ),
        cache=cache,
    )


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------


def _metrics(scores: np.ndarray, labels: np.ndarray) -> dict:
    return {
        "accuracy": accuracy(scores, labels),
        "brier": brier_score(scores, labels),
        "log_loss": log_loss(scores, labels),
        "n_test": float(len(labels)),
    }


@dataclass(frozen=True)
class MetricReport:
    """Per-seed method metrics plus their mean and population stdev over seeds."""

    per_seed: tuple  # ((seed, {method: {metric: value}}), ...)
    aggregate: dict  # {method: {metric: {"mean": m, "stdev": s}}}
    meta: dict

    @classmethod
    def build(cls, per_seed, meta) -> "MetricReport":
        methods = sorted(per_seed[0][1]) if per_seed else []
        aggregate: dict = {}
        for method in methods:
            aggregate[method] = {}
            for metric in sorted(per_seed[0][1][method]):
                values = np.array([entry[method][metric] for _, entry in per_seed])
                aggregate[method][metric] = {
                    "mean": float(values.mean()),
                    "stdev": float(values.std()),
                }
        return cls(per_seed=tuple(per_seed), aggregate=aggregate, meta=dict(meta))

    def mean(self, method: str, metric: str = "accuracy") -> float:
        return self.aggregate[method][metric]["mean"]

    def to_json(self) -> str:
        doc = {
            "kind": "metric_report",
            "meta": self.meta,
            "per_seed": [
                {"seed": seed, "methods": methods} for seed, methods in self.per_seed
            ],
            "aggregate": self.aggregate,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def to_csv(self) -> str:
        lines = ["seed,method,metric,value"]
        for seed, methods in self.per_seed:
            for method in sorted(methods):
                for metric in sorted(methods[method]):
                    lines.append(f"{seed},{method},{metric},{methods[method][metric]!r}")
        return "\n".join(lines) + "\n"

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n", encoding="utf-8")
        (out / "report.csv").write_text(self.to_csv(), encoding="utf-8")


def _save_artifacts(out_dir, seed, artifacts: dict) -> None:
    if out_dir is None:
        return
    seed_dir = Path(out_dir) / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    for filename, artifact in artifacts.items():
        artifact.save(seed_dir / filename)


# ---------------------------------------------------------------------------
# data and oracle plumbing shared by both experiment kinds
# ---------------------------------------------------------------------------


def _dataset_for_seed(cfg: ExperimentConfig, dataset, seed: int) -> LabeledDataset:
    """Fixed dataset if one was given or configured; fresh synthetic draw per seed."""
    if dataset is not None:
        return dataset
    cfg.require_data_source()
    if cfg.dataset_path is not None:
        cfg.validate_paths()
        return load_dataset(cfg.dataset_path, cfg.dataset_format)
    spec = cfg.synth
    return synthesize(
        type(spec)(d=spec.d, n=spec.n, true_weights=spec.true_weights,
                   strata=spec.strata, seed=child_seed(spec.seed, seed))
    )


def _attach_oracle(ds: LabeledDataset, provider) -> LabeledDataset:
    return ds.with_oracle_scores(dict(score_batch(provider, ds.instances)))


# ---------------------------------------------------------------------------
# the fusion experiment
# ---------------------------------------------------------------------------


def _fit_method_scores(spec: MethodSpec, fit_inputs, test_inputs, artifacts):
    """Test-set scores for one method, fitted on training-side inputs only."""
    y_cv, z_tr, y_tr = fit_inputs
    base_test, z_test = test_inputs
    if spec.kind == "llm":
        return z_test
    if spec.kind == "ml":
        return base_test
    if spec.kind == "linear":
        wf = WeightFunction.constant(fit_constant_weight(y_cv, z_tr, y_tr))
        artifacts[f"weights_{spec.name}.json"] = wf
        return np.atleast_1d(fuse(wf, base_test, z_test))
    if spec.kind == "adalinear":
        wf = fit_adaptive_weights(y_cv, z_tr, y_tr, r=spec.params[0])
        artifacts[f"weights_{spec.name}.json"] = wf
        return np.atleast_1d(fuse(wf, base_test, z_test))
    if spec.kind == "calibration":
        grid = GridSpec(spec.params[0], spec.params[1])
        cal = fit_cell_calibrator(y_cv, z_tr, y_tr, grid)
        artifacts[f"calibrator_{spec.params[0]}_{spec.params[1]}.json"] = cal
        return np.atleast_1d(cal.calibrate(base_test, z_test))
    raise HarnessError(
        f"method {spec.name!r} needs the transfer protocol; "
        "use run_transfer_experiment (CLI subcommand: transfer)"
    )


def run_experiment(cfg: ExperimentConfig, dataset=None, provider=None) -> MetricReport:
    """Evaluate every configured method once per seed on held-out data.

    Per seed: split the data, fetch oracle scores for both sides, train the
    base model and its out-of-fold predictions on the training side, fit each
    method's parameters there, and measure accuracy, Brier score, and log-loss
    on the test side. Artifacts (base model, weight functions, calibrators)
    are written under ``out_dir/seed_<seed>/`` when an output directory is
    configured, and report.json / report.csv at the top level.
    """
    provider = provider if provider is not None else build_provider(cfg.oracle)
    per_seed = []
    for seed in cfg.seeds:
        data = _dataset_for_seed(cfg, dataset, seed)
        train_ds, test_ds = split(data, cfg.test_fraction, seed)
        train_ds = _attach_oracle(train_ds, provider)
        test_ds = _attach_oracle(test_ds, provider)

        base = train(train_ds, reg_lambda=cfg.base.reg_lambda,
                     max_iter=cfg.base.max_iter, tol=cfg.base.tol, seed=seed)
        folds = make_folds(train_ds, cfg.k, seed=child_seed(seed, 1))
        cv = cv_predict(train_ds, folds, reg_lambda=cfg.base.reg_lambda,
                        max_iter=cfg.base.max_iter, tol=cfg.base.tol, seed=seed)

        fit_inputs = (cv.scores_for(train_ds.ids()), train_ds.oracle_scores(), train_ds.labels())
        test_inputs = (np.atleast_1d(base.score_dataset(test_ds)), test_ds.oracle_scores())
        y_test = test_ds.labels()

        artifacts: dict = {"base_model.json": base}
        methods = {}
        for spec in cfg.methods:
            scores = _fit_method_scores(spec, fit_inputs, test_inputs, artifacts)
            methods[spec.name] = _metrics(scores, y_test)
        _save_artifacts(cfg.out_dir, seed, artifacts)
        per_seed.append((seed, methods))

    report = MetricReport.build(
        per_seed,
        meta={
            "experiment": "fusion",
            "methods": [s.name for s in cfg.methods],
            "seeds": list(cfg.seeds),
            "k": cfg.k,
            "test_fraction": cfg.test_fraction,
            "oracle_kind": cfg.oracle.kind,
        },
    )
    if cfg.out_dir is not None:
        report.save(cfg.out_dir)
    return report


# ---------------------------------------------------------------------------
# the covariate-shift experiment
# ---------------------------------------------------------------------------


def _strata_of(ds: LabeledDataset) -> dict:
    counts: dict[str, int] = {}
    for inst in ds.instances:
        if inst.stratum is not None:
            counts[inst.stratum] = counts.get(inst.stratum, 0) + 1
    return counts


def run_transfer_experiment(
    cfg: ExperimentConfig, dataset=None, pool=None, provider=None
) -> MetricReport:
    """Covariate-shift protocol: labels only in the source strata.

    Per seed the data splits as usual, but training labels come solely from
    the source-stratum rows; target-stratum training rows act as the unlabeled
    augmentation pool (their labels are hidden behind the oracle). The
    evaluated methods are the oracle alone (llm), source-only training (ml),
    constant-weight fusion (linear), and transfer(m) for every transfer entry
    in the method list; each is reported on the source and target test rows
    separately as ``name@source`` / ``name@target``.
    """
    provider = provider if provider is not None else build_provider(cfg.oracle)
    m_values = [s.params[0] for s in cfg.methods if s.kind == "transfer"]
    tr = cfg.transfer
    per_seed = []
    for seed in cfg.seeds:
        data = _dataset_for_seed(cfg, dataset, seed)
        train_all, test_ds = split(data, cfg.test_fraction, seed)

        source_tags = tuple(tr.source_strata) or tuple(sorted(_strata_of(train_all)))
        target_tags = tuple(tr.target_strata)
        if not source_tags:
            raise HarnessError("transfer experiment needs stratum tags on the dataset")
        if pool is None and not target_tags:
            raise HarnessError("transfer experiment needs transfer.target_strata or an explicit pool")

        labeled = train_all.filter(lambda i: i.stratum in source_tags)
        pool_ds = pool if pool is not None else train_all.filter(lambda i: i.stratum in target_tags)
        if labeled.n == 0:
            raise HarnessError(f"no training rows in source strata {source_tags}")
        if pool_ds.n == 0 and any(m > 0 for m in m_values):
            raise HarnessError("augmentation pool is empty but transfer(m > 0) was requested")

        universe = sorted(
            set(_strata_of(labeled)) | set(_strata_of(pool_ds)) | set(tr.target_density or ())
        )
        p1 = StratumDensity.from_counts(_strata_of(labeled), tags=universe)
        if tr.target_density is not None:
            p2 = StratumDensity.from_counts(tr.target_density, tags=universe)
        else:
            p2 = StratumDensity.from_counts(_strata_of(pool_ds), tags=universe)

        labeled = _attach_oracle(labeled, provider)
        test_ds = _attach_oracle(test_ds, provider)
        y_test = test_ds.labels()
        z_test = test_ds.oracle_scores()

        def l2_trainer(ds):
            return train_augmented(ds, None, slack_a=tr.slack_a,
                                   reg_lambda=cfg.base.reg_lambda,
                                   max_iter=cfg.base.max_iter, tol=cfg.base.tol, seed=seed)

        ml_model = l2_trainer(labeled)
        folds = make_folds(labeled, cfg.k, seed=child_seed(seed, 1))
        cv = cv_predict(labeled, folds, trainer=l2_trainer)
        alpha = fit_constant_weight(
            cv.scores_for(labeled.ids()), labeled.oracle_scores(), labeled.labels()
        )
        wf = WeightFunction.constant(alpha)

        ml_test = np.atleast_1d(ml_model.score_dataset(test_ds))
        scores = {
            "llm": z_test,
            "ml": ml_test,
            "linear": np.atleast_1d(fuse(wf, ml_test, z_test)),
        }
        artifacts: dict = {"base_model.json": ml_model, "weights_linear.json": wf}
        for m in m_values:
            if m == 0:
                model_m = ml_model
            else:
                plan = make_plan(p1, p2, labeled.n, m, slack_a=tr.slack_a)
                sampled = sample_augmentation(pool_ds, plan.sampling, m, child_seed(seed, 2, m))
                augmented = label_with_oracle(sampled, provider)
                model_m = train_augmented(
                    labeled, augmented, slack_a=tr.slack_a,
                    reg_lambda=cfg.base.reg_lambda, max_iter=cfg.base.max_iter,
                    tol=cfg.base.tol, seed=seed, round_oracle_scores=tr.round_oracle,
                )
                artifacts[f"transfer_plan_{m}.json"] = plan
                artifacts[f"transfer_model_{m}.json"] = model_m
            scores[f"transfer({m})"] = np.atleast_1d(model_m.score_dataset(test_ds))

        sides = {
            "source": np.array([i.stratum in source_tags for i in test_ds.instances]),
            "target": np.array([i.stratum in target_tags for i in test_ds.instances]),
        }
        for side, mask in sides.items():
            if not mask.any():
                raise HarnessError(f"test split has no rows in the {side} strata")
        methods = {}
        for name, s in scores.items():
            for side, mask in sides.items():
                methods[f"{name}@{side}"] = _metrics(s[mask], y_test[mask])
        _save_artifacts(cfg.out_dir, seed, artifacts)
        per_seed.append((seed, methods))

    report = MetricReport.build(
        per_seed,
        meta={
            "experiment": "transfer",
            "methods": ["llm", "ml", "linear"] + [f"transfer({m})" for m in m_values],
            "seeds": list(cfg.seeds),
            "k": cfg.k,
            "test_fraction": cfg.test_fraction,
            "oracle_kind": cfg.oracle.kind,
            "slack_a": tr.slack_a,
        },
    )
    if cfg.out_dir is not None:
        report.save(cfg.out_dir)
    return report


# ---------------------------------------------------------------------------
# hyperparameter tuning
# ---------------------------------------------------------------------------


def tune_hyperparameter(
    cfg: ExperimentConfig,
    parameter: str | None = None,
    candidates=None,
    dataset=None,
    provider=None,
) -> int:
    """Select r (weight pieces) or M (base grid) by cross-validation on the
    training split only. Ties break toward the smaller candidate."""
    parameter = parameter if parameter is not None else cfg.tune_parameter
    candidates = tuple(candidates) if candidates is not None else cfg.tune_candidates
    if parameter not in ("r", "M"):
        raise HarnessError(f"tunable parameters are 'r' and 'M', got {parameter!r}")
    if not candidates:
        raise HarnessError("tuning needs at least one candidate value")
    candidates = sorted(set(int(c) for c in candidates))
    if len(candidates) == 1:
        return candidates[0]

    provider = provider if provider is not None else build_provider(cfg.oracle)
    seed = cfg.seeds[0]
    data = _dataset_for_seed(cfg, dataset, seed)
    train_ds, _ = split(data, cfg.test_fraction, seed)
    train_ds = _attach_oracle(train_ds, provider)
    folds = make_folds(train_ds, cfg.k, seed=child_seed(seed, 1))
    cv = cv_predict(train_ds, folds, reg_lambda=cfg.base.reg_lambda,
                    max_iter=cfg.base.max_iter, tol=cfg.base.tol, seed=seed)
    y_cv = cv.scores_for(train_ds.ids())
    z = train_ds.oracle_scores()
    y = train_ds.labels()

    if parameter == "M":
        grid = choose_grid(y_cv, z, y, candidates, oracle_res=cfg.calibration_oracle_res,
                           kind=cfg.calibration_kind, k=cfg.k, seed=child_seed(seed, 3))
        return grid.base_res

    rng = np.random.default_rng(child_seed(seed, 3))
    perm = rng.permutation(len(y))
    k = min(cfg.k, len(y))
    best_r, best_loss = None, float("inf")
    for r in candidates:
        total = 0.0
        for start in range(k):
            held = perm[start::k]
            mask = np.ones(len(y), dtype=bool)
            mask[held] = False
            wf = fit_adaptive_weights(y_cv[mask], z[mask], y[mask], r=r)
            total += fusion_objective(wf, y_cv[held], z[held], y[held]) * held.size
        loss = total / len(y)
        if loss < best_loss:
            best_r, best_loss = r, loss
    return best_r
