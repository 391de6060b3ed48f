"""Command-line interface.

Every subcommand reads the same flat key = value config file (--config);
--seed and --out override the config's seeds and output directory. Defaults
for every config key are listed at the bottom of --help.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import CalibrationError, GridSpec, fit_additive_calibrator, fit_cell_calibrator, load_calibrator
from .config import DEFAULT_LINES, ConfigError, ExperimentConfig, config_from_mapping, load_config
from .data import DatasetError, load_dataset, make_folds, save_dataset, synthesize
from .ensemble import EnsembleError, WeightFunction, fit_adaptive_weights, fit_constant_weight, fuse
from .harness import (
    HarnessError,
    build_provider,
    child_seed,
    run_experiment,
    run_transfer_experiment,
    tune_hyperparameter,
)
from .logistic import BaseModel, TrainingError, cv_predict, train
from .metrics import MetricError, accuracy, brier_score, log_loss
from .oracle import OracleError, score_batch
from .transfer import TransferError

_ERRORS = (
    ConfigError, DatasetError, TrainingError, EnsembleError, CalibrationError,
    TransferError, OracleError, HarnessError, MetricError,
)


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in u64, got {text}")
    return value


def _prepare(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_mapping({})
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
        if cfg.synth is not None:
            cfg = dataclasses.replace(
                cfg, synth=dataclasses.replace(cfg.synth, seed=args.seed)
            )
        cfg = dataclasses.replace(
            cfg, oracle=dataclasses.replace(cfg.oracle, seed=args.seed)
        )
    return cfg


def _require_out(cfg: ExperimentConfig) -> Path:
    if cfg.out_dir is None:
        raise ConfigError("this subcommand writes files; pass --out or set out = <dir>")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_input_dataset(cfg: ExperimentConfig):
    cfg.require_data_source()
    if cfg.dataset_path is not None:
        cfg.validate_paths()
        return load_dataset(cfg.dataset_path, cfg.dataset_format)
    return synthesize(cfg.synth)


def _with_scores(cfg, ds):
    """Return the dataset with oracle scores, fetching them if absent."""
    if ds.has_oracle_scores:
        return ds
    provider = build_provider(cfg.oracle)
    return ds.with_oracle_scores(dict(score_batch(provider, ds.instances)))


def _cv_inputs(cfg, ds, seed):
    folds = make_folds(ds, cfg.k, seed=child_seed(seed, 1))
    cv = cv_predict(ds, folds, reg_lambda=cfg.base.reg_lambda,
                    max_iter=cfg.base.max_iter, tol=cfg.base.tol, seed=seed)
    return cv.scores_for(ds.ids()), ds.oracle_scores(), ds.labels()


def _print_report(report) -> None:
    for method in sorted(report.aggregate):
        acc = report.aggregate[method]["accuracy"]
        print(f"{method}: accuracy {acc['mean']:.4f} +- {acc['stdev']:.4f}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(cfg, args) -> int:
    if cfg.synth is None:
        raise ConfigError("synth needs the synth.* config keys")
    out = _require_out(cfg)
    ds = synthesize(cfg.synth)
    path = out / "synthetic.csv"
    save_dataset(ds, path)
    print(f"wrote {ds.n} rows (d={ds.dim}) to {path}")
    return 0


def cmd_score(cfg, args) -> int:
    out = _require_out(cfg)
    ds = _load_input_dataset(cfg)
    provider = build_provider(cfg.oracle)
    pairs = score_batch(provider, ds.instances)
    scored = ds.with_oracle_scores(dict(pairs))
    data_path = out / "scored.csv"
    save_dataset(scored, data_path)
    lines = ["id,z"] + [f"{i},{z:.17g}" for i, z in pairs]
    cache_path = out / "scores.csv"
    cache_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"scored {len(pairs)} instances; wrote {data_path} and {cache_path}")
    return 0


def cmd_fit_base(cfg, args) -> int:
    out = _require_out(cfg)
    ds = _load_input_dataset(cfg)
    model = train(ds, reg_lambda=cfg.base.reg_lambda, max_iter=cfg.base.max_iter,
                  tol=cfg.base.tol, seed=cfg.seeds[0])
    path = out / "base_model.json"
    model.save(path)
    print(f"trained on {ds.n} rows ({model.train_meta.iterations} iterations, "
          f"objective {model.train_meta.objective:.6f}); wrote {path}")
    return 0


def cmd_fit_linear(cfg, args) -> int:
    out = _require_out(cfg)
    ds = _with_scores(cfg, _load_input_dataset(cfg))
    y_cv, z, y = _cv_inputs(cfg, ds, cfg.seeds[0])
    alpha = fit_constant_weight(y_cv, z, y)
    wf = WeightFunction.constant(alpha)
    path = out / "weights_constant.json"
    wf.save(path)
    print(f"constant weight alpha = {alpha:.6f}; wrote {path}")
    return 0


def cmd_fit_adaptive(cfg, args) -> int:
    out = _require_out(cfg)
    ds = _with_scores(cfg, _load_input_dataset(cfg))
    y_cv, z, y = _cv_inputs(cfg, ds, cfg.seeds[0])
    wf = fit_adaptive_weights(y_cv, z, y, r=cfg.fusion_r)
    path = out / "weights_adaptive.json"
    wf.save(path)
    pieces = ", ".join(f"{w:.4f}" for w in wf.weights)
    print(f"adaptive weights (r={cfg.fusion_r}): [{pieces}]; wrote {path}")
    return 0


def cmd_calibrate(cfg, args) -> int:
    out = _require_out(cfg)
    ds = _with_scores(cfg, _load_input_dataset(cfg))
    y_cv, z, y = _cv_inputs(cfg, ds, cfg.seeds[0])
    grid = GridSpec(cfg.calibration_base_res, cfg.calibration_oracle_res)
    fitter = fit_cell_calibrator if cfg.calibration_kind == "cell" else fit_additive_calibrator
    cal = fitter(y_cv, z, y, grid)
    path = out / "calibrator.json"
    cal.save(path)
    print(f"fitted {cfg.calibration_kind} calibrator on grid "
          f"({grid.base_res}, {grid.oracle_res}); wrote {path}")
    return 0


def cmd_experiment(cfg, args) -> int:
    report = run_experiment(cfg)
    _print_report(report)
    if cfg.out_dir is not None:
        print(f"wrote {Path(cfg.out_dir) / 'report.json'} and report.csv")
    return 0


def cmd_transfer(cfg, args) -> int:
    report = run_transfer_experiment(cfg)
    _print_report(report)
    if cfg.out_dir is not None:
        print(f"wrote {Path(cfg.out_dir) / 'report.json'} and report.csv")
    return 0


def cmd_eval(cfg, args) -> int:
    if cfg.eval_model is None:
        raise ConfigError("eval needs eval.model = <base model JSON>")
    if cfg.eval_weights is not None and cfg.eval_calibrator is not None:
        raise ConfigError("eval.weights and eval.calibrator are mutually exclusive")
    cfg.validate_paths()
    ds = _load_input_dataset(cfg)
    model = BaseModel.load(cfg.eval_model)
    base_scores = np.atleast_1d(model.score_dataset(ds))
    y = ds.labels()
    results = {"ml": _metric_dict(base_scores, y)}
    if cfg.eval_weights is not None or cfg.eval_calibrator is not None:
        ds = _with_scores(cfg, ds)
        z = ds.oracle_scores()
        results["llm"] = _metric_dict(z, y)
        if cfg.eval_weights is not None:
            wf = WeightFunction.load(cfg.eval_weights)
            results["fused"] = _metric_dict(np.atleast_1d(fuse(wf, base_scores, z)), y)
        else:
            cal = load_calibrator(cfg.eval_calibrator)
            results["calibrated"] = _metric_dict(np.atleast_1d(cal.calibrate(base_scores, z)), y)
    text = json.dumps(results, sort_keys=True, indent=2)
    print(text)
    if cfg.out_dir is not None:
        out = _require_out(cfg)
        (out / "eval.json").write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out / 'eval.json'}")
    return 0


def _metric_dict(scores, labels) -> dict:
    return {
        "accuracy": accuracy(scores, labels),
        "brier": brier_score(scores, labels),
        "log_loss": log_loss(scores, labels),
        "n": len(labels),
    }


def cmd_tune(cfg, args) -> int:
    selected = tune_hyperparameter(cfg)
    print(f"{cfg.tune_parameter} = {selected}")
    if cfg.out_dir is not None:
        out = _require_out(cfg)
        doc = json.dumps({"parameter": cfg.tune_parameter, "selected": selected}, sort_keys=True)
        (out / "tuned.json").write_text(doc + "\n", encoding="utf-8")
        print(f"wrote {out / 'tuned.json'}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_SUBCOMMANDS = (
    ("synth", cmd_synth, "generate a synthetic dataset from the synth.* keys"),
    ("score", cmd_score, "run the configured oracle over a dataset"),
    ("fit-base", cmd_fit_base, "train the logistic base model"),
    ("fit-linear", cmd_fit_linear, "fit the constant fusion weight"),
    ("fit-adaptive", cmd_fit_adaptive, "fit piecewise fusion weights (fusion.r pieces)"),
    ("calibrate", cmd_calibrate, "fit a grid calibrator (calibration.* keys)"),
    ("transfer", cmd_transfer, "run the covariate-shift transfer experiment"),
    ("eval", cmd_eval, "evaluate saved artifacts on a labeled dataset"),
    ("experiment", cmd_experiment, "run the full multi-seed fusion experiment"),
    ("tune", cmd_tune, "select r or M by cross-validation (tune.* keys)"),
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="<path>", default=None,
                        help="flat key = value config file (default: all defaults)")
    common.add_argument("--seed", metavar="<u64>", type=_u64, default=None,
                        help="override the config's seeds with this single seed")
    common.add_argument("--out", metavar="<dir>", default=None,
                        help="output directory, overriding the config's out key")

    parser = argparse.ArgumentParser(
        prog="scorefusion",
        description="Fuse a trained classifier with an auxiliary oracle score stream.",
        epilog="config keys and defaults:\n" + DEFAULT_LINES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="<subcommand>")
    for name, handler, help_text in _SUBCOMMANDS:
        p = sub.add_parser(
            name, parents=[common], help=help_text, description=help_text,
            epilog="config keys and defaults:\n" + DEFAULT_LINES,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.set_defaults(func=handler)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _prepare(args)
        return args.func(cfg, args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
