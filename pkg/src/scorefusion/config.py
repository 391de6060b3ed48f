"""Flat key = value experiment configuration.

The config file is plain text: one ``key = value`` pair per line, ``#``
comments, blank lines ignored, later duplicates override earlier ones. Dotted
keys group related settings (``oracle.accuracy``); list values are
comma-separated. Every key and default is listed in ``DEFAULT_LINES`` (which
the CLI prints under --help) so a config file only needs the keys it changes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .data import SyntheticSpec


class ConfigError(ValueError):
    """Raised for unparseable files, unknown keys, or invalid values."""


_METHOD_RE = re.compile(r"^([a-z_]+)\s*(?:\(\s*([^)]*?)\s*\))?$")

_METHOD_ARITY = {
    # kind: (number of integer parameters, defaults or None when required)
    "llm": (0, ()),
    "ml": (0, ()),
    "linear": (0, ()),
    "adalinear": (1, (4,)),
    "calibration": (2, (10, 2)),
    "transfer": (1, None),
}


@dataclass(frozen=True)
class MethodSpec:
    """One entry of the method set, e.g. adalinear(4) or calibration(10,2)."""

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _METHOD_ARITY:
            raise ConfigError(
                f"unknown method {self.kind!r}; expected one of {sorted(_METHOD_ARITY)}"
            )
        object.__setattr__(self, "params", tuple(int(p) for p in self.params))
        arity, _ = _METHOD_ARITY[self.kind]
        if len(self.params) != arity:
            raise ConfigError(f"method {self.kind!r} takes {arity} parameter(s), got {self.params}")
        if self.kind == "adalinear" and self.params[0] < 1:
            raise ConfigError(f"adalinear piece count must be >= 1, got {self.params[0]}")
        if self.kind == "calibration" and (self.params[0] < 1 or self.params[1] < 1):
            raise ConfigError(f"calibration grid resolutions must be >= 1, got {self.params}")
        if self.kind == "transfer" and self.params[0] < 0:
            raise ConfigError(f"transfer augmentation count must be >= 0, got {self.params[0]}")

    @property
    def name(self) -> str:
        if not self.params:
            return self.kind
        return f"{self.kind}({','.join(str(p) for p in self.params)})"

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        match = _METHOD_RE.match(text.strip().lower())
        if not match:
            raise ConfigError(f"cannot parse method {text!r}")
        kind, raw = match.group(1), match.group(2)
        if kind not in _METHOD_ARITY:
            raise ConfigError(f"unknown method {kind!r}; expected one of {sorted(_METHOD_ARITY)}")
        arity, defaults = _METHOD_ARITY[kind]
        if raw is None or raw == "":
            if defaults is None:
                raise ConfigError(f"method {kind!r} needs {arity} parameter(s), e.g. {kind}(1000)")
            return cls(kind, defaults)
        try:
            params = tuple(int(p.strip()) for p in raw.split(","))
        except ValueError:
            raise ConfigError(f"method parameters must be integers in {text!r}") from None
        return cls(kind, params)


@dataclass(frozen=True)
class BaseSettings:
    """Hyperparameters shared by every trainer."""

    reg_lambda: float = 1e-3
    max_iter: int = 5000
    tol: float = 1e-6

    def __post_init__(self):
        if self.reg_lambda < 0 or self.max_iter < 1 or self.tol <= 0:
            raise ConfigError(
                f"invalid base-model hyperparameters: reg_lambda={self.reg_lambda}, "
                f"max_iter={self.max_iter}, tol={self.tol}"
            )


@dataclass(frozen=True)
class OracleSettings:
    kind: str = "synthetic"
    accuracy: float = 0.85
    mode: str = "binary"
    noise: float = 0.0
    seed: int = 0
    cache_path: str | None = None
    url: str | None = None
    model: str | None = None
    auth_env: str | None = None
    prompt_template: str = "Rate the relevance of item {id} with a score between 0 and 1."
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5
    max_concurrency: int = 4

    def __post_init__(self):
        if self.kind not in ("synthetic", "cached", "http"):
            raise ConfigError(f"oracle.kind must be synthetic, cached, or http, got {self.kind!r}")
        if self.kind == "cached" and not self.cache_path:
            raise ConfigError("oracle.kind = cached requires oracle.cache")
        if self.kind == "http" and (not self.url or not self.model):
            raise ConfigError("oracle.kind = http requires oracle.url and oracle.model")


@dataclass(frozen=True)
class TransferSettings:
    slack_a: float = 0.1
    source_strata: tuple = ()
    target_strata: tuple = ()
    target_density: dict | None = None
    round_oracle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "source_strata", tuple(str(t) for t in self.source_strata))
        object.__setattr__(self, "target_strata", tuple(str(t) for t in self.target_strata))
        if self.slack_a < 0:
            raise ConfigError(f"transfer.slack_a must be >= 0, got {self.slack_a}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment run needs; mirrors the flat config keys."""

    dataset_path: str | None = None
    dataset_format: str | None = None
    synth: SyntheticSpec | None = None
    test_fraction: float = 0.2
    k: int = 5
    methods: tuple = (MethodSpec("ml"), MethodSpec("llm"), MethodSpec("linear"))
    seeds: tuple = (0,)
    base: BaseSettings = field(default_factory=BaseSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    transfer: TransferSettings = field(default_factory=TransferSettings)
    out_dir: str | None = None
    fusion_r: int = 4
    calibration_base_res: int = 10
    calibration_oracle_res: int = 2
    calibration_kind: str = "cell"
    eval_model: str | None = None
    eval_weights: str | None = None
    eval_calibrator: str | None = None
    tune_parameter: str | None = None
    tune_candidates: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test fraction must be in (0, 1), got {self.test_fraction}")
        if self.k < 2:
            raise ConfigError(f"fold count must be >= 2, got {self.k}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.fusion_r < 1:
            raise ConfigError(f"fusion.r must be >= 1, got {self.fusion_r}")
        if self.calibration_base_res < 1 or self.calibration_oracle_res < 1:
            raise ConfigError("calibration grid resolutions must be >= 1")
        if self.calibration_kind not in ("cell", "additive"):
            raise ConfigError(
                f"calibration.kind must be cell or additive, got {self.calibration_kind!r}"
            )

    def validate_paths(self) -> None:
        """Check that every referenced input file exists."""
        for label, path in (
            ("dataset.path", self.dataset_path),
            ("eval.model", self.eval_model),
            ("eval.weights", self.eval_weights),
            ("eval.calibrator", self.eval_calibrator),
        ):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{label} refers to a missing file: {path}")

    def require_data_source(self) -> None:
        if self.dataset_path is None and self.synth is None:
            raise ConfigError("config needs either dataset.path or the synth.* keys")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

KNOWN_KEYS = {
    "dataset.path", "dataset.format", "dataset.test_fraction",
    "synth.d", "synth.n", "synth.weights", "synth.seed", "synth.strata",
    "oracle.kind", "oracle.accuracy", "oracle.mode", "oracle.noise", "oracle.seed",
    "oracle.cache", "oracle.url", "oracle.model", "oracle.auth_env",
    "oracle.prompt_template", "oracle.timeout", "oracle.retries", "oracle.backoff",
    "oracle.max_concurrency",
    "base.reg_lambda", "base.max_iter", "base.tol",
    "folds.k", "methods", "seeds", "out",
    "fusion.r",
    "calibration.base_res", "calibration.oracle_res", "calibration.kind",
    "transfer.slack_a", "transfer.source_strata", "transfer.target_strata",
    "transfer.target_density", "transfer.round_oracle",
    "eval.model", "eval.weights", "eval.calibrator",
    "tune.parameter", "tune.candidates",
}

# One line per key: "key = default  -- meaning". Printed by the CLI's --help.
DEFAULT_LINES = """\
dataset.path = (unset)          -- CSV/JSONL dataset file
dataset.format = (inferred)     -- csv or jsonl when the suffix is ambiguous
dataset.test_fraction = 0.2     -- held-out fraction per seed
synth.d = (unset)               -- synthetic data: feature dimension
synth.n = (unset)               -- synthetic data: row count
synth.weights = (unset)         -- d+1 comma-separated floats, intercept last
synth.seed = 0                  -- synthetic data base seed
synth.strata = (none)           -- tag:weight:s0|s1|... entries, comma-separated
oracle.kind = synthetic         -- synthetic, cached, or http
oracle.accuracy = 0.85          -- synthetic oracle accuracy q in [0.5, 1]
oracle.mode = binary            -- binary or soft
oracle.noise = 0.0              -- soft-mode Gaussian width
oracle.seed = 0                 -- synthetic oracle seed
oracle.cache = (none)           -- CSV cache file (id,z); required for kind=cached
oracle.url = (none)             -- http endpoint; required for kind=http
oracle.model = (none)           -- model name sent to the endpoint
oracle.auth_env = (none)        -- env var holding the bearer token
oracle.prompt_template = Rate the relevance of item {id} with a score between 0 and 1.
oracle.timeout = 30.0           -- http timeout in seconds
oracle.retries = 3              -- attempts per instance
oracle.backoff = 0.5            -- base delay, doubled per retry
oracle.max_concurrency = 4      -- parallel http requests
base.reg_lambda = 0.001         -- ridge strength (intercept unpenalized)
base.max_iter = 5000            -- gradient-descent iteration cap
base.tol = 1e-06                -- stop when the gradient max-norm reaches this
folds.k = 5                     -- folds for out-of-fold predictions
methods = ml, llm, linear       -- subset of ml, llm, linear, adalinear(r), calibration(M,M'), transfer(m)
seeds = 0                       -- comma-separated experiment seeds
out = (none)                    -- output directory (--out overrides)
fusion.r = 4                    -- piece count for the fit-adaptive subcommand
calibration.base_res = 10       -- base-score grid M for the calibrate subcommand
calibration.oracle_res = 2      -- oracle-score grid M' for the calibrate subcommand
calibration.kind = cell         -- cell or additive
transfer.slack_a = 0.1          -- dead-band half-width of the augmented loss
transfer.source_strata = (all)  -- tags whose labeled rows form the training set
transfer.target_strata = (none) -- tags whose rows form the augmentation pool
transfer.target_density = (pool frequencies)  -- tag:prob entries, comma-separated
transfer.round_oracle = false   -- snap oracle scores to {0,1} before training
eval.model = (unset)            -- base-model JSON for the eval subcommand
eval.weights = (none)           -- weight-function JSON to fuse with oracle scores
eval.calibrator = (none)        -- calibrator JSON to apply instead of weights
tune.parameter = (unset)        -- r or M, for the tune subcommand
tune.candidates = (unset)       -- comma-separated integer candidates
"""


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a string-to-string mapping."""
    values: dict[str, str] = {}
    for line_num, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_num}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {line_num}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def _to_int(values, key, default):
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {values[key]!r}") from None


def _to_float(values, key, default):
    if key not in values:
        return default
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {values[key]!r}") from None


def _to_bool(values, key, default):
    if key not in values:
        return default
    text = values[key].lower()
    if text in ("true", "yes", "1"):
        return True
    if text in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key} must be true or false, got {values[key]!r}")


def _to_list(values, key):
    if key not in values or not values[key]:
        return []
    return [part.strip() for part in values[key].split(",") if part.strip()]


def _split_outside_parens(text: str):
    """Split on commas not nested in parentheses, for entries like calibration(10,2)."""
    parts, depth, current = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(depth - 1, 0)
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return [p.strip() for p in parts if p.strip()]


def _parse_strata(text: str):
    """Parse 'tag:weight:s0|s1|...' entries into SyntheticSpec strata triples."""
    strata = []
    for entry in text.split(","):
        entry = entry.strip()
        if not entry:
            continue
        parts = entry.split(":")
        if len(parts) != 3:
            raise ConfigError(f"synth.strata entry {entry!r} must be tag:weight:s0|s1|...")
        tag, weight, shift = parts
        try:
            strata.append(
                (tag.strip(), tuple(float(s) for s in shift.split("|")), float(weight))
            )
        except ValueError:
            raise ConfigError(f"synth.strata entry {entry!r} has non-numeric fields") from None
    return tuple(strata)


def _parse_density(text: str) -> dict:
    density = {}
    for entry in text.split(","):
        entry = entry.strip()
        if not entry:
            continue
        tag, sep, prob = entry.partition(":")
        if not sep:
            raise ConfigError(f"transfer.target_density entry {entry!r} must be tag:prob")
        try:
            density[tag.strip()] = float(prob)
        except ValueError:
            raise ConfigError(f"transfer.target_density entry {entry!r} has a bad number") from None
    return density


def config_from_mapping(values: dict) -> ExperimentConfig:
    unknown = set(values) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")

    synth = None
    if any(k.startswith("synth.") for k in values):
        d = _to_int(values, "synth.d", None)
        n = _to_int(values, "synth.n", None)
        if d is None or n is None or "synth.weights" not in values:
            raise ConfigError("synthetic data needs synth.d, synth.n, and synth.weights")
        try:
            weights = tuple(float(w) for w in _to_list(values, "synth.weights"))
        except ValueError:
            raise ConfigError("synth.weights must be comma-separated numbers") from None
        strata = _parse_strata(values["synth.strata"]) if "synth.strata" in values else None
        synth = SyntheticSpec(
            d=d, n=n, true_weights=weights, strata=strata,
            seed=_to_int(values, "synth.seed", 0),
        )

    methods = tuple(
        MethodSpec.parse(m) for m in _split_outside_parens(values.get("methods", ""))
    ) or (
        MethodSpec("ml"), MethodSpec("llm"), MethodSpec("linear"),
    )
    try:
        seeds = tuple(int(s) for s in _to_list(values, "seeds")) or (0,)
    except ValueError:
        raise ConfigError("seeds must be comma-separated integers") from None

    oracle = OracleSettings(
        kind=values.get("oracle.kind", "synthetic"),
        accuracy=_to_float(values, "oracle.accuracy", 0.85),
        mode=values.get("oracle.mode", "binary"),
        noise=_to_float(values, "oracle.noise", 0.0),
        seed=_to_int(values, "oracle.seed", 0),
        cache_path=values.get("oracle.cache"),
        url=values.get("oracle.url"),
        model=values.get("oracle.model"),
        auth_env=values.get("oracle.auth_env"),
        prompt_template=values.get(
            "oracle.prompt_template",
            "Rate the relevance of item {id} with a score between 0 and 1.",
        ),
        timeout=_to_float(values, "oracle.timeout", 30.0),
        retries=_to_int(values, "oracle.retries", 3),
        backoff=_to_float(values, "oracle.backoff", 0.5),
        max_concurrency=_to_int(values, "oracle.max_concurrency", 4),
    )

    transfer = TransferSettings(
        slack_a=_to_float(values, "transfer.slack_a", 0.1),
        source_strata=tuple(_to_list(values, "transfer.source_strata")),
        target_strata=tuple(_to_list(values, "transfer.target_strata")),
        target_density=(
            _parse_density(values["transfer.target_density"])
            if "transfer.target_density" in values
            else None
        ),
        round_oracle=_to_bool(values, "transfer.round_oracle", False),
    )

    candidates = _to_list(values, "tune.candidates")
    try:
        candidates = tuple(int(c) for c in candidates)
    except ValueError:
        raise ConfigError("tune.candidates must be comma-separated integers") from None

    return ExperimentConfig(
        dataset_path=values.get("dataset.path"),
        dataset_format=values.get("dataset.format"),
        synth=synth,
        test_fraction=_to_float(values, "dataset.test_fraction", 0.2),
        k=_to_int(values, "folds.k", 5),
        methods=methods,
        seeds=seeds,
        base=BaseSettings(
            reg_lambda=_to_float(values, "base.reg_lambda", 1e-3),
            max_iter=_to_int(values, "base.max_iter", 5000),
            tol=_to_float(values, "base.tol", 1e-6),
        ),
        oracle=oracle,
        transfer=transfer,
        out_dir=values.get("out"),
        fusion_r=_to_int(values, "fusion.r", 4),
        calibration_base_res=_to_int(values, "calibration.base_res", 10),
        calibration_oracle_res=_to_int(values, "calibration.oracle_res", 2),
        calibration_kind=values.get("calibration.kind", "cell"),
        eval_model=values.get("eval.model"),
        eval_weights=values.get("eval.weights"),
        eval_calibrator=values.get("eval.calibrator"),
        tune_parameter=values.get("tune.parameter"),
        tune_candidates=candidates,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return config_from_mapping(parse_config_text(path.read_text(encoding="utf-8")))
