"""Experiment configuration.

Config files are flat ``key = value`` text; ``#`` starts a comment. Keys are
the field names of :class:`ExperimentConfig`. Unknown keys and values that
fail type conversion or range checks are reported together.
"""
from dataclasses import MISSING, asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional

METHODS = ("oneshot", "fewshot", "vanilla", "fedbcd", "fewshot_finetune")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ExperimentConfig:
    method: str = "oneshot"
    seed: int = 0
    output: str = ""

    # dataset
    source: str = "synthetic"          # synthetic | csv | credit_like
    csv_path: str = ""
    label_column: str = "label"
    exclude_columns: str = ""          # comma-separated CSV columns to drop (e.g. ID)
    task: str = "xor_cross"
    n: int = 2000
    d_per_client: int = 8
    classes: int = 2
    noise: float = 0.5

    # split
    overlap_size: int = 64
    test_size: int = 500
    first_client_columns: int = 0      # 0 = half of the columns
    standardize: bool = True

    # models
    extractor_hidden: int = 32
    rep_dim: int = 8
    server_hidden: int = 32            # 0 = linear server head

    # local SSL
    lambda_u: float = 1.0
    tau_fm: float = 0.95
    client_epochs: int = 20
    batch_size: int = 32
    client_lr: float = 0.01
    r_m: float = 0.2
    sigma: float = 0.1
    mask_semantics: str = "masked_fraction"
    shared_mask: bool = True

    # protocol
    t: float = 0.95
    q: int = 5
    server_epochs: int = 100
    server_lr: float = 0.01
    rounds: int = 1000
    finetune_rounds: int = 200
    eval_every: int = 10
    patience: int = 0                  # vanilla/fedbcd early stop; 0 = run all rounds
    monitor: str = "accuracy"          # metric watched by ``patience``
    bytes_per_scalar: int = 4
    server_grad_warmup_epochs: int = 0
    normalize_grads: bool = True
    kmeans_restarts: int = 10
    reuse_joint_classifier: bool = False

    def validate(self):
        problems = []
        if self.method not in METHODS:
            problems.append(f"method: must be one of {METHODS}, got {self.method!r}")
        if self.source not in ("synthetic", "csv", "credit_like"):
            problems.append(f"source: unknown source {self.source!r}")
        if self.source == "csv" and not self.csv_path:
            problems.append("csv_path: required when source = csv")
        if self.task not in ("linear", "xor_cross"):
            problems.append(f"task: unknown task {self.task!r}")
        if self.monitor not in ("accuracy", "auc"):
            problems.append(f"monitor: must be accuracy or auc, got {self.monitor!r}")
        if self.mask_semantics not in ("masked_fraction", "keep_fraction"):
            problems.append(f"mask_semantics: unknown value {self.mask_semantics!r}")
        positive = ["n", "d_per_client", "overlap_size", "extractor_hidden", "rep_dim",
                    "batch_size", "q", "rounds", "eval_every",
                    "bytes_per_scalar", "kmeans_restarts"]
        for name in positive:
            if getattr(self, name) < 1:
                problems.append(f"{name}: must be >= 1")
        for name in ["client_epochs", "server_epochs", "test_size", "finetune_rounds",
                     "server_grad_warmup_epochs", "first_client_columns", "patience",
                     "server_hidden"]:
            if getattr(self, name) < 0:
                problems.append(f"{name}: must be >= 0")
        if self.classes < 2:
            problems.append("classes: must be >= 2")
        for name in ["client_lr", "server_lr"]:
            if not getattr(self, name) > 0:
                problems.append(f"{name}: must be > 0")
        if not 0 < self.t < 1:
            problems.append("t: must lie in (0, 1)")
        if not 0 < self.tau_fm <= 1:
            problems.append("tau_fm: must lie in (0, 1]")
        if not 0 <= self.r_m <= 1:
            problems.append("r_m: must lie in [0, 1]")
        if self.sigma < 0 or self.noise < 0 or self.lambda_u < 0:
            problems.append("sigma, noise and lambda_u must be >= 0")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        doc = self.to_dict()
        doc.update(changes)
        return ExperimentConfig(**doc)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(name, raw):
    default = _FIELDS[name].default
    kind = type(default) if default is not MISSING else str
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ValueError(f"expected {kind.__name__}, got {raw!r}") from None
    return raw


def parse_pairs(pairs, problems: Optional[List[str]] = None, where="override"):
    """Convert ``[(key, raw_value), ...]`` into typed field values."""
    problems = [] if problems is None else problems
    values = {}
    for key, raw in pairs:
        key = key.strip()
        if key not in _FIELDS:
            problems.append(f"{where}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    return values


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a config file, apply ``key=value`` overrides, and validate."""
    problems = []
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"config file not found: {path}"])
        pairs = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                problems.append(f"{path.name}:{lineno}: expected key = value")
                continue
            pairs.append(tuple(line.split("=", 1)))
        values.update(parse_pairs(pairs, problems, where=str(path.name)))
    over = []
    for item in overrides:
        if "=" not in item:
            problems.append(f"override {item!r}: expected key=value")
            continue
        over.append(tuple(item.split("=", 1)))
    values.update(parse_pairs(over, problems))
    try:
        cfg = ExperimentConfig(**values).validate()
    except ConfigError as exc:
        problems.extend(exc.problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
