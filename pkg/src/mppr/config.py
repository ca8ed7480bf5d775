"""Experiment configuration: defaults, validation, TOML loading and hashing.

Precedence is documented defaults < TOML file < explicit overrides (the CLI
passes its flags as overrides).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .exceptions import ConfigError
from .motifs import MotifId

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TASKS = {"nc": "nc", "node-classification": "nc", "lp": "lp", "link-prediction": "lp"}
ABLATIONS = ("none", "train", "predict", "train_predict")

# fields that do not influence the metrics of a single run
_NOT_HASHED = {"runs", "workers", "seed", "out_dir", "checkpoint", "edges", "features", "labels"}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "nc"
    edges: Optional[str] = None
    features: Optional[str] = None
    labels: Optional[str] = None
    symmetrize: bool = False
    normalize_features: bool = True

    motif: Optional[str] = "m7"
    edge_adjacency: str = "symmetric"
    tau: float = 0.9
    alpha: float = 0.1
    beta: float = 0.5
    solver: str = "auto"
    tol: float = 1e-6
    max_terms: int = 1000
    sparsify_threshold: float = 1e-4

    hidden: int = 64
    out_dim: int = 64
    dropout: float = 0.5
    input_dropout: float = 0.5
    operator_dropout: float = 0.5
    l2: float = 0.005
    lr: float = 1e-2
    loss_reduction: str = "mean"
    dtype: str = "float32"
    ablation: str = "train_predict"

    max_epochs: int = 10000
    patience: int = 100
    n_train_per_class: int = 20
    n_val: int = 500
    resplit: bool = True

    edge_ratios: tuple = (5, 1, 4)
    largest_component: bool = True
    batch_size: int = 1024
    epochs: int = 1000

    seed: int = 0
    runs: int = 1
    workers: int = 1
    out_dir: Optional[str] = None
    checkpoint: Optional[str] = None

    def __post_init__(self):
        task = TASKS.get(str(self.task).lower())
        if task is None:
            raise ConfigError(f"unknown task {self.task!r}")
        object.__setattr__(self, "task", task)
        motif = self.motif
        if motif is not None and str(motif).lower() in ("none", ""):
            motif = None
        if motif is not None:
            try:
                motif = f"m{MotifId.parse(motif).value}"
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        object.__setattr__(self, "motif", motif)
        object.__setattr__(self, "edge_ratios", tuple(self.edge_ratios))
        self.validate()

    def validate(self):
        def check(ok, message):
            if not ok:
                raise ConfigError(message)

        check(0.0 <= self.tau <= 1.0, f"tau must lie in [0, 1], got {self.tau}")
        check(0.0 < self.alpha <= 1.0, f"alpha must lie in (0, 1], got {self.alpha}")
        check(0.0 < self.beta <= 1.0, f"beta must lie in (0, 1], got {self.beta}")
        check(self.runs >= 1, "runs must be at least 1")
        check(self.workers >= 1, "workers must be at least 1")
        for name in ("dropout", "input_dropout", "operator_dropout"):
            v = getattr(self, name)
            check(0.0 <= v < 1.0, f"{name} must lie in [0, 1), got {v}")
        check(self.l2 >= 0, "l2 must be nonnegative")
        check(self.lr > 0, "lr must be positive")
        check(self.hidden >= 1 and self.out_dim >= 1, "layer sizes must be positive")
        check(self.solver in ("auto", "direct", "neumann", "sparse"),
              f"unknown solver {self.solver!r}")
        check(self.edge_adjacency in ("symmetric", "directed"),
              "edge_adjacency must be 'symmetric' or 'directed'")
        check(self.ablation in ABLATIONS, f"ablation must be one of {ABLATIONS}")
        check(self.loss_reduction in ("sum", "mean"), "loss_reduction must be 'sum' or 'mean'")
        check(self.dtype in ("float32", "float64"), "dtype must be 'float32' or 'float64'")
        check(self.max_epochs >= 1 and self.epochs >= 1, "epoch counts must be positive")
        check(self.patience >= 1, "patience must be positive")
        check(self.batch_size >= 1, "batch_size must be positive")
        check(self.tol > 0 and self.max_terms >= 0, "invalid Neumann solver settings")
        check(len(self.edge_ratios) == 3 and all(r >= 0 for r in self.edge_ratios)
              and sum(self.edge_ratios) > 0, "edge_ratios needs three nonnegative weights")

    @property
    def motif_id(self) -> Optional[MotifId]:
        return None if self.motif is None else MotifId.parse(self.motif)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edge_ratios"] = list(self.edge_ratios)
        return d

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k not in _NOT_HASHED}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def task_defaults(task: str) -> dict:
    """Protocol defaults that differ between the two tasks."""
    if TASKS.get(task) == "lp":
        return {"task": "lp", "lr": 1e-3, "operator_dropout": 0.0, "input_dropout": 0.0,
                "l2": 0.005, "normalize_features": False, "loss_reduction": "mean"}
    return {"task": "nc"}


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Build a config from defaults, then an optional TOML file, then ``overrides``."""
    values = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        values.update(raw.get("experiment", raw))
    values.update({k: v for k, v in overrides.items() if v is not None})
    task = values.get("task", "nc")
    merged = task_defaults(task)
    merged.update(values)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
