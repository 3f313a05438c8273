"""Experiment configuration: JSON file <-> frozen dataclasses."""
import dataclasses
import json
from dataclasses import dataclass, field

from .active import STRATEGIES, ActiveConfig
from .errors import ConfigError, StorageError
from .learners import LEARNERS, TrainConfig
from .model import Architecture


@dataclass(frozen=True)
class SyntheticSource:
    n_coarse: int = 5
    children_per_coarse: int = 4
    n_features: int = 32
    n_rows: int = 2000
    label_density: float = 0.25
    noise: float = 0.5
    test_fraction: float = 0.25

    def __post_init__(self):
        for name in ("n_coarse", "children_per_coarse", "n_features", "n_rows"):
            if getattr(self, name) < 1:
                raise ConfigError(f"synthetic.{name} must be >= 1")
        if not 0.0 < self.label_density < 1.0:
            raise ConfigError(f"synthetic.label_density must lie in (0, 1), got {self.label_density}")
        if self.noise < 0:
            raise ConfigError("synthetic.noise must be >= 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("synthetic.test_fraction must lie in (0, 1)")

    @property
    def n_test(self):
        return max(1, round(self.test_fraction * self.n_rows))


@dataclass(frozen=True)
class FileSource:
    features: str
    coarse: str
    hierarchy: str
    fine: str = None
    test_features: str = None
    test_coarse: str = None
    test_fine: str = None
    test_fraction: float = 0.25

    def __post_init__(self):
        test = (self.test_features, self.test_coarse, self.test_fine)
        if any(test) and not all(test):
            raise ConfigError("give all of test_features, test_coarse and test_fine, or none")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("files.test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (64, 64)
    activation: str = "relu"

    def architecture(self, input_dim, n_labels):
        return Architecture(input_dim, tuple(self.hidden), n_labels, self.activation)


@dataclass(frozen=True)
class ExperimentConfig:
    source: object = field(default_factory=SyntheticSource)
    ratios: tuple = (-8, -6)
    learners: tuple = LEARNERS
    strategies: tuple = STRATEGIES
    active_ratio: int = -6
    active: ActiveConfig = field(default_factory=ActiveConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    ks: tuple = (1, 3, 5)
    repetitions: int = 10
    seed: int = 0
    out: str = "results"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if any(r > 0 for r in self.ratios) or self.active_ratio > 0:
            raise ConfigError("log2 ratios must be <= 0")
        for name in self.learners:
            if name not in LEARNERS:
                raise ConfigError(f"unknown learner {name!r}; choose from {LEARNERS}")
        for name in self.strategies:
            if name not in STRATEGIES:
                raise ConfigError(f"unknown strategy {name!r}; choose from {STRATEGIES}")
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError("ks must be a nonempty list of positive integers")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")

    def repetition_seed(self, rep):
        return self.seed + rep

    def with_overrides(self, seed=None, out=None):
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if out is not None:
            changes["out"] = out
        return dataclasses.replace(self, **changes) if changes else self


def _build(cls, raw, where, convert=None):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = dict(raw)
    for key, fn in (convert or {}).items():
        if key in kwargs:
            kwargs[key] = fn(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("the configuration must be a JSON object")
    raw = dict(raw)
    dataset = raw.pop("dataset", None) or {}
    if not isinstance(dataset, dict) or len(dataset) > 1 or (dataset and next(iter(dataset)) not in ("synthetic", "files")):
        raise ConfigError('dataset must be {"synthetic": {...}} or {"files": {...}}')
    if "files" in dataset:
        source = _build(FileSource, dataset["files"], "dataset.files")
    else:
        source = _build(SyntheticSource, dataset.get("synthetic"), "dataset.synthetic")

    train = _build(TrainConfig, raw.pop("train", None), "train")
    active_raw = raw.pop("active", None)
    if active_raw is not None and "train" in active_raw:
        raise ConfigError("active.train is not configurable; the top-level train section is used")
    active = _build(ActiveConfig, {**(active_raw or {}), "train": train}, "active", {"ks": tuple})
    model = _build(ModelConfig, raw.pop("model", None), "model", {"hidden": tuple})
    tuples = {k: tuple for k in ("ratios", "learners", "strategies", "ks")}
    cfg = _build(ExperimentConfig, {**raw, "source": source, "train": train, "active": active, "model": model},
                 "config", tuples)
    if "ks" not in (active_raw or {}):
        cfg = dataclasses.replace(cfg, active=dataclasses.replace(cfg.active, ks=cfg.ks))
    return cfg


def load_config(path):
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return from_dict(raw)


def to_dict(cfg):
    """Plain JSON-ready view of a configuration (inverse of ``from_dict``)."""
    out = dataclasses.asdict(cfg)
    src = out.pop("source")
    out = {"dataset": {"files" if isinstance(cfg.source, FileSource) else "synthetic": src}, **out}
    active = out["active"]
    del active["train"]
    return out
