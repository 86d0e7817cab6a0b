"""Flat key-value experiment configuration.

Files hold ``key = value`` lines (``#`` comments). Unknown keys are
rejected up front so typos fail before any training starts. Hidden size,
learning rate, dropout and L2 strength default per variant to the tuned
values and can all be overridden.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError

__all__ = ["ExperimentConfig", "VARIANT_DEFAULTS", "parse_config_text", "load_config"]

# hidden size, learning rate, dropout, L2 strength
VARIANT_DEFAULTS = {
    "full": (64, 0.005, 0.5, 0.01),
    "ptp": (64, 0.005, 0.3, 0.1),
    "pp": (None, 0.01, 0.6, 0.001),
    "tpp": (32, 0.01, 0.5, 0.01),
}

_KNOWN_KEYS = {
    "data_dir", "dataset", "variant", "scales", "epsilon", "norm",
    "aggregator", "hidden", "learning_rate", "dropout", "l2",
    "max_epochs", "max_pushes", "n_splits", "n_inits", "split_seed",
    "init_seed", "train_per_class", "val_count", "workers", "backend",
    "appr_dir", "out_dir", "features_dense_csv",
}


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: Optional[str] = None
    dataset: Optional[str] = None
    variant: str = "full"
    scales: tuple[float, ...] = (0.2, 0.1, 0.05)
    epsilon: float = 1e-5
    norm: str = "sym"
    aggregator: str = "sum"
    hidden: Optional[int] = None
    learning_rate: Optional[float] = None
    dropout: Optional[float] = None
    l2: Optional[float] = None
    max_epochs: int = 10_000
    max_pushes: int = 10_000_000
    n_splits: int = 20
    n_inits: int = 5
    split_seed: int = 1
    init_seed: int = 2
    train_per_class: int = 20
    val_count: int = 500
    workers: int = 1
    backend: Optional[str] = None
    appr_dir: Optional[str] = None
    out_dir: Optional[str] = None
    features_dense_csv: bool = False
    _hidden_explicit: bool = False

    def __post_init__(self):
        if self.variant not in VARIANT_DEFAULTS:
            raise ConfigurationError(
                f"variant must be one of {sorted(VARIANT_DEFAULTS)}, got {self.variant!r}")
        if self.norm not in ("sym", "rw"):
            raise ConfigurationError(f"norm must be sym or rw, got {self.norm!r}")
        if self.aggregator not in ("sum", "max", "cat"):
            raise ConfigurationError(f"aggregator must be sum/max/cat, got {self.aggregator!r}")
        if not self.scales:
            raise ConfigurationError("scales must list at least one value")
        if any(a < b for a, b in zip(self.scales, self.scales[1:])):
            raise ConfigurationError(f"scales must be nonincreasing, got {self.scales}")
        for name in ("n_splits", "n_inits", "train_per_class", "val_count",
                     "workers", "max_epochs", "max_pushes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")

    def resolved_hidden(self) -> Optional[int]:
        if self._hidden_explicit:
            return self.hidden
        return VARIANT_DEFAULTS[self.variant][0]

    def resolved_learning_rate(self) -> float:
        return self.learning_rate if self.learning_rate is not None \
            else VARIANT_DEFAULTS[self.variant][1]

    def resolved_dropout(self) -> float:
        return self.dropout if self.dropout is not None \
            else VARIANT_DEFAULTS[self.variant][2]

    def resolved_l2(self) -> float:
        return self.l2 if self.l2 is not None else VARIANT_DEFAULTS[self.variant][3]

    def resolved_dataset(self) -> str:
        if self.dataset:
            return self.dataset
        if self.data_dir:
            return Path(self.data_dir).name
        return "synthetic"


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigurationError(f"config line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _parse_optional_int(value: str) -> Optional[int]:
    if value.lower() in ("none", ""):
        return None
    return int(value)


def config_from_entries(entries: dict[str, str]) -> ExperimentConfig:
    kwargs: dict = {}
    try:
        for key, value in entries.items():
            if key in ("data_dir", "dataset", "norm", "aggregator", "variant",
                       "backend", "appr_dir", "out_dir"):
                kwargs[key] = value
            elif key == "scales":
                kwargs[key] = tuple(float(tok) for tok in value.split(",") if tok.strip())
            elif key in ("epsilon", "learning_rate", "dropout", "l2"):
                kwargs[key] = float(value)
            elif key == "hidden":
                kwargs[key] = _parse_optional_int(value)
                kwargs["_hidden_explicit"] = True
            elif key == "features_dense_csv":
                if value.lower() not in ("true", "false", "0", "1"):
                    raise ConfigurationError(f"{key} must be true/false")
                kwargs[key] = value.lower() in ("true", "1")
            else:
                kwargs[key] = int(value)
    except ValueError as exc:
        raise ConfigurationError(f"config key {key!r}: bad value {value!r} ({exc})") from None
    return ExperimentConfig(**kwargs)


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read a config file and apply command-line overrides on top."""
    text = Path(path).read_text(encoding="utf-8") if path is not None else ""
    entries = parse_config_text(text)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _KNOWN_KEYS:
            raise ConfigurationError(f"unknown config override {key!r}")
        entries[key] = str(value)
    return config_from_entries(entries)
