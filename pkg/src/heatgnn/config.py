"""Flat key-value experiment configs and the dataset registry.

One experiment per file, `key = value` lines, `#` comments. CLI flags
override file values which override defaults. The config hash embedded in
every metrics JSON is the sha256 of the canonical sorted key=value text.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

from .errors import ConfigurationError
from .training import TrainConfig

# external key -> TrainConfig field
_TRAIN_KEYS = {
    "lambda": "physics_weight",
    "delta": "mag_threshold",
    "window": "window",
    "horizon": "horizon",
    "seed": "seed",
    "lr": "lr",
    "weight_decay": "weight_decay",
    "batch_size": "batch_size",
    "max_epochs": "max_epochs",
    "patience": "patience",
    "d1": "d1",
    "d2": "d2",
    "d3": "d3",
    "htgn_channels": "htgn_channels",
    "head_layers": "head_layers",
    "variant": "variant",
    "residual_mode": "residual_mode",
}
_EXPERIMENT_KEYS = (
    "dataset", "counts_csv", "adjacency_csv", "outdir", "registry",
    "train_frac", "val_frac", "test_frac",
)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one (dataset, horizon) run."""

    dataset: str = "synthetic"
    counts_csv: str = ""
    adjacency_csv: str = ""
    outdir: str = ""
    registry: str = ""
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_flat_dict(self) -> dict:
        flat = {key: getattr(self, key) for key in _EXPERIMENT_KEYS}
        train_dict = asdict(self.train)
        for ext_key, field_name in _TRAIN_KEYS.items():
            flat[ext_key] = train_dict[field_name]
        return flat


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Parse `key = value` lines; later duplicates win."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(value: str, target_type: type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes", "on")
    return target_type(value)


def build_experiment_config(
    file_values: dict[str, str] | None = None,
    overrides: dict[str, object] | None = None,
) -> ExperimentConfig:
    """Merge defaults, config-file values and flag overrides (in that order)."""
    merged: dict[str, object] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            merged[key] = value

    train_types = {f.name: f.type for f in fields(TrainConfig)}
    train_kwargs: dict[str, object] = {}
    exp_kwargs: dict[str, object] = {}
    for key, value in merged.items():
        if key in _TRAIN_KEYS:
            name = _TRAIN_KEYS[key]
            typ = {"float": float, "int": int, "str": str}[train_types[name]]
            train_kwargs[name] = _coerce(value, typ) if isinstance(value, str) else value
        elif key in _EXPERIMENT_KEYS:
            typ = float if key.endswith("_frac") else str
            exp_kwargs[key] = _coerce(value, typ) if isinstance(value, str) else value
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    return ExperimentConfig(train=TrainConfig(**train_kwargs), **exp_kwargs)


def config_hash(cfg: ExperimentConfig | dict) -> str:
    """Stable 12-hex-digit digest of the flattened configuration."""
    flat = cfg.to_flat_dict() if isinstance(cfg, ExperimentConfig) else dict(cfg)
    canonical = "\n".join(f"{k}={flat[k]}" for k in sorted(flat))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def load_registry(path: str | Path) -> dict[str, dict[str, str]]:
    """Dataset registry: dotted keys `name.counts_csv` / `name.adjacency_csv`.

    Relative paths are taken relative to the registry file's directory.
    """
    path = Path(path)
    entries: dict[str, dict[str, str]] = {}
    for key, value in parse_kv_file(path).items():
        if "." not in key:
            raise ConfigurationError(f"{path}: registry keys look like 'name.counts_csv', got {key!r}")
        name, attr = key.split(".", 1)
        if attr not in ("counts_csv", "adjacency_csv"):
            raise ConfigurationError(f"{path}: unknown registry attribute {attr!r}")
        resolved = Path(value)
        if not resolved.is_absolute():
            resolved = path.parent / resolved
        entries.setdefault(name, {})[attr] = str(resolved)
    return entries


def resolve_dataset_paths(cfg: ExperimentConfig) -> tuple[str, str]:
    """Dataset paths from the config itself or from its registry entry."""
    if cfg.counts_csv and cfg.adjacency_csv:
        return cfg.counts_csv, cfg.adjacency_csv
    if not cfg.registry:
        raise ConfigurationError(
            "need counts_csv + adjacency_csv, or a registry file with the dataset name"
        )
    registry = load_registry(cfg.registry)
    if cfg.dataset not in registry:
        raise ConfigurationError(
            f"dataset {cfg.dataset!r} not in registry {cfg.registry} "
            f"(available: {sorted(registry)})"
        )
    entry = registry[cfg.dataset]
    missing = {"counts_csv", "adjacency_csv"} - set(entry)
    if missing:
        raise ConfigurationError(f"registry entry {cfg.dataset!r} missing {sorted(missing)}")
    return entry["counts_csv"], entry["adjacency_csv"]
