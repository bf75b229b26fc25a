"""Experiment configuration: a strict JSON schema with field-path errors."""

from dataclasses import dataclass, field, fields
import json
import math
from pathlib import Path

from ..channels import ModelConfig

__all__ = ["SPEC_VERSION", "EXPERIMENTS", "ConfigError", "ExperimentConfig",
           "load_config", "db_to_linear"]

SPEC_VERSION = "1"
EXPERIMENTS = ("sweep", "convergence", "high-snr", "rmt-compare", "dos-histogram")
UNITS = ("nats", "bits")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def db_to_linear(db):
    """Power ratio ``10^(dB / 10)``."""
    return 10.0 ** (db / 10.0)


@dataclass
class ExperimentConfig:
    experiment: str
    model: ModelConfig = field(default_factory=ModelConfig)
    snr_grid_db: list = field(default_factory=lambda: [6.0])
    n_steps: int = 4000
    burn_in: int = 200
    replications: int = 150
    seed: int = 0
    naive_block_length: int = 0
    output: str | None = None
    units: str = "nats"
    spec_version: str = SPEC_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {self.experiment!r}; "
                              f"expected one of {', '.join(EXPERIMENTS)}")
        if not isinstance(self.model, ModelConfig):
            raise ConfigError("model", "expected a model configuration")
        if not isinstance(self.snr_grid_db, (list, tuple)) or not self.snr_grid_db:
            raise ConfigError("snr_grid_db", "must be a nonempty list")
        for i, v in enumerate(self.snr_grid_db):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ConfigError(f"snr_grid_db[{i}]", "must be a finite number")
        for name in ("n_steps", "burn_in", "replications", "seed", "naive_block_length"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(name, "must be an integer")
        if self.burn_in < 0:
            raise ConfigError("burn_in", "must be nonnegative")
        if self.n_steps <= self.burn_in:
            raise ConfigError("n_steps", "must exceed burn_in")
        if self.replications < 1:
            raise ConfigError("replications", "must be at least 1")
        if self.naive_block_length < 0:
            raise ConfigError("naive_block_length", "must be nonnegative")
        if self.units not in UNITS:
            raise ConfigError("units", f"must be one of {', '.join(UNITS)}")
        if str(self.spec_version) != SPEC_VERSION:
            raise ConfigError("spec_version",
                              f"unsupported version {self.spec_version!r}")

    @property
    def rho_grid(self):
        return [db_to_linear(db) for db in self.snr_grid_db]

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        if "experiment" not in data:
            raise ConfigError("experiment", "missing required field")
        kwargs = dict(data)
        model = kwargs.get("model", {})
        if not isinstance(model, dict):
            raise ConfigError("model", "expected a JSON object")
        for key in model:
            if key not in {f.name for f in fields(ModelConfig)}:
                raise ConfigError(f"model.{key}", "unknown field")
        try:
            kwargs["model"] = ModelConfig(**model)
        except (TypeError, ValueError) as exc:
            msg = str(exc)
            name, sep, rest = msg.partition(": ")
            if sep and name.isidentifier():
                raise ConfigError(f"model.{name}", rest) from exc
            raise ConfigError("model", msg) from exc
        if "spec_version" in kwargs:
            kwargs["spec_version"] = str(kwargs["spec_version"])
        return cls(**kwargs)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["model"] = self.model.to_dict()
        out["snr_grid_db"] = list(self.snr_grid_db)
        return out


def load_config(path):
    """Read and validate an experiment configuration from a JSON file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)
