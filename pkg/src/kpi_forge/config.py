"""Pipeline configuration with a lossless JSON file form."""
from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import asdict, dataclass, fields

from .dataset import DEFAULT_SEED, DEV_END, TEST_END, TRAIN_END
from .exceptions import ConfigError

_DATE_FIELDS = ("start", "end", "train_end", "dev_end", "test_end")


@dataclass
class PipelineConfig:
    store: str = "store"
    start: dt.date = dt.date(2017, 1, 1)
    end: dt.date = dt.date(2024, 6, 1)
    forms: tuple[str, ...] = ("10-K", "10-Q")
    train_end: dt.date = TRAIN_END
    dev_end: dt.date = DEV_END
    test_end: dt.date = TEST_END
    collapse_level: int = 0
    taxonomy_kind: str = "presentation"
    lite_threshold: float = 0.5
    seed: int = DEFAULT_SEED
    ident: str | None = None
    rate_limit: float = 8.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.start <= self.end:
            raise ConfigError("start must not be after end")
        if not self.train_end < self.dev_end < self.test_end:
            raise ConfigError("cutoffs must be strictly increasing")
        if self.collapse_level < 0:
            raise ConfigError("collapse_level must be non-negative")
        if self.taxonomy_kind not in ("presentation", "calculation"):
            raise ConfigError(f"unknown taxonomy_kind {self.taxonomy_kind!r}")
        if not 0 <= self.lite_threshold < 1:
            raise ConfigError("lite_threshold must lie in [0, 1)")
        if self.rate_limit <= 0:
            raise ConfigError("rate_limit must be positive")
        if not set(self.forms) <= {"10-K", "10-Q"}:
            raise ConfigError(f"unsupported forms {self.forms}")

    @property
    def cutoffs(self):
        return (self.train_end, self.dev_end, self.test_end)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k in _DATE_FIELDS:
            out[k] = out[k].isoformat()
        out["forms"] = list(self.forms)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        data = dict(data)
        try:
            for k in _DATE_FIELDS:
                if k in data and isinstance(data[k], str):
                    data[k] = dt.date.fromisoformat(data[k])
            if "forms" in data:
                data["forms"] = tuple(data["forms"])
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path=None, env=None) -> "PipelineConfig":
        """Read ``path`` (if any), then apply ``EDGAR_IDENT``/``KPI_SEED`` overrides."""
        env = os.environ if env is None else env
        data = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if env.get("EDGAR_IDENT"):
            data["ident"] = env["EDGAR_IDENT"]
        if env.get("KPI_SEED"):
            try:
                data["seed"] = int(env["KPI_SEED"])
            except ValueError as exc:
                raise ConfigError(f"KPI_SEED must be an integer: {env['KPI_SEED']!r}") from exc
        return cls.from_dict(data)
