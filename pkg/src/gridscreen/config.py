"""Flat ``key = value`` configuration files.

Dataset keys::

    case          Campania2010 | Brindisi2016 | Combined | Custom
    cartel_type   Complete | Incomplete
    windows       2016-04-21..2016-06-15[, start..end ...]
    day_filter    sundays_holidays (optional)
    holidays      comma-separated dates
    cartel_units  comma-separated unit ids
    zones         comma-separated zones
    seed          master seed
    parts         comma-separated config files pooled into a Combined case
    msd, mgp      offer files, relative to the config file
    max_subgroups cap on subgroups per tender

``learner.<name>`` overrides a learner hyperparameter and ``sim.<name>`` a
simulator setting (``sim.windows = 4..10`` takes day numbers).  Lines
starting with ``#`` or ``;`` are comments.
"""
from __future__ import annotations

import configparser
import dataclasses
import datetime as dt
import os
from dataclasses import dataclass, field

from .data import DatasetSpec, SpecError
from .learners.stacking import Hyperparameters
from .simulator import MarketConfig
from .subgroups import DEFAULT_MAX_SUBGROUPS

DATASET_KEYS = ("case", "cartel_type", "windows", "day_filter", "holidays", "cartel_units",
                "zones", "seed", "parts", "msd", "mgp", "max_subgroups")


class ConfigError(SpecError):
    """Unreadable or invalid configuration."""


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _date(text: str, key: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ConfigError(f"{key}: {text!r} is not a YYYY-MM-DD date") from None


def _date_windows(text: str) -> tuple[tuple[dt.date, dt.date], ...]:
    out = []
    for part in _list(text):
        if ".." not in part:
            raise ConfigError(f"windows: {part!r} should look like start..end")
        a, b = part.split("..", 1)
        out.append((_date(a, "windows"), _date(b, "windows")))
    return tuple(out)


def _day_windows(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in _list(text):
        a, sep, b = part.partition("..")
        try:
            out.append((int(a), int(b if sep else a)))
        except ValueError:
            raise ConfigError(f"sim.windows: {part!r} should look like 4..10") from None
    return tuple(out)


@dataclass(frozen=True)
class Config:
    values: dict = field(default_factory=dict)
    base_dir: str = "."
    path: str | None = None

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int | None:
        s = self.values.get("seed")
        return None if s is None else int(s)

    def resolve(self, rel: str) -> str:
        return rel if os.path.isabs(rel) else os.path.normpath(os.path.join(self.base_dir, rel))

    @property
    def has_dataset(self) -> bool:
        return "case" in self.values or "windows" in self.values or "parts" in self.values

    def dataset_spec(self, seed: int | None = None) -> DatasetSpec:
        v = self.values
        try:
            return DatasetSpec(
                case=v.get("case", "Custom"),
                cartel_type=v.get("cartel_type", "Complete"),
                collusive_windows=_date_windows(v.get("windows", "")),
                day_filter=v.get("day_filter") or None,
                holidays=frozenset(_date(d, "holidays") for d in _list(v.get("holidays", ""))),
                cartel_units=tuple(_list(v.get("cartel_units", ""))),
                zones=tuple(_list(v.get("zones", ""))),
                seed=int(v.get("seed", 0)) if seed is None else int(seed),
            )
        except ValueError as exc:
            raise ConfigError(f"{self.path or 'config'}: {exc}") from None

    def overlay(self, top: "Config") -> "Config":
        """``top``'s keys win; this config's file keys stay resolved against its own directory."""
        base = {k: self.resolve(v) if k in ("msd", "mgp") else v for k, v in self.values.items()}
        if "parts" in base:
            base["parts"] = ", ".join(self.resolve(x) for x in _list(base["parts"]))
        return Config({**base, **top.values}, top.base_dir, top.path)

    def parts(self) -> list["Config"]:
        return [load_config(self.resolve(p)) for p in _list(self.values.get("parts", ""))]

    @property
    def max_subgroups(self) -> int:
        return int(self.values.get("max_subgroups", DEFAULT_MAX_SUBGROUPS))

    def hyperparameters(self) -> Hyperparameters:
        raw = {k[len("learner."):]: v for k, v in self.values.items() if k.startswith("learner.")}
        try:
            return Hyperparameters.from_mapping(raw)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc).strip("'\"")) from None

    def market_config(self, seed: int | None = None) -> MarketConfig:
        raw = {k[len("sim."):]: v for k, v in self.values.items() if k.startswith("sim.")}
        types = {f.name: f.type for f in dataclasses.fields(MarketConfig)}
        defaults = MarketConfig()
        kwargs = {}
        for key, text in raw.items():
            if key == "windows":
                kwargs["collusive_windows"] = _day_windows(text)
                continue
            if key not in types or key == "collusive_windows":
                raise ConfigError(f"unknown simulator setting sim.{key}")
            current = getattr(defaults, key)
            try:
                if isinstance(current, dt.date):
                    kwargs[key] = _date(text, f"sim.{key}")
                elif isinstance(current, bool):
                    kwargs[key] = text.strip().lower() in ("1", "true", "yes")
                elif isinstance(current, int):
                    kwargs[key] = int(text)
                elif isinstance(current, float):
                    kwargs[key] = float(text)
                else:
                    kwargs[key] = text.strip()
            except ValueError:
                raise ConfigError(f"sim.{key}: cannot parse {text!r}") from None
        if seed is not None:
            kwargs["seed"] = int(seed)
        elif "seed" not in kwargs and "seed" in self.values:
            kwargs["seed"] = int(self.values["seed"])
        try:
            return MarketConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def describe(self) -> list[str]:
        return [f"{k} = {self.values[k]}" for k in sorted(self.values)]


def parse_config(text: str, base_dir: str = ".", path: str | None = None) -> Config:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       delimiters=("=",))
    parser.optionxform = str  # keep case, e.g. learner.svm_C
    where = path or "config"
    try:
        parser.read_string("[config]\n" + text, source=where)
    except configparser.ParsingError as exc:
        # line numbers are shifted by the injected section header
        lineno, line = exc.errors[0]
        raise ConfigError(f"{where}: line {lineno - 1}: expected key = value, got {line.strip()!r}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from None
    values = {k.strip(): v.strip() for k, v in parser["config"].items()}
    for key in values:
        if key not in DATASET_KEYS and not key.startswith(("learner.", "sim.")):
            raise ConfigError(f"{path or 'config'}: unknown key {key!r}")
    return Config(values, base_dir, path)


def load_config(path) -> Config:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)), path)
