"""Flat ``section.key = value`` experiment configuration.

Example::

    # binomial fixture
    map.family = doubling
    observable.kind = indicator_left
    observable.mean = 0.5
    run.horizons = 10, 15, 20, 25
    run.thresholds = 0.1
    run.budget = 1000000
    run.seed = 7

Values are parsed as int, float, comma lists of numbers, booleans, or strings.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigInvalid

MIN_BUDGET = 1000


def _scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    for kind in (int, float):
        try:
            return kind(t)
        except ValueError:
            pass
    return t


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(_scalar(p) for p in text.split(",") if p.strip())
    if text == "":
        return ()
    return _scalar(text)


def parse_text(text: str) -> dict:
    out = {}
    errors = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors[f"line {lineno}"] = "expected key = value"
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if "." not in key:
            errors[f"line {lineno}"] = f"key {key!r} needs a section prefix"
            continue
        if key in out:
            errors[f"line {lineno}"] = f"duplicate key {key!r}"
        out[key] = parse_value(value)
    if errors:
        raise ConfigInvalid(errors)
    return out


def _as_tuple(v):
    if v is None:
        return None
    return v if isinstance(v, tuple) else (v,)


@dataclass
class ExperimentConfig:
    values: dict
    seed: int
    horizons: tuple = ()
    thresholds: tuple = ()
    budget: int = 100_000
    raw_text: str = ""

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def section(self, name: str) -> dict:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def digest(self) -> str:
        canon = json.dumps({k: self.values[k] for k in sorted(self.values)}, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()


def build_config(values: dict, seed_override=None, require_horizons: bool = True,
                 raw_text: str = "") -> ExperimentConfig:
    errors = {}
    values = dict(values)
    if seed_override is not None:
        values["run.seed"] = int(seed_override)
    seed = values.get("run.seed")
    if seed is None:
        errors["run.seed"] = "required (no default entropy source)"
    elif not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors["run.seed"] = "must be a nonnegative integer"
    horizons = _as_tuple(values.get("run.horizons"))
    if horizons is None or len(horizons) == 0:
        if require_horizons or "run.horizons" in values:
            errors["run.horizons"] = "must be a nonempty list"
        horizons = ()
    else:
        if not all(isinstance(h, (int, float)) and not isinstance(h, bool) for h in horizons):
            errors["run.horizons"] = "entries must be numbers"
        elif any(b <= a for a, b in zip(horizons, horizons[1:])):
            errors["run.horizons"] = "must be strictly increasing"
    thresholds = _as_tuple(values.get("run.thresholds")) or ()
    if not all(isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in thresholds):
        errors["run.thresholds"] = "entries must be positive numbers"
    budget = values.get("run.budget", 100_000)
    if not isinstance(budget, int) or isinstance(budget, bool) or budget < MIN_BUDGET:
        errors["run.budget"] = f"must be an integer >= {MIN_BUDGET}"
    for key, v in values.items():
        if key.endswith("budget") and key != "run.budget":
            if not isinstance(v, int) or v < MIN_BUDGET:
                errors[key] = f"must be an integer >= {MIN_BUDGET}"
    if errors:
        raise ConfigInvalid(errors)
    return ExperimentConfig(values, int(seed), tuple(horizons), tuple(thresholds), int(budget), raw_text)


def load_config(path, seed_override=None, require_horizons: bool = True) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid({"config": f"cannot read config: {exc}"}) from exc
    return build_config(parse_text(text), seed_override, require_horizons, text)
