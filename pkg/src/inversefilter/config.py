"""Experiment configuration: YAML or JSON files merged over preset defaults.

A config has five blocks::

    experiment: fig3            # preset name
    model: {...}                # model parameters (matrices as nested lists)
    run: {horizon: 1000, seeds: 20, replicates: 1}
    output: {directory: out, formats: [csv]}
    params: {...}               # preset-specific knobs

Every key must already exist in the preset's defaults, so typos fail
before any computation. ``seeds`` is either a count (``range(n)``) or an
explicit list.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError

OUTPUT_ENV = "INVERSEFILTER_OUTPUT_DIR"
BLOCKS = ("experiment", "model", "run", "output", "params")
RUN_DEFAULTS = {"horizon": 1, "seeds": 1, "replicates": 1}
OUTPUT_DEFAULTS = {"directory": None, "formats": ["csv"]}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: dict
    run: dict
    output: dict
    params: dict

    def as_dict(self):
        return {b: copy.deepcopy(getattr(self, b)) for b in BLOCKS}

    def canonical_json(self):
        d = self.as_dict()
        d["output"] = {k: v for k, v in d["output"].items() if k != "directory"}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @property
    def seeds(self):
        s = self.run["seeds"]
        return list(range(s)) if isinstance(s, int) else [int(v) for v in s]

    def output_dir(self):
        d = self.output.get("directory") or os.environ.get(OUTPUT_ENV) or "inversefilter-out"
        return Path(d) / self.experiment


def _kind(v):
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, (int, float)):
        return "number"
    if isinstance(v, str):
        return "str"
    if isinstance(v, (list, tuple)):
        return "list"
    if isinstance(v, dict):
        return "dict"
    return "null" if v is None else type(v).__name__


def _merge(default, user, path):
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: expected a mapping, got {_kind(user)}")
    out = copy.deepcopy(default)
    for key, val in user.items():
        where = f"{path}.{key}" if path else key
        if key not in default:
            raise ConfigError(f"{where}: unknown key (allowed: {', '.join(sorted(default)) or 'none'})")
        ref = default[key]
        if isinstance(ref, dict):
            out[key] = _merge(ref, val, where)
            continue
        if ref is not None and val is not None:
            ok = _kind(ref) == _kind(val) or (where == "run.seeds" and _kind(val) in ("number", "list"))
            if not ok:
                raise ConfigError(f"{where}: expected {_kind(ref)}, got {_kind(val)} ({val!r})")
        out[key] = val
    return out


def _check_run(run):
    h = run["horizon"]
    if not isinstance(h, int) or h < 0:
        raise ConfigError(f"run.horizon: must be a non-negative integer, got {h!r}")
    s = run["seeds"]
    if isinstance(s, bool) or not (isinstance(s, int) and s > 0 or isinstance(s, list) and s):
        raise ConfigError(f"run.seeds: must be a positive count or a non-empty list, got {s!r}")
    if isinstance(s, list) and not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in s):
        raise ConfigError("run.seeds: list entries must be non-negative integers")
    r = run["replicates"]
    if not isinstance(r, int) or r < 1:
        raise ConfigError(f"run.replicates: must be a positive integer, got {r!r}")


def build_config(user: dict, presets: dict) -> ExperimentConfig:
    """Validate ``user`` against the preset it names and return the merged config."""
    if not isinstance(user, dict):
        raise ConfigError("config root must be a mapping")
    extra = set(user) - set(BLOCKS)
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown top-level key (allowed: {', '.join(BLOCKS)})")
    name = user.get("experiment")
    if name not in presets:
        raise ConfigError(f"experiment: unknown preset {name!r}; valid names: {', '.join(presets)}")
    base = presets[name].defaults()
    merged = {"experiment": name}
    for block in ("model", "run", "output", "params"):
        merged[block] = _merge(base[block], user.get(block, {}) or {}, block)
    _check_run(merged["run"])
    return ExperimentConfig(**merged)


def load_file(path) -> dict:
    """Read a YAML or JSON config; a run manifest is accepted and its stored config reused."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if isinstance(data, dict) and "config_hash" in data and "config" in data:
        data = data["config"]
    return data if data is not None else {}


def parse_override(text):
    """``a.b.c=value`` into a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        val = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {text!r}: cannot parse value: {exc}") from exc
    out = val
    for p in reversed(parts):
        out = {p: out}
    return out


def deep_update(base: dict, upd: dict):
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            deep_update(base[k], v)
        else:
            base[k] = v
    return base
