"""Experiment configuration: a single JSON document, validated on load."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, replace

from .observables import EXACT_TRACE_CAP, TraceAverageSpec
from .state import KickedIsingParams
from .theory import L0, scaled_delta

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "preset", "load_config", "parse_config"]

LARGE_L = 16

# the parameter line J=1, h_x=1.4 with three longitudinal fields
PRESETS = {
    "integrable": KickedIsingParams(1.0, 1.4, 0.0),
    "intermediate": KickedIsingParams(1.0, 1.4, 0.4),
    "ergodic": KickedIsingParams(1.0, 1.4, 1.4),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    j_z: float = 1.0
    h_x: float = 1.4
    h_z: float = 0.0
    sizes: list[int] = field(default_factory=lambda: [12, 14, 16])
    delta_primes: list[float] = field(default_factory=lambda: [0.02, 0.04])
    t_max: int = 300
    mode: str = "stochastic"
    n_samples: int = 16
    seed: int = 1
    observable: str = "M_x"
    fidelity_mode: str = "plain"
    out_dir: str = "out"
    name: str = "custom"
    allow_large: bool = False

    @property
    def params(self) -> KickedIsingParams:
        return KickedIsingParams(self.j_z, self.h_x, self.h_z)

    @property
    def averaging(self) -> TraceAverageSpec:
        return TraceAverageSpec(self.mode, self.n_samples, self.seed)

    @property
    def symmetrized(self) -> bool:
        return self.fidelity_mode == "symmetrized"

    def delta(self, delta_prime: float, n_sites: int) -> float:
        return scaled_delta(delta_prime, n_sites, L0)

    def validate(self) -> "ExperimentConfig":
        errors = []
        for key in ("j_z", "h_x", "h_z"):
            v = getattr(self, key)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                errors.append((key, f"{key} must be a finite number"))
        if not self.sizes or any(not isinstance(n, int) or n < 2 for n in self.sizes):
            errors.append(("sizes", "sizes must be a non-empty list of integers >= 2"))
        elif max(self.sizes) > LARGE_L and not self.allow_large:
            errors.append(("sizes", f"L > {LARGE_L} needs allow_large (--allow-large)"))
        if any(not isinstance(d, (int, float)) or isinstance(d, bool) for d in self.delta_primes):
            errors.append(("delta_primes", "delta_primes must be numbers"))
        if not isinstance(self.t_max, int) or self.t_max < 1:
            errors.append(("t_max", "t_max must be an integer >= 1"))
        if self.mode not in ("exact_basis_sum", "stochastic"):
            errors.append(("mode", "mode must be 'exact_basis_sum' or 'stochastic'"))
        elif self.mode == "exact_basis_sum" and self.sizes and max(self.sizes) > EXACT_TRACE_CAP:
            errors.append(("mode", f"exact trace needs every L <= {EXACT_TRACE_CAP}"))
        if not isinstance(self.n_samples, int) or self.n_samples < 1:
            errors.append(("n_samples", "n_samples must be an integer >= 1"))
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            errors.append(("seed", "seed must be a 64-bit unsigned integer"))
        if not re.fullmatch(r"M_[xyz]|Z:[xyz]([0xyz]*[xyz])?", str(self.observable)):
            errors.append(("observable", f"unknown observable token {self.observable!r}"))
        if self.fidelity_mode not in ("plain", "symmetrized"):
            errors.append(("fidelity_mode", "fidelity_mode must be 'plain' or 'symmetrized'"))
        if errors:
            raise ConfigError("; ".join(msg for _, msg in errors), [k for k, _ in errors])
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    cfg = ExperimentConfig(j_z=p.j_z, h_x=p.h_x, h_z=p.h_z, name=name)
    return replace(cfg, **overrides).validate()


def _key_line(text: str, key: str) -> int | None:
    for lineno, line in enumerate(text.splitlines(), 1):
        if re.search(rf'"{re.escape(key)}"\s*:', line):
            return lineno
    return None


def parse_config(text: str) -> ExperimentConfig:
    """Parse a config document; a run manifest (with a ``config`` key) also works."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("line 1: config must be a JSON object")
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]
    known = set(ExperimentConfig.__dataclass_fields__)
    base = {}
    if "preset" in doc:
        name = doc.pop("preset")
        if name not in PRESETS:
            line = _key_line(text, "preset")
            raise ConfigError(f"line {line}: unknown preset {name!r}")
        base = asdict(preset(name))
    unknown = sorted(set(doc) - known)
    if unknown:
        line = _key_line(text, unknown[0])
        raise ConfigError(f"line {line}: unknown key {unknown[0]!r}")
    base.update(doc)
    cfg = ExperimentConfig(**base)
    try:
        return cfg.validate()
    except ConfigError as exc:
        keys = exc.args[1] if len(exc.args) > 1 else []
        lines = [_key_line(text, k) for k in keys]
        where = ", ".join(f"line {n}" for n in lines if n) or "defaults"
        raise ConfigError(f"{where}: {exc.args[0]}") from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
