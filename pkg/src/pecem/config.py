"""Experiment configuration and the example presets."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

MAX_FINE_CELLS = 400          # hard cap on fine cells per axis
METHODS = ("fine", "cem", "cem_q2", "split")
SOURCES = ("f1", "f2", "gaussian", "gaussian_time", "zero")
INITIALS = ("bubble", "skewed_bubble", "zero")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ExperimentConfig",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "coarse_n": {"type": "integer", "minimum": 2},
        "ratio": {"type": "integer", "minimum": 2},
        "alpha": {"type": "number", "minimum": 0, "maximum": 1},
        "M": {"type": "number", "exclusiveMinimum": 0},
        "nu": {"type": "number", "exclusiveMinimum": 0},
        "nu_p": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 0.5},
        "seed": {"type": "integer"},
        "raster": {"type": ["string", "null"]},
        "background": {"type": "number", "exclusiveMinimum": 0},
        "contrast": {"type": "number", "minimum": 1},
        "J": {"type": "integer", "minimum": 1},
        "J_q2": {"type": "integer", "minimum": 1},
        "ell": {"type": "integer", "minimum": 1},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 1},
        "source": {"enum": list(SOURCES)},
        "initial": {"enum": list(INITIALS)},
        "methods": {"type": "array", "items": {"enum": list(METHODS)}, "minItems": 1},
        "output": {"type": "string"},
        "stride": {"type": "integer", "minimum": 1},
        "workers": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(ValueError):
    def __init__(self, field_name, msg):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


def _gauss(x, y):
    return 100.0 * np.exp(-800.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))


SOURCE_FUNCTIONS = {
    "f1": lambda t, x, y: 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y),
    "f2": lambda t, x, y: 1.0 / ((x - 0.5) ** 2 + (y - 0.5) ** 2 + 1e-4),
    "gaussian": lambda t, x, y: _gauss(x, y),
    "gaussian_time": lambda t, x, y: _gauss(x, y) * np.exp(-(100.0 * t - 1.0) ** 2),
    "zero": lambda t, x, y: np.zeros_like(np.asarray(x, dtype=float)),
}

INITIAL_FUNCTIONS = {
    "bubble": lambda x, y: 100.0 * x * (1 - x) * y * (1 - y),
    "skewed_bubble": lambda x, y: 100.0 * x ** 2 * (1 - x) * y ** 2 * (1 - y),
    "zero": lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
}


@dataclass
class ExperimentConfig:
    name: str = "custom"
    coarse_n: int = 10
    ratio: int = 10
    alpha: float = 0.9
    M: float = 1.0
    nu: float = 1.0
    nu_p: float = 0.2
    seed: int = 0
    raster: str | None = None
    background: float = 1.0
    contrast: float = 1e4
    J: int = 2
    J_q2: int = 2
    ell: int = 2
    tau: float = 1e-4
    N: int = 100
    source: str = "f1"
    initial: str = "bubble"
    methods: list = field(default_factory=lambda: list(METHODS))
    output: str = "out"
    stride: int = 1
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float):
                need(math.isfinite(v), f.name, "must be finite")
        need(self.coarse_n >= 2, "coarse_n", "must be >= 2")
        need(self.ratio >= 2, "ratio", "must be >= 2")
        need(self.coarse_n * self.ratio <= MAX_FINE_CELLS, "ratio",
             f"fine grid {self.coarse_n * self.ratio} exceeds cap {MAX_FINE_CELLS}")
        need(0 <= self.alpha <= 1, "alpha", "must lie in [0, 1]")
        need(self.M > 0, "M", "must be positive")
        need(self.nu > 0, "nu", "must be positive")
        need(-1 < self.nu_p < 0.5, "nu_p", "must lie in (-1, 1/2)")
        need(self.background > 0, "background", "must be positive")
        need(self.contrast >= 1, "contrast", "must be >= 1")
        need(self.J >= 1, "J", "must be >= 1")
        need(self.J_q2 >= 1, "J_q2", "must be >= 1")
        need(self.ell >= 1, "ell", "must be >= 1")
        need(self.tau > 0, "tau", "must be positive")
        need(self.N >= 1, "N", "must be >= 1")
        need(self.stride >= 1, "stride", "must be >= 1")
        need(self.workers >= 1, "workers", "must be >= 1")
        need(self.source in SOURCES, "source", f"must be one of {SOURCES}")
        need(self.initial in INITIALS, "initial", f"must be one of {INITIALS}")
        need(len(self.methods) > 0, "methods", "must be nonempty")
        for m in self.methods:
            need(m in METHODS, "methods", f"unknown method {m!r}")

    @property
    def source_fn(self):
        return SOURCE_FUNCTIONS[self.source]

    @property
    def initial_fn(self):
        return INITIAL_FUNCTIONS[self.initial]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown configuration field")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def override(self, assignments) -> "ExperimentConfig":
        """Apply ``key=value`` strings; values are parsed as JSON where possible."""
        changes = {}
        known = {f.name: f for f in fields(self)}
        for a in assignments:
            key, sep, raw = a.partition("=")
            if not sep or key not in known:
                raise ConfigError(key or a, "override must be key=value with a known key")
            try:
                val = json.loads(raw)
            except json.JSONDecodeError:
                val = raw
            if key == "methods" and isinstance(val, str):
                val = [m for m in val.split(",") if m]
            if isinstance(getattr(self, key), float) and isinstance(val, int):
                val = float(val)
            changes[key] = val
        return replace(self, **changes)


# Streak-field seeds per example (the published fields are only shown as figures).
EXAMPLE1_SEED = 3
EXAMPLE2_SEED = 12

PRESETS = {
    "example1_f1": dict(source="f1", initial="bubble", seed=EXAMPLE1_SEED),
    "example1_f2": dict(source="f2", initial="bubble", seed=EXAMPLE1_SEED),
    "example2": dict(source="gaussian", initial="skewed_bubble", seed=EXAMPLE2_SEED),
    "example3": dict(source="gaussian_time", initial="skewed_bubble", seed=EXAMPLE2_SEED),
    "desk": dict(source="f2", initial="bubble", seed=EXAMPLE1_SEED, coarse_n=5, ratio=10, N=50),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    d = dict(name=name, coarse_n=10, ratio=10, alpha=0.9, M=1.0, nu=1.0, nu_p=0.2,
             contrast=1e4, J=2, J_q2=2, ell=2, tau=1e-4, N=100)
    d.update(PRESETS[name])
    d.update(overrides)
    return ExperimentConfig(**d)
