"""Experiment configuration read from JSON with a strict key set."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields


@dataclass
class ExperimentConfig:
    """Every key has a default; unknown keys are rejected.

    metric      minkowski | flrw-eds | rxs2
    n           spatial dimension (2 or 3)
    phantom     gaussian | bandlimited | timelike | planewave | ridge
    grid        time and space half-extents and point counts of the field grid
    chart       z half-extent, nz and direction counts of the ray chart
    plan        ray quadrature: step (null = automatic), interpolation, mode
    eps         cutoff width for the stable inversion
    pad         FFT padding factor
    tolerances  overrides for selftest tolerances, by check name
    output      directory for reports and figures
    seed        RNG seed for random phantoms and test vectors
    """

    metric: str = "minkowski"
    n: int = 2
    phantom: str = "gaussian"
    grid: dict = field(default_factory=lambda: {"T": 5.0, "R": 5.0, "nt": 65, "nx": 65})
    chart: dict = field(default_factory=lambda: {"Z": 6.0, "nz": 97, "ndir": 48,
                                                 "npolar": 12, "nazimuth": 24})
    plan: dict = field(default_factory=lambda: {"step": None, "interpolation": "linear",
                                                "mode": "grid"})
    eps: float = 0.2
    pad: int = 2
    tolerances: dict = field(default_factory=dict)
    output: str = "."
    seed: int = 0

    _CHOICES = {"metric": ("minkowski", "flrw-eds", "rxs2"),
                "phantom": ("gaussian", "bandlimited", "timelike", "planewave", "ridge")}
    _SUBKEYS = {"grid": {"T", "R", "nt", "nx"},
                "chart": {"Z", "nz", "ndir", "npolar", "nazimuth"},
                "plan": {"step", "interpolation", "mode"}}

    def __post_init__(self):
        for k, allowed in self._CHOICES.items():
            if getattr(self, k) not in allowed:
                raise ValueError(f"{k} must be one of {allowed}, got {getattr(self, k)!r}")
        if self.n not in (2, 3):
            raise ValueError("n must be 2 or 3")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if int(self.pad) < 1:
            raise ValueError("pad must be >= 1")
        defaults = ExperimentConfig.__dataclass_fields__
        for k, keys in self._SUBKEYS.items():
            val = getattr(self, k)
            if not isinstance(val, dict):
                raise ValueError(f"{k} must be an object")
            extra = set(val) - keys
            if extra:
                raise ValueError(f"unknown keys in {k}: {sorted(extra)}")
            merged = defaults[k].default_factory()
            merged.update(val)
            setattr(self, k, merged)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON at byte {exc.pos}: {exc.msg}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
