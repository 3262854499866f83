"""Machine-readable test reports and run manifests."""

from __future__ import annotations

import json
import platform
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

SCHEMA_VERSION = 1


def _plain(obj: Any) -> Any:
    """Convert numpy containers and scalars to JSON-friendly Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return "inf" if obj > 0 else "-inf" if obj < 0 else "nan"
    return obj


@dataclass
class TestReport:
    """Outcome of one uniform LR test.

    ``timings`` is kept apart from everything else so that two runs with the
    same seed agree on ``to_dict(timings=False)`` exactly.
    """

    __test__ = False  # not a pytest class

    model: str
    lr_stat: float
    critical_value: float
    decision: str
    naive_cv: float
    naive_decision: str
    alpha: float
    eta: float
    n: int
    b_lower: list
    b_upper: list
    q_max_abs: float | None
    level_used: float
    parameter_names: list
    roles: list
    estimates: dict
    covariances: dict
    seeds: dict
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self, timings: bool = True) -> dict:
        d = _plain(asdict(self))
        if not timings:
            d.pop("timings")
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)


def library_versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "uniform_lr": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


@dataclass
class RunManifest:
    """Enough information to repeat a command exactly."""

    command: str
    config: dict
    seed: int
    versions: dict = field(default_factory=library_versions)
    wall_time: float | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(
            command=d["command"],
            config=d["config"],
            seed=int(d["seed"]),
            versions=d.get("versions", {}),
            wall_time=d.get("wall_time"),
            schema_version=int(d.get("schema_version", SCHEMA_VERSION)),
        )
