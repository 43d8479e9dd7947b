"""Experiment configuration files.

A config is a JSON document with a ``schema_version`` tag. Unknown keys are
rejected at every level so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ehmac.fading import Distribution, FadingConfig
from ehmac.model import Mode, SystemParams, Weights
from ehmac.sweep import SweepSpec, mu_grid

SCHEMA_VERSION = 1

_SYSTEM_KEYS = {"n_users", "eta", "epsilon", "n0", "p_avg", "p_max", "path_loss_up",
                "path_loss_down", "b_max"}
_FADING_KEYS = {"seed", "distribution", "support", "probs"}
_SWEEP_KEYS = {"mu", "mu_grid", "m_slots", "modes", "tolerance", "max_iter", "n_runs", "calib_slots"}
_TOP_KEYS = {"schema_version", "system", "fading", "sweep", "output", "verbosity"}
_OUTPUT_KEYS = {"dir"}


class ConfigError(ValueError):
    """The configuration document is unreadable or invalid."""


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


@dataclass
class ExperimentConfig:
    system: dict
    fading: dict = field(default_factory=lambda: {"seed": 1})
    sweep: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"dir": "out"})
    verbosity: str = "normal"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        # build everything once so invalid values fail at load time
        try:
            self.params(Mode.TDT)
            self.fading_config()
            self.sweep_spec()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigError(str(e)) from e
        if self.verbosity not in ("quiet", "normal", "trace"):
            raise ConfigError(f"unknown verbosity {self.verbosity!r}")

    def params(self, mode: Mode | str = Mode.TDT) -> SystemParams:
        s = dict(self.system)
        b_max = s.pop("b_max", None)
        return SystemParams(**s, mode=Mode(mode), b_max=math.inf if b_max is None else float(b_max))

    def fading_config(self) -> FadingConfig:
        f = self.fading
        seed = int(f.get("seed", 1))
        dist = Distribution(f.get("distribution", Distribution.EXPONENTIAL.value))
        n = int(self.system["n_users"])
        if dist is Distribution.TWO_POINT:
            return FadingConfig.two_point(n, tuple(f.get("support", (0.5, 2.0))),
                                          tuple(f.get("probs", (0.5, 0.5))), seed)
        if "support" in f or "probs" in f:
            raise ConfigError("support and probs only apply to the two-point law")
        return FadingConfig.from_params(self.params(), seed)

    def weights(self) -> list[Weights]:
        s = self.sweep
        if "mu" in s and "mu_grid" in s:
            raise ConfigError("give either mu or mu_grid, not both")
        if "mu" in s:
            if not s["mu"]:
                raise ConfigError("the mu list is empty")
            return [Weights(np.asarray(m, dtype=float)) for m in s["mu"]]
        if int(self.system["n_users"]) != 2:
            raise ConfigError("mu_grid needs two users; list mu explicitly otherwise")
        return mu_grid(int(s.get("mu_grid", 21)))

    def sweep_spec(self) -> SweepSpec:
        s = self.sweep
        return SweepSpec(
            mu_points=self.weights(),
            m_slots_list=[int(m) for m in s.get("m_slots", [10_000, 1_000_000])],
            modes=[Mode(m) for m in s.get("modes", ["TDT", "FDT"])],
            tolerance=float(s.get("tolerance", 1e-3)),
            max_iter=int(s.get("max_iter", 300)),
            n_runs=int(s.get("n_runs", 1)),
            calib_slots=None if s.get("calib_slots") is None else int(s["calib_slots"]),
        )

    @property
    def out_dir(self) -> Path:
        return Path(self.output.get("dir", "out"))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, fading={**self.fading, "seed": int(seed)})

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "system": self.system,
                "fading": self.fading, "sweep": self.sweep, "output": self.output,
                "verbosity": self.verbosity}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys(d, _TOP_KEYS, "config")
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        if "system" not in d:
            raise ConfigError("config has no system section")
        _check_keys(d["system"], _SYSTEM_KEYS, "system")
        _check_keys(d.get("fading", {}), _FADING_KEYS, "fading")
        _check_keys(d.get("sweep", {}), _SWEEP_KEYS, "sweep")
        _check_keys(d.get("output", {}), _OUTPUT_KEYS, "output")
        return cls(system=dict(d["system"]), fading=dict(d.get("fading", {"seed": 1})),
                   sweep=dict(d.get("sweep", {})), output=dict(d.get("output", {"dir": "out"})),
                   verbosity=d.get("verbosity", "normal"), schema_version=version)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(d)


def bundled_config(name: str = "fig1.cfg") -> Path:
    return Path(__file__).parent / "configs" / name
