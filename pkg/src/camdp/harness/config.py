"""Flat key=value experiment configs.

One `key = value` pair per line, `#` comments allowed. Unknown keys are
rejected so a config can never silently drift from the code. The canonical
text rendering (sorted keys, repr'd floats) feeds the config hash stamped
into every CSV, making reruns byte-comparable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from ..fixtures import FIXTURES, get_fixture
from ..gridworld import build_gridworld, canonical_spec
from ..learner import ProjectionSpec, StepSchedule
from ..model import StateFeatures
from ..model_io import load_model_file

__all__ = ["ExperimentConfig", "ConfigError"]

ORACLE_STATE_LIMIT = 2500


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_seeds(s: str) -> tuple[int, ...]:
    out = []
    for part in s.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment run depends on."""

    model: str = "fixture:three_state"   # grid:N | fixture:NAME | file:PATH
    algorithm: str = "cac"               # cac | cnac
    total_steps: int = 100_000
    snapshot_every: int = 1000
    seeds: tuple[int, ...] = tuple(range(10))
    out_dir: str = "runs/out"
    feature_mode: str = "onehot"         # onehot | bundled
    oracle: bool = False
    temperature: float = 1.0
    c_a: float = 1.0
    omega: float = 0.4
    c_b: float = 1.0
    sigma: float = 0.6
    c_c: float = 1.0
    beta: float = 1.0
    critic_radius: float = 100.0
    multiplier_cap: float = 100.0
    fisher_p: float = 1.0
    fisher_ridge: float = 1e-3
    fisher_refresh_every: int = 1000
    freeze_actor: bool = False
    freeze_multipliers: bool = False
    window_frac: float = 0.1
    parallel: bool = True
    start_state: int = -1                # -1: use the model's start state

    _TYPES = {
        "model": str, "algorithm": str, "total_steps": int,
        "snapshot_every": int, "seeds": _parse_seeds, "out_dir": str,
        "feature_mode": str, "oracle": _parse_bool, "temperature": float,
        "c_a": float, "omega": float, "c_b": float, "sigma": float,
        "c_c": float, "beta": float, "critic_radius": float,
        "multiplier_cap": float, "fisher_p": float, "fisher_ridge": float,
        "fisher_refresh_every": int, "freeze_actor": _parse_bool,
        "freeze_multipliers": _parse_bool, "window_frac": float,
        "parallel": _parse_bool, "start_state": int,
    }

    def __post_init__(self):
        if self.algorithm not in ("cac", "cnac"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.feature_mode not in ("onehot", "bundled"):
            raise ConfigError(f"unknown feature_mode {self.feature_mode!r}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not 0.0 < self.window_frac <= 1.0:
            raise ConfigError("window_frac must be in (0, 1]")
        kind = self.model.split(":", 1)[0]
        if kind not in ("grid", "fixture", "file"):
            raise ConfigError(f"unknown model source {self.model!r}")
        if self.feature_mode == "bundled" and kind != "fixture":
            raise ConfigError("bundled features exist only for fixtures")

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in cls._TYPES:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[key] = cls._TYPES[key](val)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from exc
        try:
            return cls(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.parse(fh.read())

    def canonical_text(self) -> str:
        parts = []
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "seeds":
                rendered = ",".join(str(s) for s in val)
            elif isinstance(val, bool):
                rendered = "true" if val else "false"
            elif isinstance(val, float):
                rendered = repr(val)
            else:
                rendered = str(val)
            parts.append(f"{f.name} = {rendered}")
        return "\n".join(parts) + "\n"

    # out_dir and parallel change where and how results are produced, never
    # what they are, so the hash stamped into CSVs ignores them
    _UNHASHED = ("out_dir", "parallel")

    def config_hash(self) -> str:
        lines = [ln for ln in self.canonical_text().splitlines()
                 if ln.split(" =", 1)[0] not in self._UNHASHED]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.c_a, self.omega, self.c_b, self.sigma,
                            self.c_c, self.beta)

    def projections(self) -> ProjectionSpec:
        return ProjectionSpec(self.critic_radius, self.multiplier_cap)

    def build_model_features(self):
        """Materialize (model, features) from the model source string."""
        kind, _, arg = self.model.partition(":")
        if kind == "grid":
            model = build_gridworld(canonical_spec(int(arg)))
            bundled = None
        elif kind == "fixture":
            if arg not in FIXTURES:
                raise ConfigError(f"unknown fixture {arg!r}")
            fx = get_fixture(arg)
            model, bundled = fx.model, fx.features
        elif kind == "file":
            model = load_model_file(arg)
            bundled = None
        else:
            raise ConfigError(f"unknown model source {self.model!r}")
        if self.feature_mode == "bundled":
            features = bundled
        else:
            features = StateFeatures.identity(model.n_states)
        if self.oracle and model.n_states > ORACLE_STATE_LIMIT:
            raise ConfigError(
                f"oracle attachment is limited to {ORACLE_STATE_LIMIT} states")
        return model, features
