"""Run configuration: one TOML document with every constant of a run."""

from __future__ import annotations

import dataclasses
import hashlib
import sys as _sys
from dataclasses import dataclass, field
from typing import Optional

import tomli_w

if _sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .circle import MapFamilyParams, make_family
from .constants import ControlConstants
from .orbits import ForgeSettings, Neighborhood
from .skew import Perturbation, SkewSystem, default_rule
from .symbolic import N_SYMBOLS, CylinderSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    rot_angle: float = 0.02
    hyp_amplitude: float = 0.05
    phases: tuple = (0.0, 1.0 / 3.0, 2.0 / 3.0)
    ms_amplitude: float = 0.01
    cylinder_depth: int = 2
    delta_pert: float = 0.0
    pert_alpha: float = 0.7
    pert_depth: int = 40

    def family_params(self) -> MapFamilyParams:
        return MapFamilyParams(self.rot_angle, self.hyp_amplitude, tuple(self.phases), self.ms_amplitude)

    def build(self, seed: int) -> SkewSystem:
        params = self.family_params()
        pert = None
        if self.delta_pert > 0:
            pert = Perturbation.random(self.delta_pert, self.pert_alpha, self.pert_depth, seed)
        return SkewSystem(make_family(params), default_rule(self.cylinder_depth), self.cylinder_depth, pert, params)


@dataclass(frozen=True)
class CertifyConfig:
    holder_samples: int = 24
    m_max: int = 6
    trials: int = 8
    completions: int = 8
    seed_word: str = "4"


@dataclass(frozen=True)
class CascadeConfig:
    stages: int = 8
    base_depth: int = 1
    arcs: int = 12
    eps0: Optional[float] = None
    seed_word: str = "4"

    def neighborhoods(self) -> list[Neighborhood]:
        """Every base cylinder on indices 0..base_depth-1 times every one of ``arcs`` equal open arcs."""
        out = []
        for c in range(N_SYMBOLS**self.base_depth):
            word = _base6(c, self.base_depth)
            for k in range(self.arcs):
                out.append(Neighborhood(CylinderSpec(word, 0), (k + 0.5) / self.arcs, 0.5 / self.arcs))
        return out


def _base6(c: int, width: int) -> str:
    digits = []
    for _ in range(width):
        digits.append(str(c % N_SYMBOLS))
        c //= N_SYMBOLS
    return "".join(reversed(digits))


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    constants: ControlConstants = field(default_factory=ControlConstants)
    forge: ForgeSettings = field(default_factory=ForgeSettings)
    certify: CertifyConfig = field(default_factory=CertifyConfig)
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        s, c = self.system, self.cascade
        try:
            s.family_params()
        except ValueError as e:
            raise ConfigError(f"system: {e}") from e
        if s.cylinder_depth < 2:
            raise ConfigError("system.cylinder_depth must be >= 2")
        if s.delta_pert < 0 or s.pert_depth < 0:
            raise ConfigError("system.delta_pert and system.pert_depth must be >= 0")
        if not 0 < s.pert_alpha < 1:
            raise ConfigError("system.pert_alpha must lie in (0, 1)")
        if c.stages < 1 or c.base_depth < 0 or c.arcs < 2:
            raise ConfigError("cascade needs stages >= 1, base_depth >= 0, arcs >= 2")
        if c.eps0 is not None and not c.eps0 > 0:
            raise ConfigError("cascade.eps0 must be positive")
        if self.certify.m_max < 1 or self.certify.holder_samples < 1:
            raise ConfigError("certify.m_max and certify.holder_samples must be >= 1")

    def with_overrides(self, **kw) -> "RunConfig":
        """Command-line overrides: seed, out, stages, delta_pert (None means keep)."""
        cfg = self
        if kw.get("seed") is not None:
            cfg = dataclasses.replace(cfg, seed=int(kw["seed"]))
        if kw.get("out") is not None:
            cfg = dataclasses.replace(cfg, out=str(kw["out"]))
        if kw.get("stages") is not None:
            cfg = dataclasses.replace(cfg, cascade=dataclasses.replace(cfg.cascade, stages=int(kw["stages"])))
        if kw.get("delta_pert") is not None:
            cfg = dataclasses.replace(cfg, system=dataclasses.replace(cfg.system, delta_pert=float(kw["delta_pert"])))
        return cfg

    def build_system(self) -> SkewSystem:
        return self.system.build(self.seed)

    # --- TOML ------------------------------------------------------------------

    def to_dict(self, with_out: bool = True) -> dict:
        def section(obj):
            d = dataclasses.asdict(obj)
            return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}

        return {
            "run": {"seed": self.seed, "out": self.out} if with_out else {"seed": self.seed},
            "system": section(self.system),
            "constants": section(self.constants),
            "forge": section(self.forge),
            "certify": section(self.certify),
            "cascade": section(self.cascade),
        }

    def to_toml(self, with_out: bool = True) -> str:
        return tomli_w.dumps(self.to_dict(with_out))

    def digest(self) -> str:
        """Hash of everything that determines the results (the output location does not)."""
        return hashlib.sha256(self.to_toml(with_out=False).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"run", "system", "constants", "forge", "certify", "cascade"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown sections: {sorted(extra)}")

        def build(kind, key):
            raw = dict(d.get(key, {}))
            names = {f.name for f in dataclasses.fields(kind)}
            bad = set(raw) - names
            if bad:
                raise ConfigError(f"unknown keys in [{key}]: {sorted(bad)}")
            if "phases" in raw:
                raw["phases"] = tuple(raw["phases"])
            try:
                return kind(**raw)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"[{key}]: {e}") from e

        run = dict(d.get("run", {}))
        if set(run) - {"seed", "out"}:
            raise ConfigError(f"unknown keys in [run]: {sorted(set(run) - {'seed', 'out'})}")
        return cls(
            system=build(SystemConfig, "system"),
            constants=build(ControlConstants, "constants"),
            forge=build(ForgeSettings, "forge"),
            certify=build(CertifyConfig, "certify"),
            cascade=build(CascadeConfig, "cascade"),
            seed=int(run.get("seed", 0)),
            out=str(run.get("out", "out")),
        )

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"malformed config: {e}") from e

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as f:
                text = f.read().decode()
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
        return cls.from_toml(text)
