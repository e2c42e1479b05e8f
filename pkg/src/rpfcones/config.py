"""Experiment configuration: TOML blocks, validation, and builders for stages and potentials."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .function_space import DiscreteFunction
from .rpf import SolverConfig
from .systems import (
    doubling_stage,
    full_shift_stage,
    gauss_stage,
    geometric_tower_spec,
    nonlinear_three_branch_stage,
    tower_build,
)
from .transfer import TransferStage, TwistWindow, log_potential

PIPELINES = ("spectrum", "rpf", "cones", "clt", "ly-check")
INTERVAL_KINDS = ("gauss", "doubling", "three-branch")
SYSTEM_KINDS = INTERVAL_KINDS + ("full-shift", "tower", "window")
POTENTIALS = ("zero", "x", "log", "first-symbol", "level0")


@dataclass
class SystemBlock:
    kind: str = ""
    stages: list = field(default_factory=list)  # for kind = "window": interval stage kinds, repeated periodically
    weights: list = field(default_factory=lambda: [0.5, 0.5])
    q: float = 1.0
    p: float = math.log(2.0)
    beta: float = 0.5


@dataclass
class DiscretizationBlock:
    nodes: int = 64
    N: int = 10_000
    depth: int = 3
    R_max: int = 20
    K_depth: int = 0


@dataclass
class ConeBlock:
    a: float | None = None
    b: float | None = None
    c: float | None = None
    eps0: float = 0.05
    s: float = 4.0
    Q: float | None = None
    alpha: float = 1.0
    xi: float = 1.5
    sigma: float = 0.9
    samples: int = 100
    window: int = 2


@dataclass
class TwistBlock:
    u: str = "zero"
    z: list = field(default_factory=lambda: [[0.0, 0.0]])
    rho: float = 0.1
    K: int = 32


@dataclass
class SolverBlock:
    tol: float = 1e-14
    max_iters: int = 5000
    boundary: str = "periodic"


@dataclass
class StatisticsBlock:
    n: int = 1000
    trials: int = 10_000
    seed: int = 0
    cases: int = 50  # random cases of the Lasota-Yorke check


@dataclass
class OutputBlock:
    dir: str = ""


@dataclass
class ExperimentConfig:
    pipeline: str
    system: SystemBlock
    discretization: DiscretizationBlock = field(default_factory=DiscretizationBlock)
    cone: ConeBlock = field(default_factory=ConeBlock)
    twist: TwistBlock = field(default_factory=TwistBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    statistics: StatisticsBlock = field(default_factory=StatisticsBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.solver.tol, max_iters=self.solver.max_iters)

    @property
    def z_values(self) -> list[complex]:
        return [complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in self.twist.z]


_BLOCKS = {
    "system": SystemBlock,
    "discretization": DiscretizationBlock,
    "cone": ConeBlock,
    "twist": TwistBlock,
    "solver": SolverBlock,
    "statistics": StatisticsBlock,
    "output": OutputBlock,
}


def _block(cls, raw, name: str, unknown: list):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    names = {f.name for f in fields(cls)}
    unknown += [f"{name}.{k}" for k in raw if k not in names]
    return cls(**{k: v for k, v in raw.items() if k in names})


def config_from_dict(raw: dict, pipeline: str | None = None) -> ExperimentConfig:
    """Validate a parsed config; every problem is reported before any computation."""
    if not raw or "system" not in raw:
        raise ConfigError("missing system block")
    unknown = [k for k in raw if k not in _BLOCKS and k != "pipeline"]
    blocks = {name: _block(cls, raw.get(name, {}), name, unknown) for name, cls in _BLOCKS.items()}
    if unknown:
        raise ConfigError("unknown keys: " + ", ".join(sorted(unknown)))
    cfg = ExperimentConfig(pipeline or raw.get("pipeline", ""), **blocks)
    validate(cfg)
    return cfg


def load_config(path: str | Path, pipeline: str | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        raw = tomllib.loads(p.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file {p} not found") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {p} does not parse: {e}") from e
    return config_from_dict(raw, pipeline)


def validate(cfg: ExperimentConfig) -> None:
    errs = []
    s, d, t = cfg.system, cfg.discretization, cfg.twist
    if cfg.pipeline not in PIPELINES:
        errs.append(f"pipeline must be one of {', '.join(PIPELINES)}")
    if s.kind not in SYSTEM_KINDS:
        errs.append(f"system.kind must be one of {', '.join(SYSTEM_KINDS)}")
    if s.kind == "window" and (not s.stages or any(k not in INTERVAL_KINDS for k in s.stages)):
        errs.append(f"system.stages must list interval kinds ({', '.join(INTERVAL_KINDS)})")
    if s.kind == "full-shift" and (len(s.weights) < 2 or any(w <= 0 for w in s.weights)):
        errs.append("system.weights needs at least two positive entries")
    if d.nodes < 2 or d.N < 1 or d.depth < 1 or d.R_max < 1 or d.K_depth < 0:
        errs.append("discretization sizes must be positive")
    if t.u not in POTENTIALS:
        errs.append(f"twist.u must be one of {', '.join(POTENTIALS)}")
    if t.rho <= 0 or t.K < 4:
        errs.append("twist.rho must be positive and twist.K >= 4")
    for v in t.z:
        if not (isinstance(v, (int, float)) or (isinstance(v, list) and len(v) == 2)):
            errs.append("twist.z entries are numbers or [re, im] pairs")
            break
    if cfg.solver.boundary not in ("periodic", "truncated"):
        errs.append("solver.boundary must be periodic or truncated")
    if cfg.solver.tol <= 0 or cfg.solver.max_iters < 1:
        errs.append("solver.tol must be positive and solver.max_iters >= 1")
    if cfg.statistics.n < 1 or cfg.statistics.trials < 1 or cfg.statistics.cases < 1 or cfg.statistics.seed < 0:
        errs.append("statistics.n, statistics.trials and statistics.cases must be >= 1, seed >= 0")
    if cfg.cone.samples < 2 or cfg.cone.window < 1 or not 0 < cfg.cone.sigma < 1:
        errs.append("cone.samples >= 2, cone.window >= 1 and cone.sigma in (0, 1) are required")
    if cfg.pipeline == "spectrum" and s.kind != "gauss":
        errs.append("the spectrum pipeline runs on the gauss system")
    if cfg.pipeline == "clt" and s.kind not in ("gauss", "full-shift", "doubling", "three-branch", "window"):
        errs.append("the clt pipeline needs an interval or full-shift system")
    if cfg.pipeline == "ly-check" and s.kind not in INTERVAL_KINDS + ("window",):
        errs.append("ly-check runs on interval systems")
    if t.u == "first-symbol" and s.kind != "full-shift":
        errs.append("u = first-symbol needs a full-shift system")
    if t.u == "level0" and s.kind != "tower":
        errs.append("u = level0 needs a tower system")
    if t.u in ("x", "log") and s.kind not in INTERVAL_KINDS + ("window",):
        errs.append(f"u = {t.u} needs an interval system")
    if t.u == "log" and s.kind != "gauss":
        errs.append("u = log is supported on the gauss system")
    if errs:
        raise ConfigError("; ".join(errs))


# ---------------------------------------------------------------------------
# builders


def _interval(kind: str, d: DiscretizationBlock, index: int = 0):
    if kind == "gauss":
        return gauss_stage(nodes=d.nodes, N=d.N, index=index)
    if kind == "doubling":
        return doubling_stage(nodes=d.nodes, index=index)
    return nonlinear_three_branch_stage(nodes=d.nodes, index=index)


def build_stages(cfg: ExperimentConfig) -> list:
    s, d = cfg.system, cfg.discretization
    if s.kind in INTERVAL_KINDS:
        return [_interval(s.kind, d)]
    if s.kind == "window":
        return [_interval(k, d, i) for i, k in enumerate(s.stages)]
    if s.kind == "full-shift":
        return [full_shift_stage(list(s.weights), depth=d.depth)]
    spec = geometric_tower_spec(q=s.q, p=s.p, R_max=d.R_max, beta=s.beta, K_depth=d.K_depth)
    return [tower_build(spec)]


def build_potential(cfg: ExperimentConfig, stage):
    u = cfg.twist.u
    g = stage.grid
    if u == "zero":
        return None
    if u == "log":
        return log_potential()
    if u == "x":
        return DiscreteFunction(g, np.asarray(g.coords, dtype=float))
    if u == "first-symbol":
        return DiscreteFunction(g, g.coords[:, 0].astype(float))
    return DiscreteFunction(g, (g.levels == 0).astype(float))


def build_window(cfg: ExperimentConfig, z: complex = 0.0) -> TwistWindow:
    stages = build_stages(cfg)
    mode = "weighted" if cfg.system.kind == "tower" else "plain"
    ops = [TransferStage(st, mode=mode) for st in stages]
    return TwistWindow(ops, [build_potential(cfg, st) for st in stages], z)
