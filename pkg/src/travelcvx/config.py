"""Run configuration: a YAML file with a strict schema (unknown keys are errors)."""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError
from .forward import DomainSpec


@dataclass(frozen=True)
class PhantomConfig:
    kind: str = "bump"
    c0: float = 0.5
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ForwardConfig:
    refine: int = 2     # solver grid = inversion grid refined by this factor
    order: int = 2      # fast-marching upwind order


@dataclass(frozen=True)
class TruncationConfig:
    N: int = 4
    K: int = 4
    beta: float = 1.0
    quad_order: int = 16


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 3.0
    alpha: float = None  # None: delta^2, or 1e-8 for clean data
    kappa: float = 0.02
    R: float = 2.0
    d: float = 0.07
    metric: str = "l2"   # iteration metric: l2 | h1
    projection: str = "qp"  # pointwise step of T: qp | segment
    max_iter: int = 2000
    grad_tol: float = 1e-7
    seed: int = 0
    start: str = "zero"  # zero | random
    start_scale: float = 0.5
    resume: str = None   # run directory of an earlier inversion


@dataclass(frozen=True)
class NoiseConfig:
    delta: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class VerifyConfig:
    lambdas: tuple = (0.5, 1.0, 2.0, 5.0, 10.0)
    carleman_samples: int = 100
    convexity_pairs: int = 50
    scan_lambdas: tuple = (0.0, 0.5, 1.0, 2.0, 3.0)
    scan_pairs: int = 10
    gradient_checks: int = 10
    gradient_lambdas: tuple = (0.0, 1.0, 3.0)
    deltas: tuple = (0.003, 0.01, 0.03)


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    forward: ForwardConfig = field(default_factory=ForwardConfig)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    out: str = "run"
    threads: int = 1

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    def digest(self):
        """SHA-256 of the canonical JSON form, excluding output location and threads."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def alpha(self):
        a = self.solver.alpha
        if a is None:
            return self.noise.delta**2 if self.noise.delta > 0 else 1e-8
        return a

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


SECTIONS = {
    "domain": DomainSpec, "phantom": PhantomConfig, "forward": ForwardConfig,
    "truncation": TruncationConfig, "solver": SolverConfig, "noise": NoiseConfig,
    "verify": VerifyConfig,
}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _coerce(cls, name, value):
    defaults = {f.name: f for f in fields(cls)}
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    unknown = sorted(set(value) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    kw = {}
    for key, v in value.items():
        f = defaults[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kw[key] = _check_type(f"{name}.{key}", default, v)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from None


def _check_type(key, default, v):
    if v is None:
        return None
    if isinstance(default, bool):
        ok = isinstance(v, bool)
    elif isinstance(default, int):
        ok = isinstance(v, int) and not isinstance(v, bool)
    elif isinstance(default, float) or default is None and isinstance(v, (int, float)):
        ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        v = float(v) if ok else v
    elif isinstance(default, str) or default is None:
        ok = isinstance(v, str)
    elif isinstance(default, tuple):
        ok = isinstance(v, list)
        v = tuple(float(x) for x in v) if ok else v
    elif isinstance(default, dict):
        ok = isinstance(v, dict)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {type(v).__name__}")
    return v


def from_dict(data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - set(SECTIONS) - {"out", "threads"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kw = {name: _coerce(cls, name, data[name]) for name, cls in SECTIONS.items() if name in data}
    if "out" in data:
        kw["out"] = _check_type("out", "", data["out"])
    if "threads" in data:
        kw["threads"] = _check_type("threads", 1, data["threads"])
    cfg = RunConfig(**kw)
    if cfg.solver.start not in ("zero", "random"):
        raise ConfigError("solver.start must be 'zero' or 'random'")
    if cfg.solver.metric not in ("l2", "h1"):
        raise ConfigError("solver.metric must be 'l2' or 'h1'")
    if cfg.solver.projection not in ("qp", "segment"):
        raise ConfigError("solver.projection must be 'qp' or 'segment'")
    if cfg.forward.refine < 1 or cfg.forward.order not in (1, 2):
        raise ConfigError("forward.refine must be >= 1 and forward.order 1 or 2")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    return from_dict(data)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
