"""Experiment configuration: one TOML file plus dotted ``--set key=value`` overrides."""
from __future__ import annotations

import enum
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, fields
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ensemble import EnsembleSpec
from .errors import ConfigurationError
from .theory import MesoscopicScale


class Experiment(str, enum.Enum):
    RESOLVENT_CLT = "resolvent_clt"
    LINSTAT_CLT = "linstat_clt"
    LOCAL_LAW = "local_law"
    BIAS_RATE = "bias_rate"
    GP_SAMPLE = "gp_sample"
    HS_CHECK = "hs_check"
    MIXED_MOMENTS = "mixed_moments"
    CUMULANT_CHECK = "cumulant_check"
    THEORY_DUMP = "theory_dump"


REQUIRED = {
    Experiment.RESOLVENT_CLT: ("N", "b_points", "num_samples"),
    Experiment.LINSTAT_CLT: ("N", "test_functions", "num_samples"),
    Experiment.LOCAL_LAW: ("N", "z_grid", "num_samples", "epsilon"),
    Experiment.BIAS_RATE: ("N_list", "num_samples"),
    Experiment.GP_SAMPLE: ("num_samples",),
    Experiment.HS_CHECK: ("N", "test_functions", "num_samples"),
    Experiment.MIXED_MOMENTS: ("N", "num_samples", "max_degree"),
    Experiment.CUMULANT_CHECK: ("h_law", "function", "order"),
    Experiment.THEORY_DUMP: (),
}


def parse_complex(v, name: str = "value") -> complex:
    """[re, im], a number, or a string such as "1+1j"."""
    try:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, str):
            return complex(v.replace(" ", "").replace("i", "j"))
        return complex(v)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: cannot read {v!r} as a complex number") from None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    alpha: float = 0.5
    energy: float = 0.0
    N: Optional[int] = None
    N_list: Optional[tuple] = None
    b_points: tuple = ()
    test_functions: tuple = ()
    num_samples: Optional[object] = None
    num_workers: Optional[int] = None
    output_dir: str = "runs"
    persist_samples: bool = False
    persist_spectra: bool = False
    quad_tol: float = 1e-8
    epsilon: float = 0.2
    z_grid: tuple = ()
    max_degree: int = 4
    # gp_sample
    truncation_K: Optional[int] = None
    target_tail_variance: float = 1e-6
    # hs_check
    sigma: Optional[float] = None
    # cumulant_check
    h_law: Optional[str] = None
    function: Optional[str] = None
    order: Optional[int] = None
    num_quadrature_nodes: int = 80
    h_variance: float = 1.0
    poisson_rate: float = 1.0
    # theory_dump
    grid_points: int = 201

    def __post_init__(self):
        try:
            object.__setattr__(self, "experiment", Experiment(self.experiment))
        except ValueError:
            raise ConfigurationError(f"experiment: unknown experiment {self.experiment!r}; "
                                     f"choose from {[e.value for e in Experiment]}") from None
        for name in REQUIRED[self.experiment]:
            v = getattr(self, name)
            if v is None or (isinstance(v, tuple) and len(v) == 0):
                raise ConfigurationError(f"{name}: required for experiment {self.experiment.value}")
        if self.experiment is Experiment.GP_SAMPLE and not (self.b_points or self.test_functions):
            raise ConfigurationError("b_points: gp_sample needs b_points and/or test_functions")
        if self.num_workers is not None and (int(self.num_workers) != self.num_workers or self.num_workers < 1):
            raise ConfigurationError("num_workers: must be an integer >= 1")
        if self.N is not None and (int(self.N) != self.N or self.N < 1):
            raise ConfigurationError("N: must be a positive integer")
        if self.N_list is not None:
            object.__setattr__(self, "N_list", tuple(int(n) for n in self.N_list))
        object.__setattr__(self, "b_points", tuple(parse_complex(b, "b_points") for b in self.b_points))
        object.__setattr__(self, "z_grid", tuple(parse_complex(z, "z_grid") for z in self.z_grid))
        object.__setattr__(self, "test_functions", tuple(str(f) for f in self.test_functions))
        if any(b.imag <= 0 for b in self.b_points):
            raise ConfigurationError("b_points: every point needs Im b > 0")
        if any(z.imag <= 0 for z in self.z_grid):
            raise ConfigurationError("z_grid: every point needs Im z > 0")
        if not self.quad_tol > 0:
            raise ConfigurationError("quad_tol: must be positive")
        try:
            MesoscopicScale(self.alpha, self.energy)
        except ConfigurationError as exc:
            raise ConfigurationError(f"scale: {exc}") from None

    @property
    def scale(self) -> MesoscopicScale:
        return MesoscopicScale(self.alpha, self.energy)

    @property
    def workers(self) -> int:
        return self.num_workers or os.cpu_count() or 1

    def spec(self, N: Optional[int] = None) -> EnsembleSpec:
        n = N if N is not None else (self.N if self.N is not None else self.ensemble.dimension)
        return self.ensemble.replace(dimension=n)

    def to_dict(self) -> dict:
        """Plain-JSON form; worker count and output location are execution details and are left out."""
        d = {}
        for f in fields(self):
            if f.name in ("num_workers", "output_dir"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, EnsembleSpec):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = [[c.real, c.imag] if isinstance(c, complex) else c for c in v]
            d[f.name] = v
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _set_dotted(tree: dict, key: str, value) -> None:
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"{key}: {p} is not a table")
    node[parts[-1]] = value


def parse_override(item: str):
    """"a.b=value" -> ("a.b", value); the value is read as TOML, else kept as a string."""
    if "=" not in item:
        raise ConfigurationError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def config_from_tree(tree: dict) -> ExperimentConfig:
    tree = dict(tree)
    ens = dict(tree.pop("ensemble", {}))
    scale = dict(tree.pop("scale", {}))
    for k in scale:
        if k not in ("alpha", "energy"):
            raise ConfigurationError(f"scale.{k}: unknown field")
    tree.update(scale)
    if "dimension" in ens:
        tree.setdefault("N", ens["dimension"])
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise ConfigurationError(f"{unknown[0]}: unknown field")
    if "experiment" not in tree:
        raise ConfigurationError("experiment: required")
    try:
        spec = EnsembleSpec.from_dict(ens)
    except ConfigurationError as exc:
        raise ConfigurationError(f"ensemble: {exc}") from None
    except TypeError as exc:
        raise ConfigurationError(f"ensemble: {exc}") from None
    try:
        return ExperimentConfig(ensemble=spec, **tree)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def load_config(path: Optional[str] = None, overrides=(), experiment: Optional[str] = None,
                output: Optional[str] = None, workers: Optional[int] = None,
                seed: Optional[int] = None) -> ExperimentConfig:
    """Read ``path`` (TOML), apply ``--set`` overrides and the dedicated CLI flags."""
    tree: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                tree = tomllib.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"config: cannot read {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config: {path} is not valid TOML: {exc}") from None
    for item in overrides:
        _set_dotted(tree, *parse_override(item))
    if experiment is not None:
        if tree.get("experiment", experiment) != experiment:
            raise ConfigurationError(f"experiment: config says {tree['experiment']!r}, command says {experiment!r}")
        tree["experiment"] = experiment
    if output is not None:
        tree["output_dir"] = output
    if workers is not None:
        tree["num_workers"] = workers
    if seed is not None:
        tree.setdefault("ensemble", {})["master_seed"] = seed
    return config_from_tree(tree)
