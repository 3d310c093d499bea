"""Experiment configuration: one JSON document per run, strict field checking."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ParameterError
from .rng import default_threads

FORMAT_VERSION = "chisq-extremes/1"


@dataclass
class PickandsConfig:
    alpha: float = 1.0
    a: float = 1.0
    eta: float = 0.0
    S: float = 128.0
    inner_step: float = 0.01
    n_rep: int = 10_000
    method: str = "shifted"


@dataclass
class ModelConfig:
    family: str = "ou"
    n: int = 2
    alpha: float = 1.0
    a: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if self.family not in ("ou", "exp_power"):
            raise ParameterError(f"family: must be 'ou' or 'exp_power', got {self.family!r}")
        if self.family == "ou" and self.alpha != 1.0:
            raise ParameterError("alpha: the ou family has alpha = 1")


@dataclass
class TailConfig(ModelConfig):
    eta: float = 1.0
    u: list = field(default_factory=lambda: [20.0])
    pickands_n_rep: int = 100_000
    pickands_S: float = 128.0
    quadrature_nodes: int = 9


@dataclass
class MCConfig(ModelConfig):
    eta: float = 1.0
    u: float = 20.0
    n_rep: int = 100_000
    mc_method: str = "direct"


@dataclass
class CompareConfig(ModelConfig):
    eta: float = 1.0
    u_values: list = field(default_factory=lambda: [12.0, 16.0, 20.0])
    n_rep: int = 1_000_000
    mc_method: str = "direct"
    pickands_n_rep: int = 100_000
    pickands_S: float = 128.0
    quadrature_nodes: int = 9


@dataclass
class ScanConfig:
    t1: float = 0.2
    t2: float = 0.8
    u: float = 20.0
    n_rep: int = 100_000
    mc_method: str = "direct"
    pickands_n_rep: int = 100_000
    quadrature_nodes: int = 9

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ParameterError(f"t1: must be < t2, got t1={self.t1!r}, t2={self.t2!r}")


COMMANDS = {
    "pickands": PickandsConfig,
    "tail": TailConfig,
    "scanstat": ScanConfig,
    "mc": MCConfig,
    "compare": CompareConfig,
}

_NUMERIC = {"float": (int, float), "int": (int,), "str": (str,), "list": (list,)}


def _coerce(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ParameterError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ParameterError(f"{where}.{unknown[0]}: unknown field")
    kwargs = {}
    for name, value in data.items():
        kind = known[name].type if isinstance(known[name].type, str) else known[name].type.__name__
        ok = _NUMERIC.get(kind, (object,))
        if isinstance(value, bool) or not isinstance(value, ok):
            raise ParameterError(f"{where}.{name}: expected {kind}, got {value!r}")
        if kind == "float":
            value = float(value)
        elif kind == "list":
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise ParameterError(f"{where}.{name}: expected a list of numbers")
            value = [float(v) for v in value]
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ParameterError as exc:
        raise ParameterError(f"{where}.{exc}") from None


@dataclass
class ExperimentConfig:
    command: str
    params: object
    seed: int = 0
    threads: int = field(default_factory=default_threads)
    out_dir: str = "."
    version: str = FORMAT_VERSION

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParameterError(f"command: must be one of {sorted(COMMANDS)}, got {self.command!r}")
        if isinstance(self.params, dict):
            self.params = _coerce(COMMANDS[self.command], self.params, "params")
        if not isinstance(self.params, COMMANDS[self.command]):
            raise ParameterError(f"params: wrong parameter block for {self.command!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ParameterError(f"seed: must be a nonnegative integer, got {self.seed!r}")
        if isinstance(self.threads, bool) or not isinstance(self.threads, int) or self.threads < 1:
            raise ParameterError(f"threads: must be a positive integer, got {self.threads!r}")
        if self.version != FORMAT_VERSION:
            raise ParameterError(f"version: unsupported format version {self.version!r} (expected {FORMAT_VERSION!r})")

    def to_dict(self) -> dict:
        return {
            "version": self.version, "command": self.command, "seed": self.seed, "threads": self.threads,
            "out_dir": self.out_dir, "params": asdict(self.params),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ParameterError("config: expected an object")
        allowed = {"version", "command", "seed", "threads", "out_dir", "params"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ParameterError(f"{unknown[0]}: unknown field")
        if "command" not in data:
            raise ParameterError("command: missing")
        kwargs = {k: data[k] for k in allowed if k in data}
        kwargs.setdefault("params", {})
        return cls(**kwargs)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config: not valid JSON ({exc})") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())
