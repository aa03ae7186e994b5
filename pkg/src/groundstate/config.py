"""Run configuration: INI files with section headers, merged with command-line overrides."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

COMMANDS = ("solve", "flow", "mpass", "spectrum", "rearrange", "branch", "gap", "thresholds", "reproduce")

# commands that operate on an Allen-Cahn rescaling and therefore need eps
NEEDS_EPS = ("solve", "flow", "mpass", "spectrum")


@dataclass
class RunConfig:
    command: str
    domain: str = "sphere3-radial"
    potential: str = "double_well"
    eps: float | None = None
    eps_start: float | None = None
    eps_end: float | None = None
    steps: int = 5
    eps_list: list[float] = field(default_factory=list)
    family: str = "ground"
    n: int = 400
    subdiv: int = 4
    n_rho: int = 32
    n_phi: int = 64
    tol: float = 1e-10
    dt: float | None = None
    t_end: float = 10.0
    samples: int = 33
    iters: int = 2000
    k: int = 10
    k_max: int = 200
    state: str = "ground"
    out: str = "out"
    seed: int = 0
    filter: str | None = None
    tol_scale: float = 1.0

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}", op="RunConfig")
        if self.command in NEEDS_EPS and self.eps is None:
            raise ConfigError(f"{self.command} needs eps", op="RunConfig")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError("eps must be positive", op="RunConfig")
        if self.command == "branch" and (self.eps_start is None or self.eps_end is None):
            raise ConfigError("branch needs eps_start and eps_end", op="RunConfig")
        if self.command == "gap" and not self.eps_list:
            raise ConfigError("gap needs eps_list", op="RunConfig")
        if self.state != "ground":
            head, _, val = self.state.partition(":")
            try:
                ok = head == "constant" and np.isfinite(float(val))
            except ValueError:
                ok = False
            if not ok:
                raise ConfigError(f"state must be 'ground' or 'constant:<value>', got {self.state!r}", op="RunConfig")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative", op="RunConfig")
        return self

    def as_dict(self) -> dict:
        return asdict(self)


_FIELD_TYPES = {
    "eps": float,
    "eps_start": float,
    "eps_end": float,
    "steps": int,
    "n": int,
    "subdiv": int,
    "n_rho": int,
    "n_phi": int,
    "tol": float,
    "dt": float,
    "t_end": float,
    "samples": int,
    "iters": int,
    "k": int,
    "k_max": int,
    "seed": int,
    "tol_scale": float,
}


def _coerce(key: str, raw: str):
    if key == "eps_list":
        return [float(x) for x in raw.replace(",", " ").split()]
    typ = _FIELD_TYPES.get(key)
    if typ is None:
        return raw.strip()
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}", op="load_config") from exc


def load_config(path, command: str | None = None) -> dict:
    """Flatten every section of an INI file into one key/value dict.

    Section names only group keys for readability; a key may appear in any
    section.  ``command`` in ``[run]`` is used when none is given.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found", op="load_config")
    cp = configparser.ConfigParser()
    try:
        cp.read(p)
    except configparser.Error as exc:
        raise ConfigError(str(exc), op="load_config") from exc
    known = set(RunConfig.__dataclass_fields__)
    out: dict = {}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", op="load_config")
            out[key] = _coerce(key, raw)
    if command is not None:
        out["command"] = command
    return out


def make_config(values: dict) -> RunConfig:
    if "command" not in values:
        raise ConfigError("no command given", op="make_config")
    return RunConfig(**values).validate()
