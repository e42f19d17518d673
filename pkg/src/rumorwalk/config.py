"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

from .lattice import parse_site
from .sim import SimConfig
from .walk import WalkParams

EXPERIMENTS = ("front", "shape", "martingale", "blocks", "coupling", "bounds")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    d: int = 1
    rate_A: float = 1.0
    rate_B: float = 1.0
    mu_A: float = 1.0
    seeds: str = ""
    t_max: float = 50.0
    window_margin: float = 10.0
    kappa: float = 4.0
    empty_seed_sites: bool = False
    replicas: int = 10
    seed: int = 12345
    out: str = "out"
    threads: int = 0
    backend: str = ""
    experiments: str = "front,bounds"
    epochs_linear: int = 40
    epochs_geometric: int = 8
    half_region_speed: float = 0.5
    speed_window: float = 0.5
    debug_checks: bool = True
    bound_times: str = "0.5,1,2"
    martingale_target: str = ""
    martingale_times: str = "1,2,5"
    martingale_kappa: float = 1.0
    coupling_epochs: int = 20
    blocks_C0: int = 2
    blocks_gamma0: float = 0.1
    blocks_rate: float = 0.002
    blocks_paths: int = 50
    blocks_path_rate: float = 1.0
    blocks_configs: int = 1
    C4: float = 1.0
    stationarity_t: float = 10.0
    stationarity_k: float = 5.0
    stationarity_half_width: int = 50

    # -- derived views ------------------------------------------------------

    @property
    def params(self) -> WalkParams:
        return WalkParams(self.d, self.rate_A, self.rate_B, self.mu_A)

    @property
    def seed_sites(self) -> tuple:
        """Seed sites separated by ';'; empty means the origin alone."""
        sites = tuple(parse_site(tok) for tok in self.seeds.split(";") if tok.strip())
        return sites or ((0,) * self.d,)

    @property
    def target_site(self) -> tuple:
        """Martingale target; empty means distance 5 along the first axis."""
        if not self.martingale_target.strip():
            return (5,) + (0,) * (self.d - 1)
        return parse_site(self.martingale_target)

    def sim_config(self, t_max: Optional[float] = None, kappa: Optional[float] = None) -> SimConfig:
        return SimConfig(self.params, self.seed_sites, self.t_max if t_max is None else t_max,
                         self.window_margin, self.kappa if kappa is None else kappa, self.empty_seed_sites)

    @property
    def experiment_set(self) -> set:
        chosen = {e.strip() for e in self.experiments.split(",") if e.strip()}
        unknown = chosen - set(EXPERIMENTS)
        if unknown:
            raise ConfigError(f"unknown experiment(s): {', '.join(sorted(unknown))}")
        return chosen

    def floats(self, name: str) -> list[float]:
        text = getattr(self, name)
        return [float(tok) for tok in text.split(",") if tok.strip()]

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "RunConfig":
        try:
            self.params
            self.sim_config()
            self.experiment_set
            self.floats("bound_times")
            self.floats("martingale_times")
            if len(self.target_site) != self.d:
                raise ConfigError("martingale_target dimension does not match d")
        except ConfigError:
            raise
        except (ValueError, OverflowError) as exc:
            raise ConfigError(str(exc)) from None
        if self.replicas < 0 or self.threads < 0:
            raise ConfigError("replicas and threads must be non-negative")
        if self.backend not in ("", "python", "compiled"):
            raise ConfigError("backend must be empty, 'python' or 'compiled'")
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(key: str, text: str, where: str):
    kind = _FIELDS[key].type
    text = text.strip()
    try:
        if kind in ("bool", bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}: value {text!r} for key '{key}' is not a valid {kind}") from None
    return text


def _assign(values: dict, key: str, text: str, where: str) -> None:
    key = key.strip()
    if key not in _FIELDS:
        raise ConfigError(f"{where}: unknown key '{key}'")
    values[key] = _convert(key, text, where)


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict:
    values: dict = {}
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, text = line.split("=", 1)
        _assign(values, key, text, f"{source}:{n}")
    return values


def parse_config(path: Optional[str] = None, overrides: Iterable[str] = (), **flags) -> RunConfig:
    """File values, then ``KEY=VALUE`` overrides, then explicit keyword flags (None means unset)."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config {p}: {exc.strerror}") from None
        values.update(parse_lines(text.splitlines(), str(p)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        key, text = item.split("=", 1)
        _assign(values, key, text, "--set")
    for key, val in flags.items():
        if val is not None:
            _assign(values, key, str(val), f"--{key}")
    return RunConfig(**values).validate()


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
