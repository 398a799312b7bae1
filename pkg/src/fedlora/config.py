"""Experiment configuration: dataclass defaults, file loading, validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .bounds import TheoryConsts

SPARSIFIERS = ("soft", "flasc", "random", "het", "rankdrop", "dense")


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


@dataclass
class ExperimentConfig:
    """All simulator knobs. Defaults give the desk-scale reference setup."""

    # synthetic task
    d: int = 64
    ell: int = 64
    r_true: int = 8
    n_clients: int = 100
    k_per_round: int = 10
    rounds: int = 300
    epochs: int = 1
    eta: float = 0.05
    zeta: float = 1e-3               # orthogonality penalty weight (untuned default)
    alpha: float | None = None       # None -> 2 * rank
    batch: int = 16
    samples_per_client: int = 64
    shards: int = 10                 # shards per client; fewer = more heterogeneous
    n_groups: int = 10
    hetero_scale: float = 1.0
    noise_std: float = 0.05

    # channel
    bandwidth_total: float = 1e6     # Hz
    noise_var: float = 1e-10
    pathloss_exp: float = 2.2
    bits_per_param: float = 32.0
    dist_min: float = 50.0
    dist_max: float = 150.0
    rayleigh: bool = True            # False -> real-Gaussian small-scale fading

    # control
    d_th: float = 0.1                # per-round uplink latency budget, seconds
    v_weight: float = 1e-4
    o_min: float = 0.1
    r_max: int = 16
    S: float = 1.0
    W: float = 1.0
    G: float = 1.0
    H: float = 1.0
    phi: float = 0.05
    mode: str = "tsfa"               # "tsfa" | "osfa:<r>" | "fixed:<O>"
    sparsifier: str = "soft"
    rank: int | None = None          # structural rank for fixed:<O> mode
    error_feedback: bool = True
    estimate_consts: bool = False    # track W from scores, G from gradient norms
    agg_weights: str = "renorm"      # "renorm" | "global"
    mc_channel_draws: int = 10_000

    seed: int = 0
    workers: int = 1

    def consts(self) -> TheoryConsts:
        return TheoryConsts(S=self.S, W=self.W, G=self.G, H=self.H, phi=self.phi,
                            r_max=self.r_max, E=self.epochs, eta=self.eta)

    def control_mode(self) -> tuple[str, float | int | None]:
        """Parse mode into ("tsfa", None) | ("osfa", r) | ("fixed", O)."""
        if self.mode == "tsfa":
            return "tsfa", None
        if self.mode.startswith("osfa:"):
            return "osfa", int(self.mode.split(":", 1)[1])
        if self.mode.startswith("fixed:"):
            return "fixed", float(self.mode.split(":", 1)[1])
        raise ConfigError(f"mode: expected 'tsfa', 'osfa:<r>' or 'fixed:<O>', got {self.mode!r}")

    def validate(self) -> "ExperimentConfig":
        pos_int = ("d", "ell", "r_true", "n_clients", "k_per_round", "epochs",
                   "batch", "samples_per_client", "shards", "n_groups", "r_max",
                   "workers")
        for name in pos_int:
            val = getattr(self, name)
            if not isinstance(val, int) or val < 1:
                raise ConfigError(f"{name}: expected positive integer, got {val!r}")
        if self.rounds < 0:
            raise ConfigError(f"rounds: expected non-negative integer, got {self.rounds!r}")
        pos_real = ("eta", "noise_std", "bandwidth_total", "noise_var", "pathloss_exp",
                    "bits_per_param", "dist_min", "dist_max", "d_th", "v_weight",
                    "S", "W", "G", "H", "phi")
        for name in pos_real:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive")
        if self.zeta < 0:
            raise ConfigError("zeta: must be non-negative")
        if not 0.0 < self.o_min < 1.0:
            raise ConfigError(f"o_min: must be in (0, 1), got {self.o_min}")
        if self.k_per_round > self.n_clients:
            raise ConfigError("k_per_round: cannot exceed n_clients")
        if self.dist_max < self.dist_min:
            raise ConfigError("dist_max: must be >= dist_min")
        if self.samples_per_client % self.shards != 0:
            raise ConfigError("shards: must divide samples_per_client evenly")
        if self.sparsifier not in SPARSIFIERS:
            raise ConfigError(f"sparsifier: expected one of {SPARSIFIERS}, got {self.sparsifier!r}")
        if self.agg_weights not in ("renorm", "global"):
            raise ConfigError(f"agg_weights: expected 'renorm' or 'global', got {self.agg_weights!r}")
        kind, arg = self.control_mode()
        if kind == "osfa" and not 1 <= int(arg) <= self.r_max:
            raise ConfigError(f"mode: osfa rank {arg} outside 1..{self.r_max}")
        if kind == "fixed":
            if not self.o_min <= float(arg) <= 1.0:
                raise ConfigError(f"mode: fixed ratio {arg} outside [o_min, 1]")
            if self.rank is None:
                raise ConfigError("rank: must be set when mode is 'fixed:<O>'")
        if self.rank is not None and not 1 <= self.rank <= self.r_max:
            raise ConfigError(f"rank: {self.rank} outside 1..{self.r_max}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**data).validate()


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a TOML or JSON config file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    elif path.suffix == ".json":
        data = json.loads(text)
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.name}")
    return from_dict(data)
