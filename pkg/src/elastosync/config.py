"""Flat key=value run configuration shared by every CLI subcommand.

Unknown keys are rejected and every value is validated against the owning
module's preconditions at parse time.  ``emit_config`` writes a canonical
form whose reparse reproduces the configuration exactly; its SHA-256 is the
config hash recorded in run metadata.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields

import numpy as np

from . import fem
from .errors import ConfigError
from .integrator import LoadSpec
from .sampling import SampleConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    # material
    E: float = 1e6
    nu: float = 0.3
    rho: float = 1.0
    alpha: float = 0.4          # documented artifact default (under-damped)
    alpha_s: float = 0.9
    beta: float = 1.0
    # load
    fx: float = 0.0
    fy: float = 0.0
    fz: float = -0.5            # body force [0, 0, -f_z], f_z = 0.5
    t_end: float = 1.0
    discontinuous_cutoff: float = float("inf")
    alpha_f_min: float = 0.3
    alpha_f_max: float = 0.7
    # solver
    dt: float = 0.0             # 0 selects the stable step automatically
    n_T: int = 20000
    mode: str = "pre"           # pre | nopre
    cores: int = 2
    latency_us: float = 0.0
    # nn
    k: int = 2
    n_H: int = 100
    n_p: int = 20
    n_f: int = 20
    n_s: int = 80
    n_ts: float = 0.5
    n_B: int = 5
    eta0: float = 5e-4
    gamma: float = 0.9995
    eta_min: float = 5e-7
    seed: int = 0
    conditional: int = 0
    n_rep: int = 12
    # sync
    n_cri: int = 0              # 0 selects the minimum legal n_p*n_s + 1

    # -- derived views -----------------------------------------------------
    def material(self) -> fem.Material:
        return fem.Material(E=self.E, nu=self.nu, rho=self.rho, alpha=self.alpha)

    def load_spec(self, alpha_f: float | None = None) -> LoadSpec:
        if alpha_f is None:
            body = (self.fx, self.fy, self.fz)
        else:
            body = (0.0, 0.0, -alpha_f)
        return LoadSpec(body_force=np.array(body), t_end=self.t_end,
                        cutoff=self.discontinuous_cutoff, alpha_f=alpha_f)

    def sample_config(self) -> SampleConfig:
        return SampleConfig(n_s=self.n_s, n_p=self.n_p, n_f=self.n_f,
                            n_ts=self.n_ts)

    def train_config(self, seed_offset: int = 0) -> TrainConfig:
        return TrainConfig(n_B=self.n_B, eta0=self.eta0, gamma=self.gamma,
                           eta_min=self.eta_min, seed=self.seed + seed_offset)

    def effective_n_cri(self) -> int:
        return self.n_cri if self.n_cri else self.n_p * self.n_s + 1

    def solver_mode(self) -> str:
        return "pre_assembled" if self.mode == "pre" else "per_step_assembly"

    def time_step(self, mesh) -> float:
        return self.dt if self.dt > 0 else fem.cfl_time_step(
            mesh, self.material(), self.alpha_s)


_INT_KEYS = {"n_T", "cores", "k", "n_H", "n_p", "n_f", "n_s", "n_B", "seed",
             "conditional", "n_rep", "n_cri"}
_STR_KEYS = {"mode"}
_KEYS = {f.name for f in fields(RunConfig)}


def _validate(cfg: RunConfig) -> None:
    def bad(key, why):
        raise ConfigError(f"config key '{key}' {why}")

    try:
        cfg.material()
    except ValueError as exc:
        raise ConfigError(f"config material values rejected: {exc}") from exc
    if not 0.0 < cfg.alpha_s < 1.0:
        bad("alpha_s", f"must lie in (0, 1), got {cfg.alpha_s}")
    if cfg.beta < 1.0:
        bad("beta", f"must be >= 1, got {cfg.beta}")
    if cfg.t_end <= 0:
        bad("t_end", f"must be positive, got {cfg.t_end}")
    if cfg.discontinuous_cutoff <= 0:
        bad("discontinuous_cutoff", f"must be positive, got {cfg.discontinuous_cutoff}")
    if not cfg.alpha_f_min < cfg.alpha_f_max:
        bad("alpha_f_min", "bounds must satisfy alpha_f_min < alpha_f_max")
    if cfg.dt < 0:
        bad("dt", f"must be >= 0, got {cfg.dt}")
    if cfg.n_T < 2:
        bad("n_T", f"must be >= 2, got {cfg.n_T}")
    if cfg.mode not in ("pre", "nopre"):
        bad("mode", f"must be 'pre' or 'nopre', got {cfg.mode!r}")
    if cfg.cores < 1:
        bad("cores", f"must be >= 1, got {cfg.cores}")
    if cfg.latency_us < 0:
        bad("latency_us", f"must be >= 0, got {cfg.latency_us}")
    if cfg.k < 1:
        bad("k", f"must be >= 1, got {cfg.k}")
    if cfg.n_H < 1:
        bad("n_H", f"must be >= 1, got {cfg.n_H}")
    if cfg.n_rep < 1:
        bad("n_rep", f"must be >= 1, got {cfg.n_rep}")
    if cfg.conditional not in (0, 1):
        bad("conditional", f"must be 0 or 1, got {cfg.conditional}")
    if cfg.n_cri < 0:
        bad("n_cri", f"must be >= 0, got {cfg.n_cri}")
    try:
        cfg.sample_config()
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(f"config value rejected: {exc}") from exc
    if cfg.n_cri and cfg.n_cri < cfg.n_p * cfg.n_s + 1:
        bad("n_cri", f"must be >= n_p*n_s + 1 = {cfg.n_p * cfg.n_s + 1}")


def parse_config(path) -> RunConfig:
    """Parse with defaults applied; diagnostics name the offending key."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                                  f"got {raw.strip()!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in _KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
            try:
                if key in _STR_KEYS:
                    values[key] = text
                elif key in _INT_KEYS:
                    values[key] = int(text)
                else:
                    values[key] = float(text)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: key '{key}' has malformed value {text!r}")
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def emit_config(cfg: RunConfig) -> str:
    """Canonical text form; reparsing reproduces ``cfg`` exactly."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        text = value if f.name in _STR_KEYS else repr(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()


def write_metadata(path, cfg: RunConfig, subcommand: str, extra: dict | None = None):
    """Deterministic run record written next to every output."""
    import scipy

    from . import __version__

    doc = {
        "tool": "elastosync",
        "version": __version__,
        "subcommand": subcommand,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
