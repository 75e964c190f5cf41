"""Experiment configuration: one TOML file, dotted-key overrides.

Experiments must be archivable and diffable, so everything lives in a
single sectioned text file; the CLI accepts overrides of the form
``section.key=value`` (TOML literal syntax on the right-hand side).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


DEFAULTS = {
    "potential": {"name": "harmonic"},
    "entropy": {"alpha": 1.0},
    "grid": {"half_width": 8.0, "nodes": 512},
    "flow": {
        "t_final": 2.0, "dt": 1e-3, "scheme": "implicit_euler",
        "checkpoints": 41, "spacing": "uniform",
        "initial": {"family": "tilted", "a": 0.5},
    },
    "geodesic": {
        "time_slices": 24, "kappas": [1e-2, 1e-3, 1e-4],
        "tol": 1e-8, "max_iter": 20000,
    },
    "distance": {
        "rho0": {"family": "tilted", "a": -0.5},
        "rho1": {"family": "tilted", "a": 0.5},
    },
    "verify": {
        "checks": ["all"], "alphas": [0.0, 0.5, 1.0], "battery": 30,
        "seed": 2024, "flow_t_final": 2.0, "flow_dt": 1e-3,
    },
    "output": {"directory": "out"},
}

KNOWN_CHECKS = ("structural", "commutation", "ou_equality", "entropy_chain",
                "action_decay", "poincare", "poincare_equality", "talagrand",
                "contraction", "evi", "slope")


@dataclass
class ExperimentConfig:
    raw: dict
    path: str = "<defaults>"

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self) -> None:
        r = self.raw
        alpha = r["entropy"]["alpha"]
        if not isinstance(alpha, (int, float)) or not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"entropy.alpha must lie in [0, 1], got {alpha!r}")
        n = r["grid"]["nodes"]
        if not isinstance(n, int) or n < 8 or n % 2:
            raise ConfigError(f"grid.nodes must be an even integer >= 8, got {n!r}")
        if not r["grid"]["half_width"] > 0:
            raise ConfigError(
                f"grid.half_width must be positive, got {r['grid']['half_width']!r}")
        if not r["flow"]["dt"] > 0:
            raise ConfigError(f"flow.dt must be positive, got {r['flow']['dt']!r}")
        if not r["flow"]["t_final"] > 0:
            raise ConfigError(
                f"flow.t_final must be positive, got {r['flow']['t_final']!r}")
        if r["flow"]["scheme"] not in ("implicit_euler", "crank_nicolson"):
            raise ConfigError(
                f"flow.scheme unknown: {r['flow']['scheme']!r}")
        if r["geodesic"]["time_slices"] < 8:
            raise ConfigError(
                f"geodesic.time_slices must be >= 8, got "
                f"{r['geodesic']['time_slices']!r}")
        if any(not k > 0 for k in r["geodesic"]["kappas"]):
            raise ConfigError("geodesic.kappas must all be positive")
        for a in r["verify"]["alphas"]:
            if not 0.0 <= a <= 1.0:
                raise ConfigError(
                    f"verify.alphas entries must lie in [0, 1], got {a!r}")
        unknown = [c for c in r["verify"]["checks"]
                   if c != "all" and c not in KNOWN_CHECKS]
        if unknown:
            raise ConfigError(
                f"verify.checks contains unknown entries {unknown}; "
                f"known: {KNOWN_CHECKS}")

    def selected_checks(self) -> tuple:
        checks = self.raw["verify"]["checks"]
        if "all" in checks:
            return KNOWN_CHECKS
        return tuple(c for c in KNOWN_CHECKS if c in checks)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple:
    """Parse one ``section.key=value`` override (TOML literal value)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    key, value = text.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) < 2 or not all(parts):
        raise ConfigError(f"override key {key!r} must be section.key")
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return parts, parsed


def load_config(path: str | None, overrides=()) -> ExperimentConfig:
    raw = json.loads(json.dumps(DEFAULTS))  # deep copy
    src = "<defaults>"
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(p, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}")
        for section in user:
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section {section!r}")
        raw = _deep_merge(raw, user)
        src = str(p)
    for text in overrides:
        parts, value = parse_override(text)
        node = raw
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"override targets unknown section "
                                  f"{'.'.join(parts[:-1])!r}")
            node = node[part]
        node[parts[-1]] = value
    cfg = ExperimentConfig(raw=raw, path=src)
    cfg.validate()
    return cfg


def build_workspace(cfg: ExperimentConfig):
    """Instantiate (potential, grid, model) from a validated config."""
    from .entropy import EntropyModel
    from .grid import build_grid
    from .potentials import make_potential

    psec = dict(cfg.section("potential"))
    name = psec.pop("name")
    potential = make_potential(name, **psec)
    gsec = cfg.section("grid")
    potential = potential.normalized_on(gsec["half_width"], gsec["nodes"])
    grid = build_grid(potential, gsec["half_width"], gsec["nodes"])
    model = EntropyModel(float(cfg.section("entropy")["alpha"]))
    return potential, grid, model


def density_from_spec(grid, spec: dict):
    from . import densities

    spec = dict(spec)
    family = spec.pop("family", None)
    if family is None:
        raise ConfigError("density spec needs a 'family' key")
    if family == "band_limited":
        import numpy as np
        seed = spec.pop("seed", 0)
        return densities.band_limited(grid, np.random.default_rng(seed), **spec)
    return densities.make_density(grid, family, **spec)
