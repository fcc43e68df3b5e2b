"""Plain-text ``key = value`` configuration shared by the command-line tools.

Blank lines and ``#`` comments are ignored.  Lists are comma separated.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .inference import ChainConfig, ModelConfig, MoveWeights
from .priors import PriorConfig
from .renderer import RenderConfig

ENV_VAR = "WREATHE_CONFIG"


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple:
    return tuple(float(x) for x in v.split(",") if x.strip())


def _ints(v: str) -> tuple:
    return tuple(int(x) for x in v.split(",") if x.strip())


# key -> (section, field name, converter)
KEYS = {
    "p_single": ("prior", "p_single", float),
    "p_full": ("prior", "p_full", float),
    "b_max": ("prior", "b_max", int),
    "max_levels": ("prior", "max_levels", int),
    "b_w": ("prior", "b_w", int),
    "b_sigma": ("prior", "b_sigma", float),
    "rot_orders": ("prior", "rot_orders", _ints),
    "lambda_min": ("prior", "lambda_min", float),
    "lambda_max": ("prior", "lambda_max", float),
    "max_copies": ("prior", "max_copies", int),
    "angle_grid": ("prior", "angle_grid", int),
    "trans_step": ("prior", "trans_step", float),
    "width": ("render", "width", int),
    "height": ("render", "height", int),
    "stroke_width": ("render", "stroke_width", float),
    "supersample": ("render", "supersample", int),
    "segments": ("render", "segments", int),
    "circle_points": ("render", "circle_points", int),
    "p_min": ("model", "p_min", float),
    "use_noise": ("model", "use_noise", _bool),
    "parametrization": ("model", "parametrization", str),
    "lambda_step": ("model", "lambda_step", float),
    "threshold": ("io", "threshold", float),
    "thin": ("chain", "thin", int),
    "level_pick_decay": ("chain", "level_pick_decay", float),
    "move_weights": ("chain", "move_weights", _floats),
    "p_birth_death": ("chain", "p_birth_death", float),
    "p_swap": ("chain", "p_swap", float),
    "init_candidates": ("chain", "init_candidates", int),
    "progress_every": ("chain", "progress_every", int),
}


@dataclass(frozen=True)
class Settings:
    prior: PriorConfig = field(default_factory=PriorConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    chain: ChainConfig = field(default_factory=lambda: ChainConfig(init_candidates=100))
    threshold: float = 0.5
    values: tuple = ()  # the raw (key, value) pairs, for manifests

    def model_config(self) -> ModelConfig:
        return replace(self.model, prior=self.prior, render=self.render)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = KEYS[key][2](value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    return out


def settings_from_dict(values: dict) -> Settings:
    sections: dict = {"prior": {}, "render": {}, "model": {}, "chain": {}, "io": {}}
    for key, v in values.items():
        section, name, _ = KEYS[key]
        sections[section][name] = v
    prior_kw = sections["prior"]
    lo = prior_kw.pop("lambda_min", None)
    hi = prior_kw.pop("lambda_max", None)
    try:
        if lo is not None or hi is not None:
            base = PriorConfig().lambda_range
            prior_kw["lambda_range"] = (base[0] if lo is None else lo, base[1] if hi is None else hi)
        prior = PriorConfig(**prior_kw)
        render = RenderConfig(**sections["render"])
        model = ModelConfig(**sections["model"])
        chain_kw = dict(sections["chain"])
        if "move_weights" in chain_kw:
            chain_kw["move_weights"] = MoveWeights(*chain_kw["move_weights"])
        chain_kw.setdefault("init_candidates", 100)
        chain = ChainConfig(**chain_kw)
        threshold = sections["io"].get("threshold", 0.5)
        if not 0 < threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}") from None
    return Settings(prior, render, model, chain, threshold, tuple(sorted((k, str(v)) for k, v in values.items())))


def load_settings(path: Optional[str] = None) -> Settings:
    """Settings from ``path``, else from $WREATHE_CONFIG, else defaults."""
    path = path or os.environ.get(ENV_VAR) or None
    if path is None:
        return settings_from_dict({})
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{p}: configuration file not found")
    return settings_from_dict(parse_config_text(p.read_text(encoding="utf-8"), str(p)))


def known_keys() -> list:
    return sorted(KEYS)
