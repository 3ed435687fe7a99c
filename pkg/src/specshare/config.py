"""Flat ``key = value`` run configuration.

Example file::

    # reference setup with water-filling at the PU
    channel.var_g = 0.5
    mc.n = 100000
    mc.seed = 7
    pu.policy = wf
    aipc.gamma = inf

Blank lines and ``#`` comments are ignored. Unknown keys are an error so
that typos do not silently fall back to defaults. Precedence, lowest
first: built-in defaults, the file, then explicit overrides.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from ._dual import METHODS, SolverOptions
from .errors import ParameterError
from .fading import ChannelDistribution
from .pu_policy import PolicyKind

__all__ = ["ENV_VAR", "RunConfig", "parse_config_text", "load_config", "resolve_config", "config_keys"]

ENV_VAR = "SPECSHARE_CONFIG"


def _real(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError("expected an integer")
    return int(value)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _optional_real(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none") else _real(text)


# key -> (attribute, parser)
_KEYS = {
    "channel.var_f": ("var_f", _real),
    "channel.var_e": ("var_e", _real),
    "channel.var_g": ("var_g", _real),
    "channel.var_o": ("var_o", _real),
    "mc.n": ("n", _int),
    "mc.seed": ("seed", _int),
    "pu.policy": ("pu_policy", lambda s: PolicyKind(s.strip().lower()).value),
    "pu.budget": ("pu_budget", _real),
    "pu.calib_tol": ("calib_tol", _real),
    "su.budget": ("su_budget", _real),
    "aipc.gamma": ("gamma", _real),
    "pclc.c_delta": ("c_delta", _optional_real),
    "pclc.loss_fraction": ("loss_fraction", _optional_real),
    "solver.max_iters": ("max_iters", _int),
    "solver.tol": ("tol", _real),
    "solver.method": ("method", str.strip),
    "solver.pclc_rule": ("pclc_rule", str.strip),
    "frontier.kind": ("frontier_kind", str.strip),
    "frontier.levels": ("levels", str.strip),
    "frontier.loss_fraction_levels": ("loss_fraction_levels", _bool),
}


@dataclass(frozen=True)
class RunConfig:
    var_f: float = 1.0
    var_e: float = 1.0
    var_g: float = 0.5
    var_o: float = 0.01
    n: int = 100_000
    seed: int = 0
    pu_policy: str = "cp"
    pu_budget: float = 10.0
    calib_tol: float = 1e-8
    su_budget: float = 10.0
    gamma: float = 1.0
    c_delta: Optional[float] = None
    loss_fraction: Optional[float] = 0.05
    max_iters: int = 5000
    tol: float = 1e-6
    method: str = "nested"
    pclc_rule: str = "global"
    frontier_kind: str = "pclc"
    levels: str = "0:0.1:1.0"
    loss_fraction_levels: bool = True
    sources: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"solver.method must be one of {METHODS}")
        if self.pclc_rule not in ("global", "activation"):
            raise ParameterError("solver.pclc_rule must be 'global' or 'activation'")
        if self.n < 1 or self.seed < 0 or self.max_iters < 1:
            raise ParameterError("mc.n and solver.max_iters must be positive; mc.seed nonnegative")
        self.dist()  # validates the variances

    def dist(self) -> ChannelDistribution:
        return ChannelDistribution(self.var_f, self.var_e, self.var_g, self.var_o)

    def solver(self) -> SolverOptions:
        return SolverOptions(method=self.method, max_iters=self.max_iters, tol=self.tol,
                             pclc_rule=self.pclc_rule)

    def as_mapping(self) -> dict:
        """Config keys and their values, in key order (``sources`` excluded)."""
        return {key: getattr(self, attr) for key, (attr, _) in _KEYS.items()}

    def digest(self) -> str:
        text = json.dumps(self.as_mapping(), sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, values: Mapping[str, str], source: str = "overrides") -> "RunConfig":
        """Apply ``{key: text}`` pairs, parsing each value as its key demands."""
        changes = {}
        for key, text in values.items():
            if key not in _KEYS:
                raise ParameterError(f"unknown config key {key!r}")
            attr, parse = _KEYS[key]
            try:
                changes[attr] = parse(text)
            except ValueError as exc:
                raise ParameterError(f"bad value {text!r} for {key}: {exc}") from exc
        if not changes:
            return self
        return replace(self, sources=self.sources + (source,), **changes)


def parse_config_text(text: str, origin: str = "<string>") -> dict:
    """Split ``key = value`` lines into a dict; later duplicates win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParameterError(f"{origin}:{lineno}: empty key")
        out[key] = value
    return out


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        values = parse_config_text(fh.read(), str(path))
    return RunConfig().with_overrides(values, source=str(path))


def resolve_config(path=None, overrides: Optional[Mapping[str, str]] = None,
                   environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Defaults, then ``path`` (or the file named by ``$SPECSHARE_CONFIG``), then overrides."""
    environ = os.environ if environ is None else environ
    path = path or environ.get(ENV_VAR) or None
    cfg = load_config(path) if path else RunConfig()
    return cfg.with_overrides(overrides or {})


def config_keys() -> list:
    return list(_KEYS)

