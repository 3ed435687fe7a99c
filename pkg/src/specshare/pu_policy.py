"""Primary-user power control: constant power and water-filling."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InfeasibleError, ParameterError, StateError
from .fading import FadingEnsemble

__all__ = [
    "PolicyKind",
    "PuPolicy",
    "water_level",
    "calibrate_water_level",
    "apply_pu_policy",
    "make_pu_policy",
]


class PolicyKind(str, enum.Enum):
    CONSTANT_POWER = "cp"
    WATER_FILLING = "wf"


@dataclass(frozen=True)
class PuPolicy:
    kind: PolicyKind
    budget: float
    water_level: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if not self.budget > 0 or not np.isfinite(self.budget):
            raise ParameterError(f"PU budget must be a positive real, got {self.budget!r}")
        if self.water_level is not None and not self.water_level >= 0:
            raise ParameterError("water level must be nonnegative")

    def powers(self, f: np.ndarray) -> np.ndarray:
        """Map PU channel gains to PU transmit powers."""
        if self.kind is PolicyKind.CONSTANT_POWER:
            return np.full(np.shape(f), float(self.budget))
        if self.water_level is None:
            raise StateError("water-filling policy has no calibrated water level")
        return _fill(self.water_level, f)


def _fill(level: float, gain: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        inv = 1.0 / gain
    p = level - inv
    # ties at level == 1/gain get zero power
    return np.where(p > 0, p, 0.0)


def water_level(gain, budget: float, prob=None, tol: float = 0.0, max_iter: int = 200) -> float:
    """Water level ``d`` with ``E[(d - 1/gain)^+] = budget``.

    Bisection on ``d`` over ``[0, budget + max(1/gain)]``. The returned level
    is the lower bracket end, so the allocated mean never exceeds ``budget``.
    With ``tol = 0`` the bracket is shrunk to machine precision.
    """
    gain = np.asarray(gain, dtype=np.float64)
    prob = np.full(gain.size, 1.0 / gain.size) if prob is None else np.asarray(prob, dtype=np.float64)
    if not budget > 0:
        raise ParameterError("budget must be positive")
    live = (gain > 0) & (prob > 0)
    if not np.any(live):
        raise InfeasibleError("every state has zero gain; nothing to water-fill")

    def mean_power(d):
        return float(np.sum(prob * _fill(d, gain)))

    lo, hi = 0.0, budget + float(np.max(1.0 / gain[live]))
    while mean_power(hi) < budget:  # only when the live mass is below one
        hi *= 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        m = mean_power(mid)
        if m > budget:
            hi = mid
        else:
            lo = mid
            if budget - m <= tol:
                break
    return lo


def calibrate_water_level(ens: FadingEnsemble, budget: float, tol: float = 1e-8) -> float:
    """Water level of the PU water-filling policy on this ensemble.

    Calibrated against the ensemble's own expectation operator so that the
    mean PU power equals ``budget`` to within ``tol``.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    return water_level(ens.f, budget, ens.prob(), tol=tol)


def make_pu_policy(ens: FadingEnsemble, kind, budget: float, tol: float = 1e-8) -> PuPolicy:
    """Build a ready-to-apply policy, calibrating the water level if needed."""
    kind = PolicyKind(kind)
    if kind is PolicyKind.WATER_FILLING:
        return PuPolicy(kind, budget, calibrate_water_level(ens, budget, tol))
    return PuPolicy(kind, budget)


def apply_pu_policy(ens: FadingEnsemble, pol: PuPolicy) -> FadingEnsemble:
    """Populate ``q`` on every state, then recompute the effective SU gains."""
    return ens.with_pu_power(pol.powers(ens.f))
