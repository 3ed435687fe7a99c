"""Ergodic-capacity functionals, in nats per channel use.

Every expectation is the ensemble's own sample mean, so capacities and
constraint values computed for the same ensemble are mutually consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, ParameterError, StateError
from .fading import FadingEnsemble

__all__ = [
    "CapacityPoint",
    "MacBounds",
    "BoundCheck",
    "primary_capacity",
    "primary_capacity_max",
    "secondary_capacity",
    "capacity_point",
    "capacity_loss_bound_check",
    "mac_rate_bounds",
]


@dataclass(frozen=True)
class CapacityPoint:
    c_p: float
    c_s: float


@dataclass(frozen=True)
class MacBounds:
    pu_bound: float
    su_bound: float
    sum_bound: float

    def contains(self, c_p: float, c_s: float, slack: float = 1e-12) -> bool:
        return (c_p <= self.pu_bound + slack and c_s <= self.su_bound + slack
                and c_p + c_s <= self.sum_bound + slack)


@dataclass(frozen=True)
class BoundCheck:
    """Outcome of checking ``C_p^max - C_p <= log(1 + gamma)``."""

    holds: bool
    precondition_met: bool
    loss: float
    bound: float
    interference: float
    gamma: float

    def __bool__(self):
        return self.holds


def _power_vector(ens: FadingEnsemble, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 0:
        p = np.full(ens.n, float(p))
    if p.shape != (ens.n,):
        raise ParameterError(f"power vector has length {p.size}, ensemble has {ens.n} states")
    if np.any(~(p >= 0)):
        raise ParameterError("powers must be nonnegative")
    return p


def _require_q(ens: FadingEnsemble):
    if not ens.q_populated:
        raise StateError("PU powers are not populated; apply a PU policy first")


def primary_capacity(ens: FadingEnsemble, p) -> float:
    """``E[log(1 + f q / (1 + g p))]``: PU rate with SU interference as noise."""
    _require_q(ens)
    p = _power_vector(ens, p)
    return ens.mean(np.log1p(ens.signal / (1.0 + ens.g * p)))


def primary_capacity_max(ens: FadingEnsemble) -> float:
    """``E[log(1 + f q)]``: PU rate with the SU silent."""
    _require_q(ens)
    return ens.mean(np.log1p(ens.signal))


def secondary_capacity(ens: FadingEnsemble, p) -> float:
    """``E[log(1 + h p)]``."""
    p = _power_vector(ens, p)
    return ens.mean(np.log1p(ens.h * p))


def capacity_point(ens: FadingEnsemble, p) -> CapacityPoint:
    return CapacityPoint(primary_capacity(ens, p), secondary_capacity(ens, p))


def capacity_loss_bound_check(ens: FadingEnsemble, p, gamma: float,
                              slack: float = 1e-9) -> BoundCheck:
    """Check the PU loss bound implied by an average interference cap.

    Whenever ``E[g p] <= gamma``, the PU loss ``C_p^max - C_p`` is at most
    ``log(1 + gamma)`` whatever the policies and distributions. If the
    interference precondition fails the result is flagged as such and
    ``holds`` is False; that is not a counterexample to the bound.
    """
    if not gamma >= 0:
        raise ParameterError("gamma must be nonnegative")
    p = _power_vector(ens, p)
    interference = ens.mean(ens.g * p)
    loss = primary_capacity_max(ens) - primary_capacity(ens, p)
    bound = float(np.log1p(gamma))
    pre = interference <= gamma * (1.0 + 1e-12) + 1e-300
    return BoundCheck(holds=bool(pre and loss <= bound + slack), precondition_met=bool(pre),
                      loss=loss, bound=bound, interference=interference, gamma=float(gamma))


def mac_rate_bounds(ens: FadingEnsemble, p, rtol: float = 1e-9) -> MacBounds:
    """Rate bounds of the auxiliary two-user MAC at fixed PU and SU powers.

    Uses ``||h_p||^2 = f + o``, ``||h_s||^2 = g + e`` and the closed-form
    2x2 determinant ``(1 + q|h_p|^2)(1 + p|h_s|^2) - q p |h_p^H h_s|^2``.
    """
    _require_q(ens)
    p = _power_vector(ens, p)
    q = ens.q
    np_ = ens.f + ens.o
    ns = ens.g + ens.e
    gram = np_ * ns
    if np.any(ens.cross_mag2 > gram * (1.0 + rtol) + 1e-300):
        raise ConsistencyError("cross_mag2 exceeds the Cauchy-Schwarz bound; ensemble is corrupted")
    # expanded form avoids cancellation when the vectors are nearly parallel
    det = 1.0 + q * np_ + p * ns + q * p * np.maximum(gram - ens.cross_mag2, 0.0)
    return MacBounds(pu_bound=ens.mean(np.log1p(q * np_)),
                     su_bound=ens.mean(np.log1p(p * ns)),
                     sum_bound=ens.mean(np.log(det)))
