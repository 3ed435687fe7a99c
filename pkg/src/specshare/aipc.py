"""SU power control under an average interference power constraint (AIPC).

Maximizes ``E[log(1 + h p)]`` subject to ``E[g p] <= gamma`` and
``E[p] <= P``. The problem is convex; at multipliers ``(nu, mu)`` the
optimal power is water-filling with a gain-dependent water level::

    p = (1 / (nu g + mu) - 1 / h)^+
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _dual
from ._dual import SolverOptions
from .capacity import primary_capacity, secondary_capacity
from .errors import ParameterError, StateError, UnboundedPowerError
from .fading import FadingEnsemble, FadingState
from .pu_policy import water_level

__all__ = [
    "DualPair",
    "AipcProblem",
    "PolicySolution",
    "SolverOptions",
    "aipc_power",
    "aipc_powers",
    "water_fill_su",
    "solve_aipc",
]


@dataclass(frozen=True)
class DualPair:
    nu: float
    mu: float

    def __post_init__(self):
        if not (self.nu >= 0 and self.mu >= 0):
            raise ParameterError(f"multipliers must be nonnegative, got ({self.nu}, {self.mu})")


@dataclass(frozen=True)
class AipcProblem:
    gamma: float
    power_budget: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ParameterError("gamma must be nonnegative (math.inf disables the constraint)")
        if not (self.power_budget > 0 and math.isfinite(self.power_budget)):
            raise ParameterError("power_budget must be a positive real")


@dataclass
class PolicySolution:
    """Per-state SU powers together with the certificate of how they were found.

    ``protect_slack`` is ``gamma - E[g p]`` for AIPC and ``C_p - C_0`` for
    PCLC; ``power_slack`` is ``P - E[p]``. Both are nonnegative for a
    feasible allocation.
    """

    kind: str
    p: np.ndarray
    duals: DualPair
    achieved_interference: float
    achieved_power: float
    c_s: float
    c_p: float
    iterations: int
    converged: bool
    protect_slack: float = 0.0
    power_slack: float = 0.0
    c_p_max: Optional[float] = None
    duality_gap: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def complementary_slackness(self) -> tuple:
        # an infinite multiplier pins its constraint exactly; count it as satisfied
        def prod(m, s):
            return 0.0 if s == 0 or m == 0 else m * s
        return (prod(self.duals.nu, self.protect_slack), prod(self.duals.mu, self.power_slack))

    @property
    def residual(self) -> float:
        """Largest complementary-slackness or infeasibility residual."""
        cs = max(abs(x) for x in self.complementary_slackness)
        infeas = max(0.0, -self.protect_slack, -self.power_slack)
        return max(cs, infeas)

    def summary(self) -> dict:
        out = {
            "kind": self.kind,
            "nu": self.duals.nu,
            "mu": self.duals.mu,
            "c_s": self.c_s,
            "c_p": self.c_p,
            "c_p_max": self.c_p_max,
            "achieved_interference": self.achieved_interference,
            "achieved_power": self.achieved_power,
            "protect_slack": self.protect_slack,
            "power_slack": self.power_slack,
            "residual": self.residual,
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        out.update({k: v for k, v in self.diagnostics.items() if not isinstance(v, np.ndarray)})
        return out


def aipc_powers(h, g, nu: float, mu: float) -> np.ndarray:
    """Vectorized AIPC power rule. Returns ``inf`` where ``nu g + mu = 0`` and ``h > 0``."""
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    with np.errstate(divide="ignore"):
        level = 1.0 / (nu * g + mu)
        inv_h = 1.0 / h
    p = level - inv_h
    # ties at level == 1/h, and dead direct links, get zero power
    return np.where(p > 0, p, 0.0)


def aipc_power(state: FadingState, duals: DualPair) -> float:
    """Optimal AIPC power for one state at fixed multipliers."""
    denom = duals.nu * state.g + duals.mu
    if duals.nu == 0 and duals.mu == 0:
        raise UnboundedPowerError("nu = mu = 0: the SU power is unbounded")
    if state.h == 0:
        return 0.0
    if denom <= 0:
        raise UnboundedPowerError("nu*g + mu = 0 at a state with h > 0: the SU power is unbounded")
    return float(max(1.0 / denom - 1.0 / state.h, 0.0))


def water_fill_su(ens: FadingEnsemble, budget: float, mask=None):
    """Standard SU water-filling on the states selected by ``mask``.

    Returns ``(p, mu)`` where ``1/mu`` is the water level; ``mu`` is ``inf``
    when no selected state has a usable channel.
    """
    h = ens.h if mask is None else np.where(mask, ens.h, 0.0)
    if not np.any((h > 0) & (ens.prob() > 0)):
        return np.zeros(ens.n), math.inf
    level = water_level(h, budget, ens.prob())
    with np.errstate(divide="ignore"):
        p = level - 1.0 / h
    return np.where(p > 0, p, 0.0), 1.0 / level


def _check_ensemble(ens: FadingEnsemble):
    if not ens.q_populated:
        raise StateError("ensemble has no PU powers; apply a PU policy first")


def make_solution(kind, ens, p, nu, mu, iterations, converged, protect_slack, power_budget,
                  lagrangian_terms, dual_offset, c_p_max, diagnostics) -> PolicySolution:
    """Assemble a :class:`PolicySolution` and its derived diagnostics."""
    c_s = secondary_capacity(ens, p)
    sol = PolicySolution(
        kind=kind,
        p=p,
        duals=DualPair(nu, mu),
        achieved_interference=ens.mean(ens.g * p),
        achieved_power=ens.mean(p),
        c_s=c_s,
        c_p=primary_capacity(ens, p),
        iterations=iterations,
        converged=converged,
        protect_slack=protect_slack,
        power_slack=power_budget - ens.mean(p),
        c_p_max=c_p_max,
        diagnostics=diagnostics,
    )
    if math.isfinite(nu) and math.isfinite(mu):
        sol.duality_gap = ens.mean(lagrangian_terms) + dual_offset - c_s
    return sol


def solve_aipc(ens: FadingEnsemble, prob: AipcProblem,
               opts: SolverOptions = SolverOptions()) -> PolicySolution:
    """Maximize the SU ergodic capacity under the AIPC and the SU power budget.

    Parameters
    ----------
    ens : FadingEnsemble
        Ensemble with PU powers applied (``h`` populated).
    prob : AipcProblem
        Interference threshold ``gamma`` (``math.inf`` to drop it) and SU
        power budget.
    opts : SolverOptions
        Dual search settings.

    Returns
    -------
    PolicySolution
        ``converged`` is False if the dual search hit its iteration cap; the
        best feasible iterate is returned in that case.
    """
    _check_ensemble(ens)
    P, gamma = prob.power_budget, prob.gamma
    diagnostics = {}
    c_p_max = float(ens.mean(np.log1p(ens.signal)))

    def build(p, nu, mu, it, converged):
        slack = gamma - ens.mean(ens.g * p) if math.isfinite(gamma) else math.inf
        lag = np.log1p(ens.h * p) - (nu * ens.g + mu) * p if math.isfinite(nu) else 0.0
        offset = (nu * gamma if nu > 0 else 0.0) + mu * P
        return make_solution("aipc", ens, p, nu, mu, it, converged, slack, P, lag, offset,
                             c_p_max, diagnostics)

    if not np.any((ens.h > 0) & (ens.prob() > 0)):
        diagnostics["degenerate"] = "all effective SU gains are zero"
        return build(np.zeros(ens.n), 0.0, 0.0, 0, True)

    if gamma == 0:
        # any power on a state with g > 0 violates the constraint
        p, mu = water_fill_su(ens, P, mask=ens.g == 0)
        diagnostics["note"] = "interference threshold is zero; SU confined to states with g = 0"
        return build(p, math.inf, 0.0 if math.isinf(mu) else mu, 0, True)

    p0, mu0 = water_fill_su(ens, P)
    if not math.isfinite(gamma) or gamma - ens.mean(ens.g * p0) >= 0:
        return build(p0, 0.0, mu0, 0, True)

    model = _dual.DualModel(
        ens=ens,
        power_budget=P,
        powers=lambda nu, mu: aipc_powers(ens.h, ens.g, nu, mu),
        protect_slack=lambda p: gamma - ens.mean(ens.g * p),
        dual_value=lambda nu, mu, p: ens.mean(np.log1p(ens.h * p) - (nu * ens.g + mu) * p)
        + nu * gamma + mu * P,
        mu_can_vanish=True,
        protect_terms=lambda p, idx: -ens.g[idx] * p,
    )
    res = _dual.run_search(model, opts, mu0, log_nu0=math.log(mu0))
    diagnostics["evaluations"] = model.evaluations
    if res.notes:
        diagnostics["notes"] = "; ".join(res.notes)
    return build(res.p, res.nu, res.mu, res.iterations, res.converged)
