"""Dual multiplier searches shared by the AIPC and PCLC solvers.

Both problems have the Lagrangian

    E[log(1 + h p)] + nu * protect_slack(p) + mu * (P - E[p])

with a per-state closed form (or root) for the maximizing powers. The
dual function is convex in ``(nu, mu)``; its partial derivatives are the
constraint slacks. Three searches are provided:

``nested``
    Coordinate search exploiting convexity. For fixed ``nu`` the power
    slack is nondecreasing in ``mu``; after minimizing out ``mu`` the
    protection slack is nondecreasing in ``nu``. Each 1-D search brackets
    a sign change in ``log`` space and refines it with Illinois false
    position, always returning the bracket end that is primal feasible.
``subgradient``
    Projected subgradient steps on ``(nu, mu)``.
``ellipsoid``
    Central-cut ellipsoid method in the plane.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError
from .fading import FadingEnsemble

log = logging.getLogger(__name__)

METHODS = ("nested", "subgradient", "ellipsoid")

# log-multiplier search range; exp(+-300) is far outside any useful dual value
_LOG_LIMIT = 300.0


@dataclass(frozen=True)
class SolverOptions:
    """Knobs shared by both solvers.

    ``tol`` applies to constraint residuals and complementary slackness;
    ``root_tol`` and ``root_max_iters`` to per-state fixed-point solves.
    """

    method: str = "nested"
    max_iters: int = 5000
    tol: float = 1e-6
    root_tol: float = 1e-10
    root_max_iters: int = 200
    xtol: float = 1e-7
    pclc_rule: str = "global"
    polish_max_states: int = 64

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown dual method {self.method!r}; choose from {METHODS}")
        if self.pclc_rule not in ("global", "activation"):
            raise ParameterError(f"unknown PCLC power rule {self.pclc_rule!r}")
        if self.max_iters < 1 or not self.tol > 0 or not self.root_tol > 0:
            raise ParameterError("max_iters, tol and root_tol must be positive")


@dataclass
class DualModel:
    """Problem-specific pieces plugged into a dual search.

    ``powers(nu, mu)`` maximizes the Lagrangian per state; it may return
    ``inf`` where the power is unbounded (only possible at ``mu = 0``).
    ``protect_slack(p)`` is nonnegative iff the protection constraint holds.
    ``dual_value(nu, mu, p)`` evaluates the dual function at the maximizer.
    ``protect_terms(p_sub, idx)``, if given, returns the per-state summands
    of the protection slack for states ``idx`` at powers ``p_sub``.
    """

    ens: FadingEnsemble
    power_budget: float
    powers: Callable[[float, float], np.ndarray]
    protect_slack: Callable[[np.ndarray], float]
    dual_value: Callable[[float, float, np.ndarray], float]
    mu_can_vanish: bool = True
    protect_terms: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    evaluations: int = 0

    def evaluate(self, nu: float, mu: float) -> np.ndarray:
        self.evaluations += 1
        return self.powers(nu, mu)

    def power_slack(self, p: np.ndarray) -> float:
        return self.power_budget - self.ens.mean(p)


@dataclass
class DualResult:
    nu: float
    mu: float
    p: np.ndarray
    iterations: int
    converged: bool
    notes: list = field(default_factory=list)
    # power vectors at the infeasible ends of brackets that collapsed onto a jump
    alternates: list = field(default_factory=list)


def _root_increasing(fn, x0: float, step: float, xtol: float, ftol: float, max_iter: int):
    """Sign change of a nondecreasing function, approached from the feasible side.

    ``fn(x)`` returns ``(value, payload)``. Returns ``(x, value, payload,
    iterations, ok, other)`` for the smallest bracket end with ``value >= 0``;
    ``other`` is the payload of the infeasible bracket end when the bracket
    collapsed onto a jump of ``fn`` (width below ``xtol``), otherwise None.
    """
    v0, pay0 = fn(x0)
    it = 1
    plo = None
    if 0 <= v0 <= ftol:
        return x0, v0, pay0, it, True, None
    if v0 >= 0:
        hi, fhi, phi = x0, v0, pay0
        lo = x0 - step
        flo, plo = fn(lo)
        it += 1
        while flo >= 0:
            if flo <= ftol or lo < -_LOG_LIMIT:
                # already feasible with a negligible slack, or still feasible at the floor
                return lo, flo, plo, it, flo <= ftol, None
            hi, fhi, phi = lo, flo, plo
            step *= 2.0
            lo = hi - step
            flo, plo = fn(lo)
            it += 1
    else:
        lo, flo, plo = x0, v0, pay0
        hi = x0 + step
        fhi, phi = fn(hi)
        it += 1
        while fhi < 0:
            if hi > _LOG_LIMIT:
                return hi, fhi, phi, it, False, None
            lo, flo, plo = hi, fhi, phi
            step *= 2.0
            hi = lo + step
            fhi, phi = fn(hi)
            it += 1
    if fhi <= ftol:
        return hi, fhi, phi, it, True, None
    # Illinois false position, bisecting whenever the bracket stalls
    side = 0
    width = hi - lo
    while it < max_iter:
        if hi - lo <= xtol * max(1.0, abs(hi)):
            return hi, fhi, phi, it, True, plo
        denom = fhi - flo
        x = hi - fhi * (hi - lo) / denom if denom > 0 else 0.5 * (lo + hi)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        fx, px = fn(x)
        it += 1
        if fx >= 0:
            hi, fhi, phi = x, fx, px
            if fhi <= ftol:
                return hi, fhi, phi, it, True, None
            if side == 1:
                flo *= 0.5
            side = 1
        else:
            lo, flo, plo = x, fx, px
            if side == -1:
                fhi *= 0.5
            side = -1
        if hi - lo > 0.5 * width:
            # two steps without halving: force a bisection next
            mid = 0.5 * (lo + hi)
            fm, pm = fn(mid)
            it += 1
            if fm >= 0:
                hi, fhi, phi = mid, fm, pm
                if fhi <= ftol:
                    return hi, fhi, phi, it, True, None
            else:
                lo, flo, plo = mid, fm, pm
            side = 0
        width = hi - lo
    return hi, fhi, phi, it, False, None


def _tie_refine(model: DualModel, p: np.ndarray, alt, fractional: bool = True) -> np.ndarray:
    """Move states that jumped across the final bracket towards their other maximizer.

    When the per-state maximizer is discontinuous in the multipliers, the
    sample-average slacks jump and a collapsed bracket can leave a slack of
    order ``1/n``. States whose power differs between the two bracket ends
    are ties at the limiting multipliers, so either value maximizes the
    Lagrangian. They are flipped one at a time (smallest change first)
    while both constraints stay satisfied. With ``fractional``, the first
    state that cannot be flipped whole is then moved part of the way, by
    bisection, until a constraint becomes tight; this primal recovery step
    is what closes the gap on small finite-support ensembles, at the price
    of that single state sitting between its two maximizers.
    """
    if alt is None or model.protect_terms is None:
        return p
    alt = np.asarray(alt)
    diff = np.abs(alt - p)
    cand = np.flatnonzero(np.isfinite(alt) & (diff > 1e-9 * (1.0 + p)))
    if cand.size == 0:
        return p
    w = model.ens.prob()[cand]
    d_power = -w * (alt[cand] - p[cand])
    d_protect = w * (model.protect_terms(alt[cand], cand) - model.protect_terms(p[cand], cand))
    ws, ps = model.power_slack(p), model.protect_slack(p)
    out = p.copy()
    pivot = None
    for k in np.argsort(diff[cand], kind="stable"):
        if ws + d_power[k] >= 0 and ps + d_protect[k] >= 0:
            ws += d_power[k]
            ps += d_protect[k]
            out[cand[k]] = alt[cand[k]]
        elif pivot is None and alt[cand[k]] > p[cand[k]]:
            pivot = k
    if fractional and pivot is not None:
        i = cand[pivot]
        base_t = model.protect_terms(out[i:i + 1], np.array([i]))[0]
        wi = w[pivot]

        def fits(x):
            dt = model.protect_terms(np.array([x]), np.array([i]))[0] - base_t
            return ws - wi * (x - out[i]) >= 0 and ps + wi * dt >= 0

        lo, hi = out[i], alt[i]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if fits(mid):
                lo = mid
            else:
                hi = mid
        out[i] = lo
    return out


def _inner_mu(model: DualModel, nu: float, log_mu0: float, opts: SolverOptions,
              step: float = 0.5):
    """Smallest ``mu`` meeting the power budget at multiplier ``nu``."""
    budget = model.power_budget
    ftol = 1e-3 * opts.tol * max(1.0, budget)
    if nu > 0 and model.mu_can_vanish:
        p0 = model.evaluate(nu, 0.0)
        if np.all(np.isfinite(p0)) and model.power_slack(p0) >= 0:
            return 0.0, p0, 1, True, None

    def fn(t):
        p = model.evaluate(nu, math.exp(t))
        return model.power_slack(p), p

    t, _, p, it, ok, alt = _root_increasing(fn, log_mu0, step, opts.xtol, ftol, opts.max_iters)
    return math.exp(t), p, it, ok, alt


def nested_search(model: DualModel, opts: SolverOptions, mu_free: float,
                  log_nu0: float = 0.0) -> DualResult:
    """Outer search on ``nu`` over inner searches on ``mu``.

    ``mu_free`` is the power multiplier at ``nu = 0``; the caller has
    already established that the protection constraint binds there.
    """
    ftol = 1e-3 * opts.tol
    state = {"log_mu": math.log(mu_free), "inner_ok": True, "inner_it": 0, "step": 0.5}

    def fn(s):
        nu = math.exp(s)
        mu, p, it, ok, alt = _inner_mu(model, nu, state["log_mu"], opts, state["step"])
        state["inner_it"] += it
        if mu > 0:
            # later outer iterates move mu less; start the next bracket at twice the last move
            moved = abs(math.log(mu) - state["log_mu"])
            state["step"] = min(0.5, max(1e-6, 2.0 * moved))
            state["log_mu"] = math.log(mu)
        state["inner_ok"] = state["inner_ok"] and ok
        return model.protect_slack(p), (nu, mu, p, alt)

    _, slack, (nu, mu, p, inner_alt), it, ok, outer = _root_increasing(
        fn, log_nu0, 1.0, opts.xtol, ftol, opts.max_iters)
    p = _tie_refine(model, p, inner_alt)
    if outer is not None:
        p = _tie_refine(model, p, outer[2])
    res = DualResult(nu=nu, mu=mu, p=p, iterations=it, converged=ok,
                     alternates=[x for x in (inner_alt, None if outer is None else outer[2])
                                 if x is not None])
    if not ok:
        res.notes.append("outer multiplier search did not converge")
    elif not _residual_ok(model, nu, mu, p, opts.tol):
        res.notes.append("multipliers converged onto a jump of the per-state maximizer; "
                         "the remaining slack is a finite-sample duality gap")
    if not state["inner_ok"]:
        res.notes.append("an inner power-multiplier search stopped at its iteration cap")
    return res


def _residual_ok(model: DualModel, nu, mu, p, tol):
    ps = model.protect_slack(p)
    ws = model.power_slack(p)
    feasible = ps >= -tol and ws >= -tol * max(1.0, model.power_budget)
    slack_ok = abs(nu * ps) <= tol and abs(mu * ws) <= tol * max(1.0, model.power_budget)
    return feasible and slack_ok


class _Bounds:
    """Best feasible primal (lower bound) and smallest dual value (upper bound) seen so far.

    Dual iterates rarely produce an exactly feasible power vector, so each
    one is scaled by the largest ``t`` in ``[0, 1]`` that satisfies both
    constraints (both slacks are monotone in ``t``). As the multipliers
    converge, ``t`` tends to one and the recovered primal to the optimum.
    """

    def __init__(self, model: DualModel, tol: float):
        self.model, self.tol = model, tol
        self.lower, self.upper = 0.0, math.inf
        self.best = (0.0, 0.0, np.zeros(model.ens.n))  # p = 0 is always feasible

    def _fits(self, p) -> bool:
        return self.model.protect_slack(p) >= 0 and self.model.power_slack(p) >= 0

    def _recover(self, p):
        if self._fits(p):
            return p
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self._fits(mid * p):
                lo = mid
            else:
                hi = mid
        return lo * p

    def record(self, nu, mu, p):
        """Update both bounds at a multiplier pair; returns the slacks."""
        model = self.model
        d_nu, d_mu = model.protect_slack(p), model.power_slack(p)
        self.upper = min(self.upper, model.dual_value(nu, mu, p))
        q = self._recover(p)
        val = model.ens.mean(np.log1p(model.ens.h * q))
        if val > self.lower:
            self.lower, self.best = val, (nu, mu, q)
        return d_nu, d_mu

    def closed(self) -> bool:
        return self.upper - self.lower <= self.tol * max(1.0, abs(self.upper))

    def result(self, k, converged, note):
        nu, mu, p = self.best
        return DualResult(nu, mu, p, k, converged, [] if converged else [note])


def subgradient_search(model: DualModel, opts: SolverOptions, mu_free: float,
                       mu_floor: float = 0.0) -> DualResult:
    """Normalized subgradient descent on the dual in log-multiplier space.

    The solvers only call this when the protection constraint binds, so
    both multipliers are positive at the optimum and ``(log nu, log mu)``
    is a natural scale-free parametrization (the two multipliers routinely
    differ by orders of magnitude). Steps have length ``1/sqrt(k)`` along
    the normalized gradient. The best feasible iterate is returned;
    convergence is declared when the gap between it and the smallest dual
    value closes to ``opts.tol`` (relative).
    """
    bounds = _Bounds(model, opts.tol)
    u, v = 0.0, math.log(max(mu_free, mu_floor, 1e-12))
    for k in range(1, opts.max_iters + 1):
        nu, mu = math.exp(u), max(math.exp(v), mu_floor)
        p = model.evaluate(nu, mu)
        if not np.all(np.isfinite(p)):
            v += 1.0
            continue
        d_nu, d_mu = bounds.record(nu, mu, p)
        if bounds.closed():
            return bounds.result(k, True, "")
        gu, gv = nu * d_nu, mu * d_mu
        norm = math.hypot(gu, gv)
        if norm == 0:
            return DualResult(nu, mu, p, k, True)
        step = 1.0 / math.sqrt(k) / norm
        u = min(max(u - step * gu, -_LOG_LIMIT), _LOG_LIMIT)
        v = min(max(v - step * gv, -_LOG_LIMIT), _LOG_LIMIT)
    return bounds.result(opts.max_iters, False, "subgradient iteration cap reached")


def ellipsoid_search(model: DualModel, opts: SolverOptions, mu_free: float,
                     mu_floor: float = 0.0) -> DualResult:
    """Central-cut ellipsoid method over ``(nu, mu) >= 0``.

    Cuts use the dual subgradient ``(protect_slack, power_slack)``, or the
    violated coordinate when the center leaves the orthant. The initial
    ellipsoid is a ball around ``(0, mu_free)`` large enough to hold both
    multipliers. Stops once the best feasible primal value is within
    ``opts.tol`` (relative) of the smallest dual value.
    """
    bounds = _Bounds(model, opts.tol)
    radius = 64.0 * max(1.0, mu_free)
    x = np.array([0.0, mu_free])
    A = np.eye(2) * radius**2
    for k in range(1, opts.max_iters + 1):
        nu, mu = float(x[0]), float(x[1])
        if nu < 0 or mu < mu_floor:
            gvec = np.array([-1.0, 0.0]) if nu < 0 else np.array([0.0, -1.0])
        else:
            p = model.evaluate(nu, mu)
            if not np.all(np.isfinite(p)):
                gvec = np.array([0.0, -1.0])
            else:
                d_nu, d_mu = bounds.record(nu, mu, p)
                if bounds.closed():
                    return bounds.result(k, True, "")
                # dual subgradient; the optimum lies where it points downhill
                gvec = np.array([d_nu, d_mu])
        Ag = A @ gvec
        gAg = float(gvec @ Ag)
        if not gAg > 0:
            break
        Ag /= math.sqrt(gAg)
        x = x - Ag / 3.0
        A = (4.0 / 3.0) * (A - (2.0 / 3.0) * np.outer(Ag, Ag))
    return bounds.result(opts.max_iters, False, "ellipsoid stopped before the gap closed")


def run_search(model: DualModel, opts: SolverOptions, mu_free: float,
               log_nu0: float = 0.0, mu_floor: float = 0.0) -> DualResult:
    if opts.method == "nested":
        return nested_search(model, opts, mu_free, log_nu0)
    if opts.method == "subgradient":
        return subgradient_search(model, opts, mu_free, mu_floor)
    return ellipsoid_search(model, opts, mu_free, mu_floor)
