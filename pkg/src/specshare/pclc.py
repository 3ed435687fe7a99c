"""SU power control under a primary capacity loss constraint (PCLC).

Maximizes ``E[log(1 + h p)]`` subject to ``C_p^max - C_p <= C_delta`` and
``E[p] <= P``. With ``a = f q`` the received PU signal power, the optimal
power at multipliers ``(nu, mu)`` solves the self-biased water-filling
equation::

    z = 1 / (lam(z) nu g + mu) - 1 / h,
    lam(z) = a / ((1 + g z) (1 + g z + a))

Only the product ``a = f q`` enters, never ``f`` alone.

Per-state root finding
----------------------
Writing ``G(z) = F(z) - z - 1/h`` with ``F(z) = 1 / (lam(z) nu g + mu)``,
``G > 0`` exactly where the per-state Lagrangian

    L(z) = log(1 + h z) + nu log(1 + a / (1 + g z)) - mu z

is increasing. Clearing denominators, ``-G`` has the sign of a cubic
``R(z)`` with positive leading coefficient, and every positive root lies
below ``1/mu`` because ``F <= 1/mu``. The PU term of ``L`` is convex in
``z``, so ``L`` need not be concave and ``G`` can cross zero up to three
times. The two turning points of ``R`` split ``[0, 1/mu]`` into pieces on
which ``R`` is monotone; each piece where ``G`` changes sign from + to -
holds one local maximum of ``L``, found by Newton steps on ``R``
safeguarded by bisection. The returned power is the argmax of ``L`` over
zero and those local maxima. States with more than one candidate are
counted in :class:`RootStats` and logged.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from . import _dual
from ._dual import SolverOptions
from .aipc import DualPair, PolicySolution, make_solution, water_fill_su
from .capacity import primary_capacity, secondary_capacity
from .errors import ParameterError, StateError, UnboundedPowerError
from .fading import FadingEnsemble, FadingState

log = logging.getLogger(__name__)

__all__ = [
    "PclcProblem",
    "SelfBiasTerm",
    "RootStats",
    "lambda_factor",
    "pclc_power",
    "pclc_powers",
    "solve_pclc",
]

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class PclcProblem:
    """Loss threshold, SU budget and the PU reference rate of one ensemble.

    Build it with :meth:`for_ensemble` or :meth:`from_loss_fraction` so that
    ``c_p_max`` and the ensemble fingerprint are taken from the ensemble the
    solver will see.
    """

    c_delta: float
    power_budget: float
    c_p_max: float
    fingerprint: Optional[str] = None

    def __post_init__(self):
        if not self.c_delta >= 0:
            raise ParameterError("c_delta must be nonnegative")
        if not (self.power_budget > 0 and math.isfinite(self.power_budget)):
            raise ParameterError("power_budget must be a positive real")
        if not self.c_p_max >= 0:
            raise ParameterError("c_p_max must be nonnegative")

    @property
    def c0(self) -> float:
        """Minimum PU ergodic rate the SU must leave intact."""
        return max(0.0, self.c_p_max - self.c_delta)

    @classmethod
    def for_ensemble(cls, ens: FadingEnsemble, c_delta: float, power_budget: float):
        if not ens.q_populated:
            raise StateError("apply a PU policy before building a PCLC problem")
        c_p_max = ens.mean(np.log1p(ens.signal))
        return cls(c_delta, power_budget, c_p_max, ens.fingerprint())

    @classmethod
    def from_loss_fraction(cls, ens: FadingEnsemble, fraction: float, power_budget: float):
        """Threshold given as a fraction of ``C_p^max`` (0.05 for a 5% loss)."""
        if not 0 <= fraction:
            raise ParameterError("loss fraction must be nonnegative")
        c_p_max = ens.mean(np.log1p(ens.signal))
        return cls(fraction * c_p_max, power_budget, c_p_max, ens.fingerprint())


@dataclass(frozen=True)
class SelfBiasTerm:
    value: float


@dataclass
class RootStats:
    """Running diagnostics of the per-state root finder."""

    calls: int = 0
    positive: int = 0
    max_residual: float = 0.0
    multi_root: int = 0
    off_activation: int = 0
    unresolved: int = 0

    def merge(self, other: "RootStats"):
        self.calls += other.calls
        self.positive += other.positive
        self.max_residual = max(self.max_residual, other.max_residual)
        self.multi_root += other.multi_root
        self.off_activation += other.off_activation
        self.unresolved += other.unresolved


def _lam(z, g, a):
    u = 1.0 + g * z
    return a / (u * (u + a))


def lambda_factor(state: FadingState, p: float) -> SelfBiasTerm:
    """Self-bias factor ``f q / ((1 + g p)(1 + g p + f q))``."""
    if not p >= 0:
        raise ParameterError("power must be nonnegative")
    return SelfBiasTerm(float(_lam(p, state.g, state.f * state.q)))


def fixed_point_residual(z, h, g, a, nu, mu):
    """``G(z) = 1/(lam(z) nu g + mu) - z - 1/h``; zero at a stationary power."""
    return 1.0 / (_lam(z, g, a) * nu * g + mu) - z - 1.0 / h


def _lagrangian(z, h, g, a, nu, mu):
    return np.log1p(h * z) + nu * np.log1p(a / (1.0 + g * z)) - mu * z


def _cubic(h, g, a, nu, mu):
    """Coefficients of ``R`` with ``sign(R) = -sign(G)`` on ``z >= 0``."""
    c3 = h * mu * g * g
    c2 = mu * g * g + h * mu * g * (2.0 + a) - h * g * g
    c1 = mu * g * (2.0 + a) + h * mu * (1.0 + a) + h * nu * g * a - h * g * (2.0 + a)
    c0 = mu * (1.0 + a) + nu * g * a - h * (1.0 + a)
    return c3, c2, c1, c0


def _turning_points(c3, c2, c1):
    """Roots of ``R'``; both zero where ``R`` is monotone."""
    disc = c2 * c2 - 3.0 * c3 * c1
    real = disc > 0
    sq = np.sqrt(np.where(real, disc, 0.0))
    qq = -(c2 + np.copysign(sq, c2))
    with np.errstate(divide="ignore", invalid="ignore"):
        x1 = qq / (3.0 * c3)
        x2 = np.where(qq != 0, c1 / qq, x1)
    r1 = np.where(real, np.minimum(x1, x2), 0.0)
    r2 = np.where(real, np.maximum(x1, x2), 0.0)
    return r1, r2


def _root_estimate(c3, c2, c1, c0, largest: bool):
    """Closed-form estimate of the smallest or largest real root of the cubic.

    Trigonometric form when all three roots are real, Cardano otherwise.
    Only used to start Newton: cancellation can make it inaccurate, and
    :func:`_bracketed_root` discards estimates outside the bracket.
    """
    with np.errstate(all="ignore"):
        b, c, d = c2 / c3, c1 / c3, c0 / c3
        p = c - b * b / 3.0
        q = (2.0 * b * b / 27.0 - c / 3.0) * b + d
        disc = 0.25 * q * q + (p / 3.0) ** 3
        s = np.sqrt(np.maximum(disc, 0.0))
        one = np.cbrt(-0.5 * q + s) + np.cbrt(-0.5 * q - s)
        m = 2.0 * np.sqrt(np.maximum(-p / 3.0, 0.0))
        theta = np.arccos(np.clip(3.0 * q / (p * m), -1.0, 1.0)) / 3.0
        three = m * np.cos(theta if largest else theta + 2.0 * np.pi / 3.0)
        return np.where(disc > 0, one, three) - b / 3.0


def _bracketed_root(lo, hi, coeffs, max_iter, guess=None):
    """Root of an increasing cubic on ``[lo, hi]`` with ``R(lo) < 0 < R(hi)``."""
    c3, c2, c1, c0 = coeffs
    lo, hi = lo.copy(), hi.copy()
    z = 0.5 * (lo + hi)
    if guess is not None:
        z = np.where((guess > lo) & (guess < hi), guess, z)
    active = np.arange(z.size)
    for _ in range(max_iter):
        if active.size == 0:
            break
        zz = z[active]
        a3, a2, a1, a0 = c3[active], c2[active], c1[active], c0[active]
        R = ((a3 * zz + a2) * zz + a1) * zz + a0
        dR = (3.0 * a3 * zz + 2.0 * a2) * zz + a1
        neg = R < 0
        l = np.where(neg, zz, lo[active])
        u = np.where(neg, hi[active], zz)
        with np.errstate(divide="ignore", invalid="ignore"):
            zn = zz - R / dR
        bad = ~((zn > l) & (zn < u))
        zn = np.where(bad, 0.5 * (l + u), zn)
        scale = np.maximum(np.abs(zn), np.finfo(np.float64).tiny)
        done = (R == 0) | (np.abs(zn - zz) <= 4 * _EPS * scale) | (u - l <= 4 * _EPS * scale)
        zn = np.where(R == 0, zz, zn)
        lo[active], hi[active], z[active] = l, u, zn
        active = active[~done]
    return z, lo, hi


def _polish(z, lo, hi, h, g, a, nu, mu, root_tol, max_iter):
    """Bisection on ``G`` for roots whose residual still exceeds ``root_tol``."""
    res = np.abs(fixed_point_residual(z, h, g, a, nu, mu))
    todo = np.nonzero(res > root_tol)[0]
    if todo.size == 0:
        return z, res
    # widen the cubic's bracket by a few ulps; G keeps its sign pattern there
    l = np.maximum(lo[todo] * (1 - 8 * _EPS), 0.0)
    u = hi[todo] * (1 + 8 * _EPS)
    hh, gg, aa = h[todo], g[todo], a[todo]
    best = z[todo].copy()
    best_res = res[todo].copy()
    for _ in range(max_iter):
        m = 0.5 * (l + u)
        gm = fixed_point_residual(m, hh, gg, aa, nu, mu)
        better = np.abs(gm) < best_res
        best = np.where(better, m, best)
        best_res = np.where(better, np.abs(gm), best_res)
        pos = gm > 0
        l = np.where(pos, m, l)
        u = np.where(pos, u, m)
        if np.all((best_res <= root_tol) | (u - l <= 2 * _EPS * u)):
            break
    z = z.copy()
    z[todo] = best
    res[todo] = best_res
    return z, res


RULES = ("global", "activation")


def pclc_powers(h, g, a, nu: float, mu: float, root_tol: float = 1e-10,
                max_iter: int = 200, stats: Optional[RootStats] = None,
                rule: str = "global") -> np.ndarray:
    """Optimal PCLC powers for all states at fixed multipliers.

    Parameters
    ----------
    h, g, a : array_like
        Effective SU gain, SU-to-PU cross gain and received PU signal power
        ``f q`` per state.
    nu, mu : float
        Multipliers of the loss and power constraints; ``mu`` must be
        positive.
    root_tol : float
        Target for ``|G(z)|`` at every positive power.
    stats : RootStats, optional
        Accumulates residuals and multi-root counts.
    rule : {"global", "activation"}
        ``"global"`` returns the maximizer of the per-state Lagrangian.
        ``"activation"`` applies the zero-power test ``G(0) <= 0`` first and
        otherwise returns the smallest positive root; it agrees with
        ``"global"`` wherever the Lagrangian has a single local maximum.
    """
    if rule not in RULES:
        raise ParameterError(f"unknown rule {rule!r}; choose from {RULES}")
    if not mu > 0:
        raise UnboundedPowerError("mu must be positive: the root bracket [0, 1/mu] is unbounded")
    if not nu >= 0:
        raise ParameterError("nu must be nonnegative")
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    n = h.size
    zmax = 1.0 / mu
    with np.errstate(divide="ignore"):
        plain = zmax - 1.0 / h
    p = np.where(plain > 0, plain, 0.0)

    # states where the bias term matters and a positive power is possible (F <= 1/mu)
    idx = np.nonzero((nu * g * a > 0) & (h > mu))[0]
    st = RootStats(calls=n)
    if idx.size:
        hh, gg, aa = h[idx], g[idx], a[idx]
        coeffs = _cubic(hh, gg, aa, nu, mu)
        c3, c2, c1, c0 = coeffs
        r1, r2 = _turning_points(c3, c2, c1)
        # every root lies below the plain water-filling power, since F <= 1/mu
        top = np.minimum(zmax, plain[idx])
        r1 = np.clip(r1, 0.0, top)
        r2 = np.clip(r2, 0.0, top)
        best = np.zeros(idx.size)
        best_l = _lagrangian(0.0, hh, gg, aa, nu, mu)
        zero_is_max = c0 > 0  # G(0) < 0
        n_max = zero_is_max.astype(int)
        for lo_b, hi_b, largest in ((np.zeros(idx.size), r1, False), (r2, top, True)):
            r_lo = ((c3 * lo_b + c2) * lo_b + c1) * lo_b + c0
            r_hi = ((c3 * hi_b + c2) * hi_b + c1) * hi_b + c0
            sel = np.nonzero((hi_b > lo_b) & (r_lo < 0) & (r_hi > 0))[0]
            # the last interval ends at the plain water-filling power, where R >= 0
            # holds exactly; when rounding gives R <= 0 there, the root is that end
            edge = np.nonzero((hi_b > lo_b) & (r_lo < 0) & (r_hi <= 0))[0] if largest else sel[:0]
            if sel.size == 0 and edge.size == 0:
                continue
            sub = tuple(c[sel] for c in coeffs)
            guess = _root_estimate(*sub, largest)
            z, lo, hi = _bracketed_root(lo_b[sel], hi_b[sel], sub, max_iter, guess)
            z, res = _polish(z, lo, hi, hh[sel], gg[sel], aa[sel], nu, mu, root_tol, max_iter)
            if edge.size:
                ze = hi_b[edge]
                re = np.abs(fixed_point_residual(ze, hh[edge], gg[edge], aa[edge], nu, mu))
                sel, z, res = np.concatenate((sel, edge)), np.concatenate((z, ze)), np.concatenate((res, re))
            lz = _lagrangian(z, hh[sel], gg[sel], aa[sel], nu, mu)
            n_max[sel] += 1
            if rule == "activation":
                take = ~zero_is_max[sel] & (best[sel] == 0)
            else:
                take = lz > best_l[sel]
            best[sel[take]] = z[take]
            best_l[sel[take]] = lz[take]
            st.max_residual = max(st.max_residual, float(res[take].max(initial=0.0)))
            st.unresolved += int(np.count_nonzero(take & (res > root_tol)))
        p[idx] = best
        multi = n_max > 1
        st.multi_root = int(np.count_nonzero(multi))
        st.off_activation = int(np.count_nonzero((best > 0) & zero_is_max))
        if st.multi_root:
            log.debug("%d of %d states have several local maxima at nu=%.6g mu=%.6g",
                      st.multi_root, n, nu, mu)
    st.positive = int(np.count_nonzero(p > 0))
    if stats is not None:
        stats.merge(st)
    return p


def pclc_power(state: FadingState, duals: DualPair, root_tol: float = 1e-10,
               max_iter: int = 200, rule: str = "global") -> float:
    """Optimal PCLC power for a single state (see :func:`pclc_powers`)."""
    if not duals.mu > 0:
        raise UnboundedPowerError("mu must be positive: the root bracket [0, 1/mu] is unbounded")
    p = pclc_powers(np.array([state.h]), np.array([state.g]), np.array([state.f * state.q]),
                    duals.nu, duals.mu, root_tol, max_iter, rule=rule)
    return float(p[0])


def activation_mismatches(ens: FadingEnsemble, p, nu: float, mu: float) -> int:
    """States where ``p > 0`` disagrees with ``a/(1+a) nu g + mu < h``."""
    a = ens.signal
    active = (a / (1.0 + a)) * nu * ens.g + mu < ens.h
    return int(np.count_nonzero(active != (np.asarray(p) > 0)))


def solve_pclc(ens: FadingEnsemble, prob: PclcProblem, opts: SolverOptions = SolverOptions(),
               stats: Optional[RootStats] = None) -> PolicySolution:
    """Maximize the SU ergodic capacity under the PCLC and the SU power budget.

    The dual problem has zero gap for continuous fading, so the multipliers
    are found by a dual search (see :mod:`specshare._dual`) whose inner step
    is :func:`pclc_powers`. ``stats`` collects root-finder diagnostics over
    every evaluation made during the solve.
    """
    if not ens.q_populated:
        raise StateError("ensemble has no PU powers; apply a PU policy first")
    if prob.fingerprint is not None and prob.fingerprint != ens.fingerprint():
        raise ParameterError("PclcProblem was built for a different ensemble or PU policy")
    P, c0 = prob.power_budget, prob.c0
    a = ens.signal
    stats = RootStats() if stats is None else stats
    diagnostics = {}

    def build(p, nu, mu, it, converged):
        c_p = primary_capacity(ens, p)
        if math.isfinite(nu):
            lag = np.log1p(ens.h * p) + nu * np.log1p(a / (1.0 + ens.g * p)) - mu * p
        else:
            lag = 0.0
        sol = make_solution("pclc", ens, p, nu, mu, it, converged, c_p - c0, P, lag,
                            -nu * c0 + mu * P, prob.c_p_max, diagnostics)
        if math.isfinite(nu) and mu > 0:
            diagnostics["activation_mismatches"] = activation_mismatches(ens, p, nu, mu)
        diagnostics.update(root_calls=stats.calls, root_positive=stats.positive,
                           root_max_residual=stats.max_residual, multi_root=stats.multi_root,
                           root_unresolved=stats.unresolved)
        return sol

    if not np.any((ens.h > 0) & (ens.prob() > 0)):
        diagnostics["degenerate"] = "all effective SU gains are zero"
        return build(np.zeros(ens.n), 0.0, 0.0, 0, True)

    if prob.c_delta == 0:
        # zero loss: no SU power wherever it would reach an active PU receiver
        p, mu = water_fill_su(ens, P, mask=(a * ens.g) == 0)
        diagnostics["note"] = "zero loss threshold; SU confined to states with f*q*g = 0"
        return build(p, math.inf, 0.0 if math.isinf(mu) else mu, 0, True)

    p0, mu0 = water_fill_su(ens, P)
    if primary_capacity(ens, p0) >= c0:
        return build(p0, 0.0, mu0, 0, True)

    model = _dual.DualModel(
        ens=ens,
        power_budget=P,
        powers=lambda nu, mu: pclc_powers(ens.h, ens.g, a, nu, mu, opts.root_tol,
                                          opts.root_max_iters, stats, opts.pclc_rule),
        protect_slack=lambda p: primary_capacity(ens, p) - c0,
        protect_terms=lambda p, idx: np.log1p(a[idx] / (1.0 + ens.g[idx] * p)),
        dual_value=lambda nu, mu, p: ens.mean(
            np.log1p(ens.h * p) + nu * np.log1p(a / (1.0 + ens.g * p)) - mu * p)
        - nu * c0 + mu * P,
        mu_can_vanish=False,
    )
    res = _dual.run_search(model, opts, mu0, log_nu0=0.0, mu_floor=1e-12 * mu0)
    diagnostics["evaluations"] = model.evaluations
    if res.notes:
        diagnostics["notes"] = "; ".join(res.notes)
    p = res.p
    if ens.n <= opts.polish_max_states and not _dual._residual_ok(model, res.nu, res.mu, p,
                                                                   opts.tol):
        p = _primal_polish(ens, a, c0, P, [p] + res.alternates + _concentrated_starts(ens, a, c0, P))
        diagnostics["primal_polish_gain"] = secondary_capacity(ens, p) - secondary_capacity(ens, res.p)
    return build(p, res.nu, res.mu, res.iterations, res.converged)


def _feasible(ens, a, c0, P, p) -> bool:
    return (bool(np.all(p >= 0)) and ens.mean(p) <= P
            and ens.mean(np.log1p(a / (1.0 + ens.g * p))) >= c0)


def _shrink_to_feasible(ens, a, c0, P, p):
    """Largest ``t p`` with ``t`` in [0, 1] meeting both constraints exactly."""
    p = np.clip(p, 0.0, None)
    if _feasible(ens, a, c0, P, p):
        return p
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _feasible(ens, a, c0, P, mid * p):
            lo = mid
        else:
            hi = mid
    return lo * p


def _concentrated_starts(ens, a, c0, P):
    """One start per state putting all SU power there, up to that state's own limits.

    The loss summand is convex in the SU power, so silencing the PU in a
    rare state costs at most ``w log(1 + f q)``; optima that concentrate
    power in such a state are far from any Lagrangian maximizer.
    """
    w, g = ens.prob(), ens.g
    c_delta = ens.mean(np.log1p(a)) - c0
    starts = []
    for i in np.flatnonzero((ens.h > 0) & (w > 0)):
        cap = P / w[i]
        r = c_delta / w[i]
        if a[i] * g[i] > 0 and r < math.log1p(a[i]):
            cap = min(cap, (a[i] / math.expm1(math.log1p(a[i]) - r) - 1.0) / g[i])
        x = np.zeros(ens.n)
        x[i] = max(cap, 0.0)
        starts.append(x)
    return starts


def _primal_polish(ens, a, c0, P, starts):
    """Local primal refinement for small ensembles where the dual bound is not tight.

    On a finite-support distribution the loss constraint is genuinely
    non-convex and the dual optimum can sit on a jump of the per-state
    maximizer, leaving a duality gap. Starting from the dual solution and
    from the other ends of any collapsed brackets, SLSQP looks for a better
    KKT point; the best exactly feasible vector is kept. Concentrated
    starts (see :func:`_concentrated_starts`) cover the far basins. This
    is a multi-start local method: it cannot certify global optimality.
    """
    w, h, g = ens.prob(), ens.h, ens.g
    cons = [
        {"type": "ineq", "fun": lambda p: P - np.sum(w * p), "jac": lambda p: -w},
        {"type": "ineq", "fun": lambda p: np.sum(w * np.log1p(a / (1.0 + g * p))) - c0,
         "jac": lambda p: -w * a * g / ((1.0 + g * p) * (1.0 + g * p + a))},
    ]
    with np.errstate(divide="ignore"):
        ub = np.where(h > 0, P / w, 0.0)
    best = _shrink_to_feasible(ens, a, c0, P, starts[0])
    best_val = secondary_capacity(ens, best)
    for x0 in starts:
        x0 = _shrink_to_feasible(ens, a, c0, P, np.minimum(x0, ub))
        with warnings.catch_warnings():
            # SLSQP clips its own steps back into the bounds and warns about it
            warnings.simplefilter("ignore", RuntimeWarning)
            out = optimize.minimize(lambda p: -np.sum(w * np.log1p(h * p)), x0,
                                    jac=lambda p: -w * h / (1.0 + h * p),
                                    bounds=list(zip(np.zeros_like(ub), ub)), constraints=cons,
                                    method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
        for cand in (x0, _shrink_to_feasible(ens, a, c0, P, np.minimum(out.x, ub))):
            v = secondary_capacity(ens, cand)
            if v > best_val:
                best, best_val = cand, v
    return best
