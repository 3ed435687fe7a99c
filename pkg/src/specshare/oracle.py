"""Brute-force reference solvers for tiny finite-support fading distributions.

These make no use of the solvers' duality or fixed points: for up to
four states the power vector is searched directly on a grid, with only
the last state's power filled in from its closed-form feasibility limit. They are slow by
design and meant for cross-checking :func:`solve_aipc` and
:func:`solve_pclc`.

Search
------
Each free coordinate ``p_i`` gets the grid ``{0} U logspace(ub_i * 1e-7, ub_i)``
where ``ub_i`` is the largest power the state can carry on its own. The
grid is exhaustive, so it locates the global basin even when the feasible
set is not convex. Its best few cells are then polished with SLSQP and
scaled back onto the feasible set, which removes the grid-step error.
Ties go to the lowest flat grid index, so results are deterministic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .aipc import AipcProblem
from .errors import ParameterError, ResourceError
from .fading import ChannelDistribution, FadingEnsemble
from .pclc import PclcProblem
from .pu_policy import apply_pu_policy, make_pu_policy

__all__ = [
    "MAX_DISCRETE_STATES",
    "DiscreteEnsemble",
    "OracleGrid",
    "OracleResult",
    "random_discrete_ensemble",
    "brute_force_p1",
    "brute_force_p2",
]

MAX_DISCRETE_STATES = 8
MAX_PRIMAL_STATES = 4


@dataclass
class DiscreteEnsemble(FadingEnsemble):
    """A fading distribution with at most eight weighted states.

    Uniform weights are filled in when none are given.
    """

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.full(np.size(self.f), 1.0 / max(np.size(self.f), 1))
        super().__post_init__()
        if self.n > MAX_DISCRETE_STATES:
            raise ParameterError(f"a discrete ensemble holds at most {MAX_DISCRETE_STATES} states")


@dataclass(frozen=True)
class OracleGrid:
    """Resolution of the brute-force search.

    ``points`` grid values per free coordinate of the primal grid, whose
    ``keep`` best cells seed a local SLSQP polish (``polish``). The
    multiplier grid used for larger instances is zoomed ``rounds`` times
    with ``zoom_points`` values per axis. ``max_cells`` caps any single grid.
    """

    points: int = 80
    rounds: int = 12
    zoom_points: int = 9
    keep: int = 8
    max_cells: int = 20_000_000
    polish: bool = True

    def __post_init__(self):
        if self.points < 3 or self.zoom_points < 3 or self.rounds < 0 or self.keep < 1:
            raise ParameterError("oracle grid needs points, zoom_points >= 3, rounds >= 0, keep >= 1")


@dataclass(frozen=True)
class OracleResult:
    objective: float
    p: np.ndarray
    cells: int
    method: str
    step: float  # relative spacing of the coarse grid that seeded the result


def random_discrete_ensemble(rng: np.random.Generator, n_states: int,
                             dist: ChannelDistribution = ChannelDistribution(),
                             pu: str = "cp", pu_budget: float = 10.0) -> DiscreteEnsemble:
    """Random finite-support instance: exponential gains, Dirichlet weights."""
    if not 1 <= n_states <= MAX_DISCRETE_STATES:
        raise ParameterError(f"n_states must be in [1, {MAX_DISCRETE_STATES}]")
    f, e, g, o = (rng.exponential(v, n_states) for v in dist.as_tuple())
    w = rng.dirichlet(np.ones(n_states))
    # the Cauchy-Schwarz bound is the only constraint on the cross term
    cross = rng.uniform(0, 1, n_states) * (f + o) * (g + e)
    ens = DiscreteEnsemble.from_gains(f, e, g, o, cross, weights=w)
    return apply_pu_policy(ens, make_pu_policy(ens, pu, pu_budget))


def _check(ens: FadingEnsemble):
    if not ens.q_populated:
        raise ParameterError("apply a PU policy before calling the oracle")
    if ens.n > MAX_DISCRETE_STATES:
        raise ParameterError(f"oracle instances hold at most {MAX_DISCRETE_STATES} states")


def _axis(ub: float, points: int) -> np.ndarray:
    if not ub > 0:
        return np.zeros(1)
    return np.concatenate(([0.0], np.geomspace(ub * 1e-7, ub, points - 1)))


def _cells(axes) -> int:
    return math.prod(len(a) for a in axes)


class _PrimalSearch:
    """Grid search over ``p[:-1]`` with ``p[-1]`` set by a closed-form rule.

    ``last(rest_terms, rest_power)`` returns the best last-state power (or
    NaN where infeasible) given the partial sums of the constraint terms.
    """

    def __init__(self, ens, objective_terms, constraint_terms, last, grid: OracleGrid):
        self.w = ens.prob()
        self.obj = objective_terms
        self.con = constraint_terms
        self.last = last
        self.grid = grid
        self.cells = 0

    def evaluate(self, axes):
        k = len(axes)
        if _cells(axes) > self.grid.max_cells:
            raise ResourceError(f"oracle grid of {_cells(axes)} cells exceeds the budget "
                                f"of {self.grid.max_cells}")
        self.cells += _cells(axes)
        mesh = np.meshgrid(*axes, indexing="ij") if k else []
        cols = [m.ravel() for m in mesh]
        size = cols[0].size if cols else 1
        rest_obj = np.zeros(size)
        rest_con = np.zeros(size)
        rest_pow = np.zeros(size)
        for i, c in enumerate(cols):
            rest_obj += self.w[i] * self.obj(i, c)
            rest_con += self.w[i] * self.con(i, c)
            rest_pow += self.w[i] * c
        p_last = self.last(rest_con, rest_pow)
        ok = np.isfinite(p_last)
        val = np.where(ok, rest_obj + self.w[-1] * self.obj(k, np.where(ok, p_last, 0.0)), -np.inf)
        return cols, p_last, val

    def candidates(self, ub: np.ndarray):
        """Best ``keep`` grid points, each as a full power vector."""
        axes = [_axis(u, self.grid.points) for u in ub[:-1]]
        cols, p_last, val = self.evaluate(axes)
        if not np.any(np.isfinite(val)):
            raise ParameterError("no feasible grid point; the instance is infeasible")
        order = np.argsort(-val, kind="stable")[: self.grid.keep]
        return [np.array([c[j] for c in cols] + [p_last[j]]) for j in order if np.isfinite(val[j])]


class _Problem:
    """Separable objective ``sum w u_i(p_i)`` under two separable constraints.

    ``terms(p)`` is the per-state protection summand and ``floor`` its
    required minimum, i.e. feasibility is ``sum w terms(p) >= floor`` and
    ``sum w p <= P``. Both summands are nonincreasing in every ``p_i``.
    """

    def __init__(self, w, h, P, terms, dterms, floor):
        self.w, self.h, self.P = w, h, P
        self.terms, self.dterms, self.floor = terms, dterms, floor

    def objective(self, p):
        return float(np.sum(self.w * np.log1p(self.h * p)))

    def feasible(self, p) -> bool:
        return (bool(np.all(p >= 0)) and float(np.sum(self.w * p)) <= self.P
                and float(np.sum(self.w * self.terms(p))) >= self.floor)

    def project(self, p):
        """Largest ``t * p`` with ``t`` in [0, 1] that is exactly feasible."""
        p = np.clip(p, 0.0, None)
        if self.feasible(p):
            return p
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.feasible(mid * p):
                lo = mid
            else:
                hi = mid
        return lo * p

    def polish(self, p0, ub):
        """Local refinement with SLSQP, projected back onto the feasible set."""
        w, h = self.w, self.h
        bounds = [(0.0, float(u)) for u in ub]
        cons = [
            {"type": "ineq", "fun": lambda p: self.P - np.sum(w * p), "jac": lambda p: -w},
            {"type": "ineq", "fun": lambda p: np.sum(w * self.terms(p)) - self.floor,
             "jac": lambda p: w * self.dterms(p)},
        ]
        with warnings.catch_warnings():
            # SLSQP clips its own steps back into the bounds and warns about it
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(lambda p: -np.sum(w * np.log1p(h * p)), p0,
                                    jac=lambda p: -w * h / (1.0 + h * p), bounds=bounds,
                                    constraints=cons, method="SLSQP",
                                    options={"ftol": 1e-15, "maxiter": 500})
        return self.project(np.minimum(res.x, ub))


def _best(problem: _Problem, candidates, ub, polish: bool):
    best_val, best_p = -np.inf, None
    for p in candidates:
        p = problem.project(p)
        for q in ([p, problem.polish(p, ub)] if polish else [p]):
            v = problem.objective(q)
            if v > best_val:
                best_val, best_p = v, q
    return best_val, best_p


def _objective(h):
    return lambda i, p: np.log1p(h[i] * p)


def _step(grid: OracleGrid) -> float:
    return 1e7 ** (1.0 / (grid.points - 2)) - 1.0


def _aipc_problem(ens, prob: AipcProblem) -> _Problem:
    w, g = ens.prob(), ens.g
    if math.isfinite(prob.gamma):
        return _Problem(w, ens.h, prob.power_budget, lambda p: -g * p, lambda p: -g, -prob.gamma)
    return _Problem(w, ens.h, prob.power_budget, lambda p: np.zeros_like(p),
                    lambda p: np.zeros_like(p), 0.0)


def brute_force_p1(ens: FadingEnsemble, prob: AipcProblem,
                   grid: OracleGrid = OracleGrid()) -> OracleResult:
    """Reference optimum of the AIPC problem on a finite-support ensemble.

    Up to four states are searched on a primal grid. Larger instances use
    a dense grid over the multipliers ``(nu, mu)`` instead, where each grid
    point's power vector is the water-filling maximizer and the best
    feasible one wins. Either way the best candidates are then polished
    locally (see :class:`OracleGrid`).
    """
    _check(ens)
    w, h, g = ens.prob(), ens.h, ens.g
    P, gamma = prob.power_budget, prob.gamma
    problem = _aipc_problem(ens, prob)
    with np.errstate(divide="ignore", invalid="ignore"):
        ub = np.minimum(P / w, np.where(g > 0, gamma / (w * g), np.inf))
    ub = np.where(h > 0, ub, 0.0)
    if ens.n > MAX_PRIMAL_STATES:
        cands, cells = _dual_grid_p1(ens, prob, grid)
        val, p = _best(problem, cands, ub, grid.polish)
        return OracleResult(val, p, cells, "dual-grid", _step(grid))
    wn, gn, hn = w[-1], g[-1], h[-1]

    def last(rest_con, rest_pow):
        # rest_con holds sum w*g*p over the gridded states
        room = (P - rest_pow) / wn
        if gn > 0 and math.isfinite(gamma):
            room = np.minimum(room, (gamma - rest_con) / (wn * gn))
        room = np.where(room >= 0, room, np.nan)
        return np.where(np.isnan(room), np.nan, room if hn > 0 else 0.0)

    search = _PrimalSearch(ens, _objective(h), lambda i, p: g[i] * p, last, grid)
    val, p = _best(problem, search.candidates(ub), ub, grid.polish)
    return OracleResult(val, p, search.cells, "primal-grid", _step(grid))


def _dual_grid_p1(ens, prob, grid: OracleGrid):
    """Best feasible water-filling vectors over a zoomed ``(nu, mu)`` grid."""
    w, h, g = ens.prob(), ens.h, ens.g
    P, gamma = prob.power_budget, prob.gamma
    m = max(grid.points * 4, 64)
    nus = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, m)))
    mus = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, m)))
    cells = 0
    cands = []
    for _ in range(grid.rounds + 1):
        if nus.size * mus.size * ens.n > grid.max_cells:
            raise ResourceError("dual grid exceeds the oracle cell budget")
        cells += nus.size * mus.size
        den = nus[:, None, None] * g + mus[None, :, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = np.clip(1.0 / den - 1.0 / h, 0.0, None)
        pw = np.where(h > 0, pw, 0.0)
        finite = np.all(np.isfinite(pw), axis=2)
        pw = np.where(finite[..., None], pw, 0.0)
        feas = finite & (np.sum(w * pw, axis=2) <= P)
        if math.isfinite(gamma):
            feas &= np.sum(w * g * pw, axis=2) <= gamma
        obj = np.where(feas, np.sum(w * np.log1p(h * pw), axis=2), -np.inf)
        j = np.unravel_index(int(np.argmax(obj)), obj.shape)
        if np.isfinite(obj[j]):
            cands.append(pw[j].copy())
        nus = _refine_axis(nus, j[0], grid.zoom_points * 4)
        mus = _refine_axis(mus, j[1], grid.zoom_points * 4)
    if not cands:
        cands.append(np.zeros(ens.n))
    return cands[-grid.keep:], cells


def _refine_axis(a, i, points):
    lo, hi = a[max(i - 1, 0)], a[min(i + 1, a.size - 1)]
    return np.unique(np.concatenate((np.linspace(lo, hi, points), [a[i]])))


def brute_force_p2(ens: FadingEnsemble, prob: PclcProblem,
                   grid: OracleGrid = OracleGrid()) -> OracleResult:
    """Reference optimum of the PCLC problem on up to four states.

    Feasibility is checked in the form ``E[log(1 + f q / (1 + g p))] >= C_0``
    directly on each grid point; no multipliers are involved. The problem
    is not convex, so several grid cells seed the local polish.
    """
    _check(ens)
    if ens.n > MAX_PRIMAL_STATES:
        raise ParameterError(f"the PCLC oracle handles at most {MAX_PRIMAL_STATES} states")
    w, h, g, a = ens.prob(), ens.h, ens.g, ens.signal
    P, c0 = prob.power_budget, prob.c0
    # the slack is measured against the ensemble's own C_p^max so p = 0 stays feasible
    floor = float(np.sum(w * np.log1p(a))) - prob.c_delta if prob.c_delta < prob.c_p_max else 0.0
    floor = min(floor, c0)
    wn, gn, hn, an = w[-1], g[-1], h[-1], a[-1]
    # single-state limits: the PU term of state i may drop by at most C_delta / w_i
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = prob.c_delta / w
        lim = np.where((a * g > 0) & (r < np.log1p(a)),
                       (a / np.expm1(np.log1p(a) - r) - 1.0) / g, np.inf)
    ub = np.where(h > 0, np.minimum(P / w, lim), 0.0)

    def last(rest_con, rest_pow):
        room = (P - rest_pow) / wn
        if an * gn > 0:
            need = (floor - rest_con) / wn
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                cap = np.where(need <= 0, np.inf, (an / np.expm1(need) - 1.0) / gn)
            room = np.minimum(room, cap)
        else:
            room = np.where(rest_con + wn * math.log1p(an) >= floor, room, -1.0)
        room = np.where(room >= 0, room, np.nan)
        return np.where(np.isnan(room), np.nan, room if hn > 0 else 0.0)

    terms = (lambda p: np.log1p(a / (1.0 + g * p)))
    dterms = (lambda p: -a * g / ((1.0 + g * p) * (1.0 + g * p + a)))
    problem = _Problem(w, h, P, terms, dterms, floor)
    search = _PrimalSearch(ens, _objective(h),
                           lambda i, p: np.log1p(a[i] / (1.0 + g[i] * p)), last, grid)
    val, p = _best(problem, search.candidates(ub), ub, grid.polish)
    return OracleResult(val, p, search.cells, "primal-grid", _step(grid))
