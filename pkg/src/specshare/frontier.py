"""Capacity frontiers: sweep a protection level and record ``(C_p, C_s)``.

All curves of one comparison are traced on a single shared ensemble, so
the differences between them are policy effects rather than sampling
noise.
"""

from __future__ import annotations

import enum
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from ._dual import SolverOptions
from .aipc import AipcProblem, PolicySolution, solve_aipc
from .capacity import mac_rate_bounds
from .errors import ParameterError, RangeError
from .fading import ChannelDistribution, FadingEnsemble, sample_ensemble
from .pclc import PclcProblem, RootStats, solve_pclc
from .pu_policy import PolicyKind, apply_pu_policy, make_pu_policy

__all__ = [
    "ConstraintKind",
    "FrontierPoint",
    "SweepConfig",
    "build_ensemble",
    "trace_frontier",
    "compare_at_loss",
    "monotonicity_violations",
    "dominance_violations",
    "parse_levels",
    "format_csv",
    "write_csv",
    "run_metadata",
    "CSV_HEADER",
    "cli_main",
]

CSV_HEADER = ("kind", "level", "c_p", "c_s", "converged", "residuals")


class ConstraintKind(str, enum.Enum):
    AIPC = "aipc"
    PCLC = "pclc"
    AIPC_LOWER_BOUND = "aipc_lower_bound"


@dataclass(frozen=True)
class FrontierPoint:
    """One point of a frontier.

    ``level`` is ``gamma`` for the AIPC curves and ``C_delta`` (nats) for
    PCLC. ``residual`` is the solver's largest complementary-slackness or
    infeasibility residual. For the lower-bound curve ``c_p`` is the value
    ``C_p^max - log(1 + gamma)`` (floored at zero) rather than a measurement.
    ``mac_inside`` records whether the measured pair lies inside the MAC
    rate bounds at the solved powers (None for the lower-bound curve).
    """

    kind: ConstraintKind
    level: float
    c_p: float
    c_s: float
    converged: bool = True
    residual: float = 0.0
    c_p_max: float = math.nan
    mac_inside: Optional[bool] = None


@dataclass(frozen=True)
class SweepConfig:
    """Everything that determines a frontier.

    With ``loss_fraction_levels`` set, PCLC levels are read as fractions of
    ``C_p^max`` (0.05 for a 5% loss) and converted to nats on the ensemble.
    """

    dist: ChannelDistribution = ChannelDistribution()
    n: int = 100_000
    seed: int = 0
    pu: str = "cp"
    pu_budget: float = 10.0
    su_budget: float = 10.0
    levels: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    kind: ConstraintKind = ConstraintKind.PCLC
    loss_fraction_levels: bool = False
    calib_tol: float = 1e-8
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        object.__setattr__(self, "pu", PolicyKind(self.pu).value)
        levels = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)
        if self.n < 1:
            raise ParameterError("n must be at least 1")
        if not levels:
            raise ParameterError("at least one level is required")
        if any(not (x >= 0) for x in levels):
            raise ParameterError("levels must be nonnegative")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ParameterError("levels must be strictly increasing")
        if self.seed < 0:
            raise ParameterError("seed must be a nonnegative integer")

    def canonical(self) -> dict:
        """Plain-data view used for hashing and metadata."""
        d = asdict(self)
        d["kind"] = self.kind.value
        d["levels"] = [repr(x) for x in self.levels]
        return d

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def build_ensemble(cfg: SweepConfig) -> FadingEnsemble:
    """Sample the shared ensemble and apply the configured PU policy."""
    ens = sample_ensemble(cfg.dist, cfg.n, cfg.seed)
    return apply_pu_policy(ens, make_pu_policy(ens, cfg.pu, cfg.pu_budget, cfg.calib_tol))


def _point(kind: ConstraintKind, level: float, ens: FadingEnsemble, cfg: SweepConfig,
           stats: Optional[RootStats]) -> FrontierPoint:
    if kind is ConstraintKind.PCLC:
        c_delta = level * _c_p_max(ens) if cfg.loss_fraction_levels else level
        prob = PclcProblem.for_ensemble(ens, c_delta, cfg.su_budget)
        local = RootStats()
        sol = solve_pclc(ens, prob, cfg.solver, local)
        if stats is not None:
            stats.merge(local)
        return _from_solution(kind, level, sol, sol.c_p, ens)
    sol = solve_aipc(ens, AipcProblem(level, cfg.su_budget), cfg.solver)
    if kind is ConstraintKind.AIPC:
        return _from_solution(kind, level, sol, sol.c_p, ens)
    bound = max(0.0, sol.c_p_max - math.log1p(level))
    return _from_solution(kind, level, sol, bound, None)


def _from_solution(kind, level, sol: PolicySolution, c_p: float,
                   ens: Optional[FadingEnsemble]) -> FrontierPoint:
    inside = None if ens is None else mac_rate_bounds(ens, sol.p).contains(sol.c_p, sol.c_s)
    return FrontierPoint(kind=kind, level=level, c_p=float(c_p), c_s=float(sol.c_s),
                         converged=bool(sol.converged), residual=float(sol.residual),
                         c_p_max=float(sol.c_p_max), mac_inside=inside)


def _c_p_max(ens: FadingEnsemble) -> float:
    return ens.mean(np.log1p(ens.signal))


def trace_frontier(cfg: SweepConfig, ens: Optional[FadingEnsemble] = None,
                   kind: Optional[ConstraintKind] = None, workers: int = 1,
                   stats: Optional[RootStats] = None) -> list:
    """Solve one policy at every level of ``cfg`` on a shared ensemble.

    Parameters
    ----------
    cfg : SweepConfig
        Sweep definition.
    ens : FadingEnsemble, optional
        Ensemble to reuse; built from ``cfg`` when omitted. Pass the same
        ensemble to several calls to compare policies.
    kind : ConstraintKind, optional
        Overrides ``cfg.kind``.
    workers : int
        Levels solved concurrently; output order follows the levels.
    stats : RootStats, optional
        Collects PCLC root-finder diagnostics across all levels.

    Returns
    -------
    list of FrontierPoint
        One point per level. A level whose solve hits its iteration cap is
        kept with ``converged=False``.
    """
    kind = cfg.kind if kind is None else ConstraintKind(kind)
    ens = build_ensemble(cfg) if ens is None else ens
    if workers < 1:
        raise ParameterError("workers must be positive")
    if workers == 1:
        return [_point(kind, lv, ens, cfg, stats) for lv in cfg.levels]
    per_level = [RootStats() for _ in cfg.levels]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        points = list(pool.map(lambda i: _point(kind, cfg.levels[i], ens, cfg, per_level[i]),
                               range(len(cfg.levels))))
    if stats is not None:
        for s in per_level:
            stats.merge(s)
    return points


def _curve(points: Sequence[FrontierPoint]):
    """Sorted ``(c_p, c_s)`` arrays with duplicate ``c_p`` values merged (max ``c_s``)."""
    c_p = np.array([pt.c_p for pt in points], dtype=np.float64)
    c_s = np.array([pt.c_s for pt in points], dtype=np.float64)
    order = np.lexsort((c_s, c_p))
    c_p, c_s = c_p[order], c_s[order]
    keep = np.append(c_p[1:] != c_p[:-1], True)
    return c_p[keep], c_s[keep]


def interpolate_c_s(points: Sequence[FrontierPoint], c_p: float) -> float:
    """Piecewise-linear ``c_s`` of a curve at PU rate ``c_p``."""
    xs, ys = _curve(points)
    if not xs[0] <= c_p <= xs[-1]:
        raise RangeError(f"c_p = {c_p:.6g} is outside the curve's span [{xs[0]:.6g}, {xs[-1]:.6g}]")
    return float(np.interp(c_p, xs, ys))


def compare_at_loss(points_a: Sequence[FrontierPoint], points_b: Sequence[FrontierPoint],
                    loss_fraction: float, c_p_max: Optional[float] = None) -> float:
    """Relative ``c_s`` gain of curve ``a`` over curve ``b`` at a given PU loss.

    The target is ``c_p = (1 - loss_fraction) * C_p^max``; ``C_p^max`` is
    taken from the points unless given. Raises :class:`RangeError` if either
    curve does not reach the target.
    """
    if not 0 <= loss_fraction <= 1:
        raise ParameterError("loss_fraction must lie in [0, 1]")
    if not points_a or not points_b:
        raise ParameterError("both curves need at least one point")
    if c_p_max is None:
        c_p_max = points_a[0].c_p_max
        if not math.isfinite(c_p_max):
            raise ParameterError("points carry no C_p^max; pass c_p_max explicitly")
    target = (1.0 - loss_fraction) * c_p_max
    a = interpolate_c_s(points_a, target)
    b = interpolate_c_s(points_b, target)
    if b == 0:
        raise RangeError("reference curve has c_s = 0 at the target; the gain is undefined")
    return (a - b) / b


def monotonicity_violations(points: Sequence[FrontierPoint], tol: float = 1e-4) -> list:
    """Adjacent level pairs where ``c_s`` drops or ``c_p`` rises by more than ``tol``."""
    bad = []
    for a, b in zip(points, points[1:]):
        if b.c_s < a.c_s - tol or b.c_p > a.c_p + tol:
            bad.append((a.level, b.level))
    return bad


def dominance_violations(pclc: Sequence[FrontierPoint], aipc: Sequence[FrontierPoint],
                         tol: float = 1e-4) -> list:
    """``(c_p, c_s_pclc, c_s_aipc)`` wherever the PCLC curve falls below AIPC by more than ``tol``.

    Both curves are piecewise linear, so their difference is checked at the
    union of their nodes inside the overlap of the two ``c_p`` spans, which
    covers every common ``c_p`` value.
    """
    xa, ya = _curve(pclc)
    xb, yb = _curve(aipc)
    lo, hi = max(xa[0], xb[0]), min(xa[-1], xb[-1])
    nodes = np.union1d(xa, xb)
    nodes = nodes[(nodes >= lo) & (nodes <= hi)]
    bad = []
    for x in nodes:
        sa, sb = float(np.interp(x, xa, ya)), float(np.interp(x, xb, yb))
        if sa < sb - tol:
            bad.append((float(x), sa, sb))
    return bad


def parse_levels(text: str) -> tuple:
    """``"start:step:stop"`` (inclusive) or a comma list such as ``"0,0.5,inf"``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"level range must be start:step:stop, got {text!r}")
        start, step, stop = (float(x) for x in parts)
        if not step > 0 or stop < start:
            raise ParameterError("level range needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        # round to kill accumulated binary noise (0.30000000000000004 and friends)
        return tuple(float(np.round(start + i * step, 12)) for i in range(count))
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ParameterError(f"malformed level list {text!r}") from exc


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def format_csv(points: Iterable[FrontierPoint]) -> str:
    """CSV text with 12 significant digits; identical inputs give identical bytes."""
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for pt in points:
        row = (pt.kind.value, _fmt(pt.level), _fmt(pt.c_p), _fmt(pt.c_s),
               "true" if pt.converged else "false", _fmt(pt.residual))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_csv(points: Iterable[FrontierPoint], path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(format_csv(points))


def run_metadata(cfg: SweepConfig, **extra) -> dict:
    meta = {"seed": cfg.seed, "n": cfg.n, "config_hash": cfg.digest(), "version": __version__}
    meta.update(extra)
    return meta


def cli_main(argv=None) -> int:
    """Entry point of the ``specshare`` command; see :mod:`specshare.cli`."""
    from .cli import main

    return main(argv)
