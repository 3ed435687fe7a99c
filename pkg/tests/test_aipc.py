import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specshare import (
    AipcProblem,
    DualPair,
    FadingEnsemble,
    FadingState,
    ParameterError,
    SolverOptions,
    StateError,
    UnboundedPowerError,
    aipc_power,
    aipc_powers,
    capacity_loss_bound_check,
    solve_aipc,
)

# P1 optimum of this five-state instance (gamma = 1, P = 10), computed
# independently with a conic solver and with the brute-force oracle
FIVE_STATE = dict(f=[1, 0.5, 2, 1.5, 0.8], e=[1, 2, 0.5, 1.5, 0.7], g=[0.5, 1, 0.2, 0.8, 0.1],
                  o=[0.01, 0.02, 0, 0.01, 0.05])
FIVE_STATE_OPTIMUM = 1.2051313426


def test_power_rule_hand_value():
    p = aipc_power(FadingState(f=1, e=1, g=0.5, o=0), DualPair(0.1, 0.1))
    assert p == pytest.approx(1 / 0.15 - 1, rel=1e-14)


def test_power_rule_clamps_to_zero():
    assert aipc_power(FadingState(f=1, e=0.5, g=1, o=0), DualPair(1, 1)) == 0.0


@given(st.floats(1e-3, 10), st.floats(0, 10), st.floats(1e-3, 10))
def test_no_cross_gain_is_plain_water_filling(h, nu, mu):
    p = aipc_power(FadingState(f=1, e=h, g=0, o=0), DualPair(nu, mu))
    assert p == pytest.approx(max(1 / mu - 1 / h, 0.0), rel=1e-12, abs=1e-12)


def test_unbounded_power():
    with pytest.raises(UnboundedPowerError):
        aipc_power(FadingState(f=1, e=1, g=1, o=0), DualPair(0, 0))
    with pytest.raises(ParameterError):
        DualPair(-1, 0)


def test_vectorized_rule_matches_scalar():
    rng = np.random.default_rng(0)
    h, g = rng.exponential(1, 50), rng.exponential(0.5, 50)
    vec = aipc_powers(h, g, 0.7, 0.2)
    for i in range(50):
        assert vec[i] == aipc_power(FadingState(f=1, e=h[i], g=g[i], o=0), DualPair(0.7, 0.2))


def test_requires_pu_powers():
    raw = FadingEnsemble.from_gains([1.0], 1.0, 1.0, 0.0)
    with pytest.raises(StateError):
        solve_aipc(raw, AipcProblem(1.0, 10.0))


def test_infinite_gamma_is_water_filling(small_ens):
    sol = solve_aipc(small_ens, AipcProblem(math.inf, 10.0))
    assert sol.duals.nu == 0
    assert sol.achieved_power == pytest.approx(10.0, rel=1e-9)
    level = 1 / sol.duals.mu
    assert np.allclose(sol.p, np.maximum(level - 1 / small_ens.h, 0), atol=1e-9)


def test_zero_gamma_silences_su():
    ens = FadingEnsemble.from_gains([1.0, 2.0], 1.0, [0.5, 0.2], 0.0, q=10.0)
    sol = solve_aipc(ens, AipcProblem(0.0, 10.0))
    assert np.all(sol.p == 0) and sol.c_s == 0


def test_degenerate_ensemble():
    ens = FadingEnsemble.from_gains([1.0, 2.0], 0.0, 0.5, 0.0, q=10.0)
    sol = solve_aipc(ens, AipcProblem(1.0, 10.0))
    assert sol.c_s == 0 and "degenerate" in sol.diagnostics


def test_five_state_optimum():
    ens = FadingEnsemble.from_gains(**FIVE_STATE, q=10.0, weights=np.full(5, 0.2))
    sol = solve_aipc(ens, AipcProblem(1.0, 10.0))
    assert sol.c_s == pytest.approx(FIVE_STATE_OPTIMUM, rel=1e-6)
    assert sol.residual <= 1e-6


@pytest.mark.parametrize("gamma", [0.01, 0.3, 1.0, 4.0])
def test_kkt_and_structure(small_ens, gamma):
    sol = solve_aipc(small_ens, AipcProblem(gamma, 10.0))
    assert sol.converged
    assert sol.duals.nu >= 0 and sol.duals.mu >= 0
    assert sol.residual <= 1e-6
    assert sol.protect_slack >= -1e-9 and sol.power_slack >= -1e-9
    assert abs(sol.duality_gap) <= 1e-6
    # water level 1/(nu g + mu) is nonincreasing in g
    level = 1 / (sol.duals.nu * small_ens.g + sol.duals.mu)
    order = np.argsort(small_ens.g, kind="stable")
    assert np.all(np.diff(level[order]) <= 1e-12)
    assert capacity_loss_bound_check(small_ens, sol.p, gamma).holds


def test_secondary_capacity_nondecreasing_in_gamma(small_ens):
    gammas = [0, 0.01, 0.05, 0.1, 0.3, 1, 3, 10, math.inf]
    c_s = [solve_aipc(small_ens, AipcProblem(g, 10.0)).c_s for g in gammas]
    assert all(b >= a - 1e-9 for a, b in zip(c_s, c_s[1:]))


@pytest.mark.parametrize("method", ["subgradient", "ellipsoid"])
def test_alternative_dual_methods_agree(small_ens, method):
    ref = solve_aipc(small_ens, AipcProblem(0.5, 10.0))
    alt = solve_aipc(small_ens, AipcProblem(0.5, 10.0), SolverOptions(method=method))
    assert alt.protect_slack >= 0 and alt.power_slack >= 0
    assert alt.c_s == pytest.approx(ref.c_s, rel=1e-3)
    assert alt.c_s <= ref.c_s + 1e-6
