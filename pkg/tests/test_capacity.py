import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specshare import (
    ConsistencyError,
    FadingEnsemble,
    ParameterError,
    StateError,
    capacity_loss_bound_check,
    mac_rate_bounds,
    primary_capacity,
    primary_capacity_max,
    secondary_capacity,
)


def one(f=1.0, e=1.0, g=1.0, o=0.0, q=3.0, cross=0.0):
    return FadingEnsemble.from_gains([f], e, g, o, cross_mag2=[cross], q=[q])


def test_primary_capacity_hand_value():
    assert primary_capacity(one(), [1.0]) == pytest.approx(math.log(2.5), rel=1e-15)


def test_primary_capacity_max_hand_value():
    assert primary_capacity_max(one()) == pytest.approx(math.log(4.0), rel=1e-15)


def test_silent_pu():
    ens = FadingEnsemble.from_gains([1.0, 2.0], 1.0, 1.0, 0.0, q=0.0)
    assert primary_capacity(ens, [1.0, 5.0]) == 0.0
    assert primary_capacity_max(ens) == 0.0


def test_secondary_capacity_hand_values():
    ens = FadingEnsemble.from_gains([1.0], 2.0, 1.0, 0.0, q=[0.0])
    assert secondary_capacity(ens, [0.5]) == pytest.approx(math.log(2.0), rel=1e-15)
    ens = FadingEnsemble.from_gains([1.0], 1.0, 1.0, 0.0, q=[0.0])
    assert secondary_capacity(ens, [math.e - 1.0]) == pytest.approx(1.0, rel=1e-15)


def test_zero_power_gives_max(small_ens):
    p = np.zeros(small_ens.n)
    assert primary_capacity(small_ens, p) == primary_capacity_max(small_ens)
    assert secondary_capacity(small_ens, p) == 0.0


def test_argument_checks(small_ens):
    with pytest.raises(ParameterError):
        secondary_capacity(small_ens, np.ones(3))
    with pytest.raises(ParameterError):
        secondary_capacity(small_ens, -np.ones(small_ens.n))
    raw = FadingEnsemble.from_gains([1.0], 1.0, 1.0, 0.0)
    with pytest.raises(StateError):
        primary_capacity(raw, [0.0])


@given(st.floats(0.0, 50.0), st.integers(0, 10_000))
def test_interference_never_helps(scale, seed):
    from specshare import ChannelDistribution, sample_ensemble
    from specshare.pu_policy import apply_pu_policy, make_pu_policy

    raw = sample_ensemble(ChannelDistribution(), 200, seed)
    ens = apply_pu_policy(raw, make_pu_policy(raw, "wf", 10.0))
    p = np.random.default_rng(seed).exponential(1.0, ens.n) * scale
    assert primary_capacity(ens, p) <= primary_capacity_max(ens)


def test_loss_bound_trivial_cases(small_ens):
    assert capacity_loss_bound_check(small_ens, np.zeros(small_ens.n), 0.7).holds
    # gamma = 0 allows power only where g = 0, so both sides vanish
    p = np.where(small_ens.g == 0, 1.0, 0.0)
    chk = capacity_loss_bound_check(small_ens, p, 0.0)
    assert chk.holds and chk.loss == 0.0 and chk.bound == 0.0


def test_loss_bound_precondition_flagged(small_ens):
    chk = capacity_loss_bound_check(small_ens, np.full(small_ens.n, 100.0), 0.1)
    assert not chk.precondition_met and not chk.holds


def test_mac_bounds_orthogonal_single_state():
    # f + o = 1, g + e = 1, no cross term: det = (1 + q)(1 + p)
    ens = FadingEnsemble.from_gains([1.0], 0.5, 0.5, 0.0, cross_mag2=[0.0], q=[1.0])
    b = mac_rate_bounds(ens, [1.0])
    assert b.sum_bound == pytest.approx(math.log(4.0), rel=1e-15)
    assert b.pu_bound == pytest.approx(math.log(2.0), rel=1e-15)
    assert b.su_bound == pytest.approx(math.log(2.0), rel=1e-15)


def test_mac_bounds_silent_su(small_ens):
    b = mac_rate_bounds(small_ens, np.zeros(small_ens.n))
    assert b.su_bound == 0.0
    assert b.sum_bound == pytest.approx(b.pu_bound, rel=1e-14)
    assert b.pu_bound == pytest.approx(small_ens.mean(np.log1p(small_ens.q * (small_ens.f + small_ens.o))))


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 5), st.floats(0.01, 5))
def test_mac_parallel_channels_lose_sum_rate(np_, ns, q, p):
    ens = FadingEnsemble.from_gains([np_], ns, 0.0, 0.0, cross_mag2=[np_ * ns], q=[q])
    b = mac_rate_bounds(ens, [p])
    assert b.sum_bound < b.pu_bound + b.su_bound
    assert b.sum_bound >= max(b.pu_bound, b.su_bound) - 1e-12


def test_mac_rejects_corrupted_cross_term():
    ens = FadingEnsemble.from_gains([1.0], 1.0, 1.0, 0.0, cross_mag2=[5.0], q=[1.0])
    with pytest.raises(ConsistencyError):
        mac_rate_bounds(ens, [1.0])


@given(st.integers(0, 2**31), st.floats(1e-4, 1e3), st.floats(0.0, 1.0), st.sampled_from(["cp", "wf"]))
def test_loss_bound_for_any_feasible_powers(seed, gamma, fill, pu):
    from specshare import ChannelDistribution, sample_ensemble
    from specshare.pu_policy import apply_pu_policy, make_pu_policy

    raw = sample_ensemble(ChannelDistribution(), 300, seed % 1000)
    ens = apply_pu_policy(raw, make_pu_policy(raw, pu, 10.0))
    rng = np.random.default_rng(seed)
    p = rng.exponential(1.0, ens.n) * (rng.random(ens.n) < rng.random())
    interference = ens.mean(ens.g * p)
    if interference > 0:
        p *= fill * gamma / interference
    chk = capacity_loss_bound_check(ens, p, gamma)
    assert chk.precondition_met
    assert chk.loss <= chk.bound + 1e-9
