import numpy as np
import pytest
from hypothesis import given, strategies as st

from specshare import (
    ChannelDistribution,
    FadingEnsemble,
    FadingState,
    ParameterError,
    StateError,
    load_ensemble,
    populate_effective_gains,
    sample_ensemble,
    save_ensemble,
)
from specshare.fading import CHUNK_SIZE


def test_negative_variance_rejected():
    with pytest.raises(ParameterError):
        ChannelDistribution(var_g=-0.1)


def test_zero_cross_variance_gives_zero_cross_gain():
    ens = sample_ensemble(ChannelDistribution(var_g=0.0), 500, 9)
    assert np.all(ens.g == 0)


def test_reference_sample_means(reference_dist):
    ens = sample_ensemble(reference_dist, 100_000, 0)
    assert abs(ens.f.mean() - 1.0) <= 0.02
    assert abs(ens.g.mean() - 0.5) <= 0.01


def test_sampling_is_deterministic(reference_dist):
    a = sample_ensemble(reference_dist, 20_000, 42)
    b = sample_ensemble(reference_dist, 20_000, 42)
    for name in ("f", "e", "g", "o", "cross_mag2"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.fingerprint() == b.fingerprint()


def test_prefix_is_stable_across_sizes(reference_dist):
    # chunked streams: a longer draw extends a shorter one
    a = sample_ensemble(reference_dist, CHUNK_SIZE + 17, 5)
    b = sample_ensemble(reference_dist, 3 * CHUNK_SIZE, 5)
    assert np.array_equal(a.f, b.f[: a.n])


def test_different_seeds_differ(reference_dist):
    a = sample_ensemble(reference_dist, 100, 1)
    b = sample_ensemble(reference_dist, 100, 2)
    assert not np.array_equal(a.f, b.f)


@given(st.integers(1, 3000), st.integers(0, 2**32))
def test_cross_term_respects_cauchy_schwarz(n, seed):
    ens = sample_ensemble(ChannelDistribution(), n, seed)
    assert np.all(ens.cross_mag2 <= (ens.f + ens.o) * (ens.g + ens.e) * (1 + 1e-12))
    assert ens.n == n


@pytest.mark.parametrize("e,o,q,h", [(1.0, 0.0, 10.0, 1.0), (2.0, 0.5, 2.0, 1.0), (0.0, 3.0, 7.0, 0.0)])
def test_effective_gain(e, o, q, h):
    assert FadingState(f=1.0, e=e, g=0.3, o=o, q=q).h == pytest.approx(h, rel=1e-15)


def test_effective_gain_requires_pu_powers(small_raw):
    with pytest.raises(StateError):
        populate_effective_gains(small_raw)


def test_bad_sample_arguments(reference_dist):
    with pytest.raises(ParameterError):
        sample_ensemble(reference_dist, 0, 1)
    with pytest.raises(ParameterError):
        sample_ensemble(reference_dist, 10, -1)


def test_weights_must_be_probability_vector():
    with pytest.raises(ParameterError):
        FadingEnsemble.from_gains([1.0, 2.0], 1.0, 1.0, 0.0, weights=[0.5, 0.6])


def test_weighted_mean():
    ens = FadingEnsemble.from_gains([1.0, 2.0], 1.0, 1.0, 0.0, weights=[0.25, 0.75])
    assert ens.mean([4.0, 8.0]) == pytest.approx(7.0)
    assert ens.prob().tolist() == [0.25, 0.75]


def test_save_load_round_trip(tmp_path, reference_dist):
    ens = sample_ensemble(reference_dist, 257, 11)
    path = tmp_path / "ens.txt"
    save_ensemble(ens, path)
    back = load_ensemble(path)
    assert back.seed == 11 and back.dist == reference_dist
    for name in ("f", "e", "g", "o", "cross_mag2"):
        assert np.array_equal(getattr(back, name), getattr(ens, name))


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ParameterError):
        load_ensemble(path)
