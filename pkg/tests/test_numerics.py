import mpmath
import numpy as np
import pytest

from mmclab import DimensionError, DomainError, RngStream, make_dictionary, phi_cdf, svd_top


def phi_oracle(x: float) -> float:
    """High-precision normal CDF used as the independent reference."""
    mpmath.mp.dps = 40
    return float(0.5 * (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2))))


def test_phi_cdf_center():
    assert phi_cdf(0.0) == 0.5


@pytest.mark.parametrize("x,expected", [
    (-0.5, 0.30854),   # frozen from phi_oracle(-0.5) = 0.3085375387...
    (-1.5, 0.06681),   # frozen from phi_oracle(-1.5) = 0.0668072013...
])
def test_phi_cdf_frozen_values(x, expected):
    assert phi_cdf(x) == pytest.approx(expected, abs=5e-6)
    assert phi_cdf(x) == pytest.approx(phi_oracle(x), abs=1e-9)


def test_phi_cdf_matches_oracle_on_grid():
    for x in np.linspace(-8, 8, 161):
        assert abs(phi_cdf(float(x)) - phi_oracle(float(x))) < 1e-7


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
def test_phi_cdf_rejects_nonfinite(bad):
    with pytest.raises(DomainError):
        phi_cdf(bad)


def test_phi_cdf_monotone_and_symmetric():
    xs = np.linspace(-6, 6, 241)
    vals = [phi_cdf(float(x)) for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    for x in xs:
        assert abs(phi_cdf(float(x)) + phi_cdf(float(-x)) - 1.0) < 1e-7


def test_identity_embed_literal():
    d = make_dictionary(3, 2, "identity-embed")
    np.testing.assert_array_equal(d.matrix, [[1, 0], [0, 1], [0, 0]])


@pytest.mark.parametrize("d,l", [(8, 2), (64, 2), (64, 6)])
def test_random_orthonormal_columns(d, l):
    for seed in range(100):
        dic = make_dictionary(d, l, "random-orthonormal", RngStream(seed, 5))
        err = np.abs(dic.matrix.T @ dic.matrix - np.eye(l)).max()
        assert err < 1e-10


def test_random_dictionary_deterministic():
    a = make_dictionary(16, 3, "random-orthonormal", RngStream(7, 123))
    b = make_dictionary(16, 3, "random-orthonormal", RngStream(7, 123))
    np.testing.assert_array_equal(a.matrix, b.matrix)


def test_dictionary_dimension_error():
    with pytest.raises(DimensionError):
        make_dictionary(2, 3, "identity-embed")


def test_dictionary_unknown_kind():
    with pytest.raises(DomainError):
        make_dictionary(4, 2, "haar")


def test_svd_top_diagonal_rank1():
    top = svd_top(np.diag([2.0, 1.0]), 1)
    np.testing.assert_allclose(top.values, [2.0])
    np.testing.assert_allclose(np.abs(top.left[:, 0]), [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(top.reconstruct(), [[2, 0], [0, 0]], atol=1e-12)


def test_svd_top_full_rank_reconstruction():
    m = np.diag([2.0, 1.0])
    np.testing.assert_allclose(svd_top(m, 2).reconstruct(), m, atol=1e-12)


def test_svd_top_flags_rank_deficiency():
    g = RngStream(0, 1).generator()
    a = g.standard_normal(5)
    b = g.standard_normal(4)
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    top = svd_top(np.outer(a, b), 2)
    assert top.values[1] < 1e-10
    assert top.rank == 1


def test_svd_top_reconstruction_property():
    for seed in range(20):
        g = RngStream(seed, 2).generator()
        m = g.standard_normal((7, 5))
        rec = svd_top(m, 5).reconstruct()
        assert np.linalg.norm(m - rec) / np.linalg.norm(m) < 1e-10


@pytest.mark.parametrize("p", [0, 6])
def test_svd_top_rank_out_of_range(p):
    with pytest.raises(DimensionError):
        svd_top(np.eye(5), p)


def test_rng_stream_reproducible():
    a = RngStream(42, 7).generator().standard_normal(16)
    b = RngStream(42, 7).generator().standard_normal(16)
    np.testing.assert_array_equal(a, b)


def test_rng_streams_differ():
    a = RngStream(42, 7).generator().standard_normal(16)
    b = RngStream(42, 8).generator().standard_normal(16)
    c = RngStream(43, 7).generator().standard_normal(16)
    assert np.abs(a - b).max() > 1e-6
    assert np.abs(a - c).max() > 1e-6


def test_rng_child_streams_are_stable_and_distinct():
    base = RngStream(1, 0)
    assert base.child(3, 4) == base.child(3, 4)
    assert base.child(3) != base.child(4)
    assert base.child(3).child(4) == base.child(3, 4)
