import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fkmc import (Box, ConfigError, FunctionFamily, MCParams, Mesh, ProcessSpec, check_m1,
                  extract_subsequence, order_compactness_test)
from fkmc.compactness import covering_numbers, decay_slope, l1_distances, tail_diameters

EPS = [0.01, 0.05, 0.1]


@pytest.fixture
def mesh21():
    return Mesh.interval(0, 1, 21)


def test_envelope_violation_lists_points(mesh21, killed_bm):
    vals = np.full((21, 2), 0.5)
    vals[3, 1] = 1.5
    with pytest.raises(ConfigError, match="member 1"):
        FunctionFamily.from_values(mesh21, vals, 1.0)


def test_constant_family_image_diameter_zero(mesh21, killed_bm):
    fam = FunctionFamily.from_values(mesh21, np.full((21, 4), 0.3), 1.0, killed_bm.domain)
    rep = order_compactness_test(killed_bm, fam, 0.0, EPS, MCParams(n_paths=200, dt=1e-3))
    assert rep.image_diameter == 0.0 and rep.smoothing_ratio is None
    assert rep.chains[0.01].indices == (0, 1, 2, 3)
    assert all(rep.image_covering == 1)


def test_sine_family_images_match_oracle(killed_bm):
    mesh = Mesh.interval(0, 1, 11)
    fam = FunctionFamily.sine(mesh, 4, killed_bm.domain)
    rep = order_compactness_test(killed_bm, fam, 0.0, EPS, MCParams(n_paths=4000, dt=1e-4))
    x = mesh.points[:, 0]
    k = np.arange(1, 5)
    ref = (0.5 * x * (1 - x))[:, None] + np.sin(np.pi * np.outer(x, k)) / (k * np.pi) ** 2
    assert np.max(np.abs(rep.images - ref)) < 0.015
    assert rep.smoothing_ratio < 0.5


def test_random_indicator_family_is_smoothed(mesh21, killed_bm):
    g = np.random.default_rng(3)
    vals = (g.random((21, 8)) < 0.5).astype(float)
    fam = FunctionFamily.from_values(mesh21, vals, 1.0, killed_bm.domain)
    rep = order_compactness_test(killed_bm, fam, 0.0, EPS, MCParams(n_paths=500, dt=1e-3))
    w = mesh21.cell_volumes()
    brute = np.array([[np.sum(w * np.abs(fam.values[:, i] - fam.values[:, j])) for j in range(8)]
                      for i in range(8)])
    assert np.allclose(rep.input_distances, brute)
    assert rep.input_diameter > 0.3 and rep.smoothing_ratio < 0.5
    assert rep.image_covering[0] <= rep.input_covering[0]


def test_scale_covariance_and_permutation(mesh21, killed_bm):
    fam = FunctionFamily.sine(mesh21, 5, killed_bm.domain)
    mc = MCParams(n_paths=300, dt=1e-3)
    rep = order_compactness_test(killed_bm, fam, 0.0, EPS, mc)
    scaled = order_compactness_test(killed_bm, fam.scaled(2.5), 0.0, EPS, mc)
    assert np.isclose(scaled.smoothing_ratio, rep.smoothing_ratio, rtol=1e-12)
    assert np.isclose(scaled.image_diameter, 2.5 * rep.image_diameter, rtol=1e-12)
    order = [3, 0, 4, 1, 2]
    perm = order_compactness_test(killed_bm, fam.permuted(order), 0.0, EPS, mc)
    assert np.allclose(perm.image_distances, rep.image_distances[np.ix_(order, order)], atol=1e-15)


def test_chain_pairwise_within_eps(mesh21, killed_bm):
    fam = FunctionFamily.sine(mesh21, 20, killed_bm.domain)
    rep = order_compactness_test(killed_bm, fam, 0.0, EPS, MCParams(n_paths=300, dt=1e-3))
    for e, chain in rep.chains.items():
        idx = list(chain.indices)
        assert np.all(rep.image_distances[np.ix_(idx, idx)] <= e)
        assert extract_subsequence(rep, e).indices == chain.indices
    assert rep.chains[0.05].length >= 10


def test_two_separated_constants_give_singleton(mesh21, killed_bm):
    vals = np.stack([np.full(21, 0.0), np.full(21, 1.0)], axis=1)
    fam = FunctionFamily.from_values(mesh21, vals, 1.0, killed_bm.domain)
    rep = order_compactness_test(killed_bm, fam, 0.0, [0.01], MCParams(n_paths=200, dt=1e-3))
    chain = extract_subsequence(rep, 0.01)
    assert chain.length == 1 and chain.indices == (0,) and "no pair" in chain.diagnostic


def _metric(points):
    p = np.asarray(points, dtype=float)
    return np.abs(p[:, None] - p[None, :])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=12),
       st.lists(st.floats(0.001, 8), min_size=1, max_size=6))
def test_covering_numbers_monotone_and_one_iff_small_diameter(pts, eps):
    d = _metric(pts)
    n = covering_numbers(d, eps)
    order = np.argsort(eps, kind="stable")
    assert np.all(np.diff(n[order]) <= 0)
    for e, k in zip(eps, n):
        assert (k == 1) == (d.max() <= 2 * e)


def test_decay_slope_of_power_law():
    # ultrametric with d(k, l) = min(k, l)^-2, so delta_j = j^-2 exactly
    k = np.arange(1, 21)
    d = 1.0 / np.minimum(k[:, None], k[None, :]) ** 2.0
    np.fill_diagonal(d, 0.0)
    assert np.allclose(tail_diameters(d), 1.0 / k[:-1] ** 2.0)
    assert abs(decay_slope(d) - (-2.0)) < 1e-12


def test_weights_validation(mesh21, killed_bm):
    fam = FunctionFamily.sine(mesh21, 2, killed_bm.domain)
    with pytest.raises(ConfigError):
        order_compactness_test(killed_bm, fam, 0.0, EPS, MCParams(n_paths=10), weights=np.ones(3))
    with pytest.raises(ConfigError):
        order_compactness_test(killed_bm, fam, 0.0, [], MCParams(n_paths=10))


def test_m1_constant_family_conservative():
    spec = ProcessSpec.brownian(1)
    mesh = Mesh.interval(-1, 1, 9)
    fam = FunctionFamily.from_values(mesh, np.full((9, 3), 0.4), 1.0)
    prof = check_m1(spec, fam, [0.1, 0.01, 0.001], MCParams(n_paths=100, dt=1e-3), tol=1e-12)
    assert np.all(prof.sup_dev <= 1e-12) and prof.passed


def test_m1_sine_family_profile(killed_bm):
    mesh = Mesh.interval(0, 1, 11)
    fam = FunctionFamily.sine(mesh, 20, killed_bm.domain)
    prof = check_m1(killed_bm, fam, [0.1, 0.01, 1e-4], MCParams(n_paths=400, dt=1e-4), tol=0.2)
    inner = prof.sup_dev[:, 2:-2]
    # deviation shrinks as t decreases at interior points
    assert np.all(inner[2] < inner[0])
    assert prof.to_dict()["times"] == [0.1, 0.01, 1e-4]


def test_m1_smooth_function_matches_heat_semigroup():
    spec = ProcessSpec.brownian(1)
    mesh = Mesh.from_points([[0.3]])

    def u(x):
        return (0.5 + 0.25 * np.sin(3 * x[:, 0]))[:, None]
    base = FunctionFamily.from_values(mesh, u(mesh.points), 1.0)
    fam = FunctionFamily(base.members, base.envelope, u)
    ts = [0.04, 0.01]
    prof = check_m1(spec, fam, ts, MCParams(n_paths=20000, dt=1e-3), tol=1.0)
    # p_t u - u = (exp(-9t/2) - 1)(u - 1/2) for this u
    exact = np.abs(np.expm1(-4.5 * np.asarray(ts)) * 0.25 * np.sin(0.9))
    assert np.all(np.abs(prof.sup_dev[:, 0] - exact) < 4 * prof.stderr[:, 0] + 1e-3)
    # modulus-of-continuity bound: |p_t u - u| <= Lip(u) E|W_t| = 0.75 sqrt(2t/pi)
    bound = 0.75 * np.sqrt(2 * np.asarray(ts) / np.pi)
    assert np.all(prof.sup_dev[:, 0] <= bound + 3 * prof.stderr[:, 0])
