import math
import warnings

import numpy as np
import pytest

from fkmc import (Box, CensoringWarning, ConfigError, GridFunction, MCParams, Mesh, ProcessSpec,
                  check_dynkin_split, check_resolvent_identity, hitting_operator, killed_resolvent,
                  resolvent_apply, semigroup_apply)


def sin_pi(x):
    return np.sin(np.pi * x[:, 0])


def test_semigroup_time_zero_is_identity(killed_bm, mesh11, small_mc):
    est = semigroup_apply(killed_bm, sin_pi, 0.0, small_mc, points=mesh11)
    x = mesh11.points[:, 0]
    assert np.array_equal(est.mean[:, 0], np.where((x > 0) & (x < 1), np.sin(np.pi * x), 0.0))


def test_heat_semigroup_oracle(killed_bm, mesh11):
    # p_t sin(pi x) = exp(-pi^2 t / 2) sin(pi x) for the killed semigroup
    t = 0.1
    est = semigroup_apply(killed_bm, sin_pi, t, MCParams(n_paths=4000, dt=1e-4), points=mesh11)
    ref = np.exp(-np.pi**2 * t / 2) * np.sin(np.pi * mesh11.points[:, 0])
    assert np.all(np.abs(est.mean[:, 0] - ref) <= 4 * est.stderr[:, 0] + 0.01)


def test_resolvent_of_constant_on_conservative_process():
    spec = ProcessSpec.brownian(1)
    est = resolvent_apply(spec, 3.0, 2.0, MCParams(n_paths=10, dt=0.01, horizon=10.0),
                          points=[[0.0], [1.0]])
    # exact up to the left-endpoint sum: dt * sum_k exp(-alpha k dt)
    ref = 3.0 * 0.01 * (1 - math.exp(-2.0 * 10.0)) / (1 - math.exp(-2.0 * 0.01))
    assert np.allclose(est.mean, ref, rtol=1e-9)
    assert est.tail_ok


def test_alpha_zero_needs_killing():
    with pytest.raises(ConfigError):
        resolvent_apply(ProcessSpec.brownian(1), 1.0, 0.0, MCParams(), points=[[0.0]])


def test_resolvent_poisson_oracle(killed_bm, mesh11):
    est = resolvent_apply(killed_bm, 1.0, 0.0, MCParams(n_paths=4000, dt=1e-4), points=mesh11)
    x = mesh11.points[:, 0]
    assert np.max(np.abs(est.mean[:, 0] - x * (1 - x))) < 0.02


def test_resolvent_of_zero_is_zero(killed_bm, mesh11, small_mc):
    est = resolvent_apply(killed_bm, 0.0, 0.0, small_mc, points=mesh11)
    assert np.all(est.mean == 0) and np.all(est.stderr == 0)


def test_points_outside_closure_rejected(killed_bm, small_mc):
    with pytest.raises(ConfigError):
        resolvent_apply(killed_bm, 1.0, 0.0, small_mc, points=[[1.5]])


def test_censoring_warning_short_horizon(killed_bm, mesh11):
    with pytest.warns(CensoringWarning):
        est = resolvent_apply(killed_bm, 1.0, 0.0, MCParams(n_paths=200, dt=1e-3, horizon=0.05),
                              points=mesh11)
    assert not est.tail_ok and est.censored_fraction.max() > 0.5


def test_linearity_on_shared_ensemble(killed_bm, mesh11, small_mc):
    a = resolvent_apply(killed_bm, sin_pi, 1.0, small_mc, points=mesh11).mean
    b = resolvent_apply(killed_bm, 1.0, 1.0, small_mc, points=mesh11).mean
    c = resolvent_apply(killed_bm, lambda x: 2 * sin_pi(x) - 1.0, 1.0, small_mc, points=mesh11).mean
    assert np.allclose(c, 2 * a - b, atol=1e-12)


def test_killed_resolvent_matches_smaller_interval(mesh11):
    # killing on hitting [0.5, inf) from (0, 1) is the interval (0, 0.5)
    spec = ProcessSpec.brownian(1, domain=Box([0.0], [1.0]))
    pts = [[0.1], [0.25], [0.4]]
    est = killed_resolvent(spec, 1.0, Box([0.5], [np.inf]), 0.0, MCParams(n_paths=4000, dt=1e-4),
                           points=pts)
    x = np.array(pts)[:, 0]
    assert np.max(np.abs(est.mean[:, 0] - x * (0.5 - x))) < 0.01


def test_hitting_operator_gamblers_ruin():
    spec = ProcessSpec.brownian(1, domain=Box([0.0], [1.0]))
    est = hitting_operator(spec, 1.0, Box([0.75], [np.inf]), 0.0, MCParams(n_paths=4000, dt=1e-4),
                           points=[[0.25], [0.5]])
    assert np.all(np.abs(est.mean[:, 0] - np.array([1 / 3, 2 / 3])) < 0.04)


def test_resolvent_identity_passes_and_is_exact_for_equal_parameters(killed_bm, mesh11, small_mc):
    rep = check_resolvent_identity(killed_bm, 1.0, 1.0, 2.0, small_mc, mesh11)
    assert rep.passed
    same = check_resolvent_identity(killed_bm, 1.0, 1.5, 1.5, small_mc, mesh11)
    assert same.sup_residual == 0.0


def test_resolvent_identity_far_apart_parameters(killed_bm, mesh11):
    mc = MCParams(n_paths=2000, dt=1e-3)
    good = check_resolvent_identity(killed_bm, 1.0, 1.0, 20.0, mc, mesh11)
    assert good.passed and good.sup_residual < 0.01


def test_dynkin_split_passes(killed_bm, mesh11, small_mc):
    rep = check_dynkin_split(killed_bm, 1.0, Box([0.25], [0.75]), 0.0, small_mc, mesh11)
    assert rep.passed, rep.to_dict()


def test_operator_csv_columns(killed_bm, tmp_path, small_mc):
    est = resolvent_apply(killed_bm, 1.0, 0.0, small_mc.replace(n_paths=50), points=[[0.5]])
    p = tmp_path / "e.csv"
    est.to_csv(p)
    assert p.read_text().splitlines()[0] == "x_1,component,mean,stderr,n_paths,alpha_or_t"
