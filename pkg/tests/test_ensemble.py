import numpy as np
import pytest

from fkmc import (Box, ConfigError, MCParams, PathEnsemble, ProcessSpec, debut_time, exit_time,
                  hitting_time, restrict_to_part, run_paths, simulate_ensemble)
from fkmc.stream import CENSORED, KILLED


@pytest.fixture
def ens(killed_bm):
    return simulate_ensemble(killed_bm, [0.5], MCParams(n_paths=3000, dt=1e-3))


def test_mean_exit_time_matches_x_one_minus_x(ens):
    # E_x tau = x(1 - x) for (1/2) Laplacian on (0, 1); grid monitoring overshoots by
    # about 0.5826 sqrt(dt) at each end, which lengthens the interval.
    d = 0.5826 * np.sqrt(1e-3)
    ref = (0.5 + d) ** 2
    se = ens.lifetime.std() / np.sqrt(ens.n_paths)
    assert ens.exited.all()
    assert abs(ens.lifetime.mean() - ref) < 4 * se


def test_stream_and_stored_paths_agree(killed_bm):
    mc = MCParams(n_paths=500, dt=1e-3, seed=77)
    ens = simulate_ensemble(killed_bm, [0.3], mc, index=4)
    out = run_paths(killed_bm, [[0.3]], mc, indices=[4], integrand=lambda x: x[:, 0] ** 2)
    stored = np.bincount(ens.path_index, weights=np.where(ens.alive_mask() & (
        np.arange(len(ens.times)) < np.repeat(ens.offsets[1:] - 1, ens.lengths)),
        ens.states[:, 0] ** 2 * mc.dt, 0.0), minlength=mc.n_paths)
    assert np.allclose(out.integrals[0, :, 0, 0], stored, rtol=1e-12, atol=1e-15)
    assert np.allclose(out.end_time[0], ens.lifetime, rtol=0, atol=1e-12)
    assert np.all(out.reason[0] == KILLED)


def test_conservative_lifetime_infinite_and_censored():
    spec = ProcessSpec.brownian(1)
    ens = simulate_ensemble(spec, [0.0], MCParams(n_paths=20, dt=0.1, horizon=1.0))
    assert np.all(np.isinf(ens.lifetime)) and not ens.exited.any()
    assert np.all(ens.lengths == 11)
    assert np.all(ens.exit_flag == "censored_at_horizon")


def test_start_outside_domain_rejected(killed_bm):
    with pytest.raises(ConfigError):
        simulate_ensemble(killed_bm, [1.5], MCParams(n_paths=5))


def test_dump_load_round_trip(ens, tmp_path):
    p = tmp_path / "e.fke"
    ens.dump(p)
    back = PathEnsemble.load(p)
    assert back.same_paths(ens)
    assert (back.n_paths, back.dt, back.horizon, back.seed) == (ens.n_paths, ens.dt, ens.horizon,
                                                               ens.seed)
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(ConfigError):
        PathEnsemble.load(p)


def test_exit_time_of_domain_equals_lifetime(ens):
    tau = exit_time(ens, Box([0.0], [1.0]))
    assert np.array_equal(tau.values, ens.lifetime)


def test_stopping_time_order(ens):
    B = Box([0.6], [0.9])
    sigma = hitting_time(ens, B)
    debut = debut_time(ens, B)
    assert np.all(debut.values <= sigma.values)
    assert np.all(sigma.values[~sigma.censored] > 0)


def test_zero_time_rules():
    spec = ProcessSpec.brownian(1, domain=Box([-10.0], [10.0]))
    ens = simulate_ensemble(spec, [0.0], MCParams(n_paths=200, dt=1e-4, horizon=0.01))
    sigma = hitting_time(ens, Box([-1.0], [1.0]))
    assert np.all(sigma.values == 0.0)  # start deep inside B, next step still in B
    tau = exit_time(ens, Box([2.0], [3.0]))
    assert np.all(tau.values == 0.0)  # start outside the closure, next step outside


def test_restriction_kills_at_debut_and_is_idempotent(ens):
    B = Box([0.2], [0.8])
    part = restrict_to_part(ens, B)
    out_b = exit_time(ens, B)
    assert np.allclose(part.lifetime, np.minimum(out_b.values, ens.lifetime))
    again = restrict_to_part(part, B)
    assert again.same_paths(part)
    assert np.all(part.lifetime <= ens.lifetime)


def test_streaming_censoring_flag():
    spec = ProcessSpec.brownian(1)
    out = run_paths(spec, [[0.0]], MCParams(n_paths=10, dt=0.1, horizon=1.0))
    assert np.all(out.reason == CENSORED)
    assert np.allclose(out.end_time, 1.0)
