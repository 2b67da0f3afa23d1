import numpy as np
import pytest

from fkmc import ConfigError
from fkmc.config import build, load_document, parse_mesh, parse_nonlinearity, parse_process
from fkmc.fields import field_from_record

X = np.array([[0.0], [0.25], [0.5]])


def test_field_records():
    assert np.allclose(field_from_record(2)(X), 2.0)
    assert np.allclose(field_from_record({"constant": -1})(X), -1.0)
    assert np.allclose(field_from_record({"polynomial": {"coeffs": [1, 0, 2]}})(X),
                       1 + 2 * X[:, 0] ** 2)
    assert np.allclose(field_from_record({"sine": {"amplitude": 3, "mode": 2}})(X),
                       3 * np.sin(2 * np.pi * X[:, 0]))
    rec = {"product": [{"preset": "sin-pi"}, {"sum": [1, {"cosine": {}}]}]}
    assert np.allclose(field_from_record(rec)(X),
                       np.sin(np.pi * X[:, 0]) * (1 + np.cos(np.pi * X[:, 0])))


@pytest.mark.parametrize("rec", [{"nope": 1}, {"preset": "missing"}, {"a": 1, "b": 2},
                                 {"polynomial": [1, 2]}, {"sum": []}, "text"])
def test_bad_field_records(rec):
    with pytest.raises(ConfigError):
        field_from_record(rec)


def test_unknown_keys_named():
    with pytest.raises(ConfigError, match="unknown key 'n_path'"):
        build({"command": "solve", "mc": {"n_path": 10}})
    with pytest.raises(ConfigError, match="unknown top-level key"):
        build({"command": "solve", "solver": {}})


@pytest.mark.parametrize("doc,msg", [
    ({"command": "fly"}, "command"),
    ({"command": "solve", "seed": -1}, "seed"),
    ({"command": "solve", "mc": {"n_paths": 0}}, "mc.n_paths"),
    ({"command": "solve", "mc": {"dt": "fast"}}, "mc.dt"),
    ({"command": "solve", "mc": {"n_paths": 1.5}}, "integer"),
    ({"command": "solve", "entry_params": {"rhs": 1}}, "entry_params"),
    ({"command": "solve", "entry": "nowhere"}, "unknown catalog entry"),
])
def test_field_errors(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        build(doc)


def test_process_records():
    s = parse_process({"kind": "brownian", "dimension": 2,
                       "domain": {"box": {"lo": [0, 0], "hi": [1, 1]}}})
    assert s.dimension == 2 and s.domain is not None
    s = parse_process({"kind": "ornstein_uhlenbeck", "drift": [[-1, 0], [0, -2]],
                       "noise": [[1, 1], [1, 1]]})
    assert s.dimension == 2
    with pytest.raises(ConfigError, match="process.alpha"):
        parse_process({"kind": "alpha_stable"})
    with pytest.raises(ConfigError, match="process.kind"):
        parse_process({"kind": "levy"})


def test_nonlinearity_records():
    F = parse_nonlinearity({"linear": -2.0})
    y = np.array([[1.0], [-3.0]])
    assert np.allclose(F(X[:2], y), -2 * y) and F.monotone
    with pytest.raises(ConfigError, match="<= 0"):
        parse_nonlinearity({"linear": 1.0})
    P = parse_nonlinearity({"polynomial": [0, 1, 0, -1], "sign_bound": 0.4})
    assert np.allclose(P(X[:2], y), y - y**3) and P.sign_bound == 0.4
    with pytest.raises(ConfigError, match="sign_bound"):
        parse_nonlinearity({"polynomial": [0, 1]})


def test_mesh_records():
    m = parse_mesh({"lo": [0], "hi": [1], "points": [5]})
    assert len(m) == 5 and m.structured
    m = parse_mesh({"nodes": [[0.1, 0.2], [0.3, 0.4]]})
    assert len(m) == 2 and not m.structured
    with pytest.raises(ConfigError, match="mesh.points"):
        parse_mesh({"lo": [0], "hi": [1], "points": [1]})
    with pytest.raises(ConfigError, match="missing field"):
        parse_mesh({"lo": [0]})


def test_entry_defaults_and_overrides(monkeypatch):
    monkeypatch.delenv("FKMC_OUT", raising=False)
    cfg = build({"command": "solve", "entry": "manufactured-sine"})
    assert cfg.mc.n_paths == 10_000 and cfg.mc.dt == 1e-4 and len(cfg.mesh) == 11
    assert cfg.out_dir == "fkmc_out" and cfg.mc_overrides == {}
    cfg = build({"command": "solve", "entry": "manufactured-sine", "mc": {"n_paths": 50},
                 "out": "here"}, n_paths=70, dt=1e-3, seed=5)
    assert cfg.mc.n_paths == 70 and cfg.mc.dt == 1e-3 and cfg.mc.seed == 5
    assert cfg.mc_overrides == {"n_paths": 70, "dt": 1e-3} and cfg.out_dir == "here"
    monkeypatch.setenv("FKMC_OUT", "envdir")
    assert build({"command": "solve", "out": "here"}).out_dir == "envdir"
    assert build({"command": "solve"}, out="flag").out_dir == "flag"


def test_inline_sections_override_entry():
    cfg = build({"command": "solve", "entry": "poisson-interval",
                 "measure": {"densities": [2.0]}})
    assert np.allclose(cfg.mu.components[0](X), 2.0)
    assert cfg.entry.name == "poisson-interval"


def test_require_names_section():
    cfg = build({"command": "solve"})
    with pytest.raises(ConfigError, match=r"\[process\]"):
        cfg.require("spec")


def test_toml_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("command = \n")
    with pytest.raises(ConfigError, match="line 1"):
        load_document(str(bad))
    with pytest.raises(ConfigError, match="cannot read"):
        load_document(str(tmp_path / "missing.toml"))
