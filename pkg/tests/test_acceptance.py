"""The ten acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line; the lines are printed as they are
produced and again in the pytest terminal summary.
"""
import filecmp
import os
import subprocess
import time

import pytest

from conftest import ACCEPTANCE_LINES
from fkmc import instantiate
from fkmc.verify import CHECKS, CheckContext, Settings, run_checks

pytestmark = pytest.mark.slow


def record(k: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {k:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)


def _lines(results):
    return "; ".join(r.line() for r in results)


@pytest.fixture(scope="module")
def sine_ctx():
    """One converged manufactured-sine solve at catalog defaults, shared by criteria 5, 7, 9."""
    return CheckContext(instantiate("manufactured-sine"), Settings(), None)


def test_c01_poisson_interval():
    t0 = time.perf_counter()
    (res,) = run_checks("poisson-interval", Settings(n_paths=100_000, dt=1e-4, mesh_points=21),
                        ["oracle"])
    wall = time.perf_counter() - t0
    ok = res.passed and wall <= 300.0
    record(1, "poisson interval sup error <= 0.02 in <= 5 min", ok,
           f"sup error {res.value:.4g}, wall {wall:.0f} s")
    assert res.passed and wall <= 300.0


def test_c02_ou_covariance():
    (res,) = run_checks("ou-2d", Settings(n_paths=100_000), ["covariance"])
    record(2, "OU covariance within 3 SE", res.passed, f"max |z| {res.value:.3f}")
    assert res.passed


def test_c03_resolvent_identity():
    (res,) = run_checks("poisson-interval", Settings(), ["resolvent-identity"])
    record(3, "resolvent identity alpha=1 beta=2", res.passed,
           f"sup residual {res.value:.3g} vs tolerance {res.threshold:.3g}")
    assert res.passed


def test_c04_dynkin_split():
    (res,) = run_checks("poisson-interval", Settings(), ["dynkin-split"])
    record(4, "Dynkin split B=(0.25,0.75)", res.passed,
           f"sup residual {res.value:.3g} vs tolerance {res.threshold:.3g}")
    assert res.passed


def test_c05_manufactured_sine(sine_ctx):
    res = CHECKS["solve-oracle"](sine_ctx)
    d = res.detail
    ok = res.passed and d["damping"] == 1.0 and d["iterations"] <= 50
    record(5, "manufactured sine relative sup error <= 5%", ok,
           f"{res.value:.4f} after {d['iterations']} iterations, damping {d['damping']}")
    assert ok


def test_c06_apriori_bound():
    results = [run_checks(name, Settings(), ["apriori-bound"])[0]
               for name in ("double-well", "rotation-system")]
    ok = all(r.passed for r in results)
    record(6, "a-priori violation fraction <= 5% at every iterate", ok,
           ", ".join(f"{r.entry} {r.value:.3f}" for r in results))
    assert ok


def test_c07_bsde_residual(sine_ctx):
    res = CHECKS["bsde-residual"](sine_ctx)
    ctrl = res.detail["corrupted_control"]
    record(7, "BSDE residual >= 95% |z| <= 3, corrupted control fails", res.passed,
           f"solution {res.value:.3f}, corrupted {ctrl['fraction_within_3se']:.3f} "
           f"(control passed: {ctrl['passed']})")
    assert res.passed


def test_c08_compactness_decay():
    (res,) = run_checks("poisson-interval", Settings(), ["compactness-decay"])
    record(8, "sine-family image decay slope in [-2.4, -1.6]", res.passed,
           f"slope {res.value:.3f}")
    assert res.passed


def test_c09_uniqueness(sine_ctx):
    results = [CHECKS["uniqueness"](sine_ctx)]
    results += [run_checks(name, Settings(), ["uniqueness"])[0]
                for name in ("rotation-system", "stable-interval")]
    # F = 0 entries: the fixed-point map ignores u, so these are cheap sanity cases
    results += [run_checks(name, Settings(n_paths=2000, dt=1e-3), ["uniqueness"])[0]
                for name in ("poisson-interval", "dirac-interval")]
    ok = all(r.passed for r in results)
    record(9, "monotone entries agree from two starts within 2 tol_fix", ok,
           ", ".join(f"{r.entry} {r.value:.2g}/{r.threshold:.2g}" for r in results))
    assert ok


def _tree_identical(a, b) -> tuple[bool, int]:
    names_a = sorted(os.path.relpath(os.path.join(r, f), a) for r, _, fs in os.walk(a) for f in fs)
    names_b = sorted(os.path.relpath(os.path.join(r, f), b) for r, _, fs in os.walk(b) for f in fs)
    if names_a != names_b or not names_a:
        return False, len(names_a)
    same = all(filecmp.cmp(os.path.join(a, n), os.path.join(b, n), shallow=False) for n in names_a)
    return same, len(names_a)


def test_c10_determinism(tmp_path):
    args = ["fkmc", "verify", "--seed", "12345", "--paths", "300", "--dt", "1e-3"]
    for e in ("ou-2d", "manufactured-sine", "rotation-system", "stable-interval", "dirac-interval"):
        args += ["--entry", e]
    codes = []
    for run in ("a", "b"):
        proc = subprocess.run(args + ["--out", str(tmp_path / run)], capture_output=True, text=True)
        codes.append(proc.returncode)
    # reduced budgets may FAIL accuracy checks (exit 1); only config or numeric errors are fatal
    same, n = _tree_identical(tmp_path / "a", tmp_path / "b")
    ok = same and all(c in (0, 1) for c in codes)
    record(10, "verify twice with one seed gives byte-identical artifacts", ok,
           f"{n} files compared, exit codes {codes}")
    assert ok
