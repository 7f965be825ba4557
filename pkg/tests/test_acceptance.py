"""Acceptance gate: every criterion at its stated tolerance and time budget.

Each test records one ``PASS``/``FAIL`` line, printed in the session
summary.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import sys
import time

import numpy as np
import pytest

from topoquench.config import parse_config
from topoquench.evolve import MomentumGrid, StateField, TimeGrid, evolve_field, ground_state_field, propagate
from topoquench.geometry import (
    geometric_phase_loop,
    hamiltonian_energy,
    hellmann_feynman_residual,
    lz_run,
    phase_lipschitz_bound,
)
from topoquench.invariants import chern_number
from topoquench.models import QuenchProtocol, build_bhz, build_lz_parameterized, build_quench, build_two_band_chern
from topoquench.runner import run, sweep

from conftest import random_unitary

TWO_PI = 2 * np.pi


def record(log, number, title, checks, elapsed, budget):
    """Store one line; ``checks`` maps a description to a bool."""
    in_time = budget is None or elapsed < budget
    ok = all(checks.values()) and in_time
    budget_text = "" if budget is None else f" (budget {budget} s)"
    detail = "; ".join(f"{name} [{'ok' if good else 'FAIL'}]" for name, good in checks.items())
    log[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {elapsed:.1f} s{budget_text} | {detail}"
    return ok, log[number]


def torus_cfg(tmp, m0, m1, n, t1, samples, scenario="chern-quench"):
    return parse_config(
        f"scenario = {scenario}\nmodel.m_initial = {m0}\nmodel.m_final = {m1}\n"
        f"grid.nx = {n}\ntime.t1 = {t1}\ntime.samples = {samples}\noutput.dir = {tmp}\n"
    )


@pytest.fixture(scope="module")
def quench_runs(tmp_path_factory):
    """Runs shared by criteria 3, 4, 5 and 7, with their wall-clock."""
    tmp = tmp_path_factory.mktemp("acceptance")
    runs = {}
    start = time.perf_counter()
    runs["forward"] = run(torus_cfg(tmp / "fwd", -1, 3, 40, 5, 11))
    runs["reverse"] = run(torus_cfg(tmp / "rev", 3, -1, 40, 5, 11))
    runs["t3"] = time.perf_counter() - start
    start = time.perf_counter()
    runs["coarse"] = run(torus_cfg(tmp / "coarse", -1, 3, 12, 20, 41))
    runs["sweep"] = sweep(torus_cfg(tmp / "sweep", -1, 3, 12, 20, 41), "grid", [12, 24, 48, 96])
    runs["t4"] = time.perf_counter() - start
    start = time.perf_counter()
    runs["z2"] = run(torus_cfg(tmp / "z2", -1, 3, 40, 5, 11, "z2-quench"))
    runs["t5"] = time.perf_counter() - start
    return runs


def test_criterion_1_landau_zener_asymptote(acceptance_log):
    checks, worst = {}, 0.0
    for g in (0.5, 1.0):
        start = time.perf_counter()
        cfg = parse_config(f"scenario = lz\nmodel.v = 1\nmodel.g = {g}\ntime.t0 = -200\ntime.t1 = 200\n")
        s = run(cfg, write=False)
        elapsed = time.perf_counter() - start
        worst = max(worst, elapsed)
        err = abs(s.results["gamma_error"])
        checks[f"g={g}: |gamma - closed form| = {err:.3g} vs {1e-3 * TWO_PI:.3g}"] = s.ok and err < 1e-3 * TWO_PI
        checks[f"g={g}: runtime {elapsed:.1f} s < 5 s"] = elapsed < 5
    ok, line = record(acceptance_log, 1, "Landau-Zener asymptote", checks, worst, None)
    assert ok, line


def test_criterion_2_adiabatic_limit(acceptance_log):
    start = time.perf_counter()
    cfg = parse_config("scenario = lz\nmodel.v = 0.01\nmodel.g = 1\ntime.t0 = -2000\ntime.t1 = 2000\n")
    s = run(cfg, write=False)
    elapsed = time.perf_counter() - start
    rel = abs(s.results["gamma_inf"] - TWO_PI) / TWO_PI
    ok, line = record(acceptance_log, 2, "adiabatic limit",
                      {f"relative deviation from 2 pi {rel:.3g} < 1%": s.ok and rel < 0.01}, elapsed, 30)
    assert ok, line


def test_criterion_3_chern_constancy(acceptance_log, quench_runs):
    fwd, rev = quench_runs["forward"], quench_runs["reverse"]
    checks = {
        f"m=-1->3 constant at C={fwd.results.get('chern_initial')}": fwd.ok and fwd.results["chern_constant"]
        and fwd.results["chern_initial"] == 1,
        f"m=3->-1 constant at C={rev.results.get('chern_initial')}": rev.ok and rev.results["chern_constant"]
        and rev.results["chern_initial"] == 0,
    }
    ok, line = record(acceptance_log, 3, "Chern constancy", checks, quench_runs["t3"], 10)
    assert ok, line


def test_criterion_4_coarse_grid_and_refinement(acceptance_log, quench_runs):
    coarse, result = quench_runs["coarse"], quench_runs["sweep"]
    constant = [s.results.get("chern_constant") for s in result.summaries]
    checks = {
        f"12x12, t_max=20 flagged (exit {coarse.exit_code})": coarse.exit_code == 3
        or coarse.results.get("chern_constant") is False,
        f"sweep 12,24,48,96 restores constancy at N*={result.n_star}": result.n_star is not None
        and result.n_star <= 96 and constant[result.values.index(result.n_star)],
    }
    ok, line = record(acceptance_log, 4, "coarse-grid failure and grid refinement", checks, quench_runs["t4"], 60)
    assert ok, line


def test_criterion_5_z2_constancy(acceptance_log, quench_runs):
    s = quench_runs["z2"]
    r = s.results
    checks = {
        "run succeeded": s.ok,
        "half-zone Z2 = 1 at every sample": r.get("c2_constant") and r.get("c2_initial") == 1,
        "Z2 equals spin-Chern parity at every sample": bool(r.get("c2_matches_spin_chern")),
        "C_up + C_down = 0 throughout": bool(r.get("total_chern_zero")),
    }
    ok, line = record(acceptance_log, 5, "Z2 constancy under a TRS-odd quench", checks, quench_runs["t5"], 30)
    assert ok, line


def _hf(dt, n):
    model = build_lz_parameterized(1.0, 1.0)
    tg = TimeGrid.from_step(-5.0, 5.0, dt)
    f0 = ground_state_field(model, MomentumGrid.loop(n), -5.0, 1)
    trajectory = evolve_field(model, f0, tg, tg.nodes()[::5])
    return hellmann_feynman_residual(model, trajectory)


def test_criterion_6_hellmann_feynman(acceptance_log):
    start = time.perf_counter()
    r1 = _hf(1e-3, 256)
    r2 = _hf(5e-4, 512)
    elapsed = time.perf_counter() - start
    checks = {
        f"residual {r1:.3g} < 1e-3": r1 < 1e-3,
        f"halving dt and dlambda divides it by {r1 / r2:.2f} (about 4)": 3.0 < r1 / r2 < 5.0,
    }
    ok, line = record(acceptance_log, 6, "Hellmann-Feynman identity", checks, elapsed, 20)
    assert ok, line


def test_criterion_7_auxiliary_hamiltonian(acceptance_log, quench_runs):
    summaries = [quench_runs[k] for k in ("forward", "reverse", "coarse", "z2")] + quench_runs["sweep"].summaries
    spec = max(s.residuals["aux_spectrum"] for s in summaries)
    vec = max(s.residuals["aux_eigenvector"] for s in summaries)
    checks = {
        f"spectrum distance {spec:.3g} < 1e-9": spec < 1e-9,
        f"eigenvector residual {vec:.3g} < 1e-8": vec < 1e-8,
    }
    ok, line = record(acceptance_log, 7, "auxiliary-Hamiltonian equivalence on every quench run", checks, 0.0, None)
    assert ok, line


def test_criterion_8_property_suites(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    checks = {}

    quench = build_quench(build_bhz(-1), build_bhz(1), QuenchProtocol("linear_ramp", 0.0, 100.0))
    tg = TimeGrid.from_step(0.0, 100.0, 0.01)
    u = propagate(quench, rng.uniform(-np.pi, np.pi, (16, 2)), tg, [tg.n_steps])[0]
    drift = np.max(np.abs(np.conj(np.swapaxes(u, -1, -2)) @ u - np.eye(4)))
    checks[f"unitarity drift {drift:.2g} < 1e-10 over 1e4 steps"] = drift < 1e-10

    grid = MomentumGrid.torus(20)
    model = build_two_band_chern(-1.0)
    f = ground_state_field(model, grid)
    phases = rng.uniform(-np.pi, np.pi, grid.shape)
    g = f.rephased(phases)
    eps_dev = max(np.max(np.abs(hamiltonian_energy(model, g, mu) - hamiltonian_energy(model, f, mu))) for mu in (0, 1))
    checks["C gauge invariant"] = chern_number(g) == chern_number(f) == 1
    checks[f"eps gauge invariant ({eps_dev:.1g})"] = eps_dev < 1e-12
    bhz = ground_state_field(build_bhz(-1.0), grid)
    checks["C gauge invariant under U(2)"] = chern_number(StateField(grid, bhz.vectors @ random_unitary(rng, 2, grid.shape))) == 0

    lz = lz_run(1.0, 1.0, -20.0, 20.0, 0.01)
    loop = lz.loop_field(-1, 256)
    dg = geometric_phase_loop(loop.rephased(rng.uniform(-np.pi, np.pi, 256))) - geometric_phase_loop(loop)
    checks["gamma gauge invariant mod 2 pi"] = abs((dg + np.pi) % TWO_PI - np.pi) < 1e-10

    _, q = np.linalg.eigh(model.evaluate(grid.points()))
    band_sum = sum(chern_number(StateField(grid, q[..., [j]])) for j in range(2))
    checks["band-sum Chern = 0"] = band_sum == 0

    for g_, v_ in ((0.5, 1.0), (1.0, 1.0)):
        s = lz_run(v_, g_, -20.0, 20.0, 0.01)
        traj = [s.loop_field(i, 256) for i in range(0, len(s.t), 10)]
        measured, bound = phase_lipschitz_bound(build_lz_parameterized(v_, g_), traj)
        # both sides carry O(dlambda^2) loop discretisation error
        checks[f"Lipschitz g={g_}: {measured:.5g} <= {bound:.5g}"] = measured <= bound * (1 + 1e-3)

    cfg = parse_config("scenario = z2-quench\ngrid.nx = 16\ntime.t1 = 2\noutput.dir = unused\n")
    a, b = run(cfg, workers=1, write=False), run(cfg, workers=4, write=False)
    checks["identical results for 1 and 4 workers"] = a.to_json() == b.to_json()

    elapsed = time.perf_counter() - start
    ok, line = record(acceptance_log, 8, "property suites", checks, elapsed, None)
    assert ok, line


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
