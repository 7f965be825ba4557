import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from topoquench.errors import InadmissibleLoopError, InvalidTrajectoryError, InvalidWindowError
from topoquench.evolve import MomentumGrid, StateField, TimeGrid, evolve_field, ground_state_field
from topoquench.geometry import (
    berry_connection,
    connection_decomposition_check,
    geometric_phase_loop,
    geometric_phase_path,
    hamiltonian_energy,
    hellmann_feynman_residual,
    lz_closed_form,
    lz_run,
    phase_lipschitz_bound,
)
from topoquench.models import QuenchProtocol, build_lz_parameterized, build_quench, build_two_band_chern, build_zero

seeds = st.integers(0, 2**32 - 1)
weights = st.floats(0.02, 0.98)


def loop_state(b2, n=256):
    """``(a, b e^{-i lam})`` with ``|b|^2 = b2``; its geometric phase is ``2 pi b2``."""
    grid = MomentumGrid.loop(n)
    lam = grid.axis_values(0)
    v = np.stack([np.full(n, np.sqrt(1 - b2) + 0j), np.sqrt(b2) * np.exp(-1j * lam)], axis=-1)
    return StateField(grid, v[..., None])


@given(b2=weights)
def test_loop_phase_matches_two_pi_weight(b2):
    assert geometric_phase_loop(loop_state(b2)) == pytest.approx(2 * np.pi * b2, abs=1e-4)


def test_loop_phase_error_is_second_order():
    errs = [abs(geometric_phase_loop(loop_state(0.3, n)) - 0.6 * np.pi) for n in (64, 128, 256)]
    assert 3.8 < errs[0] / errs[1] < 4.2 and 3.8 < errs[1] / errs[2] < 4.2


def test_connection_of_loop_state():
    # A = i <psi| d psi> = |b|^2 for this family
    a = berry_connection(loop_state(0.25, 512))
    np.testing.assert_allclose(a, 0.25, atol=1e-4)


def test_rephasing_shifts_connection_by_gradient():
    f = loop_state(0.4, 128)
    lam = f.grid.axis_values(0)
    shifted = berry_connection(f.rephased(lam)) - berry_connection(f)
    np.testing.assert_allclose(shifted[:-1], -1.0, atol=1e-12)


@given(seed=seeds, b2=weights)
def test_loop_phase_gauge_invariant_mod_two_pi(seed, b2):
    f = loop_state(b2, 128)
    phases = np.random.default_rng(seed).uniform(-np.pi, np.pi, 128)
    d = geometric_phase_loop(f.rephased(phases)) - geometric_phase_loop(f)
    assert abs((d + np.pi) % (2 * np.pi) - np.pi) < 1e-10


@given(seed=seeds)
def test_hamiltonian_energy_gauge_invariant(seed):
    rng = np.random.default_rng(seed)
    model = build_two_band_chern(-1.0)
    f = ground_state_field(model, MomentumGrid.torus(8), 0.0)
    g = f.rephased(rng.uniform(-np.pi, np.pi, (8, 8)))
    for mu in range(2):
        np.testing.assert_allclose(hamiltonian_energy(model, g, mu), hamiltonian_energy(model, f, mu), atol=1e-13)


def test_open_path_phase():
    # frames e^{-i phi_j} |0> pick up sum of the increments
    phis = np.linspace(0, 1.5, 16)
    frames = np.exp(-1j * phis)[:, None, None] * np.array([[1.0], [0.0]])
    assert geometric_phase_path(frames) == pytest.approx(1.5)


def test_orthogonal_neighbours_are_inadmissible():
    grid = MomentumGrid.loop(8)
    v = np.zeros((8, 2, 1), complex)
    v[0::2, 0, 0] = 1
    v[1::2, 1, 0] = 1
    with pytest.raises(InadmissibleLoopError) as info:
        geometric_phase_loop(StateField(grid, v))
    assert info.value.overlap == 0.0


def _hf_residual(dt, n, stride=5):
    model = build_lz_parameterized(1.0, 1.0)
    grid = MomentumGrid.loop(n)
    tg = TimeGrid.from_step(-2.0, 2.0, dt)
    f0 = ground_state_field(model, grid, -2.0, 1)
    traj = evolve_field(model, f0, tg, tg.nodes()[::stride])
    return hellmann_feynman_residual(model, traj), model, traj


def test_hellmann_feynman_identity_converges_quadratically():
    r1, _, _ = _hf_residual(4e-3, 64)
    r2, _, _ = _hf_residual(2e-3, 128)
    assert r1 < 2e-3 and 3.5 < r1 / r2 < 4.5


def test_hellmann_feynman_detects_wrong_generator():
    _, _, traj = _hf_residual(4e-3, 64)
    assert hellmann_feynman_residual(build_lz_parameterized(1.0, 2.0), traj) > 0.1


def test_hellmann_feynman_needs_uniform_snapshots():
    _, model, traj = _hf_residual(4e-3, 32)
    with pytest.raises(InvalidTrajectoryError):
        hellmann_feynman_residual(model, traj[:2])
    with pytest.raises(InvalidTrajectoryError):
        hellmann_feynman_residual(model, [traj[0], traj[1], traj[3]])


def test_lipschitz_bound_on_loop_run():
    _, model, traj = _hf_residual(2e-3, 128, stride=10)
    measured, bound = phase_lipschitz_bound(model, traj)
    assert measured > 0 and measured <= bound * (1 + 1e-3)


def test_lz_closed_form_limits():
    assert lz_closed_form(1.0, 0.0) == 0.0
    assert lz_closed_form(1e-4, 1.0) == pytest.approx(2 * np.pi)
    assert lz_closed_form(1.0, 1.0) == pytest.approx(2 * np.pi * (1 - np.exp(-np.pi)))


def test_lz_run_invariants():
    s = lz_run(1.0, 0.5, -20.0, 10.0, 0.01)
    np.testing.assert_allclose(np.abs(s.a) ** 2 + np.abs(s.b) ** 2, 1.0, atol=1e-12)
    # gamma_rate is the time derivative of gamma; the central difference is
    # off by about (omega dt)^2 / 6 with omega ~ 2 v |t| <= 40 here
    fd = np.gradient(s.gamma, s.t)
    err = np.max(np.abs(fd[1:-1] - s.gamma_rate[1:-1]))
    assert err < 0.01 * np.max(np.abs(s.gamma_rate))
    assert geometric_phase_loop(s.loop_field(-1, 512)) == pytest.approx(s.gamma_final, abs=2e-5)


def test_lz_window_must_start_adiabatically():
    with pytest.raises(InvalidWindowError):
        lz_run(1.0, 1.0, -5.0, 5.0, 0.01)


def test_connection_decomposition_is_second_order_in_grid_spacing():
    model = build_quench(build_two_band_chern(-1), build_two_band_chern(3), QuenchProtocol("sudden", 0.0))
    res = []
    for n in (32, 64, 128):
        grid = MomentumGrid.torus(n)
        f0 = ground_state_field(model, grid, 0.0)
        ft = evolve_field(model, f0, TimeGrid.from_step(0.0, 1.0, 0.01), [1.0])[0]
        res.append(max(connection_decomposition_check(f0, None, ft, mu) for mu in (0, 1)))
    assert 3.8 < res[0] / res[1] < 4.2 and 3.8 < res[1] / res[2] < 4.2


def test_constant_field_has_zero_connection():
    grid = MomentumGrid.torus(8)
    v = np.broadcast_to(np.array([[0.6], [0.8j]]), grid.shape + (2, 1))
    np.testing.assert_array_equal(berry_connection(StateField(grid, v), 1), 0.0)


@given(seed=seeds, b2=weights)
def test_small_rephasing_leaves_loop_phase_unchanged(seed, b2):
    f = loop_state(b2, 128)
    phases = np.random.default_rng(seed).uniform(-0.3, 0.3, 128)
    assert geometric_phase_loop(f.rephased(phases)) == pytest.approx(geometric_phase_loop(f), abs=1e-12)


def test_static_eigenstate_energy_is_band_slope():
    model = build_two_band_chern(-1.0)
    grid = MomentumGrid.torus(16)
    f = ground_state_field(model, grid)
    k = grid.points()
    h = 1e-6
    for mu in range(2):
        e = np.zeros(2)
        e[mu] = h
        slope = (np.linalg.eigvalsh(model.evaluate(k + e))[..., 0] - np.linalg.eigvalsh(model.evaluate(k - e))[..., 0]) / (2 * h)
        np.testing.assert_allclose(hamiltonian_energy(model, f, mu), slope, atol=1e-8)


def test_loop_state_energy_matches_phase_rate():
    s = lz_run(1.0, 0.8, -20.0, 2.0, 0.01)
    model = build_lz_parameterized(1.0, 0.8)
    for i in (1000, 2000, 2200):
        f = s.loop_field(i, 64)
        f = StateField(f.grid, f.vectors, s.t[i])
        eps = hamiltonian_energy(model, f, 0)
        np.testing.assert_allclose(eps, s.gamma_rate[i] / (2 * np.pi), atol=1e-12)


def _static_loop_model():
    from topoquench.models import SIGMA_X, SIGMA_Z, BlochModel

    def h(k, t):
        lam = k[..., 0]
        return (np.cos(lam) + 0.3)[..., None, None] * SIGMA_Z + (0.8 * np.sin(lam))[..., None, None] * SIGMA_X

    def dh(k, t, mu):
        lam = k[..., 0]
        return (-np.sin(lam))[..., None, None] * SIGMA_Z + (0.8 * np.cos(lam))[..., None, None] * SIGMA_X

    return BlochModel("static_loop", 2, 1, h, dh)


def test_hellmann_feynman_static_eigenstates():
    # eigenstates only pick up dynamical phases; the residual is the
    # O(dlambda^2) gap between the secant and averaged band slopes
    model = _static_loop_model()
    grid = MomentumGrid.loop(2048)
    tg = TimeGrid.from_step(0.0, 0.01, 1e-3)
    traj = evolve_field(model, ground_state_field(model, grid, 0.0, 1), tg, tg.nodes()[::2])
    assert hellmann_feynman_residual(model, traj) < 1e-6


def test_hellmann_feynman_zero_model():
    model = build_two_band_chern(-1.0)
    grid = MomentumGrid.torus(16)
    tg = TimeGrid.from_step(0.0, 0.05, 1e-3)
    zero = build_zero(2, 2)
    traj = evolve_field(zero, ground_state_field(model, grid), tg, tg.nodes()[::10])
    assert hellmann_feynman_residual(zero, traj, 1) < 1e-12
