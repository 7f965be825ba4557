"""Berry connection, geometric phase and the time-dependent Hellmann-Feynman identity.

Convention: the connection is ``A = i <psi| d psi>`` summed over occupied
bands.  On a grid it is read off neighbour overlaps,
``A_mu(k + delta/2) = -arg det <psi(k)|psi(k + delta_mu)> / delta``, so the
sample sits on the link midpoint.  The geometric phase of a closed loop is
``gamma = sum of -arg`` over its links, i.e. the loop integral of ``A``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InadmissibleGridError,
    InadmissibleLoopError,
    InvalidInputError,
    InvalidParameterError,
    InvalidTrajectoryError,
    InvalidWindowError,
)
from .evolve import MomentumGrid, StateField, TimeGrid, step_unitaries
from .models import build_lz_parameterized

ADMISSIBILITY_FLOOR = 1e-6


def _dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def overlap_det(left, right):
    """``det <left|right>`` over the occupied index, batched."""
    m = _dagger(left) @ right
    if m.shape[-1] == 1:
        return m[..., 0, 0]
    return np.linalg.det(m)


def link_overlaps(vectors, axis, step=1):
    """Overlap determinants between each point and its neighbour ``step`` sites on."""
    return overlap_det(vectors, np.roll(vectors, -step, axis=axis))


def _check_floor(overlaps, grid, time, floor, axis=None, loop=False):
    mags = np.abs(overlaps)
    worst = np.unravel_index(np.argmin(mags), mags.shape)
    if mags[worst] <= floor:
        k = tuple(grid.points()[worst])
        cls = InadmissibleLoopError if loop else InadmissibleGridError
        where = f" along axis {axis}" if axis is not None else ""
        raise cls(
            f"neighbour overlap {mags[worst]:.3g} at k={k}{where} is below {floor:g}; "
            "refine the grid",
            k=k,
            overlap=float(mags[worst]),
            time=time,
        )
    return float(mags[worst])


def berry_connection(field, direction=0, floor=ADMISSIBILITY_FLOOR):
    """Connection samples on the links leaving each grid point along ``direction``."""
    o = link_overlaps(field.vectors, direction)
    _check_floor(o, field.grid, field.time, floor, axis=direction)
    return -np.angle(o) / field.grid.spacing(direction)


def hamiltonian_energy(model, field, direction=0, t=None):
    """``sum_n <psi_n| dH/dk_direction |psi_n>`` at each grid point."""
    t = field.time if t is None else t
    dh = model.gradient(field.grid.points(), t, direction)
    v = field.vectors
    return np.real(np.einsum("...in,...ij,...jn->...", np.conj(v), dh, v))


def _uniform_spacing(times):
    steps = np.diff(times)
    if len(times) < 3:
        raise InvalidTrajectoryError("need at least three snapshots")
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, abs(steps[0])) or steps[0] <= 0:
        raise InvalidTrajectoryError("snapshots must be equally spaced in time")
    return steps[0]


def _check_same_grid(trajectory):
    first = trajectory[0]
    for f in trajectory[1:]:
        if f.grid != first.grid or f.vectors.shape != first.vectors.shape:
            raise InvalidTrajectoryError("snapshots live on different grids")


def hellmann_feynman_residual(model, trajectory, direction=0, floor=ADMISSIBILITY_FLOOR):
    """Largest ``|dA/dt - eps|`` over links and interior snapshots.

    ``dA/dt`` is a central difference between the neighbouring snapshots,
    taken from the overlap ratio so no branch cut is crossed; ``eps`` is
    averaged over the two ends of each link to sit on the link midpoint.
    """
    _check_same_grid(trajectory)
    times = np.array([f.time for f in trajectory])
    h = _uniform_spacing(times)
    grid = trajectory[0].grid
    delta = grid.spacing(direction)
    overlaps = []
    for f in trajectory:
        o = link_overlaps(f.vectors, direction)
        _check_floor(o, grid, f.time, floor, axis=direction)
        overlaps.append(o)
    worst = 0.0
    for j in range(1, len(trajectory) - 1):
        da_dt = -np.angle(overlaps[j + 1] * np.conj(overlaps[j - 1])) / (2 * h * delta)
        eps = hamiltonian_energy(model, trajectory[j], direction)
        eps_link = 0.5 * (eps + np.roll(eps, -1, axis=direction))
        worst = max(worst, float(np.max(np.abs(da_dt - eps_link))))
    return worst


def _path_increments(vectors, closed, floor, grid=None, time=None):
    if closed:
        o = link_overlaps(vectors, 0)
    else:
        o = overlap_det(vectors[:-1], vectors[1:])
    mags = np.abs(o)
    i = int(np.argmin(mags))
    if mags[i] <= floor:
        raise InadmissibleLoopError(
            f"loop overlap {mags[i]:.3g} at link {i} is below {floor:g}; refine the loop",
            k=None if grid is None else tuple(grid.points()[i]),
            overlap=float(mags[i]),
            time=time,
        )
    inc = -np.angle(o)
    if np.max(np.abs(inc)) >= np.pi:
        raise InadmissibleLoopError("phase increment reaches pi; unwrap is ambiguous", time=time)
    return inc


def geometric_phase_loop(field, floor=ADMISSIBILITY_FLOOR):
    """Unwrapped geometric phase around a closed one-dimensional loop."""
    if field.grid.ndim != 1:
        raise InvalidInputError("geometric phase needs a one-dimensional loop field")
    return float(np.sum(_path_increments(field.vectors, True, floor, field.grid, field.time)))


def geometric_phase_path(vectors, floor=ADMISSIBILITY_FLOOR):
    """Phase accumulated along an open ordered path of frames (no closure)."""
    return float(np.sum(_path_increments(np.asarray(vectors, dtype=complex), False, floor)))


def loop_energy_integral(model, field):
    """``sum |eps| d(lambda)`` around a loop, i.e. the Lipschitz constant at this time."""
    eps = hamiltonian_energy(model, field, 0)
    return float(np.sum(np.abs(eps)) * field.grid.spacing(0))


def phase_lipschitz_bound(model, trajectory):
    """Measured ``max |d gamma/dt|`` across snapshots and the bound ``max_t oint |eps|``."""
    _check_same_grid(trajectory)
    if len(trajectory) < 2:
        raise InvalidTrajectoryError("need at least two snapshots")
    times = np.array([f.time for f in trajectory])
    gammas = np.array([geometric_phase_loop(f) for f in trajectory])
    jumps = np.abs(np.diff(gammas))
    if np.any(jumps >= np.pi):
        raise InadmissibleLoopError("geometric phase moves by pi between snapshots; sample denser")
    measured = float(np.max(jumps / np.diff(times)))
    bound = max(loop_energy_integral(model, f) for f in trajectory)
    return measured, bound


def connection_decomposition_check(field0, propagators, field_t, direction=0):
    """Grid maximum of ``|A(k,t) - A(k) - i <psi0| U^dag dU |psi0>|``.

    Both connections use the centred two-link overlap and ``dU`` a centred
    difference, so the residual is second order in the grid spacing.
    """
    if propagators is None:
        propagators = field_t.propagators
    if propagators is None:
        raise InvalidInputError("propagators are required")
    if field0.grid != field_t.grid:
        raise InvalidInputError("fields live on different grids")
    delta = field0.grid.spacing(direction)
    ax = direction

    def centred(v):
        return overlap_det(np.roll(v, 1, axis=ax), np.roll(v, -1, axis=ax))

    o0 = centred(field0.vectors)
    ot = centred(field_t.vectors)
    lhs = -np.angle(ot * np.conj(o0)) / (2 * delta)
    du = (np.roll(propagators, -1, axis=ax) - np.roll(propagators, 1, axis=ax)) / (2 * delta)
    v = field0.vectors
    rhs = np.real(1j * np.einsum("...in,...ij,...jn->...", np.conj(v), _dagger(propagators) @ du, v))
    return float(np.max(np.abs(lhs - rhs)))


def lz_closed_form(v, g):
    """Asymptotic geometric phase ``2 pi (1 - exp(-pi g^2 / v))``."""
    return 2 * np.pi * (1 - np.exp(-np.pi * g * g / v))


@dataclass(frozen=True)
class LZSeries:
    v: float
    g: float
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def gamma(self):
        return 2 * np.pi * np.abs(self.b) ** 2

    @property
    def gamma_rate(self):
        return 4 * np.pi * self.g * np.imag(np.conj(self.b) * self.a)

    @property
    def gamma_final(self):
        return float(self.gamma[-1])

    def loop_field(self, index=-1, n=256):
        """The loop state ``(a, b e^{-i lam})`` at one stored time."""
        grid = MomentumGrid.loop(n)
        lam = grid.axis_values(0)
        vec = np.stack([np.full(n, self.a[index]), self.b[index] * np.exp(-1j * lam)], axis=-1)
        return StateField(grid, vec[..., None], float(self.t[index]))


def lz_run(v, g, t0, t1, dt):
    """Landau-Zener evolution of ``(1, 0)`` under ``v t sz + g sx``.

    Returns the amplitudes at every node; ``gamma`` and ``gamma_rate`` are
    derived from them.
    """
    model = build_lz_parameterized(v, g)
    if not t0 <= -20 * max(1.0, g) / v:
        raise InvalidWindowError(
            f"t0={t0} is not adiabatic; need t0 <= {-20 * max(1.0, g) / v:g}"
        )
    if not t1 > t0:
        raise InvalidParameterError("need t1 > t0")
    grid = TimeGrid.from_step(t0, t1, dt)
    psi = np.zeros((grid.n_steps + 1, 2), dtype=complex)
    psi[0] = (1.0, 0.0)
    cur = psi[0]
    for i, step in step_unitaries(model, np.zeros(1), grid):
        cur = step @ cur
        psi[i + 1] = cur
    return LZSeries(model.params["v"], model.params["g"], grid.nodes(), psi[:, 0], psi[:, 1])
