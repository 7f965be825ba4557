"""Unitary time stepping of Bloch states.

The propagator is the ordered product of exact short-time exponentials
``exp(-i H(t_i) dt)``, each obtained from an eigendecomposition and
evaluated at the step midpoint ``t_i = t0 + (i - 1/2) dt``.  Momentum points
never couple, so a whole grid is stepped as one batch.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    InvalidInputError,
    InvalidParameterError,
    NumericError,
)

# matrices per batched eigendecomposition; bounds memory for long runs
_BATCH_ELEMENTS = 1 << 16


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)) or self.t1 <= self.t0:
            raise InvalidParameterError(f"time grid needs t1 > t0, got [{self.t0}, {self.t1}]")
        if int(self.n_steps) < 1:
            raise InvalidParameterError("time grid needs at least one step")

    @classmethod
    def from_step(cls, t0, t1, dt):
        if not dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {dt}")
        n = int(round((t1 - t0) / dt))
        if n < 1 or abs(n * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
            raise InvalidParameterError(f"window [{t0}, {t1}] is not a whole number of steps {dt}")
        return cls(float(t0), float(t1), n)

    @property
    def dt(self):
        return (self.t1 - self.t0) / self.n_steps

    def nodes(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def midpoints(self):
        return self.t0 + self.dt * (np.arange(self.n_steps) + 0.5)

    def node_index(self, t):
        """Step index of a sample time; it must sit on the grid."""
        i = int(round((t - self.t0) / self.dt))
        if not 0 <= i <= self.n_steps or abs(self.t0 + i * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidInputError(f"sample time {t} is not a node of {self}")
        return i


@dataclass(frozen=True)
class MomentumGrid:
    """Uniform periodic grid ``k_i = -pi + offset + 2 pi i / n`` per axis.

    One axis is a closed loop, two axes the Brillouin-zone torus.  Only
    independent samples are stored; the seam is closed by index wrapping.
    """

    shape: tuple
    offset: float = 0.0

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if not 1 <= len(shape) <= 2 or min(shape) < 2:
            raise InvalidParameterError(f"bad grid shape {self.shape}")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def loop(cls, n, offset=0.0):
        return cls((n,), offset)

    @classmethod
    def torus(cls, nx, ny=None, offset=0.0):
        return cls((nx, nx if ny is None else ny), offset)

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def spacing(self, axis=0):
        return 2 * np.pi / self.shape[axis]

    def axis_values(self, axis):
        n = self.shape[axis]
        return -np.pi + self.offset + 2 * np.pi * np.arange(n) / n

    def points(self):
        axes = [self.axis_values(a) for a in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def negated_index(self):
        """Per-axis index maps ``i -> j`` with ``k_j = -k_i`` mod 2 pi, or None."""
        maps = []
        for axis, n in enumerate(self.shape):
            k = self.axis_values(axis)
            pos = (-k + np.pi - self.offset) / self.spacing(axis)
            j = np.rint(pos).astype(int)
            if np.max(np.abs(pos - j)) > 1e-9:
                return None
            maps.append(j % n)
        return tuple(maps)


@dataclass(frozen=True)
class StateField:
    """Occupied-band frames on a momentum grid at one instant.

    ``vectors`` has shape ``grid.shape + (dimension, n_occupied)``; columns
    are orthonormal at each point.  ``propagators``, when present, holds the
    accumulated evolution operator from the initial time at each point.
    """

    grid: MomentumGrid
    vectors: np.ndarray
    time: float = 0.0
    propagators: np.ndarray | None = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=complex)
        if vectors.shape[: self.grid.ndim] != self.grid.shape or vectors.ndim != self.grid.ndim + 2:
            raise InvalidInputError(
                f"vectors of shape {vectors.shape} do not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "vectors", vectors)

    @property
    def dimension(self):
        return self.vectors.shape[-2]

    @property
    def n_occupied(self):
        return self.vectors.shape[-1]

    def orthonormality_error(self):
        gram = np.conj(np.swapaxes(self.vectors, -1, -2)) @ self.vectors
        return float(np.max(np.abs(gram - np.eye(self.n_occupied))))

    def rephased(self, phases):
        """Multiply every column at each point by ``exp(i phases)``."""
        phases = np.asarray(phases, dtype=float)
        if phases.shape == self.grid.shape:
            phases = phases[..., None, None]
        else:
            phases = phases[..., None, :]
        return StateField(self.grid, self.vectors * np.exp(1j * phases), self.time, self.propagators)


def expm_step(h, dt):
    """``exp(-i h dt)`` for Hermitian ``h`` (batched over leading axes)."""
    h = np.asarray(h, dtype=complex)
    if not np.all(np.isfinite(h)) or not np.isfinite(dt):
        raise NumericError("non-finite Hamiltonian or time step")
    if h.shape[-1] == 2:
        return _expm_step_2x2(h, dt)
    try:
        w, q = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    return (q * np.exp(-1j * dt * w)[..., None, :]) @ np.conj(np.swapaxes(q, -1, -2))


def _expm_step_2x2(h, dt):
    # h = e0 + d.sigma, so exp(-i h dt) = exp(-i e0 dt) (cos|d|dt - i sin|d|dt d.sigma/|d|)
    a, d = h[..., 0, 0].real, h[..., 1, 1].real
    off = h[..., 0, 1]
    e0 = 0.5 * (a + d)
    dz = 0.5 * (a - d)
    r = np.sqrt(dz * dz + np.abs(off) ** 2)
    c = np.cos(r * dt)
    s = dt * np.sinc(r * dt / np.pi)  # sin(r dt) / r, finite at r = 0
    ph = np.exp(-1j * e0 * dt)
    out = np.empty(h.shape, dtype=complex)
    out[..., 0, 0] = ph * (c - 1j * s * dz)
    out[..., 1, 1] = ph * (c + 1j * s * dz)
    out[..., 0, 1] = ph * (-1j * s * off)
    out[..., 1, 0] = ph * (-1j * s * np.conj(off))
    return out


def step_unitaries(model, k, grid):
    """Yield ``(step_index, V)`` for every step of ``grid`` at momenta ``k``.

    Hamiltonians are evaluated for blocks of steps at once.  Consecutive
    steps with bit-identical Hamiltonians (piecewise-constant generators,
    e.g. after a sudden quench) reuse the previous exponential.
    """
    k = np.asarray(k, dtype=float)
    n_points = int(np.prod(k.shape[:-1])) if k.ndim > 1 else 1
    chunk = max(1, _BATCH_ELEMENTS // max(1, n_points))
    mids = grid.midpoints()
    dt = grid.dt
    t_axes = (slice(None),) + (None,) * (k.ndim - 1)
    prev_h = prev_v = None
    for start in range(0, grid.n_steps, chunk):
        t = mids[start : start + chunk]
        h = model.evaluate(k[None, ...], t[t_axes])
        same = np.zeros(len(t), dtype=bool)
        same[1:] = np.all(h[1:] == h[:-1], axis=tuple(range(1, h.ndim)))
        if prev_h is not None:
            same[0] = np.array_equal(h[0], prev_h)
        fresh = np.flatnonzero(~same)
        v_fresh = expm_step(h[fresh], dt) if len(fresh) else None
        slot = np.searchsorted(fresh, np.arange(len(t)), side="right") - 1
        for j in range(len(t)):
            v = prev_v if slot[j] < 0 else v_fresh[slot[j]]
            yield start + j, v
        prev_h = h[-1]
        prev_v = v_fresh[slot[-1]] if slot[-1] >= 0 else prev_v


def propagate(model, k, grid, stops):
    """Accumulated propagators at the requested step indices.

    Returns an array ``(len(stops),) + k.shape[:-1] + (n, n)``.
    """
    k = np.asarray(k, dtype=float)
    stops = list(stops)
    n = model.dimension
    eye = np.broadcast_to(np.eye(n, dtype=complex), k.shape[:-1] + (n, n))
    out = np.empty((len(stops),) + eye.shape, dtype=complex)
    wanted = {}
    for pos, s in enumerate(stops):
        wanted.setdefault(s, []).append(pos)
    u = eye.copy()
    for pos in wanted.get(0, []):
        out[pos] = u
    if max(stops, default=0) > 0:
        for i, v in step_unitaries(model, k, grid):
            u = v @ u
            for pos in wanted.get(i + 1, ()):
                out[pos] = u
            if i + 1 >= max(stops):
                break
    return out


def evolve_point(model, k, psi0, grid):
    """Evolve orthonormal columns ``psi0`` at one momentum over ``grid``.

    Returns ``(states, propagator)`` at ``grid.t1``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.ndim == 1:
        psi0 = psi0[:, None]
    if psi0.shape[0] != model.dimension:
        raise InvalidInputError("initial state dimension does not match the model")
    u = propagate(model, k, grid, [grid.n_steps])[0]
    return u @ psi0, u


def evolve_field(model, field0, grid, sample_times, workers=1):
    """Evolve a whole field, returning one :class:`StateField` per sample time.

    Each returned field carries the accumulated propagators.  With
    ``workers > 1`` the grid is split into contiguous point blocks handled
    by a thread pool; each block writes only its own output slots, so the
    result does not depend on scheduling.
    """
    if field0.vectors.shape[-2] != model.dimension:
        raise InvalidInputError("field dimension does not match the model")
    sample_times = [float(t) for t in sample_times]
    if any(b < a for a, b in zip(sample_times, sample_times[1:])):
        raise InvalidInputError("sample times must be monotone")
    if abs(field0.time - grid.t0) > 1e-9 * max(1.0, abs(grid.t0)):
        raise InvalidInputError(f"field time {field0.time} differs from grid start {grid.t0}")
    stops = [grid.node_index(t) for t in sample_times]

    k = field0.grid.points().reshape(-1, field0.grid.ndim)
    n = model.dimension
    u_all = np.empty((len(stops), len(k), n, n), dtype=complex)

    def work(block):
        u_all[:, block] = propagate(model, k[block], grid, stops)

    blocks = [slice(a[0], a[-1] + 1) for a in np.array_split(np.arange(len(k)), max(1, workers)) if len(a)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, blocks))
    else:
        for b in blocks:
            work(b)

    shape = field0.grid.shape
    u_all = u_all.reshape((len(stops),) + shape + (n, n))
    return [
        StateField(field0.grid, u_all[i] @ field0.vectors, t, u_all[i])
        for i, t in enumerate(sample_times)
    ]


def fix_phase(vectors):
    """Rotate each column so its largest-magnitude component is real positive."""
    idx = np.argmax(np.abs(vectors), axis=-2)[..., None, :]
    lead = np.take_along_axis(vectors, idx, axis=-2)
    return vectors * (np.conj(lead) / np.abs(lead))


def ground_state_field(model, grid, t=0.0, n_occupied=None):
    """Lowest ``n_occupied`` eigenvectors of ``model`` at every grid point."""
    n_occupied = model.dimension // 2 if n_occupied is None else int(n_occupied)
    if not 1 <= n_occupied < model.dimension:
        raise InvalidParameterError(f"n_occupied={n_occupied} out of range")
    k = grid.points()
    w, q = np.linalg.eigh(model.evaluate(k, t))
    gap = w[..., n_occupied] - w[..., n_occupied - 1]
    worst = np.unravel_index(np.argmin(gap), gap.shape)
    if gap[worst] <= 1e-8:
        raise DegenerateSpectrumError(
            f"gap closes at k={tuple(k[worst])} (gap {gap[worst]:.3g})",
            k=tuple(k[worst]),
            gap=float(gap[worst]),
        )
    return StateField(grid, fix_phase(q[..., :n_occupied]), float(t))
