"""Bloch Hamiltonians, quench protocols and time-reversal operators.

Every model is a pure function of momentum and time.  Momenta are arrays of
shape ``(..., spatial_dims)``; the time argument may be a scalar or any array
broadcastable against the leading momentum shape, so a whole grid (or a whole
batch of time steps) is evaluated in one call.  The returned Hamiltonians
have shape ``broadcast(k.shape[:-1], t.shape) + (n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidCompositionError, InvalidParameterError

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

TRS_EVEN = "trs_even"
TRS_ODD = "trs_odd"
BLOCK_DIAGONAL_SPIN = "block_diagonal_spin"

# spin is the outer tensor factor: u_T = (i sigma_y) kron 1
BHZ_TRS_MATRIX = np.kron(1j * SIGMA_Y, np.eye(2)).astype(complex)
BHZ_BLOCKS = ((0, 1), (2, 3))


def _finite(name, value):
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


def _terms(shape, n, *terms):
    """Sum ``coefficient * matrix`` terms into an array of ``shape + (n, n)``."""
    out = np.zeros(tuple(shape) + (n, n), dtype=complex)
    for coeff, mat in terms:
        out += np.asarray(coeff)[..., None, None] * mat
    return out


@dataclass(frozen=True)
class TrsOperator:
    """Antiunitary time reversal ``T = u K`` with ``K`` complex conjugation."""

    u: np.ndarray
    antiunitary: bool = True

    def __post_init__(self):
        # a stack of matrices is allowed: one u per momentum point
        u = np.asarray(self.u, dtype=complex)
        if u.ndim < 2 or u.shape[-1] != u.shape[-2]:
            raise InvalidParameterError("u_T must be a square matrix")
        err = np.max(np.abs(u @ np.conj(np.swapaxes(u, -1, -2)) - np.eye(u.shape[-1])))
        if err > 1e-10:
            raise InvalidParameterError(f"u_T is not unitary (residual {err:.3g})")
        object.__setattr__(self, "u", u)

    @property
    def dimension(self):
        return self.u.shape[-1]

    def transform(self, h):
        """``u h* u^dagger``, batched over leading axes."""
        return self.u @ np.conj(h) @ np.conj(np.swapaxes(self.u, -1, -2))

    def apply(self, vectors):
        """Act on column vectors: ``u psi*``."""
        return self.u @ np.conj(vectors)


@dataclass(frozen=True)
class BlochModel:
    name: str
    dimension: int
    spatial_dims: int
    hamiltonian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray, np.ndarray, int], np.ndarray]
    symmetry_tags: frozenset = frozenset()
    trs: TrsOperator | None = None
    blocks: tuple | None = None
    params: Mapping = field(default_factory=dict)

    def _momenta(self, k):
        k = np.asarray(k, dtype=float)
        if k.ndim == 0:
            k = k[None]
        if k.shape[-1] != self.spatial_dims:
            raise InvalidParameterError(
                f"{self.name}: momentum has {k.shape[-1]} components, "
                f"expected {self.spatial_dims}"
            )
        return k

    def _finish(self, k, t, h):
        shape = np.broadcast_shapes(k.shape[:-1], t.shape)
        return np.ascontiguousarray(
            np.broadcast_to(h, shape + (self.dimension, self.dimension))
        )

    def evaluate(self, k, t=0.0):
        k = self._momenta(k)
        t = np.asarray(t, dtype=float)
        return self._finish(k, t, self.hamiltonian(k, t))

    def gradient(self, k, t=0.0, direction=0):
        """Analytic ``dH/dk_direction``."""
        if not 0 <= direction < self.spatial_dims:
            raise InvalidParameterError(f"direction {direction} out of range")
        k = self._momenta(k)
        t = np.asarray(t, dtype=float)
        return self._finish(k, t, self.derivative(k, t, direction))


def build_constant(matrix, spatial_dims=2, name="constant"):
    """Momentum- and time-independent model (zero gradient)."""
    matrix = np.asarray(matrix, dtype=complex)
    if np.max(np.abs(matrix - matrix.conj().T)) > 1e-12:
        raise InvalidParameterError("constant model matrix is not Hermitian")
    n = matrix.shape[0]
    zero = np.zeros((n, n), dtype=complex)
    return BlochModel(
        name=name,
        dimension=n,
        spatial_dims=spatial_dims,
        hamiltonian=lambda k, t: matrix,
        derivative=lambda k, t, mu: zero,
    )


def build_zero(dimension=2, spatial_dims=2):
    model = build_constant(np.zeros((dimension, dimension)), spatial_dims, name="zero")
    return replace(model, symmetry_tags=frozenset({TRS_EVEN, TRS_ODD}))


def build_lz_parameterized(v, g):
    """``H = v t sz + g (sx cos(lam) - sy sin(lam))`` on a one-parameter loop."""
    v = _finite("v", v)
    g = _finite("g", g)
    if v <= 0:
        raise InvalidParameterError(f"sweep rate v must be positive, got {v}")
    if g < 0:
        raise InvalidParameterError(f"coupling g must be non-negative, got {g}")

    def hamiltonian(k, t):
        lam = k[..., 0]
        shape = np.broadcast_shapes(lam.shape, t.shape)
        return _terms(
            shape, 2,
            (v * t, SIGMA_Z),
            (g * np.cos(lam), SIGMA_X),
            (-g * np.sin(lam), SIGMA_Y),
        )

    def derivative(k, t, mu):
        lam = k[..., 0]
        return _terms(lam.shape, 2, (-g * np.sin(lam), SIGMA_X), (-g * np.cos(lam), SIGMA_Y))

    return BlochModel(
        name="lz_parameterized",
        dimension=2,
        spatial_dims=1,
        hamiltonian=hamiltonian,
        derivative=derivative,
        params={"v": v, "g": g},
    )


def _chern_terms(m):
    """Hamiltonian and gradient of ``sin kx sx + sin ky sy + (m + cos kx + cos ky) sz``."""

    def hamiltonian(k, t):
        kx, ky = k[..., 0], k[..., 1]
        return _terms(
            kx.shape, 2,
            (np.sin(kx), SIGMA_X),
            (np.sin(ky), SIGMA_Y),
            (m + np.cos(kx) + np.cos(ky), SIGMA_Z),
        )

    def derivative(k, t, mu):
        kmu = k[..., mu]
        sigma = SIGMA_X if mu == 0 else SIGMA_Y
        return _terms(kmu.shape, 2, (np.cos(kmu), sigma), (-np.sin(kmu), SIGMA_Z))

    return hamiltonian, derivative


def build_two_band_chern(m):
    m = _finite("m", m)
    hamiltonian, derivative = _chern_terms(m)
    return BlochModel(
        name="two_band_chern",
        dimension=2,
        spatial_dims=2,
        hamiltonian=hamiltonian,
        derivative=derivative,
        params={"m": m},
    )


def _spin_blocks(up, down, n=2):
    """Block-diagonal ``diag(up, down)`` for 2x2-valued arrays."""
    shape = np.broadcast_shapes(up.shape[:-2], down.shape[:-2])
    out = np.zeros(shape + (2 * n, 2 * n), dtype=complex)
    out[..., :n, :n] = up
    out[..., n:, n:] = down
    return out


def build_bhz(m):
    """Four-band ``diag(h(k), h*(-k))`` with ``h`` the two-band Chern matrix.

    Time reversal ``u_T = (i sigma_y) kron 1`` maps the blocks onto each other.
    """
    m = _finite("m", m)
    h_up, dh_up = _chern_terms(m)

    def hamiltonian(k, t):
        return _spin_blocks(h_up(k, t), np.conj(h_up(-k, t)))

    def derivative(k, t, mu):
        return _spin_blocks(dh_up(k, t, mu), -np.conj(dh_up(-k, t, mu)))

    return BlochModel(
        name="bhz",
        dimension=4,
        spatial_dims=2,
        hamiltonian=hamiltonian,
        derivative=derivative,
        symmetry_tags=frozenset({TRS_EVEN, BLOCK_DIAGONAL_SPIN}),
        trs=TrsOperator(BHZ_TRS_MATRIX),
        blocks=BHZ_BLOCKS,
        params={"m": m},
    )


@dataclass(frozen=True)
class QuenchProtocol:
    """Switching schedule ``s(t)`` from 0 (initial) to 1 (final).

    ``sudden`` jumps just after ``t_start``.  ``linear_ramp`` interpolates
    linearly over ``[t_start, t_end]``.  ``smooth_tanh`` follows
    ``tanh((t - t_start) / width)`` normalised to reach exactly 1 at
    ``t_end``; it tends to the sudden schedule as ``width -> 0``.
    """

    kind: str = "sudden"
    t_start: float = 0.0
    t_end: float | None = None
    width: float | None = None

    KINDS = ("sudden", "linear_ramp", "smooth_tanh")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError(f"unknown quench kind {self.kind!r}")
        _finite("t_start", self.t_start)
        if self.kind != "sudden":
            if self.t_end is None or not _finite("t_end", self.t_end) > self.t_start:
                raise InvalidParameterError(f"{self.kind} requires t_end > t_start")
        if self.kind == "smooth_tanh":
            if self.width is None or not _finite("width", self.width) > 0:
                raise InvalidParameterError("smooth_tanh requires width > 0")

    def schedule(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "sudden":
            return np.where(t > self.t_start, 1.0, 0.0)
        span = self.t_end - self.t_start
        if self.kind == "linear_ramp":
            return np.clip((t - self.t_start) / span, 0.0, 1.0)
        x = np.clip(t - self.t_start, 0.0, span)
        return np.tanh(x / self.width) / np.tanh(span / self.width)


def build_quench(initial, final, protocol):
    """``H(k, t) = (1 - s(t)) H_initial(k, t) + s(t) H_final(k, t)``."""
    if initial.dimension != final.dimension:
        raise InvalidCompositionError(
            f"dimension mismatch: {initial.dimension} vs {final.dimension}"
        )
    if initial.spatial_dims != final.spatial_dims:
        raise InvalidCompositionError(
            f"spatial dimension mismatch: {initial.spatial_dims} vs {final.spatial_dims}"
        )

    def mix(a, b, t):
        s = protocol.schedule(t)[..., None, None]
        return (1.0 - s) * a + s * b

    def hamiltonian(k, t):
        return mix(initial.evaluate(k, t), final.evaluate(k, t), t)

    def derivative(k, t, mu):
        return mix(initial.gradient(k, t, mu), final.gradient(k, t, mu), t)

    same_trs = (
        initial.trs is not None
        and final.trs is not None
        and np.array_equal(initial.trs.u, final.trs.u)
    )
    return BlochModel(
        name=f"quench({initial.name}->{final.name})",
        dimension=initial.dimension,
        spatial_dims=initial.spatial_dims,
        hamiltonian=hamiltonian,
        derivative=derivative,
        symmetry_tags=initial.symmetry_tags & final.symmetry_tags,
        trs=initial.trs if same_trs else None,
        blocks=initial.blocks if initial.blocks == final.blocks else None,
        params={
            "initial": dict(initial.params),
            "final": dict(final.params),
            "protocol": protocol.kind,
        },
    )


def _sample_momenta(spatial_dims, n_random=64, seed=0):
    axis = -np.pi + 2 * np.pi * np.arange(8) / 8
    mesh = np.stack(np.meshgrid(*([axis] * spatial_dims), indexing="ij"), axis=-1)
    rand = np.random.default_rng(seed).uniform(-np.pi, np.pi, (n_random, spatial_dims))
    return np.concatenate([mesh.reshape(-1, spatial_dims), rand])


def build_trs_odd_quench(base, v_up, amplitude=1.0):
    """Post-quench generator ``f(t) diag(V(k), -V*(-k))``.

    With ``u_T = (i sigma_y) kron 1`` this satisfies
    ``u_T H*(k, t) u_T^dagger = -H(-k, t)``, so the evolution operator obeys
    ``T U_k T^-1 = U_-k`` and Kramers pairing of the evolved states survives.

    ``v_up`` is a two-band :class:`BlochModel` or a constant Hermitian 2x2
    matrix; ``amplitude`` is a number, a vectorised callable ``f(t)`` or a
    :class:`QuenchProtocol` whose schedule is used.
    """
    if BLOCK_DIAGONAL_SPIN not in base.symmetry_tags or base.dimension != 4:
        raise InvalidCompositionError("base model must be a four-band spin-block model")
    if base.trs is None or not np.allclose(base.trs.u, BHZ_TRS_MATRIX, atol=1e-12):
        raise InvalidCompositionError("base model must carry u_T = (i sigma_y) kron 1")

    if not isinstance(v_up, BlochModel):
        v_up = build_constant(v_up, spatial_dims=base.spatial_dims, name="constant_v")
    if v_up.dimension != 2 or v_up.spatial_dims != base.spatial_dims:
        raise InvalidCompositionError("v_up must be a 2x2 model on the same momentum space")
    probe = v_up.evaluate(_sample_momenta(base.spatial_dims), 0.0)
    if np.max(np.abs(probe - np.conj(np.swapaxes(probe, -1, -2)))) > 1e-12:
        raise InvalidParameterError("v_up is not Hermitian")

    if isinstance(amplitude, QuenchProtocol):
        f = amplitude.schedule
    elif callable(amplitude):
        f = amplitude
    else:
        const = _finite("amplitude", amplitude)

        def f(t):
            return np.full(np.shape(t), const)

    def hamiltonian(k, t):
        ft = np.asarray(f(t), dtype=float)[..., None, None]
        return ft * _spin_blocks(v_up.evaluate(k, t), -np.conj(v_up.evaluate(-k, t)))

    def derivative(k, t, mu):
        ft = np.asarray(f(t), dtype=float)[..., None, None]
        # d/dk [-V*(-k)] = +(dV)*(-k)
        return ft * _spin_blocks(v_up.gradient(k, t, mu), np.conj(v_up.gradient(-k, t, mu)))

    return BlochModel(
        name=f"trs_odd_quench({v_up.name})",
        dimension=4,
        spatial_dims=base.spatial_dims,
        hamiltonian=hamiltonian,
        derivative=derivative,
        symmetry_tags=frozenset({TRS_ODD, BLOCK_DIAGONAL_SPIN}),
        trs=base.trs,
        blocks=base.blocks,
        params={"base": dict(base.params), "v_up": dict(v_up.params)},
    )
