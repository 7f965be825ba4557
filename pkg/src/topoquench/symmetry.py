"""Time-reversal checks and the auxiliary-Hamiltonian picture.

An evolved frame ``U psi0`` is an eigenframe of ``H_a = U H0 U^dag``, which
has the spectrum of ``H0``; the transported time reversal is
``T_a = U_{-k} u0 U_k^T K``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidGridError, InvalidPropagatorError
from .models import TrsOperator, _sample_momenta

TRS_TOLERANCE = 1e-10
PROPAGATOR_TOLERANCE = 1e-8
SPECTRUM_TOLERANCE = 1e-9
EIGENVECTOR_TOLERANCE = 1e-8
UNITARITY_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SymmetryReport:
    name: str
    residual: float
    tolerance: float
    worst_k: tuple | None = None
    worst_t: float | None = None

    @property
    def passed(self):
        return bool(self.residual < self.tolerance)

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"{self.name}: {flag} (residual {self.residual:.3g} < {self.tolerance:g})"


def _dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _max_entry(a):
    return np.max(np.abs(a), axis=(-1, -2))


def _report(name, residuals, k, times, tolerance):
    """Reduce per-(t, k) residuals to a report at the worst location."""
    idx = np.unravel_index(np.argmax(residuals), residuals.shape)
    return SymmetryReport(
        name,
        float(residuals[idx]),
        tolerance,
        tuple(float(x) for x in k[idx[1]]),
        float(times[idx[0]]),
    )


def _trs_residual(model, trs, sign, times, k_points, name, tolerance):
    k = _sample_momenta(model.spatial_dims, 100) if k_points is None else np.asarray(k_points, float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    h = model.evaluate(k[None], times[:, None])
    h_neg = model.evaluate(-k[None], times[:, None])
    residuals = _max_entry(trs.transform(h) - sign * h_neg)
    return _report(name, residuals, k, times, tolerance)


def check_trs_static(model, trs, t=0.0, k_points=None, tolerance=TRS_TOLERANCE):
    """``u H*(k, t) u^dag = H(-k, t)`` over sampled momenta."""
    return _trs_residual(model, trs, 1.0, [t], k_points, "trs_static", tolerance)


def check_trs_quench(model, trs, times=None, k_points=None, tolerance=TRS_TOLERANCE):
    """``u H*(k, t) u^dag = -H(-k, t)`` over sampled momenta and times."""
    if times is None:
        times = np.concatenate([np.linspace(-2.0, 10.0, 25),
                                np.random.default_rng(1).uniform(-2.0, 10.0, 8)])
    return _trs_residual(model, trs, -1.0, times, k_points, "trs_quench", tolerance)


def check_propagator_trs(propagators, grid, trs, time=None, tolerance=PROPAGATOR_TOLERANCE):
    """``u U_k* u^dag = U_{-k}`` for propagators stored on a symmetric grid."""
    neg = grid.negated_index()
    if neg is None:
        raise InvalidGridError("grid is not symmetric under k -> -k")
    propagators = np.asarray(propagators, dtype=complex)
    residuals = _max_entry(trs.transform(propagators) - propagators[np.ix_(*neg)])
    flat = residuals.reshape(1, -1)
    return _report("propagator_trs", flat, grid.points().reshape(-1, grid.ndim),
                   [np.nan if time is None else time], tolerance)


def unitarity_error(u):
    u = np.asarray(u, dtype=complex)
    return float(np.max(np.abs(_dagger(u) @ u - np.eye(u.shape[-1]))))


def auxiliary_hamiltonian(u, h0):
    """``U H0 U^dag`` (batched)."""
    err = unitarity_error(u)
    if err > UNITARITY_TOLERANCE:
        raise InvalidPropagatorError(f"propagator is not unitary (residual {err:.3g})")
    return u @ h0 @ _dagger(u)


def auxiliary_trs(u_plus, u_minus, trs0):
    """Time reversal of the auxiliary Hamiltonian, ``U_{-k} u0 U_k^T K``."""
    for u in (u_plus, u_minus):
        err = unitarity_error(u)
        if err > UNITARITY_TOLERANCE:
            raise InvalidPropagatorError(f"propagator is not unitary (residual {err:.3g})")
    return TrsOperator(u_minus @ trs0.u @ np.swapaxes(u_plus, -1, -2))


def spectrum_distance(ha, h0):
    """Largest gap between the sorted eigenvalue multisets, per point."""
    return np.max(np.abs(np.linalg.eigvalsh(ha) - np.linalg.eigvalsh(h0)), axis=-1)


def check_auxiliary(model, field_t, t0, tolerance_spectrum=SPECTRUM_TOLERANCE,
                    tolerance_vectors=EIGENVECTOR_TOLERANCE):
    """Spectrum and eigenframe checks of ``H_a`` for an evolved field.

    ``field_t`` must carry propagators; ``H0`` is the model at ``t0``.  The
    eigenframe residual is ``|H_a psi_n(t) - eps_n psi_n(t)|`` with ``eps_n``
    taken from the initial frame.
    """
    grid = field_t.grid
    k = grid.points()
    h0 = model.evaluate(k, t0)
    u = field_t.propagators
    ha = auxiliary_hamiltonian(u, h0)
    psi_t = field_t.vectors
    psi_0 = _dagger(u) @ psi_t
    energies = _dagger(psi_0) @ h0 @ psi_0
    flat_k = k.reshape(-1, grid.ndim)
    spec = spectrum_distance(ha, h0).reshape(1, -1)
    vec = _max_entry(ha @ psi_t - psi_t @ energies).reshape(1, -1)
    return (
        _report("auxiliary_spectrum", spec, flat_k, [field_t.time], tolerance_spectrum),
        _report("auxiliary_eigenvectors", vec, flat_k, [field_t.time], tolerance_vectors),
    )


def check_auxiliary_trs(model, field_t, t0, trs0, tolerance=PROPAGATOR_TOLERANCE):
    """Transported time reversal ``T_a`` against ``H_a`` at every grid point."""
    grid = field_t.grid
    neg = grid.negated_index()
    if neg is None:
        raise InvalidGridError("grid is not symmetric under k -> -k")
    u = field_t.propagators
    u_neg = u[np.ix_(*neg)]
    h0 = model.evaluate(grid.points(), t0)
    ha = auxiliary_hamiltonian(u, h0)
    ta = auxiliary_trs(u, u_neg, trs0)
    lhs = ta.u @ np.conj(ha) @ _dagger(ta.u)
    residuals = _max_entry(lhs - ha[np.ix_(*neg)]).reshape(1, -1)
    return _report("auxiliary_trs", residuals, grid.points().reshape(-1, grid.ndim),
                   [field_t.time], tolerance)
