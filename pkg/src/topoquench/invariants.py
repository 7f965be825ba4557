"""Lattice Chern and Z2 indexes and their time series under quenches.

Link variables are normalised overlap determinants between neighbouring
frames; a plaquette flux is ``-arg`` of the counter-clockwise link product,
which matches ``A = i <psi|d psi>``.  Flux sums use ``math.fsum`` so the
integer readout is independent of summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InadmissibleGridError,
    InvalidGridError,
    InvalidInputError,
    NumericError,
    SymmetryViolationError,
)
from .evolve import StateField, evolve_field, ground_state_field
from .geometry import ADMISSIBILITY_FLOOR, _dagger, link_overlaps, overlap_det

PAIRING_TOLERANCE = 1e-8
INTEGER_TOLERANCE = 1e-9


@dataclass(frozen=True)
class PlaquetteField:
    ux: np.ndarray
    uy: np.ndarray
    flux: np.ndarray
    min_overlap: float

    @property
    def total_flux(self):
        return math.fsum(self.flux.ravel())


def _worst_link(overlaps, grid, time, floor):
    mags = np.minimum(np.abs(overlaps[0]), np.abs(overlaps[1]))
    worst = np.unravel_index(np.argmin(mags), mags.shape)
    value = float(mags[worst])
    if value <= floor:
        k = tuple(float(x) for x in grid.points()[worst])
        raise InadmissibleGridError(
            f"link overlap {value:.3g} at k={k} is below {floor:g}; "
            "a denser momentum grid is required",
            k=k,
            overlap=value,
            time=time,
        )
    return value


def plaquette_field(state_field, floor=ADMISSIBILITY_FLOOR):
    if state_field.grid.ndim != 2:
        raise InvalidInputError("plaquettes need a two-dimensional torus field")
    v = state_field.vectors
    ox = link_overlaps(v, 0)
    oy = link_overlaps(v, 1)
    min_overlap = _worst_link((ox, oy), state_field.grid, state_field.time, floor)
    ux = ox / np.abs(ox)
    uy = oy / np.abs(oy)
    loop = ux * np.roll(uy, -1, axis=0) * np.conj(np.roll(ux, -1, axis=1)) * np.conj(uy)
    return PlaquetteField(ux, uy, -np.angle(loop), min_overlap)


def _to_integer(value, what):
    n = round(value)
    if abs(value - n) > INTEGER_TOLERANCE:
        raise NumericError(f"{what} {value!r} is not an integer")
    return int(n)


def chern_number(state_field, floor=ADMISSIBILITY_FLOOR):
    """Total Chern number of the occupied frames on the torus."""
    p = plaquette_field(state_field, floor)
    return _to_integer(p.total_flux / (2 * np.pi), "Chern flux")


def block_fields(state_field, blocks):
    """Split a field into per-block fields by projecting onto each block.

    Each block must carry a fixed number of occupied states everywhere,
    otherwise the block (spin) structure has been broken.
    """
    fields = []
    v = state_field.vectors
    for idx in blocks:
        sub = v[..., list(idx), :]
        u, s, _ = np.linalg.svd(sub, full_matrices=False)
        counts = np.sum(s > 0.5, axis=-1)
        if np.min(counts) != np.max(counts) or np.min(counts) == 0:
            raise SymmetryViolationError("occupied states are not block diagonal")
        if np.max(np.abs(s - np.rint(s))) > 1e-8:
            raise SymmetryViolationError("occupied states mix the blocks")
        n = int(counts.flat[0])
        fields.append(StateField(state_field.grid, u[..., :n], state_field.time))
    return fields


def block_chern_numbers(state_field, blocks, floor=ADMISSIBILITY_FLOOR):
    return [chern_number(f, floor) for f in block_fields(state_field, blocks)]


def spin_chern_z2(c_up, c_down):
    """``((C_up - C_down) / 2) mod 2`` for a time-reversal pair of blocks."""
    c_up, c_down = int(c_up), int(c_down)
    if c_up + c_down != 0:
        raise SymmetryViolationError(f"C_up + C_down = {c_up + c_down}, expected 0")
    return ((c_up - c_down) // 2) % 2


def pairing_residual(state_field, trs):
    """``max |P(-k) - u P(k)* u^dag|`` for the occupied projectors."""
    neg = state_field.grid.negated_index()
    if neg is None:
        raise InvalidGridError("grid is not symmetric under k -> -k")
    v = state_field.vectors
    p = v @ _dagger(v)
    p_neg = p[np.ix_(*neg)]
    return float(np.max(np.abs(p_neg - trs.transform(p))))


def _polar(m):
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def _kramers_frame(frame, trs):
    """Orthonormal basis ``[psi1, T psi1, psi3, T psi3, ...]`` of the span of ``frame``."""
    proj = frame @ _dagger(frame)
    cols = []
    for candidate in frame.T:
        for c in cols:
            candidate = candidate - c * np.vdot(c, candidate)
        norm = np.linalg.norm(candidate)
        if norm < 1e-6:
            continue
        a = candidate / norm
        b = proj @ trs.apply(a)
        for c in cols + [a]:
            b = b - c * np.vdot(c, b)
        b = b / np.linalg.norm(b)
        cols.extend([a, b])
        if len(cols) == frame.shape[1]:
            break
    return np.stack(cols, axis=-1)


def _kramers_w(n):
    # T [a, Ta] = [Ta, -a] = [a, Ta] W
    w = np.zeros((n, n))
    for j in range(0, n, 2):
        w[j + 1, j] = -1.0
        w[j, j + 1] = 1.0
    return w


def _tr_constrained_row(row, trs):
    """Impose ``Phi(-k) = T Phi(k) W`` along a time-reversal invariant line.

    ``row`` holds the frames along kx at fixed ky = 0 or -pi; index ``i``
    pairs with ``(n - i) % n``.  Between the two TRIMs the frames are
    parallel transported, so every boundary link phase is small except the
    one closing onto the second TRIM; an arbitrary stored gauge can put
    links at exactly -pi/pi where the principal branch is decided by
    roundoff.  All frames stay inside the stored subspaces.
    """
    n, _, n_occ = row.shape
    w = _kramers_w(n_occ)
    out = row.copy()
    for trim in (0, n // 2):
        out[trim] = _kramers_frame(row[trim], trs)
    for i in range(1, n // 2):
        out[i] = row[i] @ _polar(_dagger(row[i]) @ out[i - 1])
    for i in range(1, n // 2):
        target = trs.apply(out[i]) @ w
        j = n - i
        out[j] = row[j] @ _polar(_dagger(row[j]) @ target)
    return out


def z2_half_bz(state_field, trs, floor=ADMISSIBILITY_FLOOR, tolerance=PAIRING_TOLERANCE):
    """Z2 index from half the Brillouin zone, ``ky`` in ``[-pi, 0]``.

    The gauge is fixed by Kramers pairing on the two time-reversal invariant
    lines bounding the half zone; the index is the boundary phase minus the
    enclosed lattice flux, divided by ``2 pi``, mod 2.
    """
    grid = state_field.grid
    if grid.ndim != 2 or grid.offset != 0.0 or grid.shape[0] % 2 or grid.shape[1] % 2:
        raise InvalidGridError("Z2 needs an even, unshifted torus grid containing the TRIMs")
    if state_field.n_occupied % 2:
        raise InvalidInputError("Z2 needs an even number of occupied bands")
    residual = pairing_residual(state_field, trs)
    if residual > tolerance:
        raise SymmetryViolationError(
            f"occupied states break Kramers pairing (residual {residual:.3g})",
            residual=residual,
            time=state_field.time,
        )
    nx, ny = grid.shape
    half = ny // 2
    # rows 0 (ky = -pi) through half (ky = 0)
    v = state_field.vectors[:, : half + 1].copy()
    v[:, 0] = _tr_constrained_row(v[:, 0], trs)
    v[:, half] = _tr_constrained_row(v[:, half], trs)

    ox = overlap_det(v, np.roll(v, -1, axis=0))
    oy = overlap_det(v[:, :-1], v[:, 1:])
    mags = min(float(np.min(np.abs(ox))), float(np.min(np.abs(oy))))
    if mags <= floor:
        raise InadmissibleGridError(
            f"half-zone link overlap {mags:.3g} below {floor:g}",
            overlap=mags,
            time=state_field.time,
        )
    ux = ox / np.abs(ox)
    uy = oy / np.abs(oy)
    loop = ux[:, :-1] * np.roll(uy, -1, axis=0) * np.conj(ux[:, 1:]) * np.conj(uy)
    bulk = math.fsum((-np.angle(loop)).ravel())
    # link (n-1-i -> n-i) equals link (i -> i+1) under the constraint; count
    # the first half twice so both copies always take the same branch
    first = slice(0, nx // 2)
    edge = 2 * math.fsum((-np.angle(ux[first, 0])).tolist() + np.angle(ux[first, half]).tolist())
    value = _to_integer((edge - bulk) / (2 * np.pi), "half-zone Z2 sum")
    return value % 2


@dataclass
class InvariantSeries:
    """Time series of lattice indexes; failed samples store ``None``."""

    times: list = field(default_factory=list)
    chern: list = field(default_factory=list)
    c_up: list = field(default_factory=list)
    c_down: list = field(default_factory=list)
    c2: list = field(default_factory=list)
    spin_c2: list = field(default_factory=list)
    min_overlap: list = field(default_factory=list)
    pairing_residual: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    grid_shape: tuple = ()

    def record_failure(self, t, exc):
        self.failures.append(
            {"time": t, "message": str(exc), "k": getattr(exc, "k", None),
             "overlap": getattr(exc, "overlap", None)}
        )

    @property
    def admissible(self):
        return not self.failures

    @staticmethod
    def _constant(values):
        present = [x for x in values if x is not None]
        return bool(present) and len(present) == len(values) and len(set(present)) == 1

    @property
    def chern_constant(self):
        return self._constant(self.chern)

    @property
    def c2_constant(self):
        return self._constant(self.c2)

    def jumps(self, values=None):
        """Times at which the primary index changes value."""
        values = self.chern if values is None else values
        out = []
        for (t0, a), (t1, b) in zip(zip(self.times, values), zip(self.times[1:], values[1:])):
            if a is not None and b is not None and a != b:
                out.append(t1)
        return out

    def raise_on_failure(self):
        if self.failures:
            f = min(self.failures, key=lambda x: x["overlap"] if x["overlap"] is not None else 1.0)
            raise InadmissibleGridError(
                f"t={f['time']}: {f['message']}", k=f["k"], overlap=f["overlap"], time=f["time"]
            )


def chern_series(model, grid, time_grid, sample_times, n_occupied=None, initial=None,
                 floor=ADMISSIBILITY_FLOOR, workers=1, observer=None):
    """Chern number of the evolved occupied bands at each sample time.

    The initial field is the ground state of ``initial`` (default: ``model``)
    at ``time_grid.t0``.  An inadmissible sample is recorded as a failure.
    ``observer``, if given, is called with every evolved field.
    """
    initial = model if initial is None else initial
    field0 = ground_state_field(initial, grid, time_grid.t0, n_occupied)
    chern_number(field0, floor)
    series = InvariantSeries(grid_shape=grid.shape)
    for f in evolve_field(model, field0, time_grid, sample_times, workers=workers):
        series.times.append(f.time)
        if observer is not None:
            observer(f)
        try:
            p = plaquette_field(f, floor)
            series.min_overlap.append(p.min_overlap)
            series.chern.append(_to_integer(p.total_flux / (2 * np.pi), "Chern flux"))
        except InadmissibleGridError as exc:
            series.min_overlap.append(exc.overlap)
            series.chern.append(None)
            series.record_failure(f.time, exc)
    return series


def spin_chern_series(model, grid, time_grid, sample_times, initial=None,
                      floor=ADMISSIBILITY_FLOOR, workers=1, observer=None):
    """Per-block Chern numbers and their spin-Chern Z2 along a quench."""
    initial = model if initial is None else initial
    blocks = model.blocks or initial.blocks
    if blocks is None:
        raise InvalidInputError("model has no spin-block structure")
    field0 = ground_state_field(initial, grid, time_grid.t0)
    series = InvariantSeries(grid_shape=grid.shape)
    for f in evolve_field(model, field0, time_grid, sample_times, workers=workers):
        series.times.append(f.time)
        if observer is not None:
            observer(f)
        _fill_blocks(series, f, blocks, floor)
    return series


def _fill_blocks(series, f, blocks, floor):
    try:
        parts = block_fields(f, blocks)
        plaq = [plaquette_field(p, floor) for p in parts]
        up, down = (_to_integer(p.total_flux / (2 * np.pi), "Chern flux") for p in plaq)
        series.min_overlap.append(min(p.min_overlap for p in plaq))
        series.c_up.append(up)
        series.c_down.append(down)
        series.spin_c2.append(spin_chern_z2(up, down))
    except InadmissibleGridError as exc:
        series.min_overlap.append(exc.overlap)
        series.c_up.append(None)
        series.c_down.append(None)
        series.spin_c2.append(None)
        series.record_failure(f.time, exc)


def z2_series(model, grid, time_grid, sample_times, trs=None, initial=None,
              floor=ADMISSIBILITY_FLOOR, tolerance=PAIRING_TOLERANCE, workers=1,
              observer=None):
    """Half-zone Z2 of the evolved occupied bands at each sample time.

    ``model`` must be a time-reversal-odd generator; the initial field is the
    ground state of ``initial`` (a time-reversal-even Hamiltonian).  For
    spin-block models the per-block Chern numbers are recorded as well.
    """
    from .symmetry import check_trs_quench

    trs = trs or model.trs
    initial = model if initial is None else initial
    if trs is None:
        raise InvalidInputError("a time-reversal operator is required")
    report = check_trs_quench(model, trs, times=time_grid.nodes()[:: max(1, time_grid.n_steps // 16)])
    if not report.passed:
        raise SymmetryViolationError(
            f"quench generator is not time-reversal odd (residual {report.residual:.3g})",
            residual=report.residual,
        )
    field0 = ground_state_field(initial, grid, time_grid.t0)
    series = InvariantSeries(grid_shape=grid.shape)
    blocks = model.blocks if model.blocks == initial.blocks else None
    for f in evolve_field(model, field0, time_grid, sample_times, workers=workers):
        series.times.append(f.time)
        if observer is not None:
            observer(f)
        series.pairing_residual.append(pairing_residual(f, trs))
        try:
            series.c2.append(z2_half_bz(f, trs, floor, tolerance))
        except InadmissibleGridError as exc:
            series.c2.append(None)
            series.record_failure(f.time, exc)
        if blocks is not None:
            _fill_blocks(series, f, blocks, floor)
    return series
