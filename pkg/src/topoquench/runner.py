"""Scenario orchestration and bit-stable output files.

Every run writes ``series.csv`` and ``summary.json`` into ``output_dir``.
Failures map onto exit codes (2 symmetry violation, 3 inadmissible grid,
1 anything else) and leave no output files behind.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InadmissibleGridError, SymmetryViolationError, TopoQuenchError
from .evolve import MomentumGrid, TimeGrid, evolve_field, ground_state_field
from .geometry import (
    ADMISSIBILITY_FLOOR,
    geometric_phase_loop,
    hellmann_feynman_residual,
    lz_closed_form,
    lz_run,
    phase_lipschitz_bound,
)
from .invariants import (
    PAIRING_TOLERANCE,
    chern_series,
    pairing_residual,
    spin_chern_series,
    z2_series,
)
from .models import (
    QuenchProtocol,
    build_bhz,
    build_lz_parameterized,
    build_quench,
    build_trs_odd_quench,
    build_two_band_chern,
)
from .symmetry import (
    EIGENVECTOR_TOLERANCE,
    PROPAGATOR_TOLERANCE,
    SPECTRUM_TOLERANCE,
    TRS_TOLERANCE,
    check_auxiliary,
    check_auxiliary_trs,
    check_propagator_trs,
    check_trs_quench,
    check_trs_static,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_SYMMETRY = 2
EXIT_INADMISSIBLE = 3
SERIES_FILE = "series.csv"
SUMMARY_FILE = "summary.json"
HELLMANN_FEYNMAN_TOLERANCE = 1e-3
# snapshot spacing, in steps, of the loop trajectory used for dA/dt
HF_STRIDE = 5

COLUMNS = {
    "lz": ("t", "re_a", "im_a", "re_b", "im_b", "gamma", "gamma_rate"),
    "chern-quench": ("t", "chern", "min_overlap", "aux_spectrum", "aux_eigenvector"),
    "bhz-quench": ("t", "c_up", "c_down", "spin_c2", "min_overlap", "aux_spectrum",
                   "aux_eigenvector"),
    "z2-quench": ("t", "c2", "c_up", "c_down", "spin_c2", "pairing_residual", "min_overlap",
                  "propagator_trs", "aux_spectrum", "aux_eigenvector"),
    "verify": ("t", "propagator_trs", "aux_spectrum", "aux_eigenvector", "aux_trs",
               "pairing_residual"),
}


@dataclass
class RunSummary:
    """Outcome of one run.  ``wall_clock`` is kept out of ``summary.json``."""

    scenario: str
    config: dict
    results: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    admissibility: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    message: str = ""
    wall_clock: float = 0.0

    @property
    def ok(self):
        return self.exit_code == EXIT_OK

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "exit_code": self.exit_code,
            "message": self.message,
            "results": self.results,
            "residuals": self.residuals,
            "admissibility": self.admissibility,
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, allow_nan=False) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def format_value(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def format_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _write_atomic(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _remove_outputs(directory):
    for name in (SERIES_FILE, SUMMARY_FILE, SERIES_FILE + ".tmp", SUMMARY_FILE + ".tmp"):
        path = os.path.join(directory, name)
        if os.path.exists(path):
            os.remove(path)


def _max(values):
    values = [v for v in values if v is not None]
    return float(max(values)) if values else None


def _min(values):
    values = [v for v in values if v is not None]
    return float(min(values)) if values else None


def _protocol(cfg):
    return QuenchProtocol(cfg.quench_kind, cfg.quench_t_start, cfg.quench_t_end, cfg.quench_width)


class _AuxiliaryTracker:
    """Observer recording the auxiliary-Hamiltonian checks for each evolved field."""

    def __init__(self, initial, t0, cfg, trs=None):
        self.initial, self.t0, self.trs = initial, t0, trs
        self.tol_spec = cfg.tolerance("spectrum", SPECTRUM_TOLERANCE)
        self.tol_vec = cfg.tolerance("eigenvector", EIGENVECTOR_TOLERANCE)
        self.tol_prop = cfg.tolerance("propagator", PROPAGATOR_TOLERANCE)
        self.rows = []
        self.failures = []

    def __call__(self, f):
        spec, vec = check_auxiliary(self.initial, f, self.t0, self.tol_spec, self.tol_vec)
        row = {"aux_spectrum": spec.residual, "aux_eigenvector": vec.residual}
        reports = [spec, vec]
        if self.trs is not None:
            prop = check_propagator_trs(f.propagators, f.grid, self.trs, f.time, self.tol_prop)
            row["propagator_trs"] = prop.residual
            reports.append(prop)
        self.failures += [r for r in reports if not r.passed]
        self.rows.append(row)

    def column(self, name):
        return [r[name] for r in self.rows]

    def raise_on_failure(self):
        if self.failures:
            worst = max(self.failures, key=lambda r: r.residual / r.tolerance)
            raise SymmetryViolationError(
                f"{worst} at k={worst.worst_k}, t={worst.worst_t}",
                residual=worst.residual, time=worst.worst_t,
            )


def _series_failure(series, label, values):
    """Raise for an inadmissible sample or a non-constant index series."""
    series.raise_on_failure()
    present = set(values)
    if len(present) != 1:
        jumps = series.jumps(values)
        worst = _min(series.min_overlap)
        raise InadmissibleGridError(
            f"{label} series is not constant (values {sorted(present)}, changes at t={jumps}); "
            f"worst neighbour overlap {worst:.3g}; the grid is too coarse for these dynamics, "
            "refine it",
            overlap=worst, time=jumps[0] if jumps else None,
        )


def _run_lz(cfg, summary, workers):
    series = lz_run(cfg.v, cfg.g, cfg.t0, cfg.t1, cfg.dt)
    grid = TimeGrid.from_step(cfg.t0, cfg.t1, cfg.dt)
    idx = [grid.node_index(t) for t in cfg.sample_times()]
    rows = [
        (series.t[i], series.a[i].real, series.a[i].imag, series.b[i].real, series.b[i].imag,
         series.gamma[i], series.gamma_rate[i])
        for i in idx
    ]
    closed = lz_closed_form(cfg.v, cfg.g)
    loop = geometric_phase_loop(series.loop_field(-1, cfg.nl), cfg.tolerance("floor", ADMISSIBILITY_FLOOR))
    # |d gamma/dt| <= 2 pi g, so this spacing keeps snapshot jumps below pi / 2
    stride = max(1, min(len(series.t) // 4000, int(0.25 / (max(cfg.g, 1e-12) * cfg.dt))))
    trajectory = [series.loop_field(i, cfg.nl) for i in range(0, len(series.t), stride)]
    measured, bound = phase_lipschitz_bound(build_lz_parameterized(cfg.v, cfg.g), trajectory)
    summary.results.update(
        gamma_inf=series.gamma_final,
        gamma_closed_form=closed,
        gamma_error=series.gamma_final - closed,
        gamma_loop=loop,
        chern_constant=None,
        c2_constant=None,
    )
    summary.residuals.update(
        loop_discretization=abs(loop - series.gamma_final),
        norm_drift=float(np.max(np.abs(np.abs(series.a) ** 2 + np.abs(series.b) ** 2 - 1))),
        lipschitz_rate=measured,
        lipschitz_bound=bound,
    )
    return rows


def _run_chern(cfg, summary, workers):
    initial = build_two_band_chern(cfg.m_initial)
    model = build_quench(initial, build_two_band_chern(cfg.m_final), _protocol(cfg))
    grid = MomentumGrid.torus(cfg.nx, cfg.ny)
    tgrid = TimeGrid.from_step(cfg.t0, cfg.t1, cfg.dt)
    aux = _AuxiliaryTracker(initial, cfg.t0, cfg)
    series = chern_series(model, grid, tgrid, cfg.sample_times(), initial=initial,
                          floor=cfg.tolerance("floor", ADMISSIBILITY_FLOOR), workers=workers,
                          observer=aux)
    summary.results.update(chern_initial=series.chern[0], chern_constant=series.chern_constant,
                           c2_constant=None)
    summary.residuals.update(aux_spectrum=_max(aux.column("aux_spectrum")),
                             aux_eigenvector=_max(aux.column("aux_eigenvector")))
    summary.admissibility.update(min_overlap=_min(series.min_overlap))
    aux.raise_on_failure()
    _series_failure(series, "Chern", series.chern)
    return [
        (t, c, o, r["aux_spectrum"], r["aux_eigenvector"])
        for t, c, o, r in zip(series.times, series.chern, series.min_overlap, aux.rows)
    ]


def _block_results(series, summary):
    pairs = list(zip(series.c_up, series.c_down))
    summary.results.update(
        c_up_initial=series.c_up[0],
        c_down_initial=series.c_down[0],
        chern_constant=series._constant(pairs) if None not in series.c_up + series.c_down else False,
        total_chern_zero=all(u is not None and d is not None and u + d == 0 for u, d in pairs),
    )
    return pairs


def _run_bhz(cfg, summary, workers):
    initial = build_bhz(cfg.m_initial)
    model = build_quench(initial, build_bhz(cfg.m_final), _protocol(cfg))
    grid = MomentumGrid.torus(cfg.nx, cfg.ny)
    tgrid = TimeGrid.from_step(cfg.t0, cfg.t1, cfg.dt)
    aux = _AuxiliaryTracker(initial, cfg.t0, cfg)
    series = spin_chern_series(model, grid, tgrid, cfg.sample_times(), initial=initial,
                               floor=cfg.tolerance("floor", ADMISSIBILITY_FLOOR),
                               workers=workers, observer=aux)
    pairs = _block_results(series, summary)
    summary.results.update(spin_c2_initial=series.spin_c2[0],
                           c2_constant=series._constant(series.spin_c2))
    summary.residuals.update(aux_spectrum=_max(aux.column("aux_spectrum")),
                             aux_eigenvector=_max(aux.column("aux_eigenvector")))
    summary.admissibility.update(min_overlap=_min(series.min_overlap))
    aux.raise_on_failure()
    _series_failure(series, "spin-block Chern", pairs)
    return [
        (t, u, d, s, o, r["aux_spectrum"], r["aux_eigenvector"])
        for t, u, d, s, o, r in zip(series.times, series.c_up, series.c_down, series.spin_c2,
                                    series.min_overlap, aux.rows)
    ]


def _z2_model(cfg):
    initial = build_bhz(cfg.m_initial)
    generator = build_trs_odd_quench(initial, build_two_band_chern(cfg.m_final), _protocol(cfg))
    return initial, generator


def _run_z2(cfg, summary, workers):
    initial, model = _z2_model(cfg)
    grid = MomentumGrid.torus(cfg.nx, cfg.ny)
    tgrid = TimeGrid.from_step(cfg.t0, cfg.t1, cfg.dt)
    aux = _AuxiliaryTracker(initial, cfg.t0, cfg, trs=initial.trs)
    series = z2_series(model, grid, tgrid, cfg.sample_times(), trs=initial.trs, initial=initial,
                       floor=cfg.tolerance("floor", ADMISSIBILITY_FLOOR),
                       tolerance=cfg.tolerance("pairing", PAIRING_TOLERANCE),
                       workers=workers, observer=aux)
    pairs = _block_results(series, summary)
    summary.results.update(
        c2_initial=series.c2[0],
        c2_constant=series.c2_constant,
        c2_matches_spin_chern=series.c2 == series.spin_c2,
    )
    summary.residuals.update(
        pairing=_max(series.pairing_residual),
        propagator_trs=_max(aux.column("propagator_trs")),
        aux_spectrum=_max(aux.column("aux_spectrum")),
        aux_eigenvector=_max(aux.column("aux_eigenvector")),
    )
    summary.admissibility.update(min_overlap=_min(series.min_overlap))
    aux.raise_on_failure()
    _series_failure(series, "half-zone Z2", series.c2)
    _series_failure(series, "spin-block Chern", pairs)
    if series.c2 != series.spin_c2:
        raise InadmissibleGridError(
            f"half-zone Z2 {series.c2} disagrees with the spin-Chern parity {series.spin_c2}; "
            "refine the grid",
            overlap=_min(series.min_overlap),
        )
    return [
        (t, c2, u, d, s, p, o, r["propagator_trs"], r["aux_spectrum"], r["aux_eigenvector"])
        for t, c2, u, d, s, p, o, r in zip(series.times, series.c2, series.c_up, series.c_down,
                                           series.spin_c2, series.pairing_residual,
                                           series.min_overlap, aux.rows)
    ]


def _hellmann_feynman(cfg, workers):
    model = build_lz_parameterized(cfg.v, cfg.g)
    loop = MomentumGrid.loop(cfg.nl)
    tgrid = TimeGrid.from_step(cfg.t0, cfg.t1, cfg.dt)
    field0 = ground_state_field(model, loop, cfg.t0, 1)
    times = tgrid.nodes()[::HF_STRIDE]
    trajectory = evolve_field(model, field0, tgrid, times, workers=workers)
    return hellmann_feynman_residual(model, trajectory, 0, cfg.tolerance("floor", ADMISSIBILITY_FLOOR))


def _run_verify(cfg, summary, workers):
    initial, model = _z2_model(cfg)
    trs = initial.trs
    grid = MomentumGrid.torus(cfg.nx, cfg.ny)
    tgrid = TimeGrid.from_step(cfg.t0, cfg.t1, cfg.dt)
    tol_trs = cfg.tolerance("trs", TRS_TOLERANCE)
    tol_prop = cfg.tolerance("propagator", PROPAGATOR_TOLERANCE)
    tol_pair = cfg.tolerance("pairing", PAIRING_TOLERANCE)
    samples = cfg.sample_times()
    reports = [
        check_trs_static(initial, trs, cfg.t0, tolerance=tol_trs),
        check_trs_quench(model, trs, tgrid.nodes()[:: max(1, tgrid.n_steps // 64)],
                         tolerance=tol_trs),
    ]
    aux = _AuxiliaryTracker(initial, cfg.t0, cfg, trs=trs)
    rows = []
    pair_worst = 0.0
    for f in evolve_field(model, ground_state_field(initial, grid, cfg.t0), tgrid, samples,
                          workers=workers):
        aux(f)
        ta = check_auxiliary_trs(initial, f, cfg.t0, trs, tol_prop)
        pair = pairing_residual(f, trs)
        pair_worst = max(pair_worst, pair)
        reports.append(ta)
        r = aux.rows[-1]
        rows.append((f.time, r["propagator_trs"], r["aux_spectrum"], r["aux_eigenvector"],
                     ta.residual, pair))
    reports += aux.failures
    hf = _hellmann_feynman(cfg, workers)
    tol_hf = cfg.tolerance("hellmann_feynman", HELLMANN_FEYNMAN_TOLERANCE)

    summary.residuals.update(
        trs_static=reports[0].residual,
        trs_quench=reports[1].residual,
        propagator_trs=_max(aux.column("propagator_trs")),
        aux_spectrum=_max(aux.column("aux_spectrum")),
        aux_eigenvector=_max(aux.column("aux_eigenvector")),
        aux_trs=_max(r[4] for r in rows),
        pairing=pair_worst,
        hellmann_feynman=hf,
    )
    failed = [r for r in reports if not r.passed]
    summary.results.update(
        chern_constant=None,
        c2_constant=None,
        checks_passed=not failed and pair_worst < tol_pair and hf < tol_hf,
    )
    if failed:
        worst = max(failed, key=lambda r: r.residual / r.tolerance)
        raise SymmetryViolationError(f"{worst} at k={worst.worst_k}, t={worst.worst_t}",
                                     residual=worst.residual, time=worst.worst_t)
    if pair_worst >= tol_pair:
        raise SymmetryViolationError(f"Kramers pairing residual {pair_worst:.3g} >= {tol_pair:g}",
                                     residual=pair_worst)
    if hf >= tol_hf:
        raise TopoQuenchError(f"Hellmann-Feynman residual {hf:.3g} >= {tol_hf:g}; reduce time.dt")
    return rows


_SCENARIOS = {
    "lz": _run_lz,
    "chern-quench": _run_chern,
    "bhz-quench": _run_bhz,
    "z2-quench": _run_z2,
    "verify": _run_verify,
}


def _diagnostic(exc):
    parts = [str(exc)]
    for name in ("k", "overlap", "time", "residual"):
        value = getattr(exc, name, None)
        if value is not None and f"{name}=" not in parts[0]:
            parts.append(f"{name}={value}")
    return "; ".join(parts)


def exit_code_for(exc):
    if isinstance(exc, SymmetryViolationError):
        return EXIT_SYMMETRY
    if isinstance(exc, InadmissibleGridError):
        return EXIT_INADMISSIBLE
    return EXIT_OTHER


def run(cfg, workers=1, write=True):
    """Run one scenario; returns a :class:`RunSummary`.

    Output files are written only on success.  On failure any existing
    ``series.csv``/``summary.json`` in the output directory are removed and
    the summary carries the exit code and diagnostic.
    """
    start = time.perf_counter()
    summary = RunSummary(cfg.scenario, cfg.echo())
    try:
        with np.errstate(divide="raise", over="raise", invalid="raise"):
            rows = _SCENARIOS[cfg.scenario](cfg, summary, workers)
        if write:
            os.makedirs(cfg.output_dir, exist_ok=True)
            _write_atomic(os.path.join(cfg.output_dir, SERIES_FILE),
                          format_csv(COLUMNS[cfg.scenario], rows))
            _write_atomic(os.path.join(cfg.output_dir, SUMMARY_FILE), summary.to_json())
    except (TopoQuenchError, FloatingPointError, ArithmeticError, ValueError, OSError) as exc:
        summary.exit_code = exit_code_for(exc)
        summary.message = _diagnostic(exc)
        if write and os.path.isdir(cfg.output_dir):
            _remove_outputs(cfg.output_dir)
    summary.wall_clock = time.perf_counter() - start
    return summary


@dataclass
class SweepResult:
    axis: str
    values: list
    summaries: list
    n_star: int | None = None

    def table(self):
        columns = ("value", "exit_code", "chern_constant", "c2_constant", "gamma_inf",
                   "gamma_error", "min_overlap", "message")
        rows = []
        for v, s in zip(self.values, self.summaries):
            rows.append((v, s.exit_code, s.results.get("chern_constant"),
                         s.results.get("c2_constant"), s.results.get("gamma_inf"),
                         s.results.get("gamma_error"), s.admissibility.get("min_overlap"),
                         s.message))
        return columns, rows


def _sweep_label(axis, value):
    return f"{axis}-{value:g}" if isinstance(value, float) else f"{axis}-{value}"


def sweep(cfg, axis, values, workers=1, write=True):
    """Repeat ``run`` over grid sizes or time steps.

    Each value runs into its own subdirectory of ``cfg.output_dir``; errors
    are recorded per value.  For grid sweeps ``n_star`` is the smallest grid
    whose index series is admissible and constant.
    """
    if axis not in ("grid", "dt"):
        raise ValueError(f"axis must be 'grid' or 'dt', got {axis!r}")
    values = [int(v) for v in values] if axis == "grid" else [float(v) for v in values]
    if not values or any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be strictly increasing")
    summaries = []
    for value in values:
        out = os.path.join(cfg.output_dir, _sweep_label(axis, value))
        if axis == "grid":
            changes = {"nl": value} if not cfg.torus else {"nx": value, "ny": value}
        else:
            changes = {"dt": value}
        try:
            sub = cfg.replace(output_dir=out, **changes)
        except TopoQuenchError as exc:
            s = RunSummary(cfg.scenario, cfg.echo(), exit_code=EXIT_OTHER, message=str(exc))
            summaries.append(s)
            continue
        summaries.append(run(sub, workers=workers, write=write))
    result = SweepResult(axis, values, summaries)
    if axis == "grid":
        for v, s in zip(values, summaries):
            flags = [s.results.get("chern_constant"), s.results.get("c2_constant")]
            if s.ok and all(f is not False for f in flags):
                result.n_star = v
                break
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        columns, rows = result.table()
        _write_atomic(os.path.join(cfg.output_dir, "sweep.csv"), format_csv(columns, rows))
        doc = {"axis": axis, "values": values, "n_star": result.n_star,
               "runs": [s.to_dict() for s in summaries]}
        _write_atomic(os.path.join(cfg.output_dir, "sweep.json"),
                      json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n")
    return result
