"""Quench dynamics of Bloch states and time-resolved topological indexes."""

from .config import RunConfig, parse_config
from .errors import (
    DegenerateSpectrumError,
    InadmissibleGridError,
    InadmissibleLoopError,
    SymmetryViolationError,
    TopoQuenchError,
)
from .evolve import MomentumGrid, StateField, TimeGrid, evolve_field, evolve_point, expm_step, ground_state_field
from .geometry import (
    berry_connection,
    geometric_phase_loop,
    hamiltonian_energy,
    hellmann_feynman_residual,
    lz_closed_form,
    lz_run,
)
from .invariants import chern_number, chern_series, spin_chern_z2, z2_half_bz, z2_series
from .models import (
    BlochModel,
    QuenchProtocol,
    TrsOperator,
    build_bhz,
    build_lz_parameterized,
    build_quench,
    build_trs_odd_quench,
    build_two_band_chern,
)
from .runner import RunSummary, run, sweep

__version__ = "0.1.0"
