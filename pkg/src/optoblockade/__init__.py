"""Photon blockade in an optomechanical cavity coupled through its mechanics to a two-level system."""

from .analytic import (
    DressedLevel,
    KerrShifts,
    WeakDriveSolution,
    dressed_energies,
    dressed_state_params,
    kerr_shifts,
    weak_drive_closed_form,
    weak_drive_deltas,
    weak_drive_g2,
    weak_drive_linear_solve,
)
from .hilbert import SpaceDims
from .liouvillian import (
    DensityMatrix,
    Superoperator,
    ThermalBath,
    assemble_liouvillian,
    converge_truncation,
    dissipator,
    evolve,
    liouvillian_for,
    qubit_dissipator,
    steady_state,
    thermal_occupation,
)
from .model import (
    Hamiltonian,
    SystemParams,
    build_lab_hamiltonian,
    build_non_hermitian_hamiltonian,
    build_polaron_hamiltonian,
    build_rotating_hamiltonian,
)
from .observables import g2_zero, mean_photon, populations

__version__ = "0.1.0"
