"""Physical parameters and Hamiltonians of the driven optomechanics + TLS system.

All user-facing frequencies and rates are ordinary frequencies nu = omega / 2pi
in MHz. Angular frequencies (rad/us) are produced in exactly one place,
:func:`angular`, and every Hamiltonian is built in units where hbar = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .hilbert import SpaceDims, annihilation, embed, identity, kron, pauli

__all__ = [
    "COUPLING_MODELS",
    "FRAMES",
    "QUBIT_CONVENTIONS",
    "Hamiltonian",
    "SystemParams",
    "angular",
    "build_effective_phonon_hamiltonian",
    "build_lab_hamiltonian",
    "build_non_hermitian_hamiltonian",
    "build_polaron_hamiltonian",
    "build_rotating_hamiltonian",
]

QUBIT_CONVENTIONS = ("sigma_z_half", "sigma_plus_minus")
COUPLING_MODELS = ("rabi", "jaynes_cummings")
FRAMES = ("lab", "rotating", "polaron", "effective_phonon", "non_hermitian")

HERMITIAN_TOL = 1e-12


def angular(nu):
    """MHz -> rad/us."""
    return 2 * math.pi * nu


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters, frequencies in MHz (nu = omega / 2pi).

    ``delta_a`` is the cavity-drive detuning (omega_a - omega_d) / 2pi and is
    the only cavity frequency the rotating frame needs; ``nu_a`` is optional
    and only used by the lab-frame Hamiltonian and the thermal photon number.
    Defaults are the reference parameter set with g/2pi = 4 MHz.
    """

    delta_a: float = 0.0
    nu_b: float = 10.0
    nu_q: float = 10.0
    chi: float = 0.2
    g: float = 4.0
    omega_drive: float = 0.02
    drive_phase: float = 0.0
    gamma_a: float = 0.02
    gamma_b: float = 0.001
    gamma_q: float = 0.002
    temperature: float = 1e-3
    nu_a: float | None = None
    qubit_convention: str = "sigma_z_half"
    coupling_model: str = "rabi"

    def __post_init__(self):
        for name in ("nu_b", "nu_q", "chi", "g", "omega_drive", "gamma_a", "gamma_b",
                     "gamma_q", "temperature"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if not math.isfinite(self.delta_a) or not math.isfinite(self.drive_phase):
            raise ValueError("delta_a and drive_phase must be finite")
        if self.nu_a is not None and not (math.isfinite(self.nu_a) and self.nu_a >= 0):
            raise ValueError(f"nu_a must be finite and >= 0, got {self.nu_a!r}")
        if self.qubit_convention not in QUBIT_CONVENTIONS:
            raise ValueError(f"qubit_convention must be one of {QUBIT_CONVENTIONS}")
        if self.coupling_model not in COUPLING_MODELS:
            raise ValueError(f"coupling_model must be one of {COUPLING_MODELS}")

    @property
    def drive(self) -> complex:
        """Complex drive amplitude Omega in rad/us."""
        return angular(self.omega_drive) * complex(math.cos(self.drive_phase),
                                                   math.sin(self.drive_phase))

    @property
    def mech_qubit_detuning(self) -> float:
        """omega_b - omega_q in rad/us."""
        return angular(self.nu_b - self.nu_q)

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def scaled(self, factor: float) -> "SystemParams":
        """All frequency-valued fields multiplied by ``factor``."""
        skip = {"drive_phase", "temperature", "qubit_convention", "coupling_model"}
        changes = {}
        for f in fields(self):
            if f.name in skip:
                continue
            value = getattr(self, f.name)
            if value is not None:
                changes[f.name] = value * factor
        return replace(self, **changes)



@dataclass(frozen=True)
class Hamiltonian:
    matrix: sp.csr_matrix
    dims: SpaceDims | None
    frame: str = "rotating"
    hermitian: bool = field(default=True)

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


@lru_cache(maxsize=32)
def _ops(dims: SpaceDims):
    a = embed(annihilation(dims.n_cav), "cavity", dims)
    b = embed(annihilation(dims.n_mech), "mech", dims)
    ops = {
        "a": a,
        "b": b,
        "n_a": (a.getH() @ a).tocsr(),
        "n_b": (b.getH() @ b).tocsr(),
        "x_b": (b + b.getH()).tocsr(),
        "sz": embed(pauli("z"), "qubit", dims),
        "sx": embed(pauli("x"), "qubit", dims),
        "sp": embed(pauli("plus"), "qubit", dims),
        "sm": embed(pauli("minus"), "qubit", dims),
    }
    ops["spsm"] = (ops["sp"] @ ops["sm"]).tocsr()
    return ops


def _qubit_term(p: SystemParams, ops, wq):
    if p.qubit_convention == "sigma_z_half":
        return (wq / 2) * ops["sz"]
    return wq * ops["spsm"]


def _coupling_term(p: SystemParams, ops, g):
    if p.coupling_model == "rabi":
        return g * (ops["x_b"] @ ops["sx"])
    b, sp_, sm = ops["b"], ops["sp"], ops["sm"]
    return g * (b @ sp_ + b.getH() @ sm)


def _full(p: SystemParams, dims: SpaceDims, w_cav, wb, wq, drive):
    ops = _ops(dims)
    g = angular(p.g)
    chi = angular(p.chi)
    h = (
        w_cav * ops["n_a"]
        + wb * ops["n_b"]
        + _qubit_term(p, ops, wq)
        - chi * (ops["n_a"] @ ops["x_b"])
        + _coupling_term(p, ops, g)
    )
    if drive:
        a = ops["a"]
        h = h + 1j * (drive * a.getH() - np.conj(drive) * a)
    return sp.csr_matrix(h)


def build_lab_hamiltonian(p: SystemParams, d: SpaceDims) -> Hamiltonian:
    """Undriven Hamiltonian in the laboratory frame; requires ``p.nu_a``."""
    if p.nu_a is None:
        raise ValueError("lab-frame Hamiltonian needs nu_a")
    h = _full(p, d, angular(p.nu_a), angular(p.nu_b), angular(p.nu_q), 0)
    return Hamiltonian(h, d, "lab")


def build_rotating_hamiltonian(p: SystemParams, d: SpaceDims) -> Hamiltonian:
    """Driven Hamiltonian in the frame rotating at the drive frequency."""
    h = _full(p, d, angular(p.delta_a), angular(p.nu_b), angular(p.nu_q), p.drive)
    return Hamiltonian(h, d, "rotating")


def build_non_hermitian_hamiltonian(p: SystemParams, d: SpaceDims) -> Hamiltonian:
    """Rotating-frame Hamiltonian with each frequency shifted by -i * rate / 2."""
    w_cav = angular(p.delta_a) - 0.5j * angular(p.gamma_a)
    wb = angular(p.nu_b) - 0.5j * angular(p.gamma_b)
    wq = angular(p.nu_q) - 0.5j * angular(p.gamma_q)
    h = _full(p, d, w_cav, wb, wq, p.drive)
    return Hamiltonian(h, d, "non_hermitian", hermitian=False)


def build_polaron_hamiltonian(p: SystemParams, d: SpaceDims) -> Hamiltonian:
    """Lab Hamiltonian after the photon-number-conditioned phonon displacement.

    Only defined for the Rabi coupling, where the displaced mechanics turns
    the optomechanical term into a Kerr term plus a photon-number-dependent
    qubit field.
    """
    if p.coupling_model != "rabi":
        raise ValueError("the polaron form is derived for the Rabi coupling only")
    if p.nu_a is None:
        raise ValueError("polaron Hamiltonian needs nu_a")
    if p.nu_b <= 0:
        raise ZeroDivisionError("polaron transform needs nu_b > 0")
    ops = _ops(d)
    wa, wb, wq = angular(p.nu_a), angular(p.nu_b), angular(p.nu_q)
    g, chi = angular(p.g), angular(p.chi)
    n_a = ops["n_a"]
    h = (
        wa * n_a
        + (2 * g * chi / wb) * (ops["sx"] @ n_a)
        + _qubit_term(p, ops, wq)
        + wb * ops["n_b"]
        - (chi**2 / wb) * (n_a @ n_a)
        + g * (ops["x_b"] @ ops["sx"])
    )
    return Hamiltonian(sp.csr_matrix(h), d, "polaron")


def build_effective_phonon_hamiltonian(p: SystemParams, n_photons: int,
                                       n_mech: int) -> Hamiltonian:
    """Mechanics + qubit Hamiltonian for the cavity frozen in Fock state n.

    Acts on the (mech ⊗ qubit) space of dimension 2 * n_mech; the constant
    omega_a * n is omitted.
    """
    if n_photons < 0:
        raise ValueError("photon number must be >= 0")
    b = kron(annihilation(n_mech), identity(2))
    bd = b.getH()
    one = identity(n_mech)
    sz, sx = kron(one, pauli("z")), kron(one, pauli("x"))
    spl, smi = kron(one, pauli("plus")), kron(one, pauli("minus"))
    wb, wq = angular(p.nu_b), angular(p.nu_q)
    g, chi = angular(p.g), angular(p.chi)
    qubit = (wq / 2) * sz if p.qubit_convention == "sigma_z_half" else wq * (spl @ smi)
    if p.coupling_model == "rabi":
        coupling = g * ((b + bd) @ sx)
    else:
        coupling = g * (b @ spl + bd @ smi)
    h = wb * (bd @ b) + qubit + coupling - chi * n_photons * (b + bd)
    return Hamiltonian(sp.csr_matrix(h), None, "effective_phonon")
