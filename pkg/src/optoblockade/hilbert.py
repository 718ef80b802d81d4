"""Truncated cavity ⊗ mechanics ⊗ qubit Hilbert space and its elementary operators.

Basis ordering is fixed throughout the package: the state |n, m, z> (photon
number n, phonon number m, qubit z with 0 = down, 1 = up) sits at index

    n * (n_mech * 2) + m * 2 + z

Operators are ``scipy.sparse.csr_matrix`` with complex entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DROP_TOL",
    "InvalidDimensionError",
    "SpaceDims",
    "annihilation",
    "basis_index",
    "embed",
    "identity",
    "kron",
    "pauli",
]

DROP_TOL = 1e-15

QUBIT_DIM = 2
SLOTS = ("cavity", "mech", "qubit")


class InvalidDimensionError(ValueError):
    """Raised for truncations or operator shapes that do not fit the space."""


@dataclass(frozen=True)
class SpaceDims:
    n_cav: int = 5
    n_mech: int = 12

    def __post_init__(self):
        if self.n_cav < 2 or self.n_mech < 2:
            raise InvalidDimensionError(
                f"truncations must be >= 2, got n_cav={self.n_cav}, n_mech={self.n_mech}"
            )

    @property
    def n_qubit(self) -> int:
        return QUBIT_DIM

    @property
    def total_dim(self) -> int:
        return self.n_cav * self.n_mech * QUBIT_DIM

    def slot_dim(self, slot: str) -> int:
        try:
            return {"cavity": self.n_cav, "mech": self.n_mech, "qubit": QUBIT_DIM}[slot]
        except KeyError:
            raise ValueError(f"unknown slot {slot!r}; expected one of {SLOTS}") from None

    def index(self, n: int, m: int, z: int) -> int:
        return basis_index(n, m, z, self)

    def labels(self):
        """All (n, m, z) labels in basis order."""
        return [
            (n, m, z)
            for n in range(self.n_cav)
            for m in range(self.n_mech)
            for z in range(QUBIT_DIM)
        ]


def basis_index(n: int, m: int, z: int, dims: SpaceDims) -> int:
    if not (0 <= n < dims.n_cav and 0 <= m < dims.n_mech and z in (0, 1)):
        raise IndexError(f"|{n},{m},{z}> outside truncation {dims}")
    return n * (dims.n_mech * QUBIT_DIM) + m * QUBIT_DIM + z


def _clean(op: sp.spmatrix) -> sp.csr_matrix:
    op = sp.csr_matrix(op, dtype=complex)
    op.data[np.abs(op.data) <= DROP_TOL] = 0
    op.eliminate_zeros()
    op.sort_indices()
    return op


def identity(dim: int) -> sp.csr_matrix:
    return sp.identity(dim, dtype=complex, format="csr")


def annihilation(dim: int) -> sp.csr_matrix:
    """Truncated bosonic lowering operator with <k-1|a|k> = sqrt(k)."""
    if dim < 2:
        raise InvalidDimensionError(f"ladder operator needs dim >= 2, got {dim}")
    k = np.arange(1, dim)
    return _clean(sp.csr_matrix((np.sqrt(k), (k - 1, k)), shape=(dim, dim)))


def pauli(which: str) -> sp.csr_matrix:
    """Qubit operator in the (down, up) basis.

    ``which`` is one of ``"z"``, ``"x"``, ``"plus"``, ``"minus"``; sigma_z has
    eigenvalue +1 on up and -1 on down, and sigma_plus maps down to up.
    """
    mats = {
        "z": [[-1, 0], [0, 1]],
        "x": [[0, 1], [1, 0]],
        "plus": [[0, 0], [1, 0]],
        "minus": [[0, 1], [0, 0]],
    }
    if which not in mats:
        raise ValueError(f"unknown Pauli operator {which!r}")
    return _clean(np.array(mats[which], dtype=complex))


def kron(a, b) -> sp.csr_matrix:
    return _clean(sp.kron(sp.csr_matrix(a), sp.csr_matrix(b), format="csr"))


def embed(op, slot: str, dims: SpaceDims) -> sp.csr_matrix:
    """Lift a single-factor operator to the full space (cavity ⊗ mech ⊗ qubit)."""
    want = dims.slot_dim(slot)
    if op.shape != (want, want):
        raise InvalidDimensionError(
            f"operator of shape {op.shape} does not act on {slot} (dim {want})"
        )
    factors = [identity(dims.slot_dim(s)) for s in SLOTS]
    factors[SLOTS.index(slot)] = sp.csr_matrix(op, dtype=complex)
    return kron(kron(factors[0], factors[1]), factors[2])
