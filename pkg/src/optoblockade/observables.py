"""Photon statistics from density matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import SpaceDims
from .model import _ops

__all__ = [
    "MEAN_PHOTON_FLOOR",
    "PhotonStats",
    "UndefinedStatisticsError",
    "g2_zero",
    "mean_photon",
    "photon_stats",
    "populations",
]

MEAN_PHOTON_FLOOR = 1e-12


class UndefinedStatisticsError(ValueError):
    """g2(0) requested for a state with (numerically) no photons."""


@dataclass(frozen=True)
class PhotonStats:
    g2_zero: float
    mean_photon: float
    populations: dict


def _matrix(rho):
    return rho.matrix if hasattr(rho, "matrix") else np.asarray(rho)


def _dims(rho, d):
    d = d if d is not None else getattr(rho, "dims", None)
    if d is None:
        raise ValueError("SpaceDims required")
    return d


def mean_photon(rho, d: SpaceDims | None = None) -> float:
    d = _dims(rho, d)
    n_a = _ops(d)["n_a"]
    # Tr(rho A) = sum_ij rho_ji A_ij
    return float(np.real(np.sum(n_a.multiply(_matrix(rho).T))))


def g2_zero(rho, d: SpaceDims | None = None) -> float:
    """Tr(rho a^dag^2 a^2) / Tr(rho a^dag a)^2."""
    d = _dims(rho, d)
    mat = _matrix(rho)
    a = _ops(d)["a"]
    a2 = a @ a
    num = float(np.real(np.sum((a2.getH() @ a2).multiply(mat.T))))
    n = mean_photon(mat, d)
    if n <= MEAN_PHOTON_FLOOR:
        raise UndefinedStatisticsError(f"mean photon number {n:.3e} below floor")
    return max(num, 0.0) / n**2


def populations(rho, d: SpaceDims | None = None) -> dict:
    """Diagonal of rho keyed by (n, m, z)."""
    d = _dims(rho, d)
    diag = np.real(np.diag(_matrix(rho)))
    return dict(zip(d.labels(), diag.tolist()))


def photon_stats(rho, d: SpaceDims | None = None) -> PhotonStats:
    d = _dims(rho, d)
    return PhotonStats(g2_zero(rho, d), mean_photon(rho, d), populations(rho, d))
