"""Closed-form weak-driving amplitudes, dressed levels and Kerr shifts.

The weak-driving ansatz keeps the eleven basis states with at most two
photons and one phonon (|2,1,up> is not included). Amplitudes are
unnormalized with C_{00,down} = 1. Every frequency here is angular (rad/us);
inputs come from :class:`~optoblockade.model.SystemParams` in MHz.

Qubit energies follow ``p.qubit_convention``: with ``sigma_z_half`` the
down/up levels sit at -w'_q/2 and +w'_q/2; with
``sigma_plus_minus`` they sit at 0 and w'_q, which puts the undriven ground
state at zero energy as the steady-state ansatz requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .model import SystemParams, angular, build_effective_phonon_hamiltonian
from .observables import UndefinedStatisticsError

__all__ = [
    "AMPLITUDE_KEYS",
    "DEGENERACY_TOL",
    "DegenerateCouplingError",
    "DressedLevel",
    "InstabilityError",
    "KerrShifts",
    "ParameterDegeneracyError",
    "WeakDriveSolution",
    "dressed_energies",
    "dressed_state_params",
    "kerr_shifts",
    "weak_drive_closed_form",
    "weak_drive_deltas",
    "weak_drive_g2",
    "weak_drive_linear_solve",
]

DEGENERACY_TOL = 1e-14
DN, UP = 0, 1

# unknowns of the linear system, C_{00,down} = 1 is fixed
UNKNOWNS = ((0, 0, UP), (0, 1, DN), (0, 1, UP), (1, 0, DN), (1, 0, UP),
            (1, 1, DN), (1, 1, UP), (2, 0, DN), (2, 0, UP), (2, 1, DN))
AMPLITUDE_KEYS = ((0, 0, DN),) + UNKNOWNS
ONE_PHOTON = ((1, 0, DN), (1, 0, UP), (1, 1, DN), (1, 1, UP))
TWO_PHOTON = ((2, 0, DN), (2, 0, UP), (2, 1, DN))


class ParameterDegeneracyError(ValueError):
    """A denominator of the closed form (or the linear system) vanishes."""

    def __init__(self, quantity: str, value=None):
        self.quantity = quantity
        msg = f"degenerate parameters: {quantity} vanishes"
        if value is not None:
            msg += f" (|{quantity}| = {abs(value):.3e})"
        super().__init__(msg)


class InstabilityError(ValueError):
    """Dressed states requested outside the stable regime 2 chi n < g."""


class DegenerateCouplingError(ValueError):
    """Dressed-level formulas need g > 0."""


@dataclass(frozen=True)
class WeakDriveSolution:
    """Weak-driving amplitudes keyed by (n, m, z), z = 0 down / 1 up.

    ``lambdas`` and ``etas`` are keyed 1..15 and 1..7. The linear-solve route
    does not produce lambdas (empty dict) and, at zero drive, no etas.
    """

    amplitudes: dict
    etas: dict
    lambdas: dict
    deltas: dict
    drive: complex
    method: str = "closed_form"

    def amplitude(self, n, m, z) -> complex:
        return self.amplitudes[(n, m, z)]


@dataclass(frozen=True)
class DressedLevel:
    """One dressed level E_{n,m,branch}; ``energy`` is angular (rad/us).

    ``p_state`` / ``m_state`` are the qubit vectors |P>, |M> in the
    (down, up) basis.
    """

    n_photons: int
    m_phonons: int
    branch: int
    energy: float
    epsilon: float
    beta: complex
    squeeze_r: float
    stable: bool
    p_state: np.ndarray = field(repr=False, default=None)
    m_state: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class KerrShifts:
    """Photon-level shifts, angular (rad/us)."""

    delta0: float
    delta_prime_n: float
    delta1: float
    delta2: float
    sigma_x_expectation: float
    sigma_x_source: str
    n_photons: int


# ------------------------------------------------------------ weak driving


def _complex_freqs(p: SystemParams):
    da = angular(p.delta_a) - 0.5j * angular(p.gamma_a)
    wb = angular(p.nu_b) - 0.5j * angular(p.gamma_b)
    wq = angular(p.nu_q) - 0.5j * angular(p.gamma_q)
    return da, wb, wq


def _qubit_levels(p: SystemParams, wq):
    if p.qubit_convention == "sigma_z_half":
        return -wq / 2, wq / 2
    return 0.0 * wq, wq


def _scale(p: SystemParams) -> float:
    da, wb, wq = _complex_freqs(p)
    return max(abs(da), abs(wb), abs(wq), angular(p.g), angular(p.chi), 1.0)


def _guard(name: str, value, scale: float, power: int = 1):
    if not np.isfinite(value) or abs(value) <= DEGENERACY_TOL * scale**power:
        raise ParameterDegeneracyError(name, value)
    return value


def weak_drive_deltas(p: SystemParams) -> dict:
    """Complex detunings Delta_k^-/+ (down/up) and Delta_5, plus 'qubit_up'.

    'qubit_up' is the up-level energy entering the first amplitude equation
    (w'_q / 2 or w'_q depending on the convention).
    """
    da, wb, wq = _complex_freqs(p)
    e_dn, e_up = _qubit_levels(p, wq)
    base = {1: wb, 2: da, 3: da + wb, 4: 2 * da}
    out = {}
    for k, b in base.items():
        out[f"delta{k}-"] = b + e_dn
        out[f"delta{k}+"] = b + e_up
    out["delta5"] = 2 * da + wb + e_dn
    out["qubit_up"] = e_up
    return out


def weak_drive_closed_form(p: SystemParams, *, eta1: str = "corrected") -> WeakDriveSolution:
    """Amplitudes from the closed-form lambda/eta expressions.

    ``eta1="printed"`` uses the literal published eta_1, whose last term
    carries the wrong sign; the default is the form that actually solves the
    amplitude equations. In the sigma_plus_minus convention every 2 / w'_q
    in the lambdas becomes 1 / w'_q (the up-level energy replaces w'_q / 2).
    """
    if eta1 not in ("corrected", "printed"):
        raise ValueError("eta1 must be 'corrected' or 'printed'")
    s = _scale(p)
    D = weak_drive_deltas(p)
    g, chi = angular(p.g), angular(p.chi)
    om = p.drive
    om2 = abs(om) ** 2
    q = _guard("w'_q", D["qubit_up"], s)
    d1m, d1p = D["delta1-"], _guard("Delta1+", D["delta1+"], s)
    d2m, d2p = _guard("Delta2-", D["delta2-"], s), D["delta2+"]
    d3m, d3p = D["delta3-"], D["delta3+"]
    d4m, d4p = D["delta4-"], D["delta4+"]
    d5 = _guard("Delta5", D["delta5"], s)
    r2 = math.sqrt(2.0)

    lam = {}
    lam[1] = _guard("lambda1", d1m - g**2 / q, s)
    lam[2] = d2p - om2 / q
    lam[3] = _guard("lambda3", lam[2] - om2 * g**2 / (lam[1] * q**2), s)
    lam[4] = g + g * om2 / (lam[1] * q)
    lam[5] = d3m - om2 / lam[1]
    lam[6] = g + om2 * g / (lam[1] * q)
    lam[7] = d3p - om2 / d1p
    lam[8] = lam[5] - chi**2 / d2m - lam[4] * lam[6] / lam[3]
    lam[9] = g * chi / d2m + chi * lam[6] / lam[3]
    lam[10] = g * chi / d2m + chi * lam[4] / lam[3]
    lam[11] = lam[7] - chi**2 / lam[3] - g**2 / d2m
    lam[12] = d4m * d5 - 4 * chi**2
    lam[13] = d4p * d5 - g**2

    D1 = _guard("D1", d1p * d2m * (lam[9] * lam[10] - lam[8] * lam[11]), s, 4)
    D2 = _guard("D2", lam[12] * lam[13] - 4 * chi**2 * g**2, s, 4)

    sign = 1.0 if eta1 == "corrected" else -1.0
    eta = {}
    eta[1] = (chi * d1p * lam[11] + g * d1p * lam[9] + sign * d2m * g * lam[9]) / D1
    eta[2] = -(g * d1p * lam[8] + g * d2m * lam[8] + chi * d1p * lam[10]) / D1
    eta[3] = (chi * eta[1] - g * eta[2] - 1) / d2m
    eta[4] = (chi * eta[2] - lam[4] * eta[1]) / lam[3]
    lam[14] = r2 * (2 * chi * eta[1] + d5 * eta[3])
    lam[15] = r2 * g * eta[1] - r2 * d5 * eta[4]
    eta[5] = (lam[13] * lam[14] + 2 * chi * g * lam[15]) / D2
    eta[6] = -(lam[12] * lam[15] + 2 * chi * g * lam[14]) / D2
    eta[7] = (2 * chi * (lam[13] * lam[14] + 2 * chi * g * lam[15]) / (d5 * D2)
              + r2 * eta[1] / d5
              + g * (lam[12] * lam[15] + 2 * chi * g * lam[14]) / (d5 * D2))

    amp = {(0, 0, DN): 1.0 + 0j}
    amp[(1, 1, DN)] = 1j * om * eta[1]
    amp[(1, 1, UP)] = 1j * om * eta[2]
    amp[(1, 0, DN)] = 1j * om * eta[3]
    amp[(1, 0, UP)] = 1j * om * eta[4]
    amp[(2, 0, DN)] = om**2 * eta[5]
    amp[(2, 0, UP)] = om**2 * eta[6]
    amp[(2, 1, DN)] = om**2 * eta[7]
    # zero-photon amplitudes by back-substitution into the first three equations
    oc = np.conj(om)
    amp[(0, 0, UP)] = 1j * oc * (d1m * amp[(1, 0, UP)] - g * amp[(1, 1, DN)]) / (q * lam[1])
    amp[(0, 1, DN)] = (-g * amp[(0, 0, UP)] + 1j * oc * amp[(1, 1, DN)]) / d1m
    amp[(0, 1, UP)] = (-g + 1j * oc * amp[(1, 1, UP)]) / d1p
    return WeakDriveSolution(amp, eta, lam, D, complex(om), "closed_form")


def _linear_system(p: SystemParams):
    D = weak_drive_deltas(p)
    g, chi = angular(p.g), angular(p.chi)
    om = p.drive
    oc = np.conj(om)
    r2 = math.sqrt(2.0)
    col = {k: i for i, k in enumerate(UNKNOWNS)}
    A = np.zeros((10, 10), dtype=complex)
    rhs = np.zeros(10, dtype=complex)

    def row(i, terms, const=0.0):
        for key, c in terms:
            A[i, col[key]] += c
        rhs[i] = -const  # C_{00,down} = 1 moves to the right-hand side

    row(0, [((0, 0, UP), D["qubit_up"]), ((0, 1, DN), g), ((1, 0, UP), -1j * oc)])
    row(1, [((0, 1, DN), D["delta1-"]), ((0, 0, UP), g), ((1, 1, DN), -1j * oc)])
    row(2, [((0, 1, UP), D["delta1+"]), ((1, 1, UP), -1j * oc)], const=g)
    # higher-order drive terms of the next three equations are dropped
    row(3, [((1, 0, DN), D["delta2-"]), ((1, 1, DN), -chi), ((1, 1, UP), g)], const=1j * om)
    row(4, [((1, 0, UP), D["delta2+"]), ((1, 1, UP), -chi), ((1, 1, DN), g),
            ((0, 0, UP), 1j * om)])
    row(5, [((1, 1, DN), D["delta3-"]), ((1, 0, DN), -chi), ((1, 0, UP), g),
            ((0, 1, DN), 1j * om)])
    row(6, [((1, 1, UP), D["delta3+"]), ((1, 0, UP), -chi), ((1, 0, DN), g),
            ((0, 1, UP), 1j * om)])
    row(7, [((2, 0, DN), D["delta4-"]), ((2, 1, DN), -2 * chi), ((1, 0, DN), 1j * r2 * om)])
    row(8, [((2, 0, UP), D["delta4+"]), ((2, 1, DN), g), ((1, 0, UP), 1j * r2 * om)])
    row(9, [((2, 1, DN), D["delta5"]), ((2, 0, DN), -2 * chi), ((2, 0, UP), g),
            ((1, 1, DN), 1j * r2 * om)])
    return A, rhs, D


def weak_drive_linear_solve(p: SystemParams) -> WeakDriveSolution:
    """Amplitudes by a dense solve of the ten truncated amplitude equations.

    The ground-amplitude equation is dropped and C_{00,down} = 1; the three
    drive terms coupling one-photon equations to two-photon amplitudes are
    neglected, as in the closed form.
    """
    A, rhs, D = _linear_system(p)
    scale = max(np.abs(A).max(), 1.0)
    try:
        lu = la.lu_factor(A, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise ParameterDegeneracyError("linear system determinant") from exc
    piv = np.abs(np.diag(lu[0])).min()
    if piv <= DEGENERACY_TOL * scale:
        raise ParameterDegeneracyError("linear system determinant", piv)
    x = la.lu_solve(lu, rhs)
    amp = {(0, 0, DN): 1.0 + 0j}
    amp.update(zip(UNKNOWNS, x))
    om = p.drive
    etas = {}
    if om != 0:
        etas = {1: amp[(1, 1, DN)] / (1j * om), 2: amp[(1, 1, UP)] / (1j * om),
                3: amp[(1, 0, DN)] / (1j * om), 4: amp[(1, 0, UP)] / (1j * om),
                5: amp[(2, 0, DN)] / om**2, 6: amp[(2, 0, UP)] / om**2,
                7: amp[(2, 1, DN)] / om**2}
    return WeakDriveSolution(amp, etas, {}, D, complex(om), "linear_solve")


def linear_system_residual(p: SystemParams, sol: WeakDriveSolution) -> float:
    """max |A x - b| of ``sol`` in the ten amplitude equations."""
    A, rhs, _ = _linear_system(p)
    x = np.array([sol.amplitudes[k] for k in UNKNOWNS])
    return float(np.abs(A @ x - rhs).max())


def weak_drive_g2(sol: WeakDriveSolution) -> float:
    """Two-photon over squared one-photon weight of the amplitudes."""
    amp = sol.amplitudes
    one = sum(abs(amp[k]) ** 2 for k in ONE_PHOTON)
    two = sum(abs(amp[k]) ** 2 for k in TWO_PHOTON)
    if math.sqrt(one) <= DEGENERACY_TOL:
        raise UndefinedStatisticsError(f"one-photon amplitude norm {math.sqrt(one):.3e} vanishes")
    return 2 * two / one**2


# ------------------------------------------------------------ dressed levels


def _epsilon(p: SystemParams, n: int) -> float:
    g, chi = angular(p.g), angular(p.chi)
    if g == 0:
        raise DegenerateCouplingError("dressed levels need g > 0")
    if n < 0:
        raise ValueError("photon number must be >= 0")
    if 2 * chi * n >= g:
        raise InstabilityError(f"2*chi*n = {2 * chi * n:.6g} >= g = {g:.6g}: dressed states unstable")
    return 1.0 - (2 * chi * n / g) ** 2


def _qubit_states(eps: float):
    a = math.sqrt(1 + math.sqrt(eps)) / math.sqrt(2)
    b = math.sqrt(max(1 - math.sqrt(eps), 0.0)) / math.sqrt(2)
    p_state = np.array([-b, a], dtype=complex)  # (down, up)
    m_state = np.array([a, -b], dtype=complex)  # up/down exchanged
    return p_state, m_state


def dressed_state_params(p: SystemParams, n: int, m: int, branch: int) -> DressedLevel:
    """Dressed level with its displacement, squeeze and qubit states.

    ``branch`` is +1 or -1. Requires resonance nu_b == nu_q and m >= 1.
    """
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    if m < 1:
        raise ValueError("phonon number m must be >= 1")
    if not math.isclose(p.nu_b, p.nu_q, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("dressed-level formulas assume nu_b == nu_q")
    eps = _epsilon(p, n)
    g, chi = angular(p.g), angular(p.chi)
    energy = branch * math.sqrt(m) * g * eps**0.75
    beta = 2j * chi * n * energy / (g**2 * eps)
    r = 0.25 * math.log(eps)  # exp(2r) = sqrt(eps)
    ps, ms = _qubit_states(eps)
    return DressedLevel(n, m, branch, energy, eps, beta, r, True, ps, ms)


def dressed_energies(p: SystemParams, n_photons: int, m_phonons: int):
    """(upper, lower) dressed levels for n photons and m phonons."""
    return (dressed_state_params(p, n_photons, m_phonons, 1),
            dressed_state_params(p, n_photons, m_phonons, -1))


# ------------------------------------------------------------ Kerr shifts


def ground_state_sigma_x(p: SystemParams, n: int, n_mech: int = 40) -> float:
    """<sigma_x> in the ground state of the phonon-qubit Hamiltonian at n photons."""
    h = build_effective_phonon_hamiltonian(p, n, n_mech).dense()
    _, vecs = la.eigh(h)
    psi = vecs[:, 0]
    sx = np.kron(np.eye(n_mech), np.array([[0, 1], [1, 0]]))
    return float(np.real(np.vdot(psi, sx @ psi)))


def kerr_shifts(p: SystemParams, n: int, sigma_x_source="ground_state_of_Hb", *,
                n_mech: int = 40) -> KerrShifts:
    """Delta_0, Delta'(n), delta_1 and delta_2 in rad/us.

    ``sigma_x_source`` is either "ground_state_of_Hb" (dense ground state at
    each photon number, truncated to ``n_mech`` phonons) or a float, which
    is then used as <sigma_x> for every photon number.
    """
    if p.nu_b <= 0:
        raise ZeroDivisionError("Kerr shifts need nu_b > 0")
    if n < 0:
        raise ValueError("photon number must be >= 0")
    wb, g, chi = angular(p.nu_b), angular(p.g), angular(p.chi)
    if isinstance(sigma_x_source, str):
        if sigma_x_source != "ground_state_of_Hb":
            raise ValueError("sigma_x_source must be 'ground_state_of_Hb' or a number")
        sx = {k: ground_state_sigma_x(p, k, n_mech) for k in {n, 1, 2}}
        source = "ground_state_of_Hb"
    else:
        value = float(sigma_x_source)
        sx = {k: value for k in {n, 1, 2}}
        source = "input_value"

    def prime(k):
        return 2 * g * chi * sx[k] / wb

    d0 = chi**2 / wb
    return KerrShifts(d0, prime(n), prime(1) - d0, prime(2) - 4 * d0, sx[n], source, n)
