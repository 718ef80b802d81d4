import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optoblockade.hilbert import SpaceDims
from optoblockade.model import (
    Hamiltonian,
    SystemParams,
    _ops,
    angular,
    build_effective_phonon_hamiltonian,
    build_lab_hamiltonian,
    build_non_hermitian_hamiltonian,
    build_polaron_hamiltonian,
    build_rotating_hamiltonian,
)

D = SpaceDims(3, 4)
TWO_PI = 2 * math.pi


def test_params_validation():
    with pytest.raises(ValueError):
        SystemParams(g=-1)
    with pytest.raises(ValueError):
        SystemParams(qubit_convention="bogus")
    with pytest.raises(ValueError):
        SystemParams(coupling_model="bogus")
    assert SystemParams(nu_b=10, nu_q=7).mech_qubit_detuning == pytest.approx(TWO_PI * 3)


def test_hamiltonian_rejects_unknown_frame():
    with pytest.raises(ValueError):
        Hamiltonian(_ops(D)["a"], D, "bogus")


@pytest.mark.parametrize("conv", ["sigma_z_half", "sigma_plus_minus"])
def test_lab_uncoupled_spectrum(conv):
    p = SystemParams(nu_a=7.0, g=0, chi=0, qubit_convention=conv)
    H = build_lab_hamiltonian(p, D)
    wa, wb, wq = angular(7.0), angular(p.nu_b), angular(p.nu_q)
    lo, hi = (-wq / 2, wq / 2) if conv == "sigma_z_half" else (0.0, wq)
    expected = sorted(wa * n + wb * m + (hi if z else lo) for n, m, z in D.labels())
    assert np.allclose(np.linalg.eigvalsh(H.dense()), expected, atol=1e-10)


def test_lab_needs_nu_a():
    with pytest.raises(ValueError):
        build_lab_hamiltonian(SystemParams(), D)


def test_rabi_ground_shift_converged():
    p = SystemParams(g=4.0)
    e12 = np.linalg.eigvalsh(build_effective_phonon_hamiltonian(p, 0, 12).dense())[0]
    e24 = np.linalg.eigvalsh(build_effective_phonon_hamiltonian(p, 0, 24).dense())[0]
    assert e12 < -angular(p.nu_q) / 2 - 1.0
    assert e12 == pytest.approx(e24, abs=1e-8)


def test_rabi_minus_jc_is_counter_rotating_term():
    p = SystemParams(g=4.0)
    rabi = build_rotating_hamiltonian(p, D).matrix
    jc = build_rotating_hamiltonian(p.replace(coupling_model="jaynes_cummings"), D).matrix
    ops = _ops(D)
    counter = angular(p.g) * (ops["b"].getH() @ ops["sp"] + ops["b"] @ ops["sm"])
    assert abs(rabi - jc - counter).max() < 1e-12


def test_rotating_hermitian_and_drive_element():
    p = SystemParams(delta_a=0.3, drive_phase=0.7)
    H = build_rotating_hamiltonian(p, D)
    assert H.hermiticity_error() < 1e-12
    assert H.matrix[D.index(1, 0, 0), D.index(0, 0, 0)] == pytest.approx(1j * p.drive)


def test_rotating_undriven_equals_lab_with_detuning():
    p = SystemParams(delta_a=2.5, omega_drive=0.0)
    lab = build_lab_hamiltonian(p.replace(nu_a=2.5), D).matrix
    assert abs(build_rotating_hamiltonian(p, D).matrix - lab).max() == 0


def test_non_hermitian_limits():
    p = SystemParams(gamma_a=0, gamma_b=0, gamma_q=0)
    a = build_non_hermitian_hamiltonian(p, D).matrix
    assert abs(a - build_rotating_hamiltonian(p, D).matrix).max() == 0
    q = SystemParams(qubit_convention="sigma_plus_minus")
    h = build_non_hermitian_hamiltonian(q, D)
    assert not h.hermitian
    i = D.index(1, 0, 0)
    assert h.matrix[i, i].imag == pytest.approx(-angular(q.gamma_a) / 2)


def test_non_hermitian_eigenvalues_decay():
    h = build_non_hermitian_hamiltonian(SystemParams(), SpaceDims(4, 8)).dense()
    assert np.linalg.eigvals(h).imag.max() <= 1e-12


def test_polaron_g0_photon_blocks():
    p = SystemParams(nu_a=7.0, g=0)
    d = SpaceDims(4, 3)
    H = build_polaron_hamiltonian(p, d)
    assert H.hermiticity_error() < 1e-12
    wa, wb, wq, chi = angular(7.0), angular(p.nu_b), angular(p.nu_q), angular(p.chi)
    for n, m, z in d.labels():
        i = d.index(n, m, z)
        expected = wa * n - chi**2 / wb * n**2 + wb * m + (wq / 2 if z else -wq / 2)
        assert H.matrix[i, i].real == pytest.approx(expected, abs=1e-10)


def test_polaron_chi0_equals_lab():
    p = SystemParams(nu_a=7.0, chi=0)
    lab = build_lab_hamiltonian(p, D).matrix
    # identical terms, summed in a different order
    assert abs(build_polaron_hamiltonian(p, D).matrix - lab).max() <= 1e-14 * abs(lab).max()


def test_polaron_errors():
    with pytest.raises(ZeroDivisionError):
        build_polaron_hamiltonian(SystemParams(nu_a=7.0, nu_b=0), D)
    with pytest.raises(ValueError):
        build_polaron_hamiltonian(SystemParams(nu_a=7.0, coupling_model="jaynes_cummings"), D)


def test_effective_phonon_spectra():
    p = SystemParams(g=0)
    e = np.linalg.eigvalsh(build_effective_phonon_hamiltonian(p, 0, 5).dense())
    wb, wq = angular(p.nu_b), angular(p.nu_q)
    assert np.allclose(e, sorted(wb * m + s * wq / 2 for m in range(5) for s in (-1, 1)))
    jc = SystemParams(g=4.0, coupling_model="jaynes_cummings")
    e = np.linalg.eigvalsh(build_effective_phonon_hamiltonian(jc, 0, 8).dense())
    # ground -wq/2, then the one-excitation doublet wb - wq/2 +- g
    assert e[2] - e[1] == pytest.approx(2 * angular(jc.g), rel=1e-12)
    with pytest.raises(ValueError):
        build_effective_phonon_hamiltonian(p, -1, 5)


def test_effective_phonon_sigma_x_n1():
    from optoblockade.analytic import ground_state_sigma_x

    sx = ground_state_sigma_x(SystemParams(), 1)
    assert -1 <= sx < 0
    assert sx == pytest.approx(ground_state_sigma_x(SystemParams(), 1, n_mech=60), abs=1e-10)


PARAMS = st.builds(
    SystemParams,
    delta_a=st.floats(-20, 20), nu_b=st.floats(0.1, 20), nu_q=st.floats(0.1, 20),
    chi=st.floats(0, 2), g=st.floats(0, 20), omega_drive=st.floats(0, 1),
    drive_phase=st.floats(-3, 3),
    qubit_convention=st.sampled_from(["sigma_z_half", "sigma_plus_minus"]),
    coupling_model=st.sampled_from(["rabi", "jaynes_cummings"]),
)


@settings(max_examples=40, deadline=None)
@given(PARAMS)
def test_hermitian_frames(p):
    assert build_rotating_hamiltonian(p, D).hermiticity_error() < 1e-12
    assert build_effective_phonon_hamiltonian(p, 2, 4).hermiticity_error() < 1e-12
    if p.coupling_model == "rabi":
        q = p.replace(nu_a=5.0)
        assert build_lab_hamiltonian(q, D).hermiticity_error() < 1e-12
        assert build_polaron_hamiltonian(q, D).hermiticity_error() < 1e-12


@settings(max_examples=40, deadline=None)
@given(PARAMS)
def test_term_additivity(p):
    full = build_rotating_hamiltonian(p, D).matrix
    ops = _ops(D)
    no_g = build_rotating_hamiltonian(p.replace(g=0), D).matrix
    no_chi = build_rotating_hamiltonian(p.replace(chi=0), D).matrix
    if p.coupling_model == "rabi":
        g_term = angular(p.g) * (ops["x_b"] @ ops["sx"])
    else:
        g_term = angular(p.g) * (ops["b"] @ ops["sp"] + ops["b"].getH() @ ops["sm"])
    chi_term = -angular(p.chi) * (ops["n_a"] @ ops["x_b"])
    assert abs(full - no_g - g_term).max() < 1e-12 * max(1, abs(full).max())
    assert abs(full - no_chi - chi_term).max() < 1e-12 * max(1, abs(full).max())


@settings(max_examples=40, deadline=None)
@given(PARAMS)
def test_frequency_linearity(p):
    h1 = build_rotating_hamiltonian(p, D).matrix
    h2 = build_rotating_hamiltonian(p.scaled(2.0), D).matrix
    assert abs(h2 - 2 * h1).max() <= 1e-12 * max(1, abs(h1).max())
