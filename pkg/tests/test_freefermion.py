import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import unitary_group

from conftest import FIG2_DENSITIES, FIG2_THERMALS
from prebsim import freefermion as ff
from prebsim.chainmap import make_bath, required_bath_size
from prebsim.spectral import Semicircle, ThermalParams, occupation


def fig2_baths(L_B):
    return tuple(make_bath(J, tp, L_B) for J, tp in zip(FIG2_DENSITIES, FIG2_THERMALS))


def random_correlation(N, seed):
    U = unitary_group.rvs(N, random_state=seed)
    occ = np.random.default_rng(seed).uniform(0, 1, N)
    return (U * occ) @ U.conj().T


# --------------------------------------------------------------------------
# Hamiltonian assembly
# --------------------------------------------------------------------------


def test_two_site_hamiltonian():
    np.testing.assert_array_equal(ff.assemble_hamiltonian(ff.SystemSpec(2)), [[0, 1], [1, 0]])


def test_staggered_field_on_odd_sites():
    H = ff.assemble_hamiltonian(ff.SystemSpec(2, h=5.0))
    np.testing.assert_array_equal(H, [[5, 1], [1, 0]])
    H4 = ff.SystemSpec(5, h=0.3).hamiltonian()
    np.testing.assert_array_equal(np.diag(H4), [0.3, 0, 0.3, 0, 0.3])


def test_fig2_structure():
    baths = fig2_baths(14)
    sys = ff.SystemSpec(16)
    H = ff.assemble_hamiltonian(sys, baths)
    lay = ff.Layout.of(sys, baths)
    assert H.shape == (44, 44) and lay.size == 44
    assert np.array_equal(H, H.T)
    sysb = H[lay.system, lay.system]
    np.testing.assert_array_equal(sysb, sys.hamiltonian())
    c1 = H[lay.bath1, lay.system]
    c2 = H[lay.bath2, lay.system]
    assert np.count_nonzero(c1) + np.count_nonzero(c2) == 28
    np.testing.assert_allclose(c1[:, 0], baths[0].gamma * baths[0].phi[0], atol=0)
    np.testing.assert_allclose(c2[:, -1], baths[1].gamma * baths[1].phi[0], atol=0)
    np.testing.assert_array_equal(H[lay.bath1, lay.bath1], np.diag(baths[0].energies))
    np.testing.assert_array_equal(H[lay.bath1, lay.bath2], 0)


def test_interacting_system_rejected():
    with pytest.raises(ff.UnsupportedBackendError):
        ff.assemble_hamiltonian(ff.SystemSpec(4, V=1.0))
    # the quadratic part alone is still available to the dense oracle
    assert ff.quadratic_part(ff.SystemSpec(4, V=1.0)).shape == (4, 4)


def test_system_needs_two_sites():
    with pytest.raises(ValueError):
        ff.SystemSpec(1)


# --------------------------------------------------------------------------
# thermal blocks
# --------------------------------------------------------------------------


def test_infinite_temperature_block():
    cb = make_bath(Semicircle(1.0, 2.0), ThermalParams(0.0), 6)
    np.testing.assert_array_equal(ff.thermal_correlation_block(cb), 0.5 * np.eye(6))


def test_zero_temperature_block_fills_negative_modes():
    cb = make_bath(Semicircle(1.0, 2.0), ThermalParams(1e8, 0.0), 7)
    d = np.diag(ff.thermal_correlation_block(cb))
    np.testing.assert_array_equal(d[cb.energies < -1e-9], 1.0)
    np.testing.assert_array_equal(d[cb.energies > 1e-9], 0.0)


def test_thermal_block_matches_occupation():
    cb = make_bath(Semicircle(1.0, 2.0), ThermalParams(0.1, 1.5), 14)
    top = 4 * np.cos(np.pi / 15)
    a = int(np.argmin(np.abs(cb.energies - top)))
    assert cb.energies[a] == pytest.approx(top, abs=1e-10)
    assert ff.thermal_correlation_block(cb)[a, a] == pytest.approx(occupation(ThermalParams(0.1, 1.5), top), rel=1e-12)


# --------------------------------------------------------------------------
# evolution
# --------------------------------------------------------------------------


def test_evolve_zero_time_is_identity():
    C = random_correlation(6, 1)
    H = ff.SystemSpec(6, h=0.4).hamiltonian()
    np.testing.assert_array_equal(ff.evolve(C, H, 0.0), C)


def test_decoupled_site_is_static():
    H = np.zeros((1, 1))
    C = np.array([[0.3]], dtype=complex)
    for t in (0.5, 10.0, 1e3):
        np.testing.assert_allclose(ff.evolve(C, H, t), C, atol=1e-15)


def test_two_site_rabi():
    H = ff.SystemSpec(2).hamiltonian()
    C0 = np.diag([1.0, 0.0]).astype(complex)
    for t in np.linspace(0, 3, 13):
        assert ff.evolve(C0, H, t)[0, 0].real == pytest.approx(np.cos(t) ** 2, abs=1e-13)


def test_evolve_dimension_check():
    with pytest.raises(ValueError):
        ff.evolve(np.eye(3), np.eye(2), 1.0)


@given(st.integers(2, 12), st.integers(0, 2**31 - 1), st.floats(0.0, 50.0))
def test_evolve_preserves_spectrum_and_trace(N, seed, t):
    C = random_correlation(N, seed)
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(N, N))
    H = H + H.T
    Ct = ff.evolve(C, H, t)
    assert np.abs(Ct - Ct.conj().T).max() < 1e-12
    ev = np.linalg.eigvalsh(Ct)
    np.testing.assert_allclose(ev, np.linalg.eigvalsh(C), atol=1e-10)
    assert ev.min() > -1e-10 and ev.max() < 1 + 1e-10
    assert abs(np.trace(Ct) - np.trace(C)) < 1e-10


# --------------------------------------------------------------------------
# refresh
# --------------------------------------------------------------------------


def test_refresh_is_idempotent():
    baths = fig2_baths(6)
    sys = ff.SystemSpec(4)
    H = ff.assemble_hamiltonian(sys, baths)
    C = ff.evolve(ff.initial_correlation(np.diag(ff.half_filled(4)).astype(complex), baths), H, 3.0)
    once = ff.preb_refresh(C, baths)
    np.testing.assert_array_equal(ff.preb_refresh(once, baths), once)
    # trace changes only through the bath blocks
    lay = ff.Layout.of(sys, baths)
    assert np.trace(once[lay.system, lay.system]) == np.trace(C[lay.system, lay.system])


def test_refresh_of_product_state_is_noop():
    baths = fig2_baths(5)
    C = ff.initial_correlation(random_correlation(3, 7), baths)
    np.testing.assert_array_equal(ff.preb_refresh(C, baths), C)


def test_fig2_system_block_positive_after_refresh_period():
    baths = fig2_baths(required_bath_size(6, 2.0))
    evo = ff.FreeFermionEvolution(ff.SystemSpec(16), baths)
    blk = evo.run(np.diag(ff.half_filled(16)).astype(complex), [6.0])[0]
    ev = np.linalg.eigvalsh(blk)
    assert ev.min() > -1e-10 and ev.max() < 1 + 1e-10


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------


def test_real_symmetric_carries_no_current():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(6, 6))
    np.testing.assert_array_equal(ff.currents(A + A.T), np.zeros(5))


def test_half_filled_pattern_observables():
    C = np.diag(ff.half_filled(6)).astype(complex)
    np.testing.assert_array_equal(ff.occupations(C), [1, 0, 1, 0, 1, 0])
    np.testing.assert_array_equal(ff.currents(C), np.zeros(5))
    np.testing.assert_array_equal(ff.half_filled(4, phase=1), [0, 1, 0, 1])


def test_current_sign_convention():
    # on two sites 2i<c+_2 c_1 - c+_1 c_2> = 2 dn_1/dt: flow to the right is negative
    H = ff.SystemSpec(2).hamiltonian()
    t = 0.3
    C = ff.evolve(np.diag([1.0, 0.0]).astype(complex), H, t)
    assert ff.currents(C)[0] == pytest.approx(-2 * np.sin(2 * t), rel=1e-12)


def test_equilibrium_baths_carry_no_current():
    J = Semicircle(1.0, 2.0)
    tp = ThermalParams(0.1, 1.5)
    sys = ff.SystemSpec(4)
    L = required_bath_size(120, 2.0)
    baths = (make_bath(J, tp, L), make_bath(J, tp, L))
    blk = ff.FreeFermionEvolution(sys, baths).run(np.diag(ff.half_filled(4)).astype(complex), [60.0])[0]
    assert np.abs(ff.currents(blk)).max() < 1e-6


def test_equilibrium_block_is_grand_canonical():
    # long-time system block equals the system block of n(H) for the coupled problem
    J = Semicircle(1.0, 2.0)
    tp = ThermalParams(0.5, 0.3)
    sys = ff.SystemSpec(4)
    L = required_bath_size(120, 2.0)
    baths = (make_bath(J, tp, L), make_bath(J, tp, L))
    evo = ff.FreeFermionEvolution(sys, baths)
    blk = evo.run(np.diag(ff.half_filled(4)).astype(complex), [60.0])[0]
    E, U = np.linalg.eigh(evo.H)
    G = (U * occupation(tp, E)) @ U.T
    np.testing.assert_allclose(blk, G[evo.layout.system, evo.layout.system], atol=1e-6)


def test_ness_independent_of_initial_pattern():
    # the slowest relaxation time here is ~14.5, so t=150 (baths with margin) is needed for 1e-4
    baths = fig2_baths(required_bath_size(200, 2.0))
    evo = ff.FreeFermionEvolution(ff.SystemSpec(8), baths)
    a = evo.run(np.diag(ff.half_filled(8)).astype(complex), [150.0])[0]
    b = evo.run(np.diag(ff.half_filled(8, phase=1)).astype(complex), [150.0])[0]
    assert np.linalg.norm(a - b) < 1e-4
