import math

import numpy as np
import pytest

from _oracles import fine_trapezoid, recursion_chain
from prebsim import freefermion as ff
from prebsim.chainmap import (
    ChainBath,
    ChainCache,
    chain_coefficients,
    discretize,
    make_bath,
    required_bath_size,
    star_basis,
)
from prebsim.spectral import OhmicGaussian, Semicircle, Tabulated, ThermalParams


def test_semicircle_chain_is_uniform():
    cb = chain_coefficients(Semicircle(1.0, 2.0), 26)
    assert abs(cb.gamma - 1.0) < 1e-8
    assert np.max(np.abs(cb.eps)) < 1e-8
    assert np.max(np.abs(cb.hop - 2.0)) < 1e-6


def test_semicircle_gamma_from_width():
    cb = chain_coefficients(Semicircle(2.0, 2.0), 14)
    assert cb.gamma == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert np.max(np.abs(cb.eps)) < 1e-8
    assert np.max(np.abs(cb.hop - 2.0)) < 1e-6


def test_ohmic_chain_matches_recursion_oracle():
    J = OhmicGaussian(0.1, 50.0)
    cb = chain_coefficients(J, 10)
    gamma, eps, hop = recursion_chain(J, *J.support, 10)
    assert cb.gamma == pytest.approx(gamma, rel=1e-4)
    np.testing.assert_allclose(cb.eps, eps, rtol=1e-4)
    np.testing.assert_allclose(cb.hop, hop, rtol=1e-4)


def test_tabulated_chain_matches_recursion_oracle():
    J = Tabulated(np.array([-2.0, -0.5, 1.0, 3.0]), np.array([0.0, 1.5, 0.7, 0.0]))
    cb = chain_coefficients(J, 6)
    gamma, eps, hop = recursion_chain(J, *J.support, 6)
    assert cb.gamma == pytest.approx(gamma, rel=1e-4)
    np.testing.assert_allclose(cb.eps, eps, rtol=1e-4, atol=1e-6)
    np.testing.assert_allclose(cb.hop, hop, rtol=1e-4)


@pytest.mark.parametrize("J", [Semicircle(1.0, 2.0), OhmicGaussian(0.1, 50.0), Semicircle(0.4, 0.3)])
def test_gamma_squared_is_total_weight(J):
    cb = chain_coefficients(J, 4)
    lo, hi = J.support
    ref = fine_trapezoid(lambda w: J(w), lo, hi, n=2_000_001) / (2 * math.pi)
    assert cb.gamma**2 == pytest.approx(ref, rel=1e-6)
    assert cb.gamma**2 == pytest.approx(J.total_weight(), rel=1e-10)


@pytest.mark.parametrize("J", [Semicircle(1.0, 2.0), OhmicGaussian(0.1, 50.0)])
def test_chain_invariant_under_finer_discretization(J):
    a = chain_coefficients(J, 12)
    b = chain_coefficients(J, 12, modes_per_site=32)
    assert a.gamma == pytest.approx(b.gamma, rel=1e-6)
    np.testing.assert_allclose(a.eps, b.eps, atol=1e-6 * max(1.0, np.abs(b.eps).max()))
    np.testing.assert_allclose(a.hop, b.hop, rtol=1e-6)


def test_discretize_weights():
    x, kappa = discretize(Semicircle(1.0, 2.0), 64)
    assert x.size >= 64
    assert np.all(kappa > 0)
    assert kappa @ kappa == pytest.approx(1.0, rel=1e-12)


def test_chain_too_long_for_discretization():
    with pytest.raises(ValueError):
        chain_coefficients(Semicircle(1.0, 2.0), 100, modes_per_site=0)
    with pytest.raises(ValueError):
        chain_coefficients(Semicircle(1.0, 2.0), 0)


# --------------------------------------------------------------------------
# eigenbasis
# --------------------------------------------------------------------------


def _chain(eps, hop):
    return ChainBath(1.0, np.asarray(eps, float), np.asarray(hop, float), ThermalParams(0.0))


def test_star_basis_single_site():
    cb = star_basis(_chain([0.0], []))
    np.testing.assert_array_equal(cb.energies, [0.0])
    np.testing.assert_array_equal(cb.phi, [[1.0]])


def test_star_basis_two_sites():
    g = 0.7
    cb = star_basis(_chain([0.0, 0.0], [g]))
    np.testing.assert_allclose(cb.energies, [-g, g], atol=1e-15)
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(cb.phi[:, 0], [s, -s], atol=1e-15)
    np.testing.assert_allclose(cb.phi[:, 1], [s, s], atol=1e-15)


def test_uniform_chain_spectrum_closed_form():
    cb = star_basis(chain_coefficients(Semicircle(2.0, 2.0), 14))
    alpha = np.arange(1, 15)
    ref = np.sort(4.0 * np.cos(alpha * np.pi / 15))
    np.testing.assert_allclose(cb.energies, ref, atol=1e-10)
    np.testing.assert_allclose(cb.energies, np.linalg.eigvalsh(cb.matrix()), atol=1e-12)


@pytest.mark.parametrize("J, L", [(Semicircle(1.0, 2.0), 30), (OhmicGaussian(0.1, 50.0), 12)])
def test_eigenbasis_invariants(J, L):
    cb = star_basis(chain_coefficients(J, L))
    Phi = cb.phi
    assert np.linalg.norm(Phi.T @ Phi - np.eye(L)) < 1e-12
    assert np.linalg.norm(Phi.T @ cb.matrix() @ Phi - np.diag(cb.energies)) < 1e-10 * max(1, abs(cb.energies).max())
    assert np.all(np.diff(cb.energies) > 0)
    for a in range(L):
        col = Phi[:, a]
        first = col[np.flatnonzero(np.abs(col) > 1e-14)[0]]
        assert first > 0


def test_couplings_need_eigs():
    with pytest.raises(ValueError):
        _chain([0.0, 0.0], [1.0]).couplings()


# --------------------------------------------------------------------------
# bath sizes, caching, serialization
# --------------------------------------------------------------------------


@pytest.mark.parametrize("t, expected", [(6, 14), (12, 26), (50, 102)])
def test_required_bath_size(t, expected):
    assert required_bath_size(t, 2.0) == expected


def test_required_bath_size_ceiling_and_errors():
    assert required_bath_size(1.2, 1.0) == 3
    with pytest.raises(ValueError):
        required_bath_size(-1, 2.0)
    with pytest.raises(ValueError):
        required_bath_size(1, 0.0)


def test_doubling_bath_beyond_light_cone_is_invisible():
    # (tau + 1) g_B puts the far-end echo at t = tau + 1, so its Bessel
    # precursor is still ~1e-3 at t = tau; two extra units of time suffice
    J = (Semicircle(1.0, 2.0), Semicircle(2.0, 2.0))
    tps = (ThermalParams(0.1, 1.5), ThermalParams(0.2, -1.5))
    sys = ff.SystemSpec(4)
    tau = 6.0

    def obs(size):
        baths = tuple(make_bath(j, tp, size) for j, tp in zip(J, tps))
        blk = ff.FreeFermionEvolution(sys, baths).run(np.diag(ff.half_filled(4)).astype(complex), [tau])[0]
        return np.concatenate([ff.occupations(blk), ff.currents(blk)])

    changes = []
    for L in (required_bath_size(tau, 2.0), required_bath_size(tau + 1, 2.0), required_bath_size(tau + 2, 2.0)):
        changes.append(np.max(np.abs(obs(L) - obs(2 * L))))
    assert changes[0] > changes[1] > changes[2]
    assert changes[2] < 1e-6


def test_json_roundtrip():
    cb = make_bath(OhmicGaussian(0.1, 50.0), ThermalParams(10.0, 0.0, "bose"), 5)
    back = ChainBath.from_json(cb.to_json())
    assert back.gamma == cb.gamma
    np.testing.assert_array_equal(back.eps, cb.eps)
    np.testing.assert_array_equal(back.hop, cb.hop)
    np.testing.assert_array_equal(back.energies, cb.energies)
    np.testing.assert_array_equal(back.phi, cb.phi)
    assert back.thermal == cb.thermal


def test_cache_hit_returns_same_chain(tmp_path):
    cache = ChainCache(tmp_path / "chains")
    J = Semicircle(1.0, 2.0)
    first = make_bath(J, ThermalParams(0.1, 1.5), 8, cache)
    assert len(list((tmp_path / "chains").iterdir())) == 1
    second = make_bath(J, ThermalParams(0.3, 0.0), 8, cache)
    np.testing.assert_array_equal(first.phi, second.phi)
    # thermal parameters are not part of the key
    assert second.thermal == ThermalParams(0.3, 0.0)
    make_bath(J, ThermalParams(0.1, 1.5), 9, cache)
    assert len(list((tmp_path / "chains").iterdir())) == 2
