import numpy as np
import pytest
from conftest import make_plan, make_system
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from edgescat.disorder import CouplingStrengths, OuParams, build_plan
from edgescat.scattering import (
    OpaqueSlabError,
    conductance,
    kramers_check,
    protected_inputs,
    scatter,
    scatter_batch,
    trs_defects,
)
from edgescat.transport import TransferMatrix, propagate_ensemble

EPS = 0.01
MODERATE = CouplingStrengths(1.0, 1.0, 1.0)


def ensemble(plan, n=20, L=1.0, seed=5):
    return propagate_ensemble(plan, OuParams(seed=seed), EPS, [L], range(n))


def test_identity_transfer():
    S = scatter(np.eye(3), [1, 1, -1])
    assert np.all(S.r_plus == 0) and np.all(S.r_minus == 0)
    assert np.allclose(S.t_plus, np.eye(2)) and np.allclose(S.t_minus, np.eye(1))
    assert S.partition == (2, 1) and S.index == 1


def test_single_mode():
    _, plan = make_plan(1.0, CouplingStrengths(gamma_diag=1.0))
    res = ensemble(plan, 5)
    for r in range(5):
        S = scatter(res.transfer(0, r))
        assert abs(abs(S.t_plus[0, 0]) - 1) < 1e-10
        assert S.r_plus.shape == (0, 1)
        assert conductance(S).g_plus == pytest.approx(1.0, abs=1e-10)


def test_block_formulas_from_inverse_propagator():
    # oracle: the reverse-direction block inversion applied to P^-1
    _, plan = make_plan(4.0, MODERATE)
    P = ensemble(plan, 1).P[0, 0]
    S = scatter(P, plan.eps_diag)
    Q = np.linalg.inv(P)
    Q11, Q12, Q21, Q22 = Q[:2, :2], Q[:2, 2:], Q[2:, :2], Q[2:, 2:]
    inv = np.linalg.inv(Q11)
    assert np.allclose(S.t_plus, inv, atol=1e-12)
    assert np.allclose(S.r_plus, Q21 @ inv, atol=1e-12)
    assert np.allclose(S.r_minus, -inv @ Q12, atol=1e-12)
    assert np.allclose(S.t_minus, Q22 - Q21 @ inv @ Q12, atol=1e-12)


def test_unitarity_and_block_identities():
    _, plan = make_plan(4.0, MODERATE)
    res = ensemble(plan, 30)
    for r in range(30):
        S = scatter(res.P[0, r], plan.eps_diag)
        assert S.unitarity_defect() < 1e-8
        assert max(S.block_defects().values()) < 1e-8
        M = S.matrix
        assert np.allclose(M.conj().T @ M, np.eye(3), atol=1e-8)
        if res.flux_defects[0, r] > 1e-15:
            assert S.unitarity_defect() / res.flux_defects[0, r] < 1e3


def test_batch_matches_single():
    _, plan = make_plan(4.0, MODERATE)
    res = ensemble(plan, 4)
    R, T, Rm, Tm = scatter_batch(res.P[0], plan.eps_diag)
    for r in range(4):
        S = scatter(res.P[0, r], plan.eps_diag)
        assert np.allclose(R[r], S.r_plus) and np.allclose(T[r], S.t_plus)
        assert np.allclose(Rm[r], S.r_minus) and np.allclose(Tm[r], S.t_minus)


def test_conductance_without_disorder():
    S = scatter(TransferMatrix(np.eye(6), np.array([1, 1, 1, 1, -1, -1.0]), 1.0))
    rep = conductance(S)
    assert rep.g_plus == 4.0 and rep.protected_dim == 4
    assert protected_inputs(S).shape == (4, 4)


def test_index_one_bound_and_single_protected_vector():
    _, plan = make_plan(4.0, MODERATE)
    res = ensemble(plan, 30, L=2.0)
    for r in range(30):
        S = scatter(res.P[0, r], plan.eps_diag)
        rep = conductance(S)
        assert rep.g_plus >= 1 - 1e-8 and rep.bound_ok
        ev = rep.eigenvalues
        assert np.all(np.diff(ev) <= 0)
        assert ev[0] > 1 - 1e-8
        assert np.all(ev > -1e-10) and np.all(ev < 1 + 1e-10)
        tau = protected_inputs(S)
        assert tau.shape[1] == 1
        assert np.linalg.norm(S.r_plus @ tau) < 1e-8
        assert np.allclose(tau.conj().T @ tau, np.eye(1))


def test_localization_drives_conductance_to_index():
    _, plan = make_plan(4.0, MODERATE)
    res = ensemble(plan, 40, L=3.0)
    g = [conductance(scatter(res.P[0, r], plan.eps_diag)).g_plus for r in range(40)]
    assert np.mean(g) - 1 < 0.05


def test_opaque_slab_guard():
    with pytest.raises(OpaqueSlabError):
        scatter(np.diag([1.0, 1.0, 1e-14]), [1, 1, -1])
    # a flux-preserving boost with huge norm is numerically opaque too
    c = np.cosh(30.0)
    s = np.sinh(30.0)
    P = np.array([[1, 0, 0], [0, c, s], [0, s, c]])
    with pytest.raises(OpaqueSlabError):
        scatter(P, [1, 1, -1])


def test_trs_structure_and_negative_control():
    system, plan = make_plan(4.0, MODERATE, m_tau=1, n_tau=1, trs=True)
    res = ensemble(plan, 10)
    for r in range(10):
        rep = trs_defects(scatter(res.P[0, r], plan.eps_diag), system)
        assert rep.max_defect < 1e-8
        assert rep.kernel_dim >= 1
    broken = build_plan(system, MODERATE, trs=False)
    res = ensemble(broken, 10)
    skews = [trs_defects(scatter(res.P[0, r], broken.eps_diag), system).skew_r_plus for r in range(10)]
    assert min(skews) > 0.1


def test_trs_report_needs_trs_system():
    _, plan = make_plan(4.0, MODERATE)
    S = scatter(np.eye(3), plan.eps_diag)
    with pytest.raises(ValueError):
        trs_defects(S, make_system(4.0))
    with pytest.raises(ValueError):
        kramers_check(make_system(4.0))


@pytest.mark.parametrize("m", [1, 2, 3])
def test_kramers(m):
    system = make_system(4.0, m_tau=m, n_tau=m, trs=True)
    k = kramers_check(system)
    assert k["max_overlap"] < 1e-12
    assert k["partner_error"] < 1e-12
    assert k["theta_squared"] < 1e-14
    assert k["antiunitary"] < 1e-12


def _flux_preserving(rng, n_plus, n_minus, scale):
    n = n_plus + n_minus
    H = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = (H + H.conj().T) * scale
    lam = np.r_[np.ones(n_plus), -np.ones(n_minus)]
    return expm(-1j * lam[:, None] * H), lam


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_plus=st.integers(1, 4), n_minus=st.integers(0, 3),
       scale=st.floats(0.01, 0.5))
def test_random_flux_preserving_matrices_give_unitary_s(seed, n_plus, n_minus, scale):
    P, lam = _flux_preserving(np.random.default_rng(seed), n_plus, n_minus, scale)
    S = scatter(P, lam)
    assert S.unitarity_defect() < 1e-10
    rep = conductance(S)
    assert rep.g_plus >= n_plus - n_minus - 1e-9
    assert np.sum(rep.eigenvalues > 1 - 1e-8) >= n_plus - n_minus
    ker = protected_inputs(S)
    assert ker.shape[1] >= n_plus - n_minus
    if S.r_plus.size:
        assert np.linalg.norm(S.r_plus @ ker) < 1e-8
