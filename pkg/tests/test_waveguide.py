import numpy as np
import pytest
from conftest import bases, make_system
from hypothesis import given, settings
from hypothesis import strategies as st

from edgescat.spectral import ProfileKind
from edgescat.waveguide import (
    Block,
    BlockConfig,
    ModeKind,
    ThresholdError,
    assemble_system,
    classify_modes,
    dispersion_table,
)

TAU, O = ProfileKind.TAU, ProfileKind.O


def test_low_energy_tau_block_has_only_zero_mode(tau_basis):
    prop, evan = classify_modes(tau_basis, 1.0)
    assert len(prop) == 1
    assert prop[0].kind is ModeKind.ZERO and prop[0].zeta == 1.0
    assert len(evan) == tau_basis.count - 1


def test_three_modes_at_e4(tau_basis):
    prop, _ = classify_modes(tau_basis, 4.0)
    zetas = sorted((m.zeta for m in prop), reverse=True)
    assert np.allclose(zetas, [4.0, np.sqrt(6), -np.sqrt(6)], atol=1e-6)
    pair = next(m for m in prop if m.kind is ModeKind.PAIR_PLUS)
    assert np.isclose(pair.current, np.sqrt(6) / 4, atol=1e-6)
    assert np.isclose(pair.c_coef, 0.8978, atol=1e-4)
    # direct evaluation of the closed form: sqrt(10) / sqrt(2 E (E + zeta))
    s_exact = np.sqrt(10) / np.sqrt(8 * (4 + np.sqrt(6)))
    assert np.isclose(pair.s_coef, s_exact, atol=1e-6)
    assert np.isclose(pair.s_coef, 0.4402, atol=1e-4)
    assert np.isclose(pair.c_coef**2 + pair.s_coef**2, 1.0, atol=1e-14)
    assert np.isclose(pair.c_coef**2 - pair.s_coef**2, pair.current, atol=1e-12)


def test_o_block_below_gap(o_basis):
    E = 0.5 * np.sqrt(o_basis.eigenvalues[0])
    prop, evan = classify_modes(o_basis, E)
    assert prop == ()
    assert len(evan) == o_basis.count


@pytest.mark.parametrize("kind,E", [(TAU, 4.0), (TAU, 6.0), (O, 5.0), (O, 7.0)])
def test_mode_normalization(kind, E):
    basis = bases()[kind]
    grid = basis.grid
    for sign, conj in ((+1, False), (-1, False), (-1, True)):
        block = Block(0, kind, sign, conj, None)
        prop, evan = classify_modes(basis, E, block)
        for m in prop:
            phi = m.transverse
            assert np.isclose(phi.current(grid, sign), m.direction, atol=1e-8)
            if not m.is_zero:
                assert np.isclose(phi.inner(phi, grid).real, 1.0 / m.current, rtol=1e-8)
        for e in evan:
            phi = e.transverse
            assert np.isclose(abs(e.theta), 1.0, atol=1e-12)
            assert abs(phi.current(grid)) < 1e-6
            assert np.isclose(phi.inner(phi, grid).real, 1.0, atol=1e-8)


def test_mode_orthogonality_across_branches(tau_basis):
    prop, _ = classify_modes(tau_basis, 6.0)
    grid = tau_basis.grid
    # current form separates distinct modes
    for i, a in enumerate(prop):
        for b in prop[i + 1:]:
            assert abs(a.transverse.inner(b.transverse.sigma3(), grid)) < 1e-8


def test_resonant_energy_rejected(tau_basis, o_basis):
    with pytest.raises(ThresholdError):
        classify_modes(tau_basis, float(np.sqrt(tau_basis.eigenvalues[1])))
    with pytest.raises(ThresholdError):
        classify_modes(o_basis, float(np.sqrt(o_basis.eigenvalues[2])))


def test_zero_energy_rejected(tau_basis):
    with pytest.raises(ThresholdError):
        classify_modes(tau_basis, 0.0)


def test_unresolved_energy_rejected(tau_basis):
    with pytest.raises(ThresholdError):
        classify_modes(tau_basis, float(np.sqrt(tau_basis.eigenvalues[-1])) + 1.0)


def test_system_ordering_centres_zero_mode():
    s = make_system(4.0)
    assert s.total_propagating == 3
    assert list(s.eps_diag) == [1.0, 1.0, -1.0]
    assert s.modes[1].is_zero
    assert np.allclose(s.zetas, [np.sqrt(6), 4.0, -np.sqrt(6)], atol=1e-6)


def test_index_from_counts():
    s = make_system(1.0, m_tau=2, n_tau=1)
    assert s.total_propagating == 3 and s.index == 1
    assert (s.n_plus, s.n_minus) == (2, 1)


def test_trs_counting():
    s = make_system(4.0, m_tau=1, n_tau=1, trs=True)
    assert s.total_propagating == 6
    assert s.index == 0 and s.index2 == 1
    assert s.n_plus == s.n_minus == 3
    p = s.partner
    assert np.all(p[p] == np.arange(6))
    assert np.all(s.eps_diag[p] == -s.eps_diag)


def test_total_count_formula():
    cfg = BlockConfig(2, 1, 1, 2)
    E = 5.0
    s = assemble_system(cfg, bases(), E)
    n_tau = len(classify_modes(bases()[TAU], E)[0])
    n_o = len(classify_modes(bases()[O], E)[0])
    assert s.total_propagating == 3 * n_tau + 3 * n_o
    assert s.n_plus - s.n_minus == cfg.index


def test_trs_requires_matching_counts():
    with pytest.raises(ValueError):
        BlockConfig(1, 0, 0, 0, trs=True)
    with pytest.raises(ValueError):
        BlockConfig(0, 0, 0, 0)


def test_index_invariant_under_trivial_blocks():
    base = make_system(5.0, m_tau=2, n_tau=1)
    for m_o, n_o in ((1, 0), (0, 1), (2, 3)):
        s = make_system(5.0, m_tau=2, n_tau=1, m_o=m_o, n_o=n_o)
        assert (s.index, s.index2) == (base.index, base.index2)
        assert s.n_plus - s.n_minus == base.n_plus - base.n_minus


def _thresholds(basis):
    return np.sqrt(basis.eigenvalues[basis.eigenvalues > 0])


@settings(max_examples=40, deadline=None)
@given(E=st.floats(0.05, 8.0))
def test_parity_of_propagating_count(E):
    b = bases()
    cuts = np.concatenate([_thresholds(b[TAU]), _thresholds(b[O])])
    if np.min(np.abs(cuts - E)) < 1e-3:
        return
    assert len(classify_modes(b[TAU], E)[0]) % 2 == 1
    assert len(classify_modes(b[O], E)[0]) % 2 == 0


def test_dispersion_examples(tau_basis):
    t = dispersion_table(tau_basis, [0.0, 3.0], [-1, 0, 1])
    assert np.allclose(t.values[0], [-np.sqrt(10), 0.0, np.sqrt(10)], rtol=1e-6)
    assert np.isclose(t.values[1, 2], np.sqrt(19), rtol=1e-6)
    z = np.linspace(-5, 5, 11)
    t0 = dispersion_table(tau_basis, z, [0])
    assert np.array_equal(t0.values[:, 0], z)
    assert t.header() == ["zeta", "E_-1", "E_0", "E_1"]


def test_dispersion_needs_resolved_levels(tau_basis, o_basis):
    with pytest.raises(ValueError):
        dispersion_table(tau_basis, [0.0], [tau_basis.count])
    with pytest.raises(ValueError):
        dispersion_table(o_basis, [0.0], [0])
    # h_o levels are labelled from 1
    t = dispersion_table(o_basis, [0.0], [1])
    assert np.isclose(t.values[0, 0], np.sqrt(o_basis.eigenvalues[0]))
