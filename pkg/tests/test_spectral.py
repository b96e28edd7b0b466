import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgescat.spectral import (
    Grid,
    MassProfile,
    ProfileKind,
    ResolutionError,
    adjoint_spectrum,
    discretize_ladder,
    transverse_spectrum,
)

TAU, O = ProfileKind.TAU, ProfileKind.O


def tau_ladder(lam=5.0, points=1201, half_width=None):
    p = MassProfile(TAU, lam)
    return discretize_ladder(p, Grid.for_profile(p, points, half_width))


def test_dense_eigensolve_zero_mode():
    lad = tau_ladder(half_width=6.0)
    w = np.linalg.eigvalsh((lad.Astar @ lad.A).toarray())
    assert abs(w[0]) < 1e-6


def test_dense_oracle_matches_harmonic_levels():
    # independent check of eps_k = 2 lam k with a dense solver
    for lam in (1.0, 5.0, 10.0):
        lad = tau_ladder(lam)
        w = np.linalg.eigvalsh((lad.Astar @ lad.A).toarray())[:7]
        k = np.arange(1, 7)
        assert np.max(np.abs(w[1:] - 2 * lam * k) / (2 * lam * k)) < 1e-4


def test_free_operator_is_antisymmetric():
    grid = Grid(6.0, 301)
    lad = discretize_ladder(None, grid, mass=lambda x: 0 * x)
    assert (lad.Astar != lad.A.T).nnz == 0
    assert lad.M.nnz == 0 or np.all(lad.M.data == 0)
    # D^T acts as -d/dx: exact on linear functions away from the boundary
    x = grid.midpoints
    out = lad.Astar @ (3.0 * x + 1.0)
    assert np.allclose(out[3:-3], -3.0, atol=1e-10)


def test_adjoint_is_exact_transpose():
    lad = tau_ladder()
    assert abs(lad.Astar - lad.A.T).max() == 0


def test_commutator_identity_interior():
    lam = 5.0
    lad = tau_ladder(lam)
    grid = lad.grid
    interior = slice(4, -4)
    for f_node, f_mid in ((np.ones(grid.points), np.ones(grid.points + 1)),
                          (grid.nodes.copy(), grid.midpoints.copy())):
        # a* a f = -f'' + (m^2 - m') f on nodes, a a* f = -f'' + (m^2 + m') f on midpoints
        lhs = (lad.Astar @ (lad.A @ f_node)) - (lam**2 * grid.nodes**2) * f_node
        rhs = (lad.A @ (lad.Astar @ f_mid)) - (lam**2 * grid.midpoints**2) * f_mid
        assert np.allclose(lhs[interior], -lam * f_node[interior], atol=1e-8)
        assert np.allclose(rhs[interior], lam * f_mid[interior], atol=1e-8)


def test_tau_levels(tau_basis):
    b = transverse_spectrum(tau_ladder(), 4)
    assert b.eigenvalues[0] == 0.0
    assert np.allclose(b.eigenvalues[1:], [10, 20, 30], rtol=1e-4)


def test_ground_state_is_gaussian(tau_basis):
    x = tau_basis.grid.nodes
    g = np.exp(-5.0 * x**2 / 2)
    nu0 = tau_basis.nu[0]
    corr = np.dot(nu0, g) / np.sqrt(np.dot(nu0, nu0) * np.dot(g, g))
    assert corr > 1 - 1e-8


def test_zero_mode_has_no_nodes(tau_basis):
    nu0 = tau_basis.nu[0]
    sig = nu0[np.abs(nu0) > 1e-10 * np.abs(nu0).max()]
    assert np.all(sig > 0)
    assert tau_basis.eigenvalues[0] < 1e-6 * tau_basis.eigenvalues[1]


def test_o_profile_positive_ground_state(o_basis):
    assert o_basis.eigenvalues[0] > 1e-2 * 5.0
    lad = discretize_ladder(o_basis.profile, o_basis.grid)
    w = np.linalg.eigvalsh((lad.Astar @ lad.A).toarray())[0]
    assert np.isclose(w, o_basis.eigenvalues[0], rtol=1e-8)


@pytest.mark.parametrize("kind", [TAU, O])
def test_orthonormality_and_intertwining(kind, tau_basis, o_basis):
    b = tau_basis if kind is TAU else o_basis
    h = b.grid.spacing
    lad = discretize_ladder(b.profile, b.grid)
    G = h * b.nu @ b.nu.T
    assert np.max(np.abs(G - np.eye(b.count))) < 1e-8
    pos = b.eta > 0
    Gm = h * b.mu[pos] @ b.mu[pos].T
    assert np.max(np.abs(Gm - np.eye(pos.sum()))) < 1e-8
    for k in np.flatnonzero(pos):
        assert np.linalg.norm(lad.A @ b.nu[k] - b.eta[k] * b.mu[k]) * np.sqrt(h) < 1e-8
        assert np.linalg.norm(lad.Astar @ b.mu[k] - b.eta[k] * b.nu[k]) * np.sqrt(h) < 1e-8 * max(1, b.eta[k])


@pytest.mark.parametrize("kind", [TAU, O])
def test_isospectrality(kind, tau_basis, o_basis):
    b = tau_basis if kind is TAU else o_basis
    lad = discretize_ladder(b.profile, b.grid)
    pos = b.eigenvalues[b.eigenvalues > 0]
    adj = adjoint_spectrum(lad, len(pos))
    assert np.allclose(adj, pos, rtol=1e-6)


@pytest.mark.parametrize("kind", [TAU, O])
def test_grid_refinement(kind):
    p = MassProfile(kind, 5.0)
    g1 = Grid.for_profile(p, 1201)
    g2 = Grid(g1.half_width, 2401)
    e1 = transverse_spectrum(discretize_ladder(p, g1), 7).eigenvalues
    e2 = transverse_spectrum(discretize_ladder(p, g2), 7).eigenvalues
    nz = e2 > 0
    assert np.max(np.abs(e1[nz] - e2[nz]) / e2[nz]) < 1e-4


def test_default_grid_tail_bound():
    for lam in (1.0, 5.0, 10.0):
        p = MassProfile(TAU, lam)
        g = Grid.for_profile(p)
        assert np.exp(-p.antiderivative(g.half_width)) < 1e-12
        assert g.half_width >= 6.0


def test_count_limit():
    with pytest.raises(ResolutionError):
        transverse_spectrum(tau_ladder(points=41, half_width=6.0), 11)


def test_coarse_grid_rejected():
    p = MassProfile(TAU, 10.0)
    with pytest.raises(ResolutionError):
        discretize_ladder(p, Grid(8.0, 11))


def test_second_order_option_is_less_accurate():
    p = MassProfile(TAU, 5.0)
    g = Grid.for_profile(p)
    e2 = transverse_spectrum(discretize_ladder(p, g, order=2), 4).eigenvalues
    e4 = transverse_spectrum(discretize_ladder(p, g, order=4), 4).eigenvalues
    exact = np.array([0, 10, 20, 30])
    assert np.max(np.abs(e4 - exact)) < np.max(np.abs(e2 - exact))


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.5, 20.0), x=st.floats(-10, 10))
def test_profile_shapes(lam, x):
    t, o = MassProfile(TAU, lam), MassProfile(O, lam)
    assert np.isclose(t(-x), -t(x))
    assert np.isclose(o(-x), o(x))
    assert o(x) > 0
    assert np.isclose(t.derivative(x), lam)
    # antiderivative is consistent with the profile
    dx = 1e-5
    assert np.isclose((o.antiderivative(x + dx) - o.antiderivative(x - dx)) / (2 * dx), o(x), rtol=1e-5, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-1, 1), b=st.floats(-1, 1))
def test_adjoint_identity_random_vectors(a, b):
    # (A f, g) = (f, A* g) with the uniform quadrature
    lad = tau_ladder(points=601)
    rng = np.random.default_rng(int(1e6 * (a + 2)) + int(1e3 * (b + 2)))
    f = rng.standard_normal(lad.grid.points)
    g = rng.standard_normal(lad.grid.points + 1)
    assert np.isclose(np.dot(lad.A @ f, g), np.dot(f, lad.Astar @ g), rtol=1e-12)
