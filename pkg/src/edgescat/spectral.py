"""Transverse ladder operators and their eigenbasis.

The ladder operator ``a = d/dx + m(x)`` maps functions sampled on the grid
nodes to functions sampled on the cell midpoints (a staggered layout), so
``a* = a^T`` is its exact discrete adjoint for the uniform quadrature
``(f, g) = h * sum(conj(f) * g)``.  A collocated central difference would
double every level of ``a* a``; the staggered stencil does not.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "ProfileKind",
    "MassProfile",
    "Grid",
    "LadderPair",
    "SpectralBasis",
    "ResolutionError",
    "discretize_ladder",
    "transverse_spectrum",
    "adjoint_spectrum",
]

# Ground-state tail exp(-int_0^X m) must fall below this.
TAIL_TOLERANCE = 1e-12


class ResolutionError(ValueError):
    """The grid or eigensolver cannot resolve the requested quantities."""


class ProfileKind(str, enum.Enum):
    TAU = "tau"
    O = "o"


@dataclass(frozen=True)
class MassProfile:
    """Confining mass term.

    ``TAU`` is the sign-changing profile ``lambda * x``; ``O`` is the
    even profile ``lambda * sqrt(x^2 + smoothing^2)``.
    """

    kind: ProfileKind
    lam: float
    smoothing: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.smoothing > 0:
            raise ValueError("smoothing must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is ProfileKind.TAU:
            return self.lam * x
        return self.lam * np.sqrt(x * x + self.smoothing**2)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is ProfileKind.TAU:
            return np.full_like(x, self.lam)
        return self.lam * x / np.sqrt(x * x + self.smoothing**2)

    def antiderivative(self, x):
        """``int_0^x m(t) dt``."""
        x = np.asarray(x, dtype=float)
        if self.kind is ProfileKind.TAU:
            return 0.5 * self.lam * x * x
        s = self.smoothing
        r = np.sqrt(x * x + s * s)
        return 0.5 * self.lam * (x * r + s * s * np.arcsinh(x / s))

    @property
    def growth_bound(self) -> float:
        """A constant ``lambda_0`` with ``1/lambda_0 < |m(x)|/|x| < lambda_0`` for ``|x| > 1``."""
        upper = self.lam * (np.sqrt(1.0 + self.smoothing**2) if self.kind is ProfileKind.O else 1.0)
        return 2.0 * max(upper, 1.0 / self.lam)

    @property
    def has_zero_mode(self) -> bool:
        return self.kind is ProfileKind.TAU


@dataclass(frozen=True)
class Grid:
    half_width: float
    points: int

    def __post_init__(self):
        if self.points < 3:
            raise ValueError("grid needs at least 3 points")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    @property
    def midpoints(self) -> np.ndarray:
        # One midpoint outside each end closes the staggered stencil (Dirichlet).
        h = self.spacing
        return -self.half_width - 0.5 * h + h * np.arange(self.points + 1)

    def inner(self, f, g) -> complex:
        return self.spacing * np.vdot(f, g)

    def norm(self, f) -> float:
        return float(np.sqrt(self.spacing * np.vdot(f, f).real))

    @classmethod
    def for_profile(cls, profile: MassProfile, points: int = 1201, half_width: float | None = None) -> "Grid":
        """Default grid: ``X = 6`` unless the ground-state tail needs more room."""
        if half_width is None:
            need = -np.log(TAIL_TOLERANCE)
            x = 6.0
            while profile.antiderivative(x - 1.0) < need:
                x += 0.25
            half_width = x
        return cls(float(half_width), int(points))


@dataclass(frozen=True)
class LadderPair:
    """Discrete ``a`` (nodes -> midpoints) and ``a*`` (midpoints -> nodes)."""

    A: sp.csr_matrix
    Astar: sp.csr_matrix
    D: sp.csr_matrix
    M: sp.csr_matrix
    grid: Grid
    profile: MassProfile | None


# Fourth-order staggered stencils: offset (node index - midpoint index) -> weight.
_DERIV4 = {0: 27.0 / 24.0, -1: -27.0 / 24.0, 1: -1.0 / 24.0, -2: 1.0 / 24.0}
_INTERP4 = {0: 9.0 / 16.0, -1: 9.0 / 16.0, 1: -1.0 / 16.0, -2: -1.0 / 16.0}
_DERIV2 = {0: 1.0, -1: -1.0}
_INTERP2 = {0: 0.5, -1: 0.5}


def _staggered(weights: dict, n_nodes: int, scale: float) -> sp.csr_matrix:
    n_mid = n_nodes + 1
    rows, cols, vals = [], [], []
    j = np.arange(n_mid)
    for off, w in weights.items():
        k = j + off
        ok = (k >= 0) & (k < n_nodes)
        rows.append(j[ok])
        cols.append(k[ok])
        vals.append(np.full(ok.sum(), w * scale))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_mid, n_nodes)
    )


def discretize_ladder(profile: MassProfile | None, grid: Grid, order: int = 4, mass=None) -> LadderPair:
    """Assemble ``A = D + M`` and ``Astar = A^T``.

    ``D`` is the staggered difference and ``M`` the mass times the staggered
    interpolation; ``D^T`` is minus the transposed difference, so ``Astar``
    is ``-d/dx + m`` to the same order.  ``mass`` overrides the profile with
    an arbitrary callable (``lambda x: 0 * x`` gives the free operator).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    m = mass if mass is not None else profile
    if m is None:
        raise ValueError("need a profile or a mass callable")
    h = grid.spacing
    mid = grid.midpoints
    m_mid = np.asarray(m(mid), dtype=float)
    if h * np.max(np.abs(m_mid)) > 1.0:
        raise ResolutionError(
            f"grid too coarse: spacing*max|m| = {h * np.max(np.abs(m_mid)):.3g} > 1"
        )
    deriv, interp = (_DERIV4, _INTERP4) if order == 4 else (_DERIV2, _INTERP2)
    D = _staggered(deriv, grid.points, 1.0 / h)
    M = sp.diags(m_mid) @ _staggered(interp, grid.points, 1.0)
    A = (D + M).tocsr()
    return LadderPair(A=A, Astar=A.T.tocsr(), D=D.tocsr(), M=M.tocsr(), grid=grid, profile=profile)


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenpairs of ``a* a`` with the intertwined family ``mu_k = a nu_k / eta_k``.

    ``nu`` rows live on the grid nodes, ``mu`` rows on the midpoints.  For
    profiles with a zero mode ``mu[0]`` is identically zero (there is no
    ``mu_0``).
    """

    profile: MassProfile
    grid: Grid
    eigenvalues: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    eta: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def has_zero_mode(self) -> bool:
        return self.profile.has_zero_mode


def _sign_fix(v: np.ndarray) -> np.ndarray:
    # Leftmost significant lobe made positive.
    amp = np.abs(v)
    i = int(np.argmax(amp > 1e-3 * amp.max()))
    return v if v[i] > 0 else -v


def _lowest_eigenpairs(H: sp.spmatrix, count: int):
    H = H.tocsr()
    n = H.shape[0]
    bw = 0
    coo = H.tocoo()
    if coo.nnz:
        bw = int(np.max(np.abs(coo.row - coo.col)))
    bands = np.zeros((bw + 1, n))
    for d in range(bw + 1):
        diag = H.diagonal(-d)
        bands[d, : n - d] = diag
    try:
        w, v = sla.eig_banded(bands, lower=True, select="i", select_range=(0, count - 1))
    except (sla.LinAlgError, ValueError) as exc:  # pragma: no cover - LAPACK failure
        raise ResolutionError(f"eigensolver failed: {exc}") from exc
    return w, v


def transverse_spectrum(ladder: LadderPair, count: int) -> SpectralBasis:
    """Lowest ``count`` eigenpairs of ``a* a``, L2-normalized on the grid."""
    grid = ladder.grid
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > grid.points // 4:
        raise ResolutionError(f"count={count} exceeds resolved modes ({grid.points // 4})")
    if ladder.profile is None:
        raise ValueError("transverse_spectrum needs a mass profile")
    H = (ladder.Astar @ ladder.A).tocsr()
    w, v = _lowest_eigenpairs(H, count)
    h = grid.spacing
    w = np.where(np.abs(w) < 1e-10 * max(1.0, abs(w[-1])), 0.0, w)
    if np.any(w < -1e-8 * max(1.0, abs(w[-1]))):
        raise ResolutionError("negative eigenvalue of a*a; grid is not resolving the operator")
    w = np.clip(w, 0.0, None)
    nu = np.empty((count, grid.points))
    mu = np.zeros((count, grid.points + 1))
    eta = np.sqrt(w)
    for k in range(count):
        vk = v[:, k] / np.sqrt(h * np.dot(v[:, k], v[:, k]))
        nu[k] = _sign_fix(vk)
        if eta[k] > 0:
            mu[k] = (ladder.A @ nu[k]) / eta[k]
    if ladder.profile.has_zero_mode and (count > 1 and w[0] > 1e-6 * w[1]):
        raise ResolutionError("zero mode not resolved; widen or refine the grid")
    nu.setflags(write=False)
    mu.setflags(write=False)
    w.setflags(write=False)
    eta.setflags(write=False)
    return SpectralBasis(profile=ladder.profile, grid=grid, eigenvalues=w, nu=nu, mu=mu, eta=eta)


def adjoint_spectrum(ladder: LadderPair, count: int) -> np.ndarray:
    """Lowest ``count`` positive eigenvalues of ``a a*``.

    The rectangular ``A`` leaves ``A A^T`` one dimension larger than
    ``A^T A``; its kernel holds a boundary artifact (plus the image of a
    zero mode, when there is one) and is dropped.
    """
    H = (ladder.A @ ladder.Astar).tocsr()
    w, _ = _lowest_eigenpairs(H, count + 2)
    scale = max(1.0, abs(w[-1]))
    w = w[w > 1e-8 * scale]
    return w[:count]
