"""Finite-volume Fokker-Planck solvers for the reduced diffusions.

All solvers evolve cell probabilities ``m_i`` under ``dm/dL = A m`` where
``A`` comes from Scharfetter-Gummel fluxes between neighbouring cells and
zero flux at both ends.  Columns of ``A`` sum to zero and its
off-diagonal entries are non-negative, so backward Euler conserves mass
and keeps ``m >= 0`` for any step (no CFL restriction).

The transmission and ``rho`` problems are solved in logarithmic variables,
``u = -ln(tau)`` and ``u = -ln(1 - rho)``, which turn the unreachable
endpoints ``tau = 0`` and ``rho = 1`` into ``u = +inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "CellGrid",
    "FPSolution",
    "fp_operator",
    "solve_fp",
    "evolve_rho",
    "evolve_d1",
    "evolve_transmission_2x2",
    "moment_inequality",
]


@dataclass(frozen=True)
class CellGrid:
    """Uniform cells on ``[lo, hi]``."""

    lo: float
    hi: float
    cells: int

    def __post_init__(self):
        if self.cells < 3 or not self.hi > self.lo:
            raise ValueError("grid needs hi > lo and at least 3 cells")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.cells

    @property
    def centers(self) -> np.ndarray:
        return self.lo + self.width * (np.arange(self.cells) + 0.5)

    @property
    def faces(self) -> np.ndarray:
        return self.lo + self.width * np.arange(1, self.cells)


def _bernoulli(x):
    """``x / (exp(x) - 1)``, stable for all ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    out[small] = 1.0 - 0.5 * x[small]
    xs = x[~small]
    out[~small] = xs / np.expm1(xs)
    return out


def fp_operator(grid: CellGrid, diffusion: Callable, velocity: Callable) -> sp.csr_matrix:
    """``A`` with ``dm/dL = A m`` for the flux ``J = v p - D dp/du``.

    ``diffusion`` and ``velocity`` are evaluated at interior faces; for a
    generator ``a f'' + b f'`` the flux has ``D = a`` and ``v = b - a'``.
    """
    h = grid.width
    xf = grid.faces
    D = np.clip(np.asarray(diffusion(xf), dtype=float), 0.0, None)
    v = np.asarray(velocity(xf), dtype=float)
    # J = c_left * m_i - c_right * m_{i+1} (in masses m = p h)
    c_left = np.where(v > 0, v, 0.0) / h
    c_right = np.where(v < 0, -v, 0.0) / h
    pos = D > 1e-14 * max(1.0, np.max(np.abs(v)) * h)
    pe = v[pos] * h / D[pos]
    c_left[pos] = D[pos] / h**2 * _bernoulli(-pe)
    c_right[pos] = D[pos] / h**2 * _bernoulli(pe)
    n = grid.cells
    main = np.zeros(n)
    main[:-1] -= c_left
    main[1:] -= c_right
    # m_i gains J_{i-1/2}, loses J_{i+1/2}
    return sp.diags([c_left, main, c_right], [-1, 0, 1], shape=(n, n), format="csr")


@dataclass(frozen=True)
class FPSolution:
    """Cell masses ``masses[c]`` at ``lengths[c]``; ``x`` maps cell centres to the physical variable."""

    grid: CellGrid
    lengths: np.ndarray
    masses: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    operator: sp.csr_matrix = field(repr=False)
    variable: str

    def expectation(self, f: Callable, checkpoint: int | None = None):
        vals = f(self.x)
        if checkpoint is None:
            return self.masses @ vals
        return float(self.masses[checkpoint] @ vals)

    def mass(self) -> np.ndarray:
        return self.masses.sum(axis=1)

    def density(self, checkpoint: int = -1) -> np.ndarray:
        """Density in the solver variable."""
        return self.masses[checkpoint] / self.grid.width

    def rows(self, checkpoint: int = -1):
        for u, x, m in zip(self.grid.centers, self.x, self.masses[checkpoint]):
            yield (u, x, m / self.grid.width)


def _mollified_delta(grid: CellGrid, at: float) -> np.ndarray:
    c = grid.centers
    w = np.exp(-0.5 * ((c - at) / (2.0 * grid.width)) ** 2)
    return w / w.sum()


def solve_fp(A: sp.spmatrix, m0: np.ndarray, lengths: Sequence[float], dL: float) -> np.ndarray:
    """Backward Euler from ``L = 0`` through the sorted checkpoints ``lengths``."""
    lengths = np.asarray(lengths, dtype=float)
    if np.any(np.diff(lengths) < 0) or np.any(lengths < 0):
        raise ValueError("checkpoints must be sorted and non-negative")
    if not dL > 0:
        raise ValueError("dL must be positive")
    n = A.shape[0]
    out = np.empty((len(lengths), n))
    m = np.array(m0, dtype=float)
    cur = 0.0
    lu_cache: dict[float, Callable] = {}

    def stepper(h):
        key = round(h, 15)
        if key not in lu_cache:
            lu_cache[key] = spla.factorized((sp.identity(n, format="csc") - h * A).tocsc())
        return lu_cache[key]

    for c, target in enumerate(lengths):
        span = target - cur
        if span > 0:
            k = max(1, int(np.ceil(span / dL - 1e-9)))
            solve = stepper(span / k)
            for _ in range(k):
                m = solve(m)
            np.clip(m, 0.0, None, out=m)
        cur = target
        out[c] = m
    return out


def _log_grid(gamma: float, L: float, drift: float, cells: int | None, u_max: float | None) -> CellGrid:
    if u_max is None:
        scale = max(gamma * L, 0.0)
        u_max = drift * scale + 8.0 * np.sqrt(2.0 * scale + 1e-12) + 10.0
    if cells is None:
        cells = int(max(400, np.ceil(u_max / 0.01)))
    return CellGrid(0.0, float(u_max), int(cells))


def evolve_transmission_2x2(gamma13: float, lengths: Sequence[float] | float, cells: int | None = None,
                            u_max: float | None = None, dL: float = 1e-3) -> FPSolution:
    """Law of ``tau = 1 - d1`` started at ``tau = 1``.

    In ``u = -ln tau`` the generator is ``gamma13 [(1 - e^-u) d^2 + d]``.
    """
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    g = float(gamma13)
    grid = _log_grid(g, float(lengths.max()), 1.0, cells, u_max)
    A = fp_operator(grid, lambda u: g * -np.expm1(-u), lambda u: g * -np.expm1(-u))
    masses = solve_fp(A, _mollified_delta(grid, 0.0), lengths, dL)
    return FPSolution(grid, lengths, masses, np.exp(-grid.centers), A, "tau")


def evolve_rho(gamma: float, lengths: Sequence[float] | float, cells: int | None = None,
               u_max: float | None = None, dL: float = 1e-3) -> FPSolution:
    """Law of ``rho = d1 + d2`` (``gamma13 = gamma23 = gamma``) started at ``rho = 0+``.

    In ``u = -ln(1 - rho)`` the generator is ``gamma [(1 - e^-u) d^2 + 2 d]``.
    """
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    g = float(gamma)
    grid = _log_grid(g, float(lengths.max()), 2.0, cells, u_max)
    # v = b - a' = gamma (2 - e^-u)
    A = fp_operator(grid, lambda u: g * -np.expm1(-u), lambda u: g * (2.0 - np.exp(-u)))
    masses = solve_fp(A, _mollified_delta(grid, 0.0), lengths, dL)
    return FPSolution(grid, lengths, masses, -np.expm1(-grid.centers), A, "rho")


def evolve_d1(gamma_total: float, lengths: Sequence[float] | float, cells: int = 400,
              initial: str | np.ndarray = "delta", at: float = 0.5, dL: float = 1e-3) -> FPSolution:
    """Law of ``d1`` under ``gamma_total d/dx [x (1 - x) d/dx]`` on ``(0, 1)``.

    The operator is in divergence form, so the flux is pure diffusion and
    the constant density is an exact discrete steady state.
    """
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    g = float(gamma_total)
    grid = CellGrid(0.0, 1.0, cells)
    A = fp_operator(grid, lambda x: g * x * (1 - x), lambda x: np.zeros_like(x))
    if isinstance(initial, str):
        if initial == "delta":
            m0 = _mollified_delta(grid, at)
        elif initial == "uniform":
            m0 = np.full(cells, 1.0 / cells)
        else:
            raise ValueError("initial must be 'delta', 'uniform' or an array of cell masses")
    else:
        m0 = np.asarray(initial, dtype=float)
        m0 = m0 / m0.sum()
    masses = solve_fp(A, m0, lengths, dL)
    return FPSolution(grid, lengths, masses, grid.centers, A, "d1")


def moment_inequality(sol: FPSolution, gamma: float) -> np.ndarray:
    """``dm0/dL + gamma m0`` at each checkpoint, ``m0 = E[1 - rho]``.

    The derivative uses the discrete generator itself, ``dm0/dL = f . (A m)``
    with ``f = e^-u``; non-positive values confirm the inequality.
    """
    if sol.variable != "rho":
        raise ValueError("moment inequality applies to the rho solution")
    f = np.exp(-sol.grid.centers)
    dm = (sol.operator @ sol.masses.T).T @ f
    m0 = sol.masses @ f
    return dm + gamma * m0
