"""Scattering matrices from transfer matrices, and structural checks.

Convention: the ``n_plus`` forward modes enter at ``y = 0`` and the
``n_minus`` backward modes enter at ``y = L``.  With ``P`` partitioned as
``[[P11, P12], [P21, P22]]`` (forward rows/columns first),

    T+ = P11 - P12 P22^-1 P21     R+ = -P22^-1 P21
    T- = P22^-1                   R- = P12 P22^-1

and ``S = [[R+, T-], [T+, R-]]`` maps ``(alpha_+(0), alpha_-(L))`` to
``(alpha_-(0), alpha_+(L))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Grid
from .transport import TransferMatrix
from .waveguide import ModeSystem

__all__ = [
    "OpaqueSlabError",
    "ScatteringMatrix",
    "ConductanceReport",
    "TrsReport",
    "scatter",
    "scatter_batch",
    "conductance",
    "protected_inputs",
    "trs_defects",
    "kramers_check",
    "theta",
    "mode_spinor",
    "reflection_powers",
]

CONDITION_LIMIT = 1e12
NULL_RTOL = 1e-8


class OpaqueSlabError(ArithmeticError):
    """The block to invert is too ill-conditioned."""


@dataclass(frozen=True)
class ScatteringMatrix:
    r_plus: np.ndarray
    t_plus: np.ndarray
    r_minus: np.ndarray
    t_minus: np.ndarray
    partition: tuple[int, int]
    condition: float = 1.0

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.r_plus, self.t_minus], [self.t_plus, self.r_minus]])

    @property
    def index(self) -> int:
        return self.partition[0] - self.partition[1]

    def unitarity_defect(self) -> float:
        S = self.matrix
        return float(np.linalg.norm(S.conj().T @ S - np.eye(S.shape[0]), 2))

    def block_defects(self) -> dict:
        R, T, Rm, Tm = self.r_plus, self.t_plus, self.r_minus, self.t_minus
        h = lambda A: A.conj().T
        n_p, n_m = self.partition
        def nrm(A):
            return float(np.linalg.norm(A, 2)) if A.size else 0.0
        return {
            "plus": nrm(h(R) @ R + h(T) @ T - np.eye(n_p)),
            "minus": nrm(h(Rm) @ Rm + h(Tm) @ Tm - np.eye(n_m)),
            "cross": nrm(h(R) @ Tm + h(T) @ Rm),
        }


def _split(P: np.ndarray, n_plus: int):
    return P[..., :n_plus, :n_plus], P[..., :n_plus, n_plus:], P[..., n_plus:, :n_plus], P[..., n_plus:, n_plus:]


def _partition(eps_diag) -> tuple[int, int]:
    eps = np.asarray(eps_diag)
    n_plus = int(np.sum(eps > 0))
    if not np.all(eps[:n_plus] > 0) or not np.all(eps[n_plus:] < 0):
        raise ValueError("modes must be ordered with forward directions first")
    return n_plus, len(eps) - n_plus


def scatter(P: TransferMatrix | np.ndarray, eps_diag=None) -> ScatteringMatrix:
    if isinstance(P, TransferMatrix):
        eps_diag = P.eps_diag if eps_diag is None else eps_diag
        P = P.matrix
    if eps_diag is None:
        raise ValueError("eps_diag is required for a bare matrix")
    n_plus, n_minus = _partition(eps_diag)
    P11, P12, P21, P22 = _split(np.asarray(P, dtype=complex), n_plus)
    if n_minus == 0:
        return ScatteringMatrix(np.zeros((0, n_plus), complex), P11.copy(), np.zeros((n_plus, 0), complex),
                                np.zeros((0, 0), complex), (n_plus, 0), 1.0)
    # cond(P) measures the cancellation in T+; cond(P22) the inversion itself
    cond = max(float(np.linalg.cond(P22)), float(np.linalg.cond(P)))
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise OpaqueSlabError(f"transfer matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:g}")
    inv = np.linalg.inv(P22)
    return ScatteringMatrix(
        r_plus=-inv @ P21,
        t_plus=P11 - P12 @ inv @ P21,
        r_minus=P12 @ inv,
        t_minus=inv,
        partition=(n_plus, n_minus),
        condition=cond,
    )


def scatter_batch(P: np.ndarray, eps_diag):
    """Vectorized blocks ``(R+, T+, R-, T-)`` for a stack of transfer matrices."""
    n_plus, n_minus = _partition(eps_diag)
    P11, P12, P21, P22 = _split(np.asarray(P, dtype=complex), n_plus)
    if n_minus == 0:
        B = P.shape[:-2]
        return (np.zeros(B + (0, n_plus), complex), P11, np.zeros(B + (n_plus, 0), complex),
                np.zeros(B + (0, 0), complex))
    inv = np.linalg.inv(P22)
    return -inv @ P21, P11 - P12 @ inv @ P21, P12 @ inv, inv


def reflection_powers(P: np.ndarray, eps_diag) -> np.ndarray:
    """``|R+|^2`` entrywise for a stack of transfer matrices."""
    R, _, _, _ = scatter_batch(P, eps_diag)
    return np.abs(R) ** 2


@dataclass(frozen=True)
class ConductanceReport:
    g_plus: float
    g_minus: float
    eigenvalues: np.ndarray
    index: int
    protected_dim: int

    @property
    def bound_ok(self) -> bool:
        return self.g_plus >= self.index - 1e-8


def protected_inputs(S: ScatteringMatrix, side: str = "plus") -> np.ndarray:
    """Orthonormal columns spanning ``ker R+`` (or ``ker R-``)."""
    R = S.r_plus if side == "plus" else S.r_minus
    n_in = R.shape[1]
    if R.size == 0 or not np.any(R):
        return np.eye(n_in, dtype=complex)
    _, s, vh = np.linalg.svd(R)
    rank = int(np.sum(s > NULL_RTOL * s[0]))
    return vh[rank:].conj().T


def conductance(S: ScatteringMatrix) -> ConductanceReport:
    T, Tm = S.t_plus, S.t_minus
    ev = np.sort(np.linalg.eigvalsh(T.conj().T @ T))[::-1]
    return ConductanceReport(
        g_plus=float(np.trace(T.conj().T @ T).real),
        g_minus=float(np.trace(Tm.conj().T @ Tm).real) if Tm.size else 0.0,
        eigenvalues=ev,
        index=S.index,
        protected_dim=protected_inputs(S).shape[1],
    )


@dataclass(frozen=True)
class TrsReport:
    skew_r_plus: float
    skew_r_minus: float
    transpose_t: float
    s_sigma3: float
    kernel_dim: int

    @property
    def max_defect(self) -> float:
        return max(self.skew_r_plus, self.skew_r_minus, self.transpose_t, self.s_sigma3)

    def as_dict(self) -> dict:
        return {"skew_r_plus": self.skew_r_plus, "skew_r_minus": self.skew_r_minus,
                "transpose_t": self.transpose_t, "s_sigma3": self.s_sigma3,
                "kernel_dim": self.kernel_dim}


def _kramers_frame(system: ModeSystem):
    """Forward order, partner (backward) order, and the signs ``theta f_i = D_i b_i``."""
    if not system.config.trs or system.partner is None:
        raise ValueError("TRS structure requested on a system without time-reversal symmetry")
    n_plus = system.n_plus
    half = len(system.blocks) // 2
    f = np.arange(n_plus)
    b = system.partner[f]
    D = np.array([1.0 if system.modes[i].block_id < half else -1.0 for i in f])
    return f, b, D


def trs_defects(S: ScatteringMatrix, system: ModeSystem) -> TrsReport:
    """Reciprocity defects in the Kramers frame.

    Backward inputs/outputs are re-indexed as the time-reverses of the
    forward modes, which turns time reversal into ``S^T = -sigma_3 S sigma_3``.
    """
    f, b, D = _kramers_frame(system)
    n_plus = len(f)
    pos_b = b - n_plus  # position inside the backward block
    Dm = np.diag(D)
    R = Dm @ S.r_plus[pos_b][:, f]
    Rm = S.r_minus[f][:, pos_b] @ Dm
    T = S.t_plus[f][:, f]
    Tm = Dm @ S.t_minus[np.ix_(pos_b, pos_b)] @ Dm
    St = np.block([[R, Tm], [T, Rm]])
    s3 = np.diag(np.r_[np.ones(n_plus), -np.ones(n_plus)])
    nrm = lambda A: float(np.linalg.norm(A, 2))
    return TrsReport(
        skew_r_plus=nrm(R + R.T),
        skew_r_minus=nrm(Rm + Rm.T),
        transpose_t=nrm(T.T - Tm),
        s_sigma3=nrm(St.T + s3 @ St @ s3),
        kernel_dim=protected_inputs(S).shape[1],
    )


def mode_spinor(system: ModeSystem, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Full direct-sum spinor of mode ``l``: upper ``(n_blocks, N)``, lower ``(n_blocks, N + 1)``."""
    m = system.modes[l]
    nb = len(system.blocks)
    kind = system.blocks[m.block_id].block.kind
    g = system.grids[kind]
    if any(system.grids[k].points != g.points for k in system.grids):
        raise ValueError("full spinors need a common grid for all block kinds")
    up = np.zeros((nb, g.points), complex)
    lo = np.zeros((nb, g.points + 1), complex)
    up[m.block_id] = m.transverse.upper
    lo[m.block_id] = m.transverse.lower
    return up, lo


def theta(system: ModeSystem, up: np.ndarray, lo: np.ndarray):
    """Fermionic time reversal ``(u, v) -> (conj(v), -conj(u))`` over the two block halves."""
    half = len(system.blocks) // 2
    u_up, v_up = up[:half], up[half:]
    u_lo, v_lo = lo[:half], lo[half:]
    return (np.concatenate([v_up.conj(), -u_up.conj()]), np.concatenate([v_lo.conj(), -u_lo.conj()]))


def _inner(grid: Grid, a, b) -> complex:
    return grid.spacing * (np.vdot(a[0], b[0]) + np.vdot(a[1], b[1]))


def kramers_check(system: ModeSystem, rng: np.random.Generator | None = None) -> dict:
    """Kramers overlaps and the algebraic properties of ``theta``."""
    if not system.config.trs:
        raise ValueError("Kramers check needs a TRS system")
    grid = next(iter(system.grids.values()))
    overlap = 0.0
    partner_err = 0.0
    for l in range(system.total_propagating):
        phi = mode_spinor(system, l)
        tphi = theta(system, *phi)
        overlap = max(overlap, abs(_inner(grid, phi, tphi)))
        # theta maps each mode onto its partner up to a sign.
        p = mode_spinor(system, int(system.partner[l]))
        c = _inner(grid, p, tphi) / _inner(grid, p, p)
        partner_err = max(partner_err, float(np.max(np.abs(tphi[0] - c * p[0]))), abs(abs(c) - 1.0))
    rng = rng or np.random.default_rng(0)
    shape_up = (len(system.blocks), grid.points)
    shape_lo = (len(system.blocks), grid.points + 1)
    rand = lambda: (rng.standard_normal(shape_up) + 1j * rng.standard_normal(shape_up),
                    rng.standard_normal(shape_lo) + 1j * rng.standard_normal(shape_lo))
    a, b = rand(), rand()
    ta, tb = theta(system, *a), theta(system, *b)
    tta = theta(system, *ta)
    scale = abs(_inner(grid, a, a))
    return {
        "max_overlap": float(overlap),
        "partner_error": float(partner_err),
        "theta_squared": float(max(np.max(np.abs(tta[0] + a[0])), np.max(np.abs(tta[1] + a[1])))),
        "antiunitary": float(abs(_inner(grid, ta, tb) - np.conj(_inner(grid, a, b))) / scale),
    }
