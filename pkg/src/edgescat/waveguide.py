"""Fixed-energy mode catalogue for block edge Hamiltonians.

A block is ``s * h`` with ``h = h_tau`` or ``h_o`` and ``s = +1`` or ``-1``;
in a time-reversal symmetric configuration the second half of the blocks
are the conjugates ``conj(h)`` of the first half.  Every propagating mode
carries a transverse two-spinor (upper component on grid nodes, lower on
midpoints), a longitudinal wavenumber ``zeta`` and a direction sign.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .spectral import Grid, ProfileKind, SpectralBasis

__all__ = [
    "ThresholdError",
    "ModeKind",
    "BlockConfig",
    "Block",
    "Spinor",
    "PropagatingMode",
    "EvanescentMode",
    "BlockModes",
    "ModeSystem",
    "classify_modes",
    "assemble_system",
    "DispersionTable",
    "dispersion_table",
]

RESONANCE_GUARD = 1e-8


class ThresholdError(ValueError):
    """Energy sits on (or too close to) a propagation threshold."""


class ModeKind(str, enum.Enum):
    ZERO = "zero"
    PAIR_PLUS = "pair_plus"
    PAIR_MINUS = "pair_minus"


@dataclass(frozen=True)
class BlockConfig:
    m_tau_plus: int = 1
    n_tau_minus: int = 0
    m_o_plus: int = 0
    n_o_minus: int = 0
    trs: bool = False

    def __post_init__(self):
        counts = (self.m_tau_plus, self.n_tau_minus, self.m_o_plus, self.n_o_minus)
        if any(int(c) != c or c < 0 for c in counts):
            raise ValueError("block counts must be non-negative integers")
        if self.trs and (self.m_tau_plus != self.n_tau_minus or self.m_o_plus != self.n_o_minus):
            raise ValueError("time-reversal symmetric blocks need M_tau = N_tau and M_o = N_o")
        if self.spinor_dimension == 0:
            raise ValueError("configuration has no blocks")

    @property
    def spinor_dimension(self) -> int:
        return 2 * (self.m_tau_plus + self.n_tau_minus + self.m_o_plus + self.n_o_minus)

    @property
    def index(self) -> int:
        return self.m_tau_plus - self.n_tau_minus

    @property
    def index2(self) -> int:
        return self.m_tau_plus % 2

    def blocks(self) -> list["Block"]:
        """Blocks in direct-sum order.

        Without TRS: ``h_tau^M + (-h_tau)^N + h_o^Mo + (-h_o)^No``.
        With TRS: ``h_tau^M + h_o^Mo`` followed by their conjugates in the
        same order, so block ``i`` and ``i + half`` are time-reverses.
        """
        out: list[Block] = []
        if not self.trs:
            layout = [
                (ProfileKind.TAU, +1, self.m_tau_plus),
                (ProfileKind.TAU, -1, self.n_tau_minus),
                (ProfileKind.O, +1, self.m_o_plus),
                (ProfileKind.O, -1, self.n_o_minus),
            ]
            for kind, sign, count in layout:
                for _ in range(count):
                    out.append(Block(len(out), kind, sign, conjugate=False, mirror=None))
            return out
        half = self.m_tau_plus + self.m_o_plus
        first = [ProfileKind.TAU] * self.m_tau_plus + [ProfileKind.O] * self.m_o_plus
        for i, kind in enumerate(first):
            out.append(Block(i, kind, +1, conjugate=False, mirror=i + half))
        for i, kind in enumerate(first):
            out.append(Block(i + half, kind, -1, conjugate=True, mirror=i))
        return out


@dataclass(frozen=True)
class Block:
    block_id: int
    kind: ProfileKind
    sign: int
    conjugate: bool
    mirror: int | None

    @property
    def label(self) -> str:
        base = "h_tau" if self.kind is ProfileKind.TAU else "h_o"
        if self.conjugate:
            return f"conj({base})"
        return base if self.sign > 0 else f"-{base}"


@dataclass(frozen=True)
class Spinor:
    """Transverse two-spinor: ``upper`` on grid nodes, ``lower`` on midpoints."""

    upper: np.ndarray
    lower: np.ndarray

    def inner(self, other: "Spinor", grid: Grid) -> complex:
        return grid.inner(self.upper, other.upper) + grid.inner(self.lower, other.lower)

    def current(self, grid: Grid, sign: int = 1) -> float:
        """``(phi, s sigma_3 phi)``; ``s`` is the block's current orientation."""
        return float(sign * (grid.inner(self.upper, self.upper) - grid.inner(self.lower, self.lower)).real)

    def sigma3(self) -> "Spinor":
        return Spinor(self.upper, -self.lower)

    def __neg__(self) -> "Spinor":
        return Spinor(-self.upper, -self.lower)


@dataclass(frozen=True)
class PropagatingMode:
    block_id: int
    kind: ModeKind
    k_index: int
    zeta: float
    direction: int
    current: float
    c_coef: float
    s_coef: float
    transverse: Spinor = field(repr=False)

    @property
    def is_zero(self) -> bool:
        return self.kind is ModeKind.ZERO


@dataclass(frozen=True)
class EvanescentMode:
    block_id: int
    k_index: int
    decay_rate: float
    theta: complex
    transverse: Spinor = field(repr=False)


@dataclass(frozen=True)
class BlockModes:
    block: Block
    propagating: tuple[PropagatingMode, ...]
    evanescent: tuple[EvanescentMode, ...]


def _check_energy(basis: SpectralBasis, E: float) -> None:
    if not np.isfinite(E) or E <= 0:
        raise ThresholdError("energy must be positive (E = 0 leaves the zero mode without current)")
    E2 = E * E
    eps = basis.eigenvalues
    for k, e in enumerate(eps):
        if basis.has_zero_mode and k == 0:
            continue
        if abs(E2 - e) <= RESONANCE_GUARD * max(1.0, e):
            raise ThresholdError(f"E^2 = {E2:g} is resonant with eps_{k} = {e:g}")
    if eps[-1] <= E2:
        raise ThresholdError(
            f"basis resolves eps up to {eps[-1]:g} <= E^2 = {E2:g}; request more transverse modes"
        )


def _base_modes(basis: SpectralBasis, E: float, block_id: int):
    """Modes of ``h`` (sign +1, not conjugated) at energy ``E``."""
    prop: list[PropagatingMode] = []
    evan: list[EvanescentMode] = []
    E2 = E * E
    zero_len = basis.grid.points + 1
    for k, (e, eta) in enumerate(zip(basis.eigenvalues, basis.eta)):
        nu = basis.nu[k]
        if basis.has_zero_mode and k == 0:
            prop.append(
                PropagatingMode(block_id, ModeKind.ZERO, 0, E, +1, 1.0, 1.0, 0.0,
                                Spinor(nu.copy(), np.zeros(zero_len)))
            )
            continue
        mu = basis.mu[k]
        if e < E2:
            zeta = float(np.sqrt(E2 - e))
            norm = np.sqrt(2.0 * E * (E + zeta))
            c, s = (E + zeta) / norm, eta / norm
            j = zeta / E
            r = 1.0 / np.sqrt(j)
            prop.append(PropagatingMode(block_id, ModeKind.PAIR_PLUS, k, zeta, +1, j, c, s,
                                        Spinor(r * c * nu, r * s * mu)))
            prop.append(PropagatingMode(block_id, ModeKind.PAIR_MINUS, k, -zeta, -1, j, c, s,
                                        Spinor(r * s * nu, r * c * mu)))
        else:
            decay = float(np.sqrt(e - E2))
            theta = complex(E, decay) / eta
            evan.append(EvanescentMode(block_id, k, decay, theta,
                                       Spinor(theta * nu / np.sqrt(2.0), mu / np.sqrt(2.0) + 0j)))
    return prop, evan


def classify_modes(basis: SpectralBasis, E: float, block: Block | None = None):
    """Propagating and evanescent modes of one block at energy ``E``.

    For a reversed block ``-h`` the spinors are ``sigma_3 phi`` and for a
    conjugated block ``conj(h)`` they are the time-reversed ``-phi``; in
    both cases ``zeta`` and the direction flip and the current operator is
    ``-sigma_3``.
    """
    _check_energy(basis, E)
    if block is None:
        block = Block(0, basis.profile.kind, +1, False, None)
    if block.kind is not basis.profile.kind:
        raise ValueError("block kind does not match the basis profile")
    prop, evan = _base_modes(basis, E, block.block_id)
    if block.sign > 0:
        return tuple(prop), tuple(evan)
    flip = (lambda sp: -sp) if block.conjugate else (lambda sp: sp.sigma3())
    out = []
    for m in prop:
        if m.kind is ModeKind.ZERO:
            kind = ModeKind.ZERO
        else:
            kind = ModeKind.PAIR_MINUS if m.kind is ModeKind.PAIR_PLUS else ModeKind.PAIR_PLUS
        out.append(PropagatingMode(m.block_id, kind, m.k_index, -m.zeta, -m.direction, m.current,
                                   m.c_coef, m.s_coef, flip(m.transverse)))
    ev = [EvanescentMode(e.block_id, e.k_index, e.decay_rate, e.theta, flip(e.transverse)) for e in evan]
    return tuple(out), tuple(ev)


@dataclass(frozen=True)
class ModeSystem:
    """All propagating modes of a direct sum at fixed energy.

    ``modes`` is in canonical order: forward non-zero modes by descending
    ``zeta``, forward zero modes, backward zero modes, then backward
    non-zero modes by ascending ``zeta`` (ties by block, then ``k``).  The
    zero modes therefore sit in the centre, and the ``n_plus`` forward
    modes come first.
    """

    energy: float
    config: BlockConfig
    blocks: tuple[BlockModes, ...]
    modes: tuple[PropagatingMode, ...]
    eps_diag: np.ndarray
    index: int
    index2: int
    grids: Mapping[ProfileKind, Grid] = field(repr=False)
    partner: np.ndarray | None = None

    @property
    def total_propagating(self) -> int:
        return len(self.modes)

    @property
    def n_plus(self) -> int:
        return int(np.sum(self.eps_diag > 0))

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.eps_diag < 0))

    @property
    def zetas(self) -> np.ndarray:
        return np.array([m.zeta for m in self.modes])

    def block_count(self, block_id: int) -> int:
        return sum(1 for m in self.modes if m.block_id == block_id)

    def block_of(self, block_id: int) -> Block:
        return self.blocks[block_id].block

    def mode_index(self, block_id: int, kind: ModeKind, k_index: int) -> int:
        for i, m in enumerate(self.modes):
            if m.block_id == block_id and m.kind is kind and m.k_index == k_index:
                return i
        raise KeyError((block_id, kind, k_index))


def _canonical_key(m: PropagatingMode):
    if m.direction > 0:
        group = 1 if m.is_zero else 0
        return (group, -m.zeta if group == 0 else 0.0, m.block_id, m.k_index)
    group = 2 if m.is_zero else 3
    return (group, m.zeta if group == 3 else 0.0, m.block_id, m.k_index)


def assemble_system(config: BlockConfig, bases: Mapping[ProfileKind, SpectralBasis] | SpectralBasis,
                    E: float) -> ModeSystem:
    if isinstance(bases, SpectralBasis):
        bases = {bases.profile.kind: bases}
    bases = {ProfileKind(k): v for k, v in bases.items()}
    block_modes = []
    for block in config.blocks():
        if block.kind not in bases:
            raise ValueError(f"no spectral basis for {block.kind.value} blocks")
        prop, evan = classify_modes(bases[block.kind], E, block)
        block_modes.append(BlockModes(block, prop, evan))
    flat = [m for bm in block_modes for m in bm.propagating]
    modes = tuple(sorted(flat, key=_canonical_key))
    eps = np.array([m.direction for m in modes], dtype=float)
    eps.setflags(write=False)
    partner = None
    if config.trs:
        lookup = {(m.block_id, m.kind, m.k_index): i for i, m in enumerate(modes)}
        flipped = {ModeKind.ZERO: ModeKind.ZERO, ModeKind.PAIR_PLUS: ModeKind.PAIR_MINUS,
                   ModeKind.PAIR_MINUS: ModeKind.PAIR_PLUS}
        partner = np.empty(len(modes), dtype=int)
        for i, m in enumerate(modes):
            mirror = block_modes[m.block_id].block.mirror
            partner[i] = lookup[(mirror, flipped[m.kind], m.k_index)]
        partner.setflags(write=False)
    grids = {k: b.grid for k, b in bases.items()}
    return ModeSystem(
        energy=float(E),
        config=config,
        blocks=tuple(block_modes),
        modes=modes,
        eps_diag=eps,
        index=config.index,
        index2=config.index2,
        grids=grids,
        partner=partner,
    )


@dataclass(frozen=True)
class DispersionTable:
    zeta: np.ndarray
    levels: tuple[int, ...]
    values: np.ndarray  # shape (len(zeta), len(levels))

    def header(self) -> list[str]:
        return ["zeta"] + [f"E_{l}" for l in self.levels]

    def rows(self):
        for i, z in enumerate(self.zeta):
            yield [z, *self.values[i]]


def dispersion_table(basis: SpectralBasis, zeta: Sequence[float], levels: Sequence[int]) -> DispersionTable:
    """Branches ``E_l(zeta)``.

    For ``h_tau``: ``E_0 = zeta`` and ``E_{+-k} = +-sqrt(eps_k + zeta^2)``.
    For ``h_o`` there is no linear branch; ``l = +-k`` uses ``eps_{k-1}``.
    """
    zeta = np.asarray(zeta, dtype=float)
    levels = tuple(int(l) for l in levels)
    vals = np.empty((zeta.size, len(levels)))
    for j, l in enumerate(levels):
        if l == 0:
            if not basis.has_zero_mode:
                raise ValueError("h_o blocks have no l = 0 branch")
            vals[:, j] = zeta
            continue
        k = abs(l) if basis.has_zero_mode else abs(l) - 1
        if k >= basis.count:
            raise ValueError(f"basis resolves {basis.count} levels; |l| = {abs(l)} requested")
        vals[:, j] = np.sign(l) * np.sqrt(basis.eigenvalues[k] + zeta**2)
    return DispersionTable(zeta=zeta, levels=levels, values=vals)
