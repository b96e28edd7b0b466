"""Random coupling: Ornstein-Uhlenbeck paths and mode-coupling plans.

The scalar process ``V(s)`` lives in process units ``s = y / epsilon``.
Each realization owns a seed stream derived from
``SeedSequence(master_seed, spawn_key=(index,))``, so a realization is
bit-identical whether it is sampled alone or inside a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .spectral import ProfileKind
from .waveguide import ModeKind, ModeSystem

__all__ = [
    "OuParams",
    "OuStream",
    "DisorderPath",
    "ScaleParams",
    "CouplingStrengths",
    "CouplingPlan",
    "PlanError",
    "realization_seed",
    "sample_ou",
    "build_plan",
    "potential_at",
]

INCOMMENSURATE_TOL = 1e-6


class PlanError(ValueError):
    """The requested coupling plan is inconsistent with the mode system."""


@dataclass(frozen=True)
class OuParams:
    relaxation: float = 1.0
    stddev: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.relaxation > 0:
            raise ValueError("relaxation must be positive")
        if self.stddev < 0:
            raise ValueError("stddev must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def r_hat0(self) -> float:
        """One-sided correlation integral ``int_0^inf E[V(0) V(s)] ds``."""
        return self.stddev**2 / self.relaxation

    def autocovariance(self, lag):
        return self.stddev**2 * np.exp(-self.relaxation * np.abs(lag))


def realization_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Seed stream of realization ``index``; stable across versions and batch layouts."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))


class OuStream:
    """Incremental exact OU sampler for one realization.

    ``next(n)`` returns the next ``n`` cell values; successive calls
    concatenate to the same path regardless of how the requests are split.
    """

    def __init__(self, params: OuParams, step: float, index: int = 0):
        if not step > 0:
            raise ValueError("step must be positive")
        if step >= 0.1 / params.relaxation:
            raise ValueError(
                f"step {step:g} does not resolve the correlation length 1/{params.relaxation:g}"
            )
        self.params = params
        self.step = float(step)
        self._rng = np.random.default_rng(realization_seed(params.seed, index))
        self._a = math.exp(-params.relaxation * step)
        self._b = params.stddev * math.sqrt(-math.expm1(-2.0 * params.relaxation * step))
        self._last: float | None = None

    def next(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.empty(0)
        xi = self._rng.standard_normal(n)
        if self._last is None:
            first = self.params.stddev * xi[0]
            rest = lfilter([self._b], [1.0, -self._a], xi[1:], zi=[self._a * first])[0]
            out = np.concatenate(([first], rest))
        else:
            out = lfilter([self._b], [1.0, -self._a], xi, zi=[self._a * self._last])[0]
        self._last = float(out[-1])
        return out


@dataclass(frozen=True)
class DisorderPath:
    """Piecewise-constant samples: ``values[j]`` holds on ``[j*step, (j+1)*step)``."""

    step: float
    values: np.ndarray = field(repr=False)
    params: OuParams
    index: int = 0

    @property
    def length(self) -> float:
        return self.step * len(self.values)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s > self.length):
            raise ValueError("argument outside the sampled range")
        j = np.minimum((s / self.step).astype(int), len(self.values) - 1)
        return self.values[j]

    def to_csv_rows(self):
        for j, v in enumerate(self.values):
            yield (j * self.step, v)


def sample_ou(params: OuParams, length: float, step: float, index: int = 0) -> DisorderPath:
    """Exact OU discretization started from the stationary law."""
    n = max(1, int(math.ceil(length / step - 1e-9)))
    values = OuStream(params, step, index).next(n)
    values.setflags(write=False)
    return DisorderPath(step=float(step), values=values, params=params, index=int(index))


@dataclass(frozen=True)
class ScaleParams:
    epsilon: float
    macroscopic_length: float

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not self.macroscopic_length >= 0:
            raise ValueError("macroscopic_length must be non-negative")

    @property
    def physical_length(self) -> float:
        return self.macroscopic_length / math.sqrt(self.epsilon)

    @property
    def amplitude(self) -> float:
        return 1.0 / math.sqrt(self.epsilon)

    @property
    def process_length(self) -> float:
        return self.macroscopic_length / self.epsilon


@dataclass(frozen=True)
class CouplingStrengths:
    """Squared couplings.

    In a 3x3 group ``(pair+, zero, pair-)`` the roles are
    ``gamma12``: pair+ <-> zero, ``gamma13``: pair+ <-> pair-,
    ``gamma23``: zero <-> pair-.  Pair-only 2x2 groups use ``gamma13``;
    zero/zero 2x2 groups use ``gamma_zero``; ``gamma_diag`` sits on the
    diagonal of every group (it only produces phases).
    """

    gamma12: float = 1.0
    gamma13: float = 1.0
    gamma23: float = 1.0
    gamma_zero: float = 1.0
    gamma_diag: float = 0.0

    def __post_init__(self):
        for name in ("gamma12", "gamma13", "gamma23", "gamma_zero", "gamma_diag"):
            if getattr(self, name) < 0:
                raise PlanError(f"{name} must be non-negative")


@dataclass(frozen=True)
class CouplingPlan:
    """Coupling coefficients ``W`` over the propagating modes of a system.

    ``w`` is real symmetric; ``gamma = w**2``.  Modes in different groups
    never couple, so the transfer matrix is block diagonal over ``groups``.
    """

    gamma: np.ndarray
    w: np.ndarray
    groups: tuple[tuple[int, ...], ...]
    trs_constrained: bool
    zetas: np.ndarray
    eps_diag: np.ndarray

    @property
    def size(self) -> int:
        return len(self.zetas)

    def to_json(self) -> dict:
        return {
            "groups": [list(g) for g in self.groups],
            "gamma": self.gamma.tolist(),
            "w": self.w.tolist(),
            "trs_constrained": self.trs_constrained,
            "zeta": self.zetas.tolist(),
            "eps_diag": self.eps_diag.tolist(),
        }


def _check_incommensurate(groups, zetas):
    for g in groups:
        diffs = sorted(abs(zetas[m] - zetas[n]) for i, m in enumerate(g) for n in g[i + 1:])
        for a, b in zip(diffs, diffs[1:]):
            if b - a < INCOMMENSURATE_TOL:
                raise PlanError(
                    f"group {g} has commensurate phase differences ({a:.8g}, {b:.8g})"
                )


def _pair_table(system: ModeSystem, blocks: Sequence[int]):
    """Available (pair+, pair-) index tuples per block, lowest k first."""
    table = {}
    for b in blocks:
        pairs = []
        for m in system.blocks[b].propagating:
            if m.kind is ModeKind.PAIR_PLUS:
                pairs.append((system.mode_index(b, ModeKind.PAIR_PLUS, m.k_index),
                              system.mode_index(b, ModeKind.PAIR_MINUS, m.k_index), m.k_index))
        table[b] = sorted(pairs, key=lambda t: t[2])
    return table


def _zero(system: ModeSystem, b: int):
    try:
        return system.mode_index(b, ModeKind.ZERO, 0)
    except KeyError:
        return None


def _take_pair(table, own: int):
    if table.get(own):
        return table[own].pop(0)
    for b in sorted(table):
        if table[b]:
            return table[b].pop(0)
    return None


def build_plan(system: ModeSystem, strengths: CouplingStrengths | None = None,
               trs: bool | None = None) -> CouplingPlan:
    strengths = strengths or CouplingStrengths()
    if trs is None:
        trs = system.config.trs
    if trs and not system.config.trs:
        raise PlanError("TRS-constrained plan requested on a non-TRS system")
    n = system.total_propagating
    w = np.zeros((n, n))
    groups: list[tuple[int, ...]] = []
    s12, s13, s23 = (math.sqrt(strengths.gamma12), math.sqrt(strengths.gamma13),
                     math.sqrt(strengths.gamma23))
    s0 = math.sqrt(strengths.gamma_zero)

    def triple(p, z, q, sign=1.0):
        w[p, z] = w[z, p] = sign * s12
        w[p, q] = w[q, p] = sign * s13
        w[z, q] = w[q, z] = sign * s23
        groups.append((p, z, q))

    def pair(p, q, value):
        w[p, q] = w[q, p] = value
        groups.append((p, q))

    blocks = [bm.block for bm in system.blocks]
    if not trs:
        plus = [b.block_id for b in blocks if b.kind is ProfileKind.TAU and b.sign > 0]
        minus = [b.block_id for b in blocks if b.kind is ProfileKind.TAU and b.sign < 0]
        table = _pair_table(system, [b.block_id for b in blocks])
        for bp, bm in zip(plus, minus):
            pair(_zero(system, bp), _zero(system, bm), s0)
        surplus = plus[len(minus):] if len(plus) > len(minus) else minus[len(plus):]
        for b in surplus:
            z = _zero(system, b)
            taken = _take_pair(table, b)
            if taken is None:
                groups.append((z,))
            else:
                triple(taken[0], z, taken[1])
        for b in sorted(table):
            for p, q, _ in table[b]:
                pair(p, q, s13)
    else:
        half = len(blocks) // 2
        first = [b.block_id for b in blocks[:half]]
        partner = system.partner
        table = _pair_table(system, first)
        taus = [b for b in first if blocks[b].kind is ProfileKind.TAU]
        for a, b in zip(taus[0::2], taus[1::2]):
            za, zb = _zero(system, a), _zero(system, b)
            # W_C antisymmetric: the two cross couplings carry opposite signs.
            pair(za, partner[zb], s0)
            pair(zb, partner[za], -s0)
        if len(taus) % 2:
            last = taus[-1]
            z = _zero(system, last)
            taken = table[last].pop(0) if table[last] else None
            if taken is None:
                groups.append((z,))
                groups.append((partner[z],))
            else:
                p, q, _ = taken
                triple(p, z, q)
                triple(partner[p], partner[z], partner[q])
        for b in first:
            for p, q, _ in table[b]:
                pair(p, q, s13)
                pair(partner[p], partner[q], s13)
    covered = sorted(i for g in groups for i in g)
    if covered != list(range(n)):
        raise PlanError("plan groups do not partition the propagating modes")  # pragma: no cover
    if strengths.gamma_diag > 0:
        d = math.sqrt(strengths.gamma_diag)
        for g in groups:
            for i in g:
                w[i, i] = d
    zetas = system.zetas
    _check_incommensurate(groups, zetas)
    groups = tuple(tuple(int(i) for i in sorted(g)) for g in groups)
    w.setflags(write=False)
    gamma = w * w
    gamma.setflags(write=False)
    return CouplingPlan(gamma=gamma, w=w, groups=groups, trs_constrained=bool(trs),
                        zetas=zetas, eps_diag=np.asarray(system.eps_diag))


def potential_at(plan: CouplingPlan, path: DisorderPath, scale: ScaleParams, y: float) -> np.ndarray:
    """Hermitian coupling matrix at macroscopic position ``y``."""
    s = y / scale.epsilon
    if s < 0 or s > path.length:
        raise ValueError(f"y = {y:g} outside the sampled path")
    v = float(path(s)) * scale.amplitude
    dz = plan.zetas[:, None] - plan.zetas[None, :]
    return np.exp(-1j * dz * y / math.sqrt(scale.epsilon)) * plan.w * v
