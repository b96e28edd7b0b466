"""Microscopic transport ensembles against their diffusion limits.

A coupling ``W_mn`` driven by the OU process produces the effective
diffusion strength ``gamma_eff = 2 R0 W_mn^2`` with
``R0 = int_0^inf E[V(0) V(s)] ds = stddev^2 / relaxation``.  At finite
``eps`` the fast phase ``kappa = zeta_m - zeta_n`` samples the OU
spectrum at frequency ``kappa sqrt(eps)``, which multiplies the strength
by ``a^2 / (a^2 + kappa^2 eps)`` (``a`` the relaxation rate).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..disorder import CouplingPlan, OuParams
from ..transport import IntegratorConfig, propagate_ensemble
from .fokker_planck import evolve_rho, evolve_transmission_2x2

__all__ = [
    "effective_gamma",
    "LocalizationPoint",
    "ReflectionPoint",
    "ComparisonReport",
    "group_transmission",
    "group_reflections",
    "linear_fit",
    "microscopic_vs_diffusion",
    "fp_localization_slope",
]


def effective_gamma(plan: CouplingPlan, m: int, n: int, ou: OuParams, epsilon: float | None = None) -> float:
    """Diffusion strength of the coupling ``(m, n)``; finite-``eps`` corrected when ``epsilon`` is given."""
    g = 2.0 * ou.r_hat0 * float(plan.gamma[m, n])
    if epsilon is not None:
        kappa = float(plan.zetas[m] - plan.zetas[n])
        a = ou.relaxation
        g *= a * a / (a * a + kappa * kappa * epsilon)
    return g


def linear_fit(x, y):
    """Least-squares slope, intercept and ``R^2``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), float(r2)


def _group(plan: CouplingPlan, size: int) -> tuple[int, ...]:
    for g in plan.groups:
        if len(g) == size and np.any(plan.w[np.ix_(g, g)] - np.diag(np.diag(plan.w[np.ix_(g, g)]))):
            return g
    raise ValueError(f"plan has no coupled group of size {size}")


def group_transmission(P: np.ndarray, group: Sequence[int]) -> np.ndarray:
    """``tau = |T|^2`` of a (forward, backward) 2x2 group for a stack of transfer matrices."""
    sub = P[..., group, :][..., :, group]
    return 1.0 / np.abs(sub[..., 1, 1]) ** 2


def group_reflections(P: np.ndarray, group: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """``(d1, d2)`` of a (pair+, zero, pair-) group: reflected powers into the backward mode."""
    sub = P[..., group, :][..., :, group]
    r = sub[..., 2, :2] / sub[..., 2, 2][..., None]
    p = np.abs(r) ** 2
    return p[..., 0], p[..., 1]


@dataclass(frozen=True)
class LocalizationPoint:
    epsilon: float
    slope: float
    slope_se: float
    r2: float
    predicted: float
    predicted_finite_eps: float
    rel_error: float


@dataclass(frozen=True)
class ReflectionPoint:
    epsilon: float
    length: float
    mean_rho: float
    se_rho: float
    fp_mean_rho: float
    z_score: float
    ks_distance: float


@dataclass(frozen=True)
class ComparisonReport:
    kind: str
    gamma_eff: float
    points: list = field(default_factory=list)
    n_realizations: int = 0
    seed: int = 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "gamma_eff": self.gamma_eff, "n_realizations": self.n_realizations,
                "seed": self.seed, "points": [asdict(p) for p in self.points]}


def _ks_against(samples: np.ndarray, grid_x: np.ndarray, masses: np.ndarray) -> float:
    order = np.argsort(grid_x)
    xs, cdf = grid_x[order], np.cumsum(masses[order])
    s = np.sort(samples)
    n = len(s)
    model = np.interp(s, xs, cdf, left=0.0, right=1.0)
    hi = np.arange(1, n + 1) / n - model
    lo = model - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))


def microscopic_vs_diffusion(plan: CouplingPlan, ou: OuParams, epsilons: Sequence[float],
                             lengths: Sequence[float], n: int, config: IntegratorConfig | None = None,
                             threads: int = 1) -> ComparisonReport:
    """Compare microscopic transfer-matrix ensembles with the diffusion limit.

    A plan with a coupled 3x3 group is compared through ``rho = d1 + d2``
    against the ``rho`` Fokker-Planck law at every length (this needs
    ``gamma13 = gamma23``).  Otherwise the first coupled 2x2 group is
    compared through the slope of ``E[ln tau]`` against ``-gamma_eff``.
    """
    lengths = sorted(float(l) for l in lengths)
    try:
        g3 = _group(plan, 3)
    except ValueError:
        g3 = None
    points = []
    if g3 is not None:
        p, z, q = g3
        g13, g23 = effective_gamma(plan, p, q, ou), effective_gamma(plan, z, q, ou)
        if not math.isclose(g13, g23, rel_tol=1e-12):
            raise ValueError("the rho reduction needs gamma13 = gamma23")
        fp = evolve_rho(g13, lengths)
        for eps in epsilons:
            res = propagate_ensemble(plan, ou, eps, lengths, range(n), config, threads)
            for c, L in enumerate(lengths):
                d1, d2 = group_reflections(res.P[c], g3)
                rho = d1 + d2
                mean, se = float(rho.mean()), float(rho.std(ddof=1) / math.sqrt(n))
                fp_mean = float(fp.expectation(lambda x: x, c))
                points.append(ReflectionPoint(eps, L, mean, se, fp_mean, (mean - fp_mean) / se if se > 0 else 0.0,
                                              _ks_against(rho, fp.x, fp.masses[c])))
        return ComparisonReport("3x3", g13, points, n, ou.seed)
    g2 = _group(plan, 2)
    f, b = g2
    gamma = effective_gamma(plan, f, b, ou)
    for eps in epsilons:
        res = propagate_ensemble(plan, ou, eps, lengths, range(n), config, threads)
        logs = np.log(group_transmission(res.P, g2))  # (n_lengths, n)
        means = logs.mean(axis=1)
        slope, _, r2 = linear_fit(res.lengths, means)
        # slope standard error from the per-realization slopes
        per = np.array([linear_fit(res.lengths, logs[:, r])[0] for r in range(n)])
        se = float(per.std(ddof=1) / math.sqrt(n))
        points.append(LocalizationPoint(eps, slope, se, r2, -gamma, -effective_gamma(plan, f, b, ou, eps),
                                        abs(slope + gamma) / gamma))
    return ComparisonReport("2x2", gamma, points, n, ou.seed)


def fp_localization_slope(gamma13: float, lengths: Sequence[float]) -> tuple[float, float]:
    """Slope and ``R^2`` of ``E[ln tau]`` from the transmission Fokker-Planck law."""
    sol = evolve_transmission_2x2(gamma13, lengths)
    slope, _, r2 = linear_fit(sol.lengths, sol.expectation(np.log))
    return slope, r2
