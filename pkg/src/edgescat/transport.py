"""Transfer matrices of the coupled-mode equation.

In macroscopic units the amplitudes obey ``P' = -i Lambda V_eps(y) P``
with ``Lambda = diag(eps_l)`` the direction signature and

    V_eps(y)_mn = exp(-i (zeta_m - zeta_n) y / sqrt(eps)) W_mn V(y / eps) / sqrt(eps).

``X = -i Lambda V_eps h`` satisfies ``X^* Lambda + Lambda X = 0`` whenever
``V_eps`` is Hermitian, so ``expm(X)`` preserves the flux form exactly;
the midpoint Magnus scheme therefore conserves flux up to the Taylor
truncation and rounding of the exponential.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .disorder import CouplingPlan, DisorderPath, OuParams, OuStream, ScaleParams

__all__ = [
    "IntegrationError",
    "Method",
    "IntegratorConfig",
    "TransferMatrix",
    "EnsembleResult",
    "Trajectory",
    "default_step",
    "expm_batched",
    "flux_defect",
    "propagate",
    "propagate_ensemble",
    "evolve_amplitudes",
]


class IntegrationError(RuntimeError):
    """Flux conservation was lost beyond tolerance."""


class Method(str, enum.Enum):
    MAGNUS2 = "magnus2"
    RK4 = "rk4"


@dataclass(frozen=True)
class IntegratorConfig:
    """``step`` is in process units ``s = y / eps``; ``None`` picks the default."""

    step: float | None = None
    method: Method = Method.MAGNUS2
    flux_tol: float = 1e-8
    chunk: int = 2048

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")


@dataclass(frozen=True)
class TransferMatrix:
    matrix: np.ndarray
    eps_diag: np.ndarray
    slab_length: float
    meta: dict = field(default_factory=dict)

    @property
    def flux_defect(self) -> float:
        return flux_defect(self.matrix, self.eps_diag)


@dataclass(frozen=True)
class EnsembleResult:
    """Transfer matrices ``P[c, r]`` at checkpoint ``c`` for realization ``r``."""

    P: np.ndarray = field(repr=False)
    lengths: np.ndarray
    indices: np.ndarray
    eps_diag: np.ndarray
    step: float
    flux_defects: np.ndarray

    def transfer(self, checkpoint: int, r: int) -> TransferMatrix:
        return TransferMatrix(self.P[checkpoint, r], self.eps_diag, float(self.lengths[checkpoint]),
                              {"index": int(self.indices[r]), "step": self.step})


@dataclass(frozen=True)
class Trajectory:
    y: np.ndarray
    alpha: np.ndarray  # shape (len(y), n)
    eps_diag: np.ndarray

    @property
    def currents(self) -> np.ndarray:
        return (np.abs(self.alpha) ** 2) @ self.eps_diag

    def to_csv_rows(self):
        flux0 = self.currents[0]
        for y, a, c in zip(self.y, self.alpha, self.currents):
            yield (y, *(np.abs(a) ** 2), abs(c - flux0))


def flux_defect(P, eps_diag) -> float:
    """``|| P^* Lambda P - Lambda ||_2``."""
    P = np.asarray(P)
    lam = np.diag(np.asarray(eps_diag, dtype=float))
    return float(np.linalg.norm(P.conj().T @ lam @ P - lam, 2))


def _batched_flux_defect(P, eps_diag):
    lam = np.diag(np.asarray(eps_diag, dtype=float))
    D = np.conj(np.swapaxes(P, -1, -2)) @ lam @ P - lam
    return np.linalg.norm(D, ord=2, axis=(-2, -1))


def expm_batched(X: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack ``(..., n, n)`` by scaled Taylor series."""
    X = np.asarray(X)
    n = X.shape[-1]
    norm = float(np.max(np.sum(np.abs(X), axis=-1))) if X.size else 0.0
    s = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    Y = X / (2**s)
    a = norm / (2**s)
    order, term = 1, a
    while term > 1e-17 and order < 30:
        order += 1
        term *= a / order
    eye = np.eye(n, dtype=Y.dtype)
    E = eye + Y / order
    for k in range(order - 1, 0, -1):
        E = eye + (Y @ E) / k
    for _ in range(s):
        E = E @ E
    return E


def default_step(plan: CouplingPlan, relaxation: float, scale: ScaleParams) -> float:
    """Default process-unit step resolving phases and the correlation length."""
    eps = scale.epsilon
    coupled = (plan.w != 0) & ~np.eye(plan.size, dtype=bool)
    dz = np.abs(plan.zetas[:, None] - plan.zetas[None, :])[coupled]
    kmax = float(dz.max()) if dz.size else 0.0
    h = 0.05 * eps / relaxation
    if kmax > 0:
        h = min(h, 0.05 * math.sqrt(eps) / kmax)
    return h / eps


def _steps_for(lengths: Sequence[float], step: float, eps: float):
    """Adjust the step so the longest checkpoint is an integer number of steps."""
    lmax = max(lengths)
    if lmax == 0:
        return 0, step, np.zeros(len(lengths), dtype=int)
    n_total = max(1, int(math.ceil(lmax / (eps * step) - 1e-9)))
    step = lmax / (eps * n_total)
    marks = np.array([int(round(l / (eps * step))) for l in lengths])
    return n_total, step, marks


def _generator(plan: CouplingPlan, scale: ScaleParams, h: float):
    """``G(y)`` with ``X = G(y) * V`` for the macroscopic step ``h``."""
    lam = plan.eps_diag.astype(float)
    dz = plan.zetas[:, None] - plan.zetas[None, :]
    base = -1j * lam[:, None] * plan.w * (h / math.sqrt(scale.epsilon))
    rate = dz / math.sqrt(scale.epsilon)

    def G(y: float) -> np.ndarray:
        return base * np.exp(-1j * rate * y)

    return G


def _integrate(plan: CouplingPlan, scale: ScaleParams, supply: Callable[[int], np.ndarray],
               state: np.ndarray, n_steps: int, step: float, method: Method, chunk: int,
               marks: Sequence[int], y_start: float = 0.0) -> list[np.ndarray]:
    """Advance ``state`` (B, n, m) from ``y_start``; return copies at each step count in ``marks``."""
    h = step * scale.epsilon
    G = _generator(plan, scale, h)
    want = sorted(set(int(m) for m in marks))
    saved = {}
    if 0 in want:
        saved[0] = state.copy()
    done = 0
    while done < n_steps:
        take = min(chunk, n_steps - done)
        V = supply(take)  # (B, take)
        for j in range(take):
            y0 = y_start + (done + j) * h
            v = V[:, j][:, None, None]
            if method is Method.MAGNUS2:
                state = expm_batched(G(y0 + 0.5 * h)[None] * v) @ state
            else:
                F0, F1, F2 = G(y0)[None] * v, G(y0 + 0.5 * h)[None] * v, G(y0 + h)[None] * v
                k1 = F0 @ state
                k2 = F1 @ (state + 0.5 * k1)
                k3 = F1 @ (state + 0.5 * k2)
                k4 = F2 @ (state + k3)
                state = state + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            if done + j + 1 in want:
                saved[done + j + 1] = state.copy()
        done += take
    return [saved[int(m)] for m in marks]


def propagate(plan: CouplingPlan, path: DisorderPath, scale: ScaleParams,
              config: IntegratorConfig | None = None, start: float = 0.0) -> TransferMatrix:
    """Transfer matrix from ``start`` to ``start + L`` for one pre-sampled path.

    The integrator step is the path step (the path is piecewise constant on it).
    """
    config = config or IntegratorConfig()
    L = scale.macroscopic_length
    h = scale.epsilon * path.step
    n_steps = int(round(L / h))
    first = int(round(start / h))
    if abs(n_steps * h - L) > 1e-9 * max(1.0, L) or abs(first * h - start) > 1e-9 * max(1.0, start):
        raise ValueError("slab ends are not on the path step grid")
    if first + n_steps > len(path.values):
        raise ValueError("path is shorter than the slab")
    pos = [first]

    def supply(k):
        out = path.values[pos[0]:pos[0] + k][None, :]
        pos[0] += k
        return out

    n = plan.size
    P0 = np.eye(n, dtype=complex)[None]
    P = _integrate(plan, scale, supply, P0, n_steps, path.step, config.method, config.chunk,
                   [n_steps], first * h)[0][0]
    defect = flux_defect(P, plan.eps_diag)
    if defect > config.flux_tol * max(1.0, L):
        raise IntegrationError(
            f"flux defect {defect:.3g} exceeds {config.flux_tol:g} per unit length; reduce the step"
        )
    return TransferMatrix(P, plan.eps_diag, L, {"index": path.index, "seed": path.params.seed, "start": start,
                                                "epsilon": scale.epsilon, "step": path.step,
                                                "method": config.method.value})


def propagate_ensemble(plan: CouplingPlan, ou: OuParams, epsilon: float, lengths: Sequence[float],
                       indices: Sequence[int], config: IntegratorConfig | None = None,
                       threads: int = 1) -> EnsembleResult:
    """Transfer matrices for many realizations at several slab lengths.

    Realization ``r`` uses the seed stream ``(ou.seed, indices[r])``.
    Work is split into fixed chunks of realizations, so results do not
    depend on ``threads``.
    """
    config = config or IntegratorConfig()
    scale = ScaleParams(epsilon, max(lengths))
    base = config.step if config.step is not None else default_step(plan, ou.relaxation, scale)
    n_total, step, marks = _steps_for(lengths, base, epsilon)
    indices = np.asarray(indices, dtype=np.int64)
    n = plan.size

    def run(idx):
        streams = [OuStream(ou, step, int(i)) for i in idx]

        def supply(k):
            return np.stack([s.next(k) for s in streams])

        P0 = np.broadcast_to(np.eye(n, dtype=complex), (len(idx), n, n)).copy()
        return _integrate(plan, scale, supply, P0, n_total, step, config.method, config.chunk, marks)

    batch = 64
    parts = [indices[i:i + batch] for i in range(0, len(indices), batch)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, parts))
    else:
        results = [run(p) for p in parts]
    P = np.stack([np.concatenate([r[c] for r in results]) for c in range(len(marks))])
    flux = _batched_flux_defect(P, plan.eps_diag)
    return EnsembleResult(P=P, lengths=marks * step * epsilon, indices=indices,
                          eps_diag=np.asarray(plan.eps_diag), step=step, flux_defects=flux)


def evolve_amplitudes(plan: CouplingPlan, path: DisorderPath, scale: ScaleParams, alpha0,
                      config: IntegratorConfig | None = None, record_every: int = 1) -> Trajectory:
    """Amplitude trajectory ``alpha(y) = P(y) alpha(0)`` sampled every ``record_every`` steps."""
    config = config or IntegratorConfig()
    alpha0 = np.asarray(alpha0, dtype=complex)
    if alpha0.shape != (plan.size,) or not np.all(np.isfinite(alpha0)):
        raise ValueError("alpha0 must be a finite vector of the plan dimension")
    L = scale.macroscopic_length
    n_steps = int(round(L / (scale.epsilon * path.step)))
    if n_steps > len(path.values):
        raise ValueError("path is shorter than the slab")
    marks = list(range(0, n_steps + 1, record_every))
    if marks[-1] != n_steps:
        marks.append(n_steps)
    pos = [0]

    def supply(k):
        out = path.values[pos[0]:pos[0] + k][None, :]
        pos[0] += k
        return out

    states = _integrate(plan, scale, supply, alpha0[None, :, None], n_steps, path.step,
                        config.method, config.chunk, marks)
    alpha = np.array([s[0, :, 0] for s in states])
    traj = Trajectory(np.array(marks) * path.step * scale.epsilon, alpha, np.asarray(plan.eps_diag))
    drift = np.max(np.abs(traj.currents - traj.currents[0]))
    if drift > config.flux_tol * max(1.0, L) * max(1.0, np.vdot(alpha0, alpha0).real):
        raise IntegrationError(f"current drifted by {drift:.3g} along the trajectory")
    return traj
