"""Euler-Maruyama ensembles for the reduced diffusions.

Samples are processed in fixed chunks, chunk ``c`` drawing from
``SeedSequence(seed, spawn_key=(c,))``, so results do not depend on how
chunks are scheduled across threads.

Steps that would leave the domain are retried on Brownian-bridge halves
(the same Brownian path, finer resolution) up to ``max_halvings`` times;
samples still outside after that are clamped and flagged.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .generator import Gammas

__all__ = ["SdeEnsemble", "sde_ensemble", "sde_transmission", "em_adaptive"]

CHUNK = 4096


@dataclass(frozen=True)
class SdeEnsemble:
    """``samples[c]`` holds the state of every sample at ``lengths[c]``."""

    lengths: np.ndarray
    samples: np.ndarray = field(repr=False)
    clamped: int
    seed: int
    dt: float


def em_adaptive(x: np.ndarray, dt: float, dW: np.ndarray, increment: Callable,
                inside: Callable, project: Callable, rng: np.random.Generator,
                max_halvings: int = 40, depth: int = 0):
    """One Euler-Maruyama step with bridge refinement; returns ``(x_new, n_clamped)``.

    ``increment(x, dt, dW)`` is the Euler-Maruyama increment ``b dt + sigma dW``.
    """
    prop = x + increment(x, dt, dW)
    ok = inside(prop)
    if np.all(ok):
        return prop, 0
    bad = ~ok
    if depth >= max_halvings:
        prop[bad] = project(prop[bad])
        return prop, int(bad.sum())
    xb, wb = x[bad], dW[bad]
    half = 0.5 * dt
    w1 = 0.5 * wb + np.sqrt(0.25 * dt) * rng.standard_normal(wb.shape)
    w2 = wb - w1
    mid, c1 = em_adaptive(xb, half, w1, increment, inside, project, rng, max_halvings, depth + 1)
    end, c2 = em_adaptive(mid, half, w2, increment, inside, project, rng, max_halvings, depth + 1)
    prop[bad] = end
    return prop, c1 + c2


def _run_chunks(n: int, seed: int, threads: int, work: Callable[[int, np.random.Generator], tuple]):
    chunks = [(c, min(CHUNK, n - c * CHUNK)) for c in range((n + CHUNK - 1) // CHUNK)]

    def job(item):
        c, size = item
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(c,)))
        return work(size, rng)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    samples = np.concatenate([p[0] for p in parts], axis=1)
    return samples, sum(p[1] for p in parts)


def _march(x, lengths, dt, step, rng):
    lengths = np.asarray(lengths, dtype=float)
    out = np.empty((len(lengths),) + x.shape)
    cur, clamped = 0.0, 0
    for c, target in enumerate(lengths):
        span = target - cur
        if span > 0:
            k = max(1, int(np.ceil(span / dt - 1e-9)))
            h = span / k
            for _ in range(k):
                x, cl = step(x, h, rng)
                clamped += cl
        cur = target
        out[c] = x
    return out, clamped


def sde_ensemble(gammas: Gammas, lengths: Sequence[float] | float, n_samples: int, seed: int,
                 dt: float = 2e-3, start=(0.0, 0.0), threads: int = 1,
                 max_halvings: int = 40) -> SdeEnsemble:
    """Samples of ``(d1, d2)`` under the reduced generator.

    Three independent scalar noises drive the rank-one directions:
    ``sqrt(2 g12 d1 d2) phi3``, ``sqrt(2 g23 d2) phi2`` and ``sqrt(2 g13 d1) phi1``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    g12, g13, g23 = gammas.g12, gammas.g13, gammas.g23

    def increment(x, h, dW):
        d1, d2 = x[:, 0], x[:, 1]
        p1, p2 = np.maximum(d1, 0.0), np.maximum(d2, 0.0)
        # scalar weights along phi3 = (1, -1), phi2 = (d1, d2 - 1), phi1 = (d1 - 1, d2)
        w3 = g12 * (d2 - d1) * h + np.sqrt(2 * g12 * p1 * p2) * dW[:, 0]
        w2 = g23 * (d2 - 1) * h + np.sqrt(2 * g23 * p2) * dW[:, 1]
        w1 = g13 * (d1 - 1) * h + np.sqrt(2 * g13 * p1) * dW[:, 2]
        return np.stack([w3 + d1 * w2 + (d1 - 1) * w1, -w3 + (d2 - 1) * w2 + d2 * w1], axis=1)

    def inside(x):
        return (x[:, 0] >= 0) & (x[:, 1] >= 0) & (x[:, 0] + x[:, 1] <= 1)

    def project(x):
        x = np.clip(x, 0.0, None)
        s = x.sum(axis=1)
        over = s > 1
        x[over] /= s[over, None]
        return x

    def step(x, h, rng):
        dW = np.sqrt(h) * rng.standard_normal((x.shape[0], 3))
        return em_adaptive(x, h, dW, increment, inside, project, rng, max_halvings)

    def work(size, rng):
        x0 = np.tile(np.asarray(start, dtype=float), (size, 1))
        return _march(x0, lengths, dt, step, rng)

    samples, clamped = _run_chunks(n_samples, seed, threads, work)
    return SdeEnsemble(lengths, samples, clamped, int(seed), float(dt))


def sde_transmission(gamma13: float, lengths: Sequence[float] | float, n_samples: int, seed: int,
                     dt: float = 2e-3, threads: int = 1, max_halvings: int = 40) -> SdeEnsemble:
    """Samples of ``u = -ln tau`` for the 2x2 transmission diffusion, started at ``tau = 1``.

    ``du = gamma13 dt + sqrt(2 gamma13 (1 - e^-u)) dW``; the state stays in ``u >= 0``.
    """
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    g = float(gamma13)

    def increment(x, h, dW):
        return g * h + np.sqrt(2 * g * -np.expm1(-np.maximum(x, 0.0))) * dW

    def step(x, h, rng):
        dW = np.sqrt(h) * rng.standard_normal((x.shape[0], 1))
        return em_adaptive(x, h, dW, increment, lambda y: y[:, 0] >= 0,
                           lambda y: np.clip(y, 0, None), rng, max_halvings)

    def work(size, rng):
        return _march(np.zeros((size, 1)), lengths, dt, step, rng)

    samples, clamped = _run_chunks(n_samples, seed, threads, work)
    return SdeEnsemble(lengths, samples, clamped, int(seed), float(dt))
