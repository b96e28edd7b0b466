"""Reduced diffusion generator for the reflection powers ``(d1, d2)``.

``d1`` is the reflected power from the forward pair mode into the
backward pair mode and ``d2`` the reflected power from the zero mode into
the backward pair mode.  The generator acts as
``L f = a : grad^2 f + b . grad f`` on the triangle
``T = {d1 >= 0, d2 >= 0, d1 + d2 <= 1}``, and splits into three rank-one
diffusions along

    phi3 = (1, -1),   phi2 = (d1, d2 - 1),   phi1 = (d1 - 1, d2).

Strength labels follow the matrix form: ``gamma12`` multiplies
``d1 d2 phi3 phi3^T``, ``gamma23`` multiplies ``d2 phi2 phi2^T`` and
``gamma13`` multiplies ``d1 phi1 phi1^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Gammas",
    "ReflectionCoordinates",
    "GeneratorCoeffs",
    "generator_coeffs",
    "generator_matrix_form",
    "rank_one_factors",
    "rho_coeffs",
    "d1_coeffs",
    "transmission_coeffs",
    "in_triangle",
]

TRIANGLE_TOL = 1e-12


@dataclass(frozen=True)
class Gammas:
    g12: float = 1.0
    g13: float = 1.0
    g23: float = 1.0

    def __post_init__(self):
        if min(self.g12, self.g13, self.g23) < 0:
            raise ValueError("gamma values must be non-negative")

    @property
    def symmetric(self) -> bool:
        return self.g13 == self.g23


def in_triangle(d1, d2, tol: float = TRIANGLE_TOL):
    d1, d2 = np.asarray(d1), np.asarray(d2)
    return (d1 >= -tol) & (d2 >= -tol) & (d1 + d2 <= 1.0 + tol)


@dataclass(frozen=True)
class ReflectionCoordinates:
    d1: float
    d2: float

    def __post_init__(self):
        if not in_triangle(self.d1, self.d2):
            raise ValueError(f"({self.d1}, {self.d2}) is outside the triangle")

    @property
    def rho(self) -> float:
        return self.d1 + self.d2


@dataclass(frozen=True)
class GeneratorCoeffs:
    diffusion: np.ndarray
    drift: np.ndarray
    gammas: Gammas


def _coords(d):
    if isinstance(d, ReflectionCoordinates):
        return np.float64(d.d1), np.float64(d.d2)
    d = np.asarray(d, dtype=float)
    return d[..., 0], d[..., 1]


def rank_one_factors(d1, d2):
    """``(phi3, phi2, phi1)``, each of shape ``(..., 2)``."""
    one = np.ones_like(d1)
    phi3 = np.stack([one, -one], axis=-1)
    phi2 = np.stack([d1, d2 - 1.0], axis=-1)
    phi1 = np.stack([d1 - 1.0, d2], axis=-1)
    return phi3, phi2, phi1


def generator_coeffs(d, gammas: Gammas) -> GeneratorCoeffs:
    """Diffusion matrix and drift from the rank-one decomposition.

    ``d`` is a :class:`ReflectionCoordinates` or an array ``(..., 2)``.
    """
    d1, d2 = _coords(d)
    if not np.all(in_triangle(d1, d2)):
        raise ValueError("points outside the triangle")
    phi3, phi2, phi1 = rank_one_factors(d1, d2)
    outer = lambda v: v[..., :, None] * v[..., None, :]
    c12, c23, c13 = gammas.g12 * d1 * d2, gammas.g23 * d2, gammas.g13 * d1
    a = c12[..., None, None] * outer(phi3) + c23[..., None, None] * outer(phi2) + c13[..., None, None] * outer(phi1)
    b = ((gammas.g12 * (d2 - d1))[..., None] * phi3 + (gammas.g23 * (d2 - 1.0))[..., None] * phi2
         + (gammas.g13 * (d1 - 1.0))[..., None] * phi1)
    return GeneratorCoeffs(a, b, gammas)


def generator_matrix_form(d, gammas: Gammas) -> GeneratorCoeffs:
    """Same coefficients written entry by entry (independent of the rank-one factors)."""
    d1, d2 = _coords(d)
    g12, g13, g23 = gammas.g12, gammas.g13, gammas.g23
    a11 = g12 * d1 * d2 + g23 * d1**2 * d2 + g13 * d1 * (d1 - 1) ** 2
    a12 = -g12 * d1 * d2 + g23 * d1 * d2 * (d2 - 1) + g13 * d1 * d2 * (d1 - 1)
    a22 = g12 * d1 * d2 + g23 * d2 * (d2 - 1) ** 2 + g13 * d2**2 * d1
    b1 = g12 * (d2 - d1) + g23 * d1 * (d2 - 1) + g13 * (d1 - 1) ** 2
    b2 = -g12 * (d2 - d1) + g23 * (d2 - 1) ** 2 + g13 * d2 * (d1 - 1)
    a = np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)
    b = np.stack([b1, b2], -1)
    return GeneratorCoeffs(a, b, gammas)


def rho_coeffs(rho, gamma: float):
    """``(a, b)`` of the reduced generator for ``rho = d1 + d2`` (``gamma13 = gamma23 = gamma``)."""
    rho = np.asarray(rho, dtype=float)
    return gamma * rho * (1 - rho) ** 2, gamma * (1 - rho) * (2 - rho)


def d1_coeffs(d1, gamma_total: float):
    """``(a, b)`` of ``gamma_total * d/dx [x (1 - x) d/dx]``."""
    d1 = np.asarray(d1, dtype=float)
    return gamma_total * d1 * (1 - d1), gamma_total * (1 - 2 * d1)


def transmission_coeffs(tau, gamma13: float):
    """``(a, b)`` of the 2x2 transmission generator ``gamma13 [tau^2 (1 - tau) d^2 - tau^2 d]``."""
    tau = np.asarray(tau, dtype=float)
    return gamma13 * tau**2 * (1 - tau), -gamma13 * tau**2
