"""Quadrature rules on the unit sphere."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SphereRule:
    """Nodes and weights on S^2; weights sum to 4*pi.

    ``n_theta``/``n_phi`` are set only for tensor-product rules.
    """

    nodes: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    n_theta: int | None = None
    n_phi: int | None = None

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate over the last axis of ``values``."""
        return values @ self.weights


def angles_to_unit(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def unit_to_angles(omega) -> tuple[np.ndarray, np.ndarray]:
    omega = np.asarray(omega, dtype=float)
    theta = np.arccos(np.clip(omega[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(omega[..., 1], omega[..., 0]), 2 * np.pi)
    return theta, phi


def product_rule(n_theta: int = 24, n_phi: int = 48) -> SphereRule:
    """Gauss-Legendre in cos(theta) times a uniform azimuthal rule."""
    if n_theta < 1 or n_phi < 1:
        raise ValueError("rule sizes must be positive")
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phis = (np.arange(n_phi) + 0.5) * (2 * np.pi / n_phi)
    theta = np.repeat(np.arccos(x), n_phi)
    phi = np.tile(phis, n_theta)
    weights = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
    return SphereRule(angles_to_unit(theta, phi), weights, theta, phi, n_theta, n_phi)


def direction_set(omegas) -> SphereRule:
    """Arbitrary directions with equal nominal weights (used for ray samples)."""
    nodes = np.atleast_2d(np.asarray(omegas, dtype=float))
    nodes = nodes / np.linalg.norm(nodes, axis=1, keepdims=True)
    theta, phi = unit_to_angles(nodes)
    w = np.full(nodes.shape[0], 4 * np.pi / nodes.shape[0])
    return SphereRule(nodes, w, theta, phi)


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w
