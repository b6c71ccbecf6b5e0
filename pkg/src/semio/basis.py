"""Gauss-Lobatto-Legendre reference basis on [-1, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidOrderError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralBasis:
    order: int
    nodes: np.ndarray
    weights: np.ndarray
    diff: np.ndarray

    @property
    def npts(self) -> int:
        return self.order + 1

    def astype(self, dtype) -> "SpectralBasis":
        return SpectralBasis(
            self.order,
            self.nodes.astype(dtype),
            self.weights.astype(dtype),
            self.diff.astype(dtype),
        )


def legendre(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (L_n(x), L_n'(x)) from the three-term recurrence."""
    x = np.asarray(x, dtype=np.float64)
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    # derivative from L_n and L_{n-1}; only valid off the endpoints
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (x * p1 - p0) / (x * x - 1.0)
    end = np.abs(x) == 1.0
    if np.any(end):
        dp[end] = np.sign(x[end]) ** (n + 1) * n * (n + 1) / 2.0
    return p1, dp


def _legendre_d2(n: int, x: np.ndarray, p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    # Legendre ODE: (1 - x^2) L'' = 2x L' - n(n+1) L
    return (2.0 * x * dp - n * (n + 1) * p) / (1.0 - x * x)


def gll_nodes(order: int, tol: float = 1e-15, max_iter: int = 100) -> np.ndarray:
    n = order
    if n == 1:
        return np.array([-1.0, 1.0])
    # interior roots of L_n' bracketed by the Chebyshev-Gauss-Lobatto points
    x = -np.cos(np.pi * np.arange(1, n) / n)
    for _ in range(max_iter):
        p, dp = legendre(n, x)
        step = dp / _legendre_d2(n, x, p, dp)
        x = x - step
        if np.max(np.abs(step)) <= tol:
            break
    x = 0.5 * (x - x[::-1])
    if n % 2 == 0:
        x[n // 2 - 1] = 0.0
    return np.concatenate(([-1.0], x, [1.0]))


def lagrange_diff_matrix(x: np.ndarray) -> np.ndarray:
    """D[i, j] = l_j'(x_i) for the Lagrange basis on nodes x."""
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    bary = 1.0 / np.prod(dx, axis=1)
    D = (bary[None, :] / bary[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def build_basis(order: int) -> SpectralBasis:
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise InvalidOrderError(f"polynomial order must be an integer >= 1, got {order!r}")
    order = int(order)
    nodes = gll_nodes(order)
    p, _ = legendre(order, nodes)
    weights = 2.0 / (order * (order + 1) * p * p)
    weights = 0.5 * (weights + weights[::-1])
    diff = lagrange_diff_matrix(nodes)
    for a in (nodes, weights, diff):
        a.setflags(write=False)
    return SpectralBasis(order, nodes, weights, diff)
