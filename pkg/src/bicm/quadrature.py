"""Gauss-Hermite rules and complex-Gaussian expectations."""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

DEFAULT_ORDER = 32
MAX_ORDER = 128


class QuadratureError(ValueError):
    """Invalid rule order or non-finite integrand."""

    def __init__(self, message: str, node: complex | None = None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights for integrals against exp(-t^2) on the real line."""

    nodes: np.ndarray
    weights: np.ndarray
    _grid: tuple = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1 or len(nodes) == 0:
            raise QuadratureError("nodes and weights must be equal-length 1-D arrays")
        # tensor grid for z = u + jv, weights folded with the 1/pi density factor
        u, v = np.meshgrid(nodes, nodes, indexing="ij")
        grid_nodes = (u + 1j * v).ravel()
        grid_weights = np.outer(weights, weights).ravel() / math.pi
        for array in (nodes, weights, grid_nodes, grid_weights):
            array.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_grid", (grid_nodes, grid_weights))

    @property
    def order(self) -> int:
        return len(self.nodes)

    @property
    def complex_nodes(self) -> np.ndarray:
        """Tensor nodes u_j + i v_k, flattened to length n^2."""
        return self._grid[0]

    @property
    def complex_weights(self) -> np.ndarray:
        """w_j w_k / pi matching ``complex_nodes``; sums to 1."""
        return self._grid[1]

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Approximate the integral of f(t) exp(-t^2) over the real line.

        Symmetric node pairs are summed before weighting, so odd integrands
        cancel exactly.
        """
        n = self.order
        half = n // 2
        left = self.nodes[:half]
        right = self.nodes[::-1][:half]
        values = np.asarray(f(left), dtype=float) + np.asarray(f(right), dtype=float)
        total = float(np.dot(self.weights[:half], values))
        if n % 2:
            centre = self.nodes[half : half + 1]
            total += float(self.weights[half] * np.asarray(f(centre), dtype=float)[0])
        return total


@lru_cache(maxsize=None)
def gauss_hermite(n: int = DEFAULT_ORDER) -> QuadratureRule:
    """Gauss-Hermite rule of order n (physicists' weight exp(-t^2))."""
    if not isinstance(n, int) or not 1 <= n <= MAX_ORDER:
        raise QuadratureError(f"quadrature order must be in 1..{MAX_ORDER}, got {n}")
    # companion-matrix eigenvalues with a Newton polish; nodes come back
    # sorted and symmetrised, weights scaled to sum to sqrt(pi)
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    return QuadratureRule(nodes=nodes, weights=weights)


def expect_complex_gaussian(
    rule: QuadratureRule, f: Callable[[np.ndarray], np.ndarray]
) -> float:
    """E[f(Z)] for Z ~ CN(0, 1) (density exp(-|z|^2)/pi).

    ``f`` is called once with the full array of tensor nodes and must return
    real values of the same shape.
    """
    z = rule.complex_nodes
    values = np.asarray(f(z), dtype=float)
    if values.shape != z.shape:
        values = np.broadcast_to(values, z.shape)
    finite = np.isfinite(values)
    if not finite.all():
        node = complex(z[np.argmin(finite)])
        raise QuadratureError(f"integrand is not finite at node {node}", node=node)
    return float(np.dot(rule.complex_weights, values))
