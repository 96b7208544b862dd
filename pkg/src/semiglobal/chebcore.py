"""Chebyshev collocation on mapped intervals.

Gauss-Lobatto nodes, differentiation matrices, coordinate mappings from the
reference interval [-1, 1] to physical intervals, and the chain-rule
transformation that turns reference operators into physical ones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping as MappingT

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

MAPPING_KINDS = ("linear", "algebraic_semi_infinite", "rational_offset")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _powers(d1: np.ndarray, max_order: int) -> MappingT[int, np.ndarray]:
    out = {1: _freeze(d1.copy())}
    for k in range(2, max_order + 1):
        out[k] = _freeze(out[k - 1] @ d1)
    return MappingProxyType(out)


@dataclass(frozen=True)
class Grid:
    """Chebyshev-Gauss-Lobatto nodes on [-1, 1] with differentiation matrices.

    Attributes
    ----------
    n_points : int
        Number of nodes.
    nodes : ndarray
        Descending nodes, ``nodes[0] = 1`` and ``nodes[-1] = -1``.
    diff : mapping of int to ndarray
        ``diff[k]`` is the k-th derivative matrix, equal to ``diff[1] ** k``.
    """

    n_points: int
    nodes: np.ndarray
    diff: MappingT[int, np.ndarray]

    @property
    def max_order(self) -> int:
        return max(self.diff)


def cheb_grid(n_points: int, max_order: int = 1) -> Grid:
    """Build Gauss-Lobatto nodes and differentiation matrices.

    The off-diagonal entries follow ``c_i (-1)^(i+j) / (c_j (x_i - x_j))`` and
    the diagonal is the negative row sum of the off-diagonal entries.

    Parameters
    ----------
    n_points : int
        Number of nodes, at least 2.
    max_order : int
        Highest derivative order to precompute, ``1 <= max_order <= n_points``.

    Returns
    -------
    Grid
    """
    n_points = int(n_points)
    max_order = int(max_order)
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if max_order > n_points:
        raise ValueError(f"max_order {max_order} exceeds n_points {n_points}")
    n = n_points - 1
    j = np.arange(n_points)
    # sine form keeps the nodes exactly antisymmetric
    x = np.sin(np.pi * (n - 2 * j) / (2 * n))
    c = np.ones(n_points)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n_points))
    d -= np.diag(d.sum(axis=1))
    return Grid(n_points, _freeze(x), _powers(d, max_order))


@dataclass(frozen=True)
class Mapping:
    """Invertible map from the reference interval [-1, 1] to a physical interval.

    Use the :meth:`linear`, :meth:`algebraic` and :meth:`rational` constructors.

    Attributes
    ----------
    kind : str
        One of ``linear``, ``algebraic_semi_infinite`` or ``rational_offset``.
    params : tuple of float
        ``(a, b)`` for linear, ``(r_c, l_1)`` for algebraic and
        ``(L, b, offset)`` for rational.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in MAPPING_KINDS:
            raise ValueError(f"unknown mapping kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        nparams = {"linear": 2, "algebraic_semi_infinite": 2, "rational_offset": 3}[self.kind]
        if len(self.params) != nparams:
            raise ValueError(f"{self.kind} mapping takes {nparams} parameters, got {len(self.params)}")
        if self.kind == "linear" and self.params[0] == self.params[1]:
            raise ValueError("linear mapping needs a != b")
        if self.kind == "algebraic_semi_infinite":
            rc, l1 = self.params
            if rc <= 0 or l1 <= 0:
                raise ValueError("algebraic mapping needs r_c > 0 and l_1 > 0")
        if self.kind == "rational_offset":
            L, b, _ = self.params
            if b <= 1:
                raise ValueError(f"rational mapping needs b > 1 so the pole stays off [-1, 1], got b={b}")
            if L == 0:
                raise ValueError("rational mapping needs L != 0")
        xs = np.linspace(-1.0, 1.0, 1001)
        ys = self.forward(xs)
        dy = np.diff(ys)
        if not (np.all(dy > 0) or np.all(dy < 0)):
            raise ValueError(f"{self.kind} mapping {self.params} is not strictly monotone")

    @classmethod
    def linear(cls, a: float, b: float) -> "Mapping":
        """Affine map with ``forward(1) = a`` and ``forward(-1) = b``."""
        return cls("linear", (a, b))

    @classmethod
    def algebraic(cls, r_c: float, l_1: float) -> "Mapping":
        """Algebraic map of [-1, 1] onto [0, l_1] clustering nodes near 0."""
        return cls("algebraic_semi_infinite", (r_c, l_1))

    @classmethod
    def rational(cls, L: float, b: float, offset: float = 0.0) -> "Mapping":
        """Rational map ``L (1 - x) / (b + x) + offset``."""
        return cls("rational_offset", (L, b, offset))

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            a, b = self.params
            return 0.5 * (a + b) - 0.5 * (b - a) * x
        if self.kind == "algebraic_semi_infinite":
            rc, l1 = self.params
            return rc * l1 * (1 - x) / (2 * rc + l1 * (1 - x * x))
        L, b, off = self.params
        return L * (1 - x) / (b + x) + off

    def metric(self, x):
        """Analytic ``d forward / dx``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            a, b = self.params
            return np.full_like(x, -0.5 * (b - a))
        if self.kind == "algebraic_semi_infinite":
            rc, l1 = self.params
            g = 2 * rc + l1 * (1 - x * x)
            dg = -2 * l1 * x
            return rc * l1 * (-g - (1 - x) * dg) / g**2
        L, b, _ = self.params
        return -L * (b + 1) / (b + x) ** 2

    def inverse(self, y: float) -> float:
        """Reference coordinate of a physical point inside the mapped interval."""
        if self.kind == "linear":
            a, b = self.params
            return float((a + b - 2 * y) / (b - a))
        lo, hi = sorted((float(self.forward(1.0)), float(self.forward(-1.0))))
        if not lo <= y <= hi:
            raise ValueError(f"point {y} lies outside the mapped interval [{lo}, {hi}]")
        return brentq(lambda x: float(self.forward(x)) - y, -1.0, 1.0, xtol=1e-15, rtol=1e-15)


def map_forward(m: Mapping, x):
    """Evaluate ``m`` at reference coordinate(s) ``x`` in [-1, 1]."""
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1 + 1e-14):
        raise ValueError("reference coordinate outside [-1, 1]")
    y = m.forward(xa)
    return float(y) if np.ndim(y) == 0 else y


@dataclass(frozen=True)
class Subdomain:
    """Physical nodes and derivative matrices of one mapped interval.

    Nodes are stored in ascending physical order; ``ref_nodes`` holds the
    matching reference coordinates so that polynomial representations can be
    evaluated off the grid.
    """

    mapping: Mapping
    grid: Grid
    phys_nodes: np.ndarray
    phys_diff: MappingT[int, np.ndarray]
    ref_nodes: np.ndarray = field(repr=False)

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    @property
    def max_order(self) -> int:
        return max(self.phys_diff)

    @property
    def left(self) -> float:
        return float(self.phys_nodes[0])

    @property
    def right(self) -> float:
        return float(self.phys_nodes[-1])

    def derivative(self, k: int) -> np.ndarray:
        """k-th physical derivative matrix, computed as a power when not cached."""
        if k in self.phys_diff:
            return self.phys_diff[k]
        return np.linalg.matrix_power(self.phys_diff[1], k)


def make_subdomain(m: Mapping, n_points: int, max_order: int = 1) -> Subdomain:
    """Map a Chebyshev grid through ``m`` and apply the chain rule.

    ``phys_diff[1][i, j] = D[i, j] / metric(x_i)``; higher orders are matrix
    powers. Nodes come back ascending with matrices permuted to match.
    """
    grid = cheb_grid(n_points, max_order)
    x = grid.nodes
    metric = m.metric(x)
    if np.any(metric == 0) or not np.all(np.isfinite(metric)):
        raise ValueError(f"{m.kind} mapping has a vanishing or singular metric on a node")
    y = m.forward(x)
    d1 = grid.diff[1] / metric[:, None]
    if y[0] > y[-1]:
        y, x, d1 = y[::-1], x[::-1], d1[::-1, ::-1]
    if np.any(np.diff(y) <= 0):
        raise ValueError("mapped nodes are not strictly monotone")
    return Subdomain(m, grid, _freeze(y.copy()), _powers(np.ascontiguousarray(d1), max_order), _freeze(x.copy()))
