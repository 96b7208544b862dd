"""Builders for subdomain pairs with engineered overlaps.

Each function returns ready-made :class:`~semiglobal.chebcore.Subdomain`
objects whose nodes line up the way a particular assembly method expects.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .chebcore import Mapping, Subdomain, make_subdomain


def _gap(n_points: int, j: int) -> float:
    """Distance of node j from the end of a unit-length Gauss-Lobatto grid."""
    return 0.5 * (1.0 - np.cos(j * np.pi / (n_points - 1)))


def global_domain(a: float, b: float, n_points: int, max_order: int = 1) -> list[Subdomain]:
    """One linearly mapped subdomain covering [a, b]."""
    return [make_subdomain(Mapping.linear(a, b), n_points, max_order)]


def one_point_pair(a: float, split: float, b: float, n_a: int, n_b: int | None = None,
                   max_order: int = 1) -> list[Subdomain]:
    """Linear subdomains [a, split] and [split, b] sharing one endpoint."""
    n_b = n_a if n_b is None else n_b
    return [make_subdomain(Mapping.linear(a, split), n_a, max_order),
            make_subdomain(Mapping.linear(split, b), n_b, max_order)]


def tanh_pair(length: float, n_a: int, n_b: int | None = None, r_c: float = 1.0, interface: float = 1.0,
              outer_b: float = 2.0, max_order: int = 1) -> list[Subdomain]:
    """Algebraic map on [0, interface] joined to a rational map on [interface, length].

    Both maps put their densest nodes at ``interface``: the algebraic map
    clusters at both ends of its interval and the rational map clusters at
    its offset. ``outer_b`` sets how strongly the outer map clusters.
    """
    if length <= interface:
        raise ValueError(f"domain length {length} must exceed the interface location {interface}")
    n_b = n_a if n_b is None else n_b
    scale = 0.5 * (length - interface) * (outer_b - 1.0)
    return [make_subdomain(Mapping.algebraic(r_c, interface), n_a, max_order),
            make_subdomain(Mapping.rational(scale, outer_b, interface), n_b, max_order)]


def symmetric_overlap_pair(a: float, split: float, b: float, n_points: int, overlap_points: int,
                           max_order: int = 1) -> list[Subdomain]:
    """Subdomains [a, split+h] and [split-h, b] with a set number of overlap nodes.

    ``h`` is chosen so that ``overlap_points`` nodes of the left subdomain
    fall inside [split-h, split+h]. For odd counts the middle one sits exactly
    at ``split``; when the two halves have equal length the right subdomain
    mirrors the left and that middle node is shared. For even counts the
    overlap edge falls halfway between two nodes.
    """
    if overlap_points < 2:
        raise ValueError("overlap_points must be >= 2")
    if not a < split < b:
        raise ValueError("split must lie strictly inside (a, b)")
    n = n_points
    if overlap_points >= n // 2:
        raise ValueError("overlap_points must be well below half the nodes per subdomain")
    base = split - a

    def dist(h, j):
        return (base + h) * _gap(n, j)

    if overlap_points % 2:
        k = overlap_points // 2

        def g(h):
            return h - dist(h, k)
    else:
        k = overlap_points // 2

        def g(h):
            return 2 * h - 0.5 * (dist(h, k - 1) + dist(h, k))

    h = brentq(g, 1e-14 * base, min(base, b - split), xtol=1e-16, rtol=1e-15)
    return [make_subdomain(Mapping.linear(a, split + h), n, max_order),
            make_subdomain(Mapping.linear(split - h, b), n, max_order)]


def two_point_pair(a: float, b: float, n_a: int, n_b: int | None = None, split: float | None = None,
                   max_order: int = 1) -> list[Subdomain]:
    """Linear subdomains whose last two and first two nodes coincide.

    The left subdomain is [a, a + H1] and the right one is the same kind of
    map shifted so that its first node lands on the left subdomain's
    penultimate node. If ``n_b`` is omitted it is chosen so the junction falls
    as close as possible to ``split`` (default: the midpoint).
    """
    L = b - a
    c_a = _gap(n_a, 1)

    def junction(nb):
        c_b = _gap(nb, 1)
        return c_b / (c_a + c_b - c_a * c_b)

    if n_b is None:
        target = 0.5 if split is None else (split - a) / L
        n_b = min(range(4, 20 * n_a), key=lambda nb: (abs(junction(nb) - target), nb))
    h1 = junction(n_b)
    start = h1 * (1.0 - c_a)
    return [make_subdomain(Mapping.linear(a, a + h1 * L), n_a, max_order),
            make_subdomain(Mapping.linear(a + start * L, b), n_b, max_order)]


def pseudo_multipoint_pair(n_a: int, n_b: int, r_up: float = 1.0, L: float = 2.0, b: float = 1.25,
                           shift_index: int = 5, max_order: int = 1) -> list[Subdomain]:
    """Linear map on [0, r_up] plus a rational map anchored on an interior node.

    The rational map's offset is the left subdomain's node ``shift_index``
    places from its right end, so exactly that one node is shared.
    """
    left = make_subdomain(Mapping.linear(0.0, r_up), n_a, max_order)
    if not 1 <= shift_index < n_a - 1:
        raise ValueError(f"shift_index must lie in [1, {n_a - 2}]")
    offset = float(left.phys_nodes[n_a - 1 - shift_index])
    right = make_subdomain(Mapping.rational(L, b, offset), n_b, max_order)
    return [left, right]


def appendix_taylor_pair(n_a: int = 60, n_b: int = 30, loc: float = 1.0, width: float = 0.1,
                         L: float = 1.5, b: float = 3.0, gap: float = 0.05,
                         max_order: int = 6) -> list[Subdomain]:
    """Linear map on [0, loc + width/2] with a rational map starting ``gap`` below its end."""
    upper = loc + width / 2
    left = make_subdomain(Mapping.linear(0.0, upper), n_a, max_order)
    right = make_subdomain(Mapping.rational(L, b, upper - gap), n_b, max_order)
    return [left, right]
