"""Global derivative operators over overlapping mapped subdomains.

All assembly methods share one engine. Nodes of every subdomain are merged
into an ascending vector, coincident nodes from different subdomains are fused
into a single unknown, and each global row is built from the rows that
"know" about that node:

* the owning subdomain's own Chebyshev row (one per subdomain the node
  belongs to), and
* for the Taylor methods, a donor row from any other subdomain whose interval
  strictly contains the node, obtained by expanding that subdomain's
  derivative matrices about its nearest node to the left.

When two rows are available they are blended with weights ``weight_a`` and
``weight_b`` (left subdomain first). Each source row is scattered into the
global columns of its subdomain, so foreign columns stay zero.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from math import factorial
from typing import Sequence

import numpy as np

from .chebcore import Mapping, Subdomain, make_subdomain

logger = logging.getLogger(__name__)

METHODS = ("one_point", "two_point", "pseudo_multi", "taylor_multi", "multi_interval")
PROVENANCE = ("domainA", "domainB", "blended")


@dataclass(frozen=True)
class OverlapSpec:
    """Blending and Taylor settings shared by the assembly methods.

    Parameters
    ----------
    weight_a : float
        Weight of the left subdomain's row at a shared node, in (0, 1).
    coincidence_tol : float
        Relative tolerance for fusing nodes; multiplied by the total domain
        length.
    taylor_terms : int
        Number of Taylor terms in a donor row (``D^(1)`` through ``D^(n)``).
    """

    weight_a: float = 0.5
    coincidence_tol: float = 1e-12
    taylor_terms: int = 5

    def __post_init__(self):
        if not 0.0 < self.weight_a < 1.0:
            raise ValueError(f"weight_a must lie in (0, 1), got {self.weight_a}")
        if self.coincidence_tol < 0:
            raise ValueError("coincidence_tol must be non-negative")
        if int(self.taylor_terms) != self.taylor_terms or self.taylor_terms < 1:
            raise ValueError(f"taylor_terms must be a positive integer, got {self.taylor_terms}")

    @property
    def weight_b(self) -> float:
        return 1.0 - self.weight_a


@dataclass(eq=False)
class GlobalOperator:
    """Assembled first-derivative matrix on the merged node set.

    Attributes
    ----------
    nodes : ndarray
        Ascending merged nodes, length M.
    d1 : ndarray
        M x M first-derivative matrix.
    row_provenance : tuple of str
        ``domainA``/``domainB`` (``domain<k>`` for multi-interval operators)
        or ``blended`` per row.
    method : str
        Assembly method name.
    subdomains : tuple of Subdomain
        Source subdomains, ordered left to right.
    columns : tuple of ndarray
        ``columns[s][i]`` is the global index of node ``i`` of subdomain ``s``.
    structure : ndarray of bool
        Entries that received a nonzero contribution from some source row.
        Blending can cancel such an entry to exactly zero (the interface
        diagonal of two equal linear maps, for instance).
    """

    nodes: np.ndarray
    d1: np.ndarray
    row_provenance: tuple
    method: str
    subdomains: tuple
    columns: tuple
    structure: np.ndarray | None = None
    order_cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.d1.setflags(write=False)
        if self.structure is None:
            self.structure = self.d1 != 0
        self.order_cache.setdefault(1, self.d1)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def derivative(self, k: int) -> np.ndarray:
        """Return ``d1 ** k``, caching every intermediate power."""
        if k < 1:
            raise ValueError(f"derivative order must be >= 1, got {k}")
        with self._lock:
            top = max(j for j in self.order_cache if j <= k)
            mat = self.order_cache[top]
            for j in range(top + 1, k + 1):
                mat = mat @ self.d1
                mat.setflags(write=False)
                self.order_cache[j] = mat
            return self.order_cache[k]

    def restrict(self, u: np.ndarray, s: int) -> np.ndarray:
        """Values of a global vector on the nodes of subdomain ``s``."""
        return np.asarray(u)[self.columns[s]]


def derivative_of_order(op: GlobalOperator, k: int) -> np.ndarray:
    """k-th power of the assembled first-derivative matrix (cached)."""
    return op.derivative(k)


def sparsity_pattern(op, threshold: float = 1e-12, order: int = 1,
                     structural: bool = False) -> list[tuple[int, int]]:
    """Row-major ``(row, col)`` indices of entries with ``|value| > threshold``.

    ``op`` may be a :class:`GlobalOperator` (its ``order``-th derivative is
    used) or any 2-D array. With ``structural=True`` the first-order
    operator's assembly mask is returned instead, which keeps entries that
    blending cancelled exactly.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if structural:
        if not isinstance(op, GlobalOperator) or order != 1:
            raise ValueError("structural patterns exist only for a GlobalOperator at order 1")
        mask = op.structure
    else:
        mat = op.derivative(order) if isinstance(op, GlobalOperator) else np.asarray(op)
        mask = np.abs(mat) > threshold
    return [(int(i), int(j)) for i, j in np.argwhere(mask)]


def _taylor_row(sub: Subdomain, y0: float, terms: int) -> np.ndarray:
    """Donor row predicting ``f'(y0)`` from the subdomain's nodal values."""
    y = sub.phys_nodes
    anchor = int(np.searchsorted(y, y0, side="right")) - 1
    if anchor < 0:
        # y0 precedes every donor node; expand to the right instead
        anchor = 0
    dy = y0 - y[anchor]
    row = np.zeros(sub.n_points)
    for k in range(terms):
        row += dy**k / factorial(k) * sub.derivative(k + 1)[anchor]
    return row


def _merge(subs: Sequence[Subdomain], tol: float):
    """Merge nodes; returns merged nodes, member lists and column maps."""
    values, owners = [], []
    for s, sub in enumerate(subs):
        values.extend(sub.phys_nodes)
        owners.extend((s, i) for i in range(sub.n_points))
    order = np.argsort(values, kind="stable")
    merged: list[float] = []
    members: list[list[tuple[int, int]]] = []
    for k in order:
        v = values[k]
        s, i = owners[k]
        if merged and v - merged[-1] <= tol and all(t != s for t, _ in members[-1]):
            members[-1].append((s, i))
            merged[-1] = float(np.mean([subs[t].phys_nodes[j] for t, j in members[-1]]))
        else:
            merged.append(float(v))
            members.append([(s, i)])
    columns = [np.empty(sub.n_points, dtype=int) for sub in subs]
    for g, mem in enumerate(members):
        for s, i in mem:
            columns[s][i] = g
    nodes = np.array(merged)
    if np.any(np.diff(nodes) <= 0):
        raise ValueError("merged nodes are not strictly ascending")
    return nodes, members, columns


def _assemble(subs: Sequence[Subdomain], spec: OverlapSpec, method: str, taylor: bool,
              weights: Sequence[float] | None = None, tags: Sequence[str] | None = None) -> GlobalOperator:
    length = subs[-1].right - subs[0].left
    nodes, members, columns = _merge(subs, spec.coincidence_tol * length)
    m = len(nodes)
    if weights is None:
        weights = [spec.weight_a, spec.weight_b]
    if tags is None:
        tags = [f"domain{s}" for s in range(len(subs))]
    if taylor:
        for sub in subs:
            if spec.taylor_terms > sub.max_order:
                raise ValueError(
                    f"taylor_terms={spec.taylor_terms} needs derivative orders up to {spec.taylor_terms}, "
                    f"subdomain provides {sub.max_order}")
    d1 = np.zeros((m, m))
    touched = np.zeros((m, m), dtype=bool)
    prov = []
    for g, v in enumerate(nodes):
        rows = {s: subs[s].phys_diff[1][i] for s, i in members[g]}
        if taylor:
            for s, sub in enumerate(subs):
                if s not in rows and sub.left < v < sub.right:
                    rows[s] = _taylor_row(sub, v, spec.taylor_terms)
        if len(rows) > 2:
            raise ValueError(f"node {v} lies in {len(rows)} subdomains; only adjacent overlaps are supported")
        srcs = sorted(rows)
        if len(srcs) == 1:
            s = srcs[0]
            d1[g, columns[s]] += rows[s]
            touched[g, columns[s]] |= rows[s] != 0
            prov.append(tags[s])
        else:
            (s0, s1) = srcs
            if s1 != s0 + 1:
                raise ValueError(f"node {v} couples non-adjacent subdomains {s0} and {s1}")
            wa = weights[0] if len(subs) == 2 else spec.weight_a
            d1[g, columns[s0]] += wa * rows[s0]
            d1[g, columns[s1]] += (1.0 - wa) * rows[s1]
            touched[g, columns[s0]] |= rows[s0] != 0
            touched[g, columns[s1]] |= rows[s1] != 0
            prov.append("blended")
    # a boundary condition replaces the end rows, so blending them is meaningless
    if prov[0] == "blended" or prov[-1] == "blended":
        raise ValueError("a boundary node lies in two subdomains; blended rows cannot be boundary rows")
    return GlobalOperator(nodes, d1, tuple(prov), method, tuple(subs), tuple(columns), touched)


def _order_pair(sub_a: Subdomain, sub_b: Subdomain, spec: OverlapSpec):
    """Put the left subdomain first, carrying its weight with it."""
    if sub_b.left < sub_a.left or (sub_b.left == sub_a.left and sub_b.right < sub_a.right):
        return (sub_b, sub_a), [spec.weight_b, spec.weight_a], ["domainB", "domainA"]
    return (sub_a, sub_b), [spec.weight_a, spec.weight_b], ["domainA", "domainB"]


def _coincident_pairs(a: Subdomain, b: Subdomain, tol: float) -> list[tuple[int, int]]:
    ya, yb = a.phys_nodes, b.phys_nodes
    pairs = []
    for i, v in enumerate(ya):
        j = int(np.argmin(np.abs(yb - v)))
        if abs(yb[j] - v) <= tol:
            pairs.append((i, j))
    return pairs


def _pair_tol(a: Subdomain, b: Subdomain, spec: OverlapSpec) -> float:
    return spec.coincidence_tol * (max(a.right, b.right) - min(a.left, b.left))


def assemble_one_point(sub_a: Subdomain, sub_b: Subdomain, spec: OverlapSpec = OverlapSpec()) -> GlobalOperator:
    """Join two subdomains that share exactly one endpoint.

    The shared row is ``weight_a * (last row of A) + weight_b * (first row of B)``
    placed in merged columns; every other row is copied from its subdomain.
    """
    (a, b), w, tags = _order_pair(sub_a, sub_b, spec)
    tol = _pair_tol(a, b, spec)
    if abs(a.right - b.left) > tol:
        raise ValueError(f"interface mismatch: left subdomain ends at {a.right!r}, "
                         f"right subdomain starts at {b.left!r}")
    if len(_coincident_pairs(a, b, tol)) != 1:
        raise ValueError("one-point assembly needs exactly one shared node")
    return _assemble((a, b), spec, "one_point", taylor=False, weights=w, tags=tags)


def assemble_two_point(sub_a: Subdomain, sub_b: Subdomain, spec: OverlapSpec = OverlapSpec()) -> GlobalOperator:
    """Join two subdomains whose last two and first two nodes coincide."""
    (a, b), w, tags = _order_pair(sub_a, sub_b, spec)
    tol = _pair_tol(a, b, spec)
    pairs = _coincident_pairs(a, b, tol)
    if len(pairs) < 2:
        raise ValueError(f"two-point assembly needs two coincident node pairs, found {len(pairs)}")
    na = a.n_points
    if pairs != [(na - 2, 0), (na - 1, 1)]:
        raise ValueError(f"coincident nodes are not the contiguous end pairs: {pairs}")
    return _assemble((a, b), spec, "two_point", taylor=False, weights=w, tags=tags)


def assemble_pseudo_multipoint(sub_a: Subdomain, sub_b: Subdomain,
                               spec: OverlapSpec = OverlapSpec()) -> GlobalOperator:
    """Join overlapping subdomains that share exactly one node.

    Other overlap nodes interleave; each keeps its own subdomain's row, so the
    global matrix has an interleaved zero pattern across the overlap band.
    """
    (a, b), w, tags = _order_pair(sub_a, sub_b, spec)
    tol = _pair_tol(a, b, spec)
    if a.right - b.left <= tol:
        raise ValueError("pseudo multi-point assembly needs an overlap of positive width")
    pairs = _coincident_pairs(a, b, tol)
    if len(pairs) != 1:
        raise ValueError(f"pseudo multi-point assembly needs exactly one coincident pair, found {len(pairs)}")
    return _assemble((a, b), spec, "pseudo_multi", taylor=False, weights=w, tags=tags)


def assemble_taylor_multipoint(sub_a: Subdomain, sub_b: Subdomain,
                               spec: OverlapSpec = OverlapSpec()) -> GlobalOperator:
    """Join overlapping subdomains with Taylor donor rows in the overlap.

    A node owned by one subdomain and strictly inside the other gets
    ``weight_own * own_row + weight_donor * donor_row``, where the donor row
    is ``sum_k dy**k / k! * D^(k+1)[anchor]`` over ``k < taylor_terms`` and the
    anchor is the donor's nearest node to the left.
    """
    (a, b), w, tags = _order_pair(sub_a, sub_b, spec)
    count_a = np.count_nonzero((a.phys_nodes >= b.left) & (a.phys_nodes <= b.right))
    count_b = np.count_nonzero((b.phys_nodes >= a.left) & (b.phys_nodes <= a.right))
    if a.right <= b.left or count_a < 1 or count_b < 1:
        raise ValueError(f"overlap must have positive width and hold nodes of both subdomains, "
                         f"found {count_a} and {count_b}")
    return _assemble((a, b), spec, "taylor_multi", taylor=True, weights=w, tags=tags)


def multi_interval_subdomains(a: float, b: float, n_sub: int, nodes_per: int, delta: float,
                              max_order: int = 1) -> list[Subdomain]:
    """Linearly mapped subintervals of [a, b] overlapping by ``delta`` on each side."""
    if n_sub < 2:
        raise ValueError("n_sub must be >= 2")
    if nodes_per < 4:
        raise ValueError("nodes_per must be >= 4")
    if delta <= 0:
        raise ValueError("delta must be positive")
    width = (b - a) / n_sub
    if delta >= width:
        raise ValueError(f"delta={delta} must be smaller than the subinterval width {width}")
    if 2 * delta >= width:
        raise ValueError(f"delta={delta} makes non-adjacent subintervals overlap (need 2*delta < {width})")
    subs = []
    for i in range(n_sub):
        lo = a if i == 0 else a + i * width - delta
        hi = b if i == n_sub - 1 else a + (i + 1) * width + delta
        subs.append(make_subdomain(Mapping.linear(lo, hi), nodes_per, max_order))
    return subs


def assemble_multi_interval(a: float, b: float, n_sub: int, nodes_per: int, delta: float,
                            spec: OverlapSpec = OverlapSpec()) -> GlobalOperator:
    """Taylor-blended operator over ``n_sub`` overlapping subintervals of [a, b].

    Interior subintervals extend by ``delta`` on both sides, the outer ones on
    their inner side only. Each overlap node takes its donor row from the
    neighbouring subinterval, which is what a left-to-right chain of pairwise
    Taylor assemblies produces.
    """
    subs = multi_interval_subdomains(a, b, n_sub, nodes_per, delta, spec.taylor_terms)
    return _assemble(subs, spec, "multi_interval", taylor=True)


def assemble_subdomains(method: str, subs: Sequence[Subdomain], spec: OverlapSpec = OverlapSpec()) -> GlobalOperator:
    """Dispatch on method name for one or two subdomains.

    A single subdomain yields its own matrix unchanged (the global-map
    baseline).
    """
    if len(subs) == 1:
        (s,) = subs
        return GlobalOperator(s.phys_nodes.copy(), np.array(s.phys_diff[1]), ("domainA",) * s.n_points,
                              "global", (s,), (np.arange(s.n_points),))
    if method == "multi_interval":
        return _assemble(list(subs), spec, "multi_interval", taylor=True)
    if len(subs) != 2:
        raise ValueError(f"{method} joins exactly two subdomains, got {len(subs)}")
    funcs = {
        "one_point": assemble_one_point,
        "two_point": assemble_two_point,
        "pseudo_multi": assemble_pseudo_multipoint,
        "taylor_multi": assemble_taylor_multipoint,
    }
    if method not in funcs:
        raise ValueError(f"unknown assembly method {method!r}; expected one of {METHODS}")
    return funcs[method](subs[0], subs[1], spec)
