"""Temporal linear stability of miscible core-annular pipe flow.

The base state has an erf concentration profile ``c(r)`` centred at the
interface radius ``a`` with width ``delta``, a viscosity ``exp(M c)`` and an
axial velocity from the fully developed momentum balance. Normal-mode
perturbations ``q(r) exp(i (k z + m theta - omega t))`` give a generalized
eigenproblem ``A q = omega B q`` for the five fields
``(v_r, v_theta, v_z, p, c)`` stacked block by block.

The azimuthal, axial, pressure and concentration amplitudes are scaled by
``-i`` relative to the physical ones, which makes every coefficient except
the viscous terms real.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import BarycentricInterpolator
from scipy.special import erf

from .chebcore import Mapping, make_subdomain
from .geometry import one_point_pair, symmetric_overlap_pair, two_point_pair
from .overlap import GlobalOperator, OverlapSpec, assemble_subdomains

logger = logging.getLogger(__name__)

FIELDS = ("v_r", "v_theta", "v_z", "p", "c")


@dataclass(frozen=True)
class FlowParams:
    """Dimensionless parameters of the stability problem.

    Attributes
    ----------
    reynolds, peclet : float
        Reynolds and Peclet numbers.
    visc_log_ratio : float
        ``M = ln(mu_1 / mu_2)``; viscosity is ``exp(M c)``.
    schmidt : float, optional
        ``Pe / Re``; computed when omitted, checked when given.
    interface_loc, interface_width : float
        Centre ``a`` and width ``delta`` of the concentration profile.
    axial_wavenumber : complex
        Axial wavenumber ``k``.
    azimuthal_wavenumber : int
        Azimuthal wavenumber ``m``. Negative values are accepted; the
        spectrum is even in ``m``.
    """

    reynolds: float = 100.0
    peclet: float = 100.0
    visc_log_ratio: float = 1.0
    schmidt: float | None = None
    interface_loc: float = 0.6
    interface_width: float = 0.02
    axial_wavenumber: complex = 1.0
    azimuthal_wavenumber: int = 0

    def __post_init__(self):
        if self.reynolds <= 0 or self.peclet <= 0:
            raise ValueError("reynolds and peclet must be positive")
        sc = self.peclet / self.reynolds
        if self.schmidt is None:
            object.__setattr__(self, "schmidt", sc)
        elif abs(self.schmidt * self.reynolds - self.peclet) > 1e-12 * self.peclet:
            raise ValueError(f"schmidt*reynolds={self.schmidt * self.reynolds} does not match peclet={self.peclet}")
        if self.interface_width <= 0:
            raise ValueError("interface_width must be positive")
        a, d = self.interface_loc, self.interface_width
        if not (0 < a - 3 * d and a + 3 * d < 1):
            raise ValueError(f"interface {a} +/- 3*{d} must lie inside (0, 1)")
        if int(self.azimuthal_wavenumber) != self.azimuthal_wavenumber:
            raise ValueError("azimuthal_wavenumber must be an integer")
        object.__setattr__(self, "azimuthal_wavenumber", int(self.azimuthal_wavenumber))


@dataclass
class BaseState:
    """Base profiles on the radial nodes."""

    nodes: np.ndarray
    c_bar: np.ndarray
    dc_bar: np.ndarray
    mu_bar: np.ndarray
    v_bar: np.ndarray
    dv_bar: np.ndarray
    d2v_bar: np.ndarray
    pressure_gradient: float
    residual: float


@dataclass
class EigenSystem:
    """Generalized eigenproblem ``mat_a q = omega mat_b q``."""

    mat_a: np.ndarray
    mat_b: np.ndarray
    n_nodes: int
    bc_rows: dict = field(default_factory=dict)


def base_concentration(r, a: float, delta: float):
    """``0.5 + 0.5 erf((r - a) / delta)``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return 0.5 + 0.5 * erf((np.asarray(r, dtype=float) - a) / delta)


def base_concentration_slope(r, a: float, delta: float):
    """Analytic radial derivative of :func:`base_concentration`."""
    z = (np.asarray(r, dtype=float) - a) / delta
    return np.exp(-z * z) / (delta * np.sqrt(np.pi))


def viscosity(c, m: float):
    """``exp(m c)``, viscosity relative to the annular fluid."""
    return np.exp(m * np.asarray(c, dtype=float))


def radial_operator(params: FlowParams, n_points: int, method: str = "two_point", overlap_scale: float = 2.5,
                    taylor_terms: int = 5) -> GlobalOperator:
    """Two-subdomain operator on [0, 1] with nodes clustered at the interface.

    ``two_point`` joins coincident linear maps whose junction is the grid
    point nearest ``interface_loc``; ``n_points`` sets the inner subdomain and
    the outer one is sized to put the junction there. ``taylor_multi`` uses
    [0, a + s delta] and [a - s delta, 1] with ``s = overlap_scale``.
    """
    a, d = params.interface_loc, params.interface_width
    if method == "two_point":
        subs = two_point_pair(0.0, 1.0, n_points, split=a)
    elif method == "one_point":
        subs = one_point_pair(0.0, a, 1.0, n_points)
    elif method == "taylor_multi":
        subs = [make_subdomain(Mapping.linear(0.0, a + overlap_scale * d), n_points, taylor_terms),
                make_subdomain(Mapping.linear(a - overlap_scale * d, 1.0), n_points, taylor_terms)]
    elif method == "taylor_symmetric":
        subs = symmetric_overlap_pair(0.0, a, 1.0, n_points, 5, taylor_terms)
        method = "taylor_multi"
    else:
        raise ValueError(f"unsupported radial grid method {method!r}")
    return assemble_subdomains(method, subs, OverlapSpec(taylor_terms=taylor_terms))


def _check_radial(op: GlobalOperator) -> None:
    if abs(op.nodes[0]) > 1e-12 or abs(op.nodes[-1] - 1.0) > 1e-12:
        raise ValueError(f"radial operator must span [0, 1], got [{op.nodes[0]}, {op.nodes[-1]}]")


def momentum_residual(op: GlobalOperator, base: BaseState, params: FlowParams) -> np.ndarray:
    """Base momentum residual on interior nodes."""
    r = op.nodes[1:-1]
    v = base.v_bar
    lhs = base.mu_bar * (op.derivative(2) @ v + (op.d1 @ v) * _inv(op.nodes)
                         + params.visc_log_ratio * base.dc_bar * (op.d1 @ v))
    return (lhs - base.pressure_gradient)[1:-1] if len(r) else np.zeros(0)


def _inv(r: np.ndarray) -> np.ndarray:
    """``1 / r`` with the axis entry set to 0; axis rows are always replaced."""
    out = np.zeros_like(r)
    out[1:] = 1.0 / r[1:]
    return out


def solve_base_flow(op: GlobalOperator, params: FlowParams, max_condition: float = 1e12) -> BaseState:
    """Axial base velocity with unit centreline speed.

    Solves ``mu (v'' + v'/r + M c' v') = G`` with ``v'(0) = 0`` and
    ``v(1) = 0``, then scales the constant pressure gradient ``G`` so that
    ``v(0) = 1``. Raises ``ValueError`` when the row-equilibrated system has
    a condition number above ``max_condition``.
    """
    _check_radial(op)
    r = op.nodes
    d1, d2 = op.d1, op.derivative(2)
    m = params.visc_log_ratio
    c = base_concentration(r, params.interface_loc, params.interface_width)
    dc = base_concentration_slope(r, params.interface_loc, params.interface_width)
    mu = viscosity(c, m)
    mat = mu[:, None] * (d2 + _inv(r)[:, None] * d1 + (m * dc)[:, None] * d1)
    rhs = np.ones(len(r))
    mat[0] = d1[0]
    rhs[0] = 0.0
    mat[-1] = 0.0
    mat[-1, -1] = 1.0
    rhs[-1] = 0.0
    # Taylor-blended operators without a shared node annihilate functions that
    # are constant on each subdomain separately; with a Neumann axis row the
    # system then has a second null vector and solve() returns noise
    cond = np.linalg.cond(mat / np.max(np.abs(mat), axis=1)[:, None])
    if not cond < max_condition:
        raise ValueError(f"base-flow system is singular (condition number {cond:.1e})")
    v = np.linalg.solve(mat, rhs)
    if v[0] == 0:
        raise ValueError("base flow has zero centreline velocity")
    g = 1.0 / v[0]
    v = v * g
    base = BaseState(r.copy(), c, dc, mu, v, d1 @ v, d2 @ v, float(g), 0.0)
    res = momentum_residual(op, base, params)
    base.residual = float(np.max(np.abs(res))) if res.size else 0.0
    return base


def flow_rate(op: GlobalOperator, v: np.ndarray) -> float:
    """``integral_0^1 v r dr`` by Clenshaw-Curtis quadrature.

    The interval is cut at the middle of each overlap; on each piece the
    owning subdomain's interpolant of ``v r`` is sampled on a Chebyshev grid
    of the same size and integrated.
    """
    subs = op.subdomains
    cuts = [subs[0].left]
    for s in range(len(subs) - 1):
        cuts.append(0.5 * (subs[s].right + subs[s + 1].left))
    cuts.append(subs[-1].right)
    total = 0.0
    for s, sub in enumerate(subs):
        lo, hi = cuts[s], cuts[s + 1]
        vals = op.restrict(v, s) * sub.phys_nodes
        interp = BarycentricInterpolator(sub.ref_nodes, vals)
        x, w = clenshaw_curtis(sub.n_points)
        y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        xi = np.array([sub.mapping.inverse(float(t)) for t in np.clip(y, sub.left, sub.right)])
        total += 0.5 * (hi - lo) * float(w @ interp(xi))
    return total


def clenshaw_curtis(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Lobatto nodes ``cos(j pi / N)`` and Clenshaw-Curtis weights on [-1, 1]."""
    n = n_points - 1
    theta = np.pi * np.arange(n_points) / n
    x = np.cos(theta)
    w = np.zeros(n_points)
    v = np.ones(n_points - 2)
    inner = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n * theta[inner]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2 * v / n
    return x, w


def assemble_eigensystem(op: GlobalOperator, base: BaseState, params: FlowParams) -> EigenSystem:
    """Discretize the perturbation equations and impose boundary rows.

    Row blocks are continuity, radial, azimuthal and axial momentum, and
    concentration; column blocks follow :data:`FIELDS`. At the wall the four
    non-continuity blocks become no-slip and ``c = 0``. At the axis the rows
    depend on ``|m|``: 0 gives ``v_z' = v_r = v_theta = p' = c' = 0``, 1 gives
    ``v_z = 0``, ``v_r + sgn(m) v_theta = 0``, ``2 v_r' + sgn(m) v_theta' = 0``,
    ``p = c = 0``, and larger ``|m|`` sets every field to zero.
    """
    _check_radial(op)
    if len(base.nodes) != op.size or np.max(np.abs(base.nodes - op.nodes)) > 1e-13:
        raise ValueError("base state and operator nodes differ")
    n = op.size
    re, pe, mv = params.reynolds, params.peclet, params.visc_log_ratio
    k = complex(params.axial_wavenumber)
    m = params.azimuthal_wavenumber
    d1, d2 = op.d1, op.derivative(2)
    eye = np.eye(n)
    r1 = np.diag(_inv(op.nodes))
    r2 = r1 @ r1
    dg = np.diag
    vel, dv, d2v = base.v_bar, base.dv_bar, base.d2v_bar
    cp = base.dc_bar
    imu = 1j * dg(base.mu_bar)
    lap_r = d2 + r1 @ d1 - ((m * m + 1) * r2 + k * k * eye)
    lap_z = d2 + r1 @ d1 - (m * m * r2 + k * k * eye)
    adv = re * k * dg(vel)

    a_mat = np.zeros((5 * n, 5 * n), dtype=complex)
    b_mat = np.zeros_like(a_mat)

    def blk(i, j):
        return slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n)

    # continuity
    a_mat[blk(0, 0)] = d1 + r1
    a_mat[blk(0, 1)] = m * r1
    a_mat[blk(0, 2)] = k * eye
    # radial momentum
    a_mat[blk(1, 0)] = adv + imu @ (lap_r + 2 * mv * dg(cp) @ d1)
    a_mat[blk(1, 1)] = imu @ (-2 * m * r2)
    a_mat[blk(1, 3)] = -d1
    a_mat[blk(1, 4)] = imu @ (mv * k * dg(dv))
    b_mat[blk(1, 0)] = re * eye
    # azimuthal momentum
    a_mat[blk(2, 1)] = adv + imu @ (lap_r + mv * dg(cp) @ (d1 - r1))
    a_mat[blk(2, 0)] = imu @ (-2 * m * r2 - mv * m * dg(cp) @ r1)
    a_mat[blk(2, 3)] = m * r1
    b_mat[blk(2, 1)] = re * eye
    # axial momentum
    a_mat[blk(3, 2)] = adv + imu @ (lap_z + mv * dg(cp) @ d1)
    a_mat[blk(3, 0)] = re * dg(dv) - imu @ (mv * k * dg(cp))
    a_mat[blk(3, 3)] = k * eye
    a_mat[blk(3, 4)] = imu @ (mv * dg(dv) @ d1 + mv * dg(d2v + dv * _inv(op.nodes) + mv * cp * dv))
    b_mat[blk(3, 2)] = re * eye
    # concentration
    a_mat[blk(4, 4)] = pe * k * dg(vel) + 1j * lap_z
    a_mat[blk(4, 0)] = pe * dg(cp)
    b_mat[blk(4, 4)] = pe * eye

    bc_rows: dict[int, str] = {}
    e0 = eye[0]
    en = eye[-1]

    def setrow(row, terms, label):
        a_mat[row] = 0.0
        b_mat[row] = 0.0
        for f, vec in terms:
            a_mat[row, f * n:(f + 1) * n] += vec
        bc_rows[row] = label

    for eq, f in ((1, 0), (2, 1), (3, 2), (4, 4)):
        setrow(eq * n + n - 1, [(f, en)], f"wall {FIELDS[f]} = 0")
    sgn = 1 if m > 0 else -1
    if m == 0:
        setrow(3 * n, [(2, d1[0])], "axis v_z' = 0")
        setrow(1 * n, [(0, e0)], "axis v_r = 0")
        setrow(2 * n, [(1, e0)], "axis v_theta = 0")
        setrow(0, [(3, d1[0])], "axis p' = 0")
        setrow(4 * n, [(4, d1[0])], "axis c' = 0")
    elif abs(m) == 1:
        setrow(3 * n, [(2, e0)], "axis v_z = 0")
        setrow(1 * n, [(0, e0), (1, sgn * e0)], "axis v_r + sgn(m) v_theta = 0")
        setrow(2 * n, [(0, 2 * d1[0]), (1, sgn * d1[0])], "axis 2 v_r' + sgn(m) v_theta' = 0")
        setrow(0, [(3, e0)], "axis p = 0")
        setrow(4 * n, [(4, e0)], "axis c = 0")
    else:
        for eq, f in ((3, 2), (1, 0), (2, 1), (0, 3), (4, 4)):
            setrow(eq * n, [(f, e0)], f"axis {FIELDS[f]} = 0")
    return EigenSystem(a_mat, b_mat, n, bc_rows)


def solve_spectrum(sys: EigenSystem, max_abs: float = 1e6) -> list[tuple[complex, np.ndarray]]:
    """Finite generalized eigenpairs sorted by descending growth rate.

    Eigenvalues that are infinite or exceed ``max_abs`` in magnitude come
    from the singular mass matrix and are dropped.
    """
    try:
        w, vecs = sla.eig(sys.mat_a, sys.mat_b)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"eigensolver failed: {exc}") from exc
    ok = np.isfinite(w) & (np.abs(w) < max_abs)
    w, vecs = w[ok], vecs[:, ok]
    order = np.lexsort((w.real, -w.imag))
    return [(complex(w[i]), vecs[:, i]) for i in order]


def eigen_residual(sys: EigenSystem, omega: complex, vec: np.ndarray) -> float:
    """``|A q - omega B q| / (|A| |q|)`` in the 2-norm (Frobenius for ``A``)."""
    res = sys.mat_a @ vec - omega * (sys.mat_b @ vec)
    return float(np.linalg.norm(res) / (np.linalg.norm(sys.mat_a) * np.linalg.norm(vec)))


def filter_spurious(eigs: list, threshold: float = 1e3, n_fields: int = len(FIELDS),
                    edge_fraction: float = 0.99) -> list:
    """Drop eigenpairs that are too large or live on the boundary nodes.

    A pair is removed when ``|omega| > threshold`` or when more than
    ``edge_fraction`` of its eigenvector energy sits on the two nodes at each
    end of the field blocks.
    """
    kept = []
    for omega, vec in eigs:
        if abs(omega) > threshold:
            continue
        vec = np.asarray(vec)
        if vec.size and vec.size % n_fields == 0:
            n = vec.size // n_fields
            energy = np.abs(vec.reshape(n_fields, n)) ** 2
            edge = energy[:, :2].sum() + energy[:, -2:].sum() if n > 4 else 0.0
            total = energy.sum()
            if total > 0 and edge > edge_fraction * total:
                continue
        kept.append((omega, vec))
    return kept
