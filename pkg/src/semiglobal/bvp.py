"""Nonlinear boundary-value problems solved on assembled operators.

Two model problems with closed-form solutions:

* a tanh front ``U'' = (U - U^2)(1 - 2U) / theta^2`` on [0, L] with Dirichlet
  ends, whose solution rises from 0 to 1 across ``y = 1``;
* the stationary viscous Burgers equation ``nu u'' - u u' = 0`` on [0, 1] with
  Robin ends, whose solution is a tanh layer centred at ``x = 1/2``.

Newton steps use a truncated SVD of the row-equilibrated Jacobian. Both
problems are translation-invariant up to exponentially small boundary
effects, so the Jacobian carries one near-null mode that moves the layer. A
plain LU step amplifies roundoff along that mode and drifts the layer; the
truncated solve returns the minimum-norm step instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.optimize import brentq
from scipy.special import expit

from .overlap import GlobalOperator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TanhProblem:
    """Front of width ``theta`` at ``interface_loc`` on [0, domain_truncation]."""

    theta: float = 0.02
    domain_truncation: float = 10.0
    interface_loc: float = 1.0

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.domain_truncation <= self.interface_loc:
            raise ValueError("domain_truncation must exceed interface_loc")


@dataclass(frozen=True)
class BurgersProblem:
    """Stationary Burgers equation with Robin data ``alpha_bc`` and ``kappa``."""

    nu: float = 5e-3
    alpha_bc: float = 1.0
    kappa: float = 2.0

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


@dataclass
class NewtonReport:
    """Outcome of a Newton solve.

    Attributes
    ----------
    solution : ndarray
        Final iterate on the operator nodes.
    residual_history : ndarray
        Max-norm residual before the first step and after every step.
    iterations : int
        Number of Newton steps taken.
    converged : bool
        Whether the final residual is at or below the tolerance.
    """

    solution: np.ndarray
    residual_history: np.ndarray
    iterations: int
    converged: bool
    message: str = ""
    truncated_modes: list = field(default_factory=list)


def tanh_exact(y, theta: float):
    """``(1 + tanh((y - 1) / (2 theta))) / 2``, evaluated without cancellation."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    return expit((np.asarray(y, dtype=float) - 1.0) / theta)


def _burgers_beta_eq(beta: float, nu: float, alpha_bc: float, kappa: float) -> float:
    z = beta / (4 * nu)
    # sech^2 via exp keeps large arguments from overflowing
    sech2 = 4.0 / (np.exp(z) + np.exp(-z)) ** 2 if abs(z) < 700 else 0.0
    return -0.5 * beta**2 * sech2 + kappa * (alpha_bc - beta * np.tanh(z))


def burgers_beta(nu: float, alpha_bc: float, kappa: float, tol: float = 1e-12) -> float:
    """Layer amplitude ``beta`` fixed by the Robin conditions.

    Solves ``-beta^2 sech^2(beta/4nu)/2 + kappa (alpha - beta tanh(beta/4nu)) = 0``
    with Brent's method on the bracket between 0 and ``2 alpha``.
    """
    if nu <= 0 or kappa <= 0:
        raise ValueError("nu and kappa must be positive")
    if alpha_bc == 0:
        return 0.0
    lo, hi = sorted((0.0, 2.0 * alpha_bc))
    f = lambda b: _burgers_beta_eq(b, nu, alpha_bc, kappa)  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError(f"no sign change on [{lo}, {hi}]: f={flo:.3e}, {fhi:.3e}")
    beta = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
    if abs(f(beta)) > tol:
        raise ValueError(f"root residual {abs(f(beta)):.3e} exceeds tol {tol}")
    return float(beta)


def burgers_exact(x, nu: float, beta: float):
    """``-beta tanh(beta (x - 1/2) / (2 nu))``."""
    return -beta * np.tanh(0.5 * beta / nu * (np.asarray(x, dtype=float) - 0.5))


def error_norms(num, exact) -> tuple[float, float]:
    """Max-abs and root-mean-square difference."""
    num = np.asarray(num, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if num.shape != exact.shape:
        raise ValueError(f"length mismatch: {num.shape} vs {exact.shape}")
    if num.size == 0:
        return 0.0, 0.0
    diff = num - exact
    return float(np.max(np.abs(diff))), float(np.sqrt(np.mean(diff**2)))


def _check_span(op: GlobalOperator, lo: float, hi: float) -> None:
    scale = max(1.0, abs(hi - lo))
    if abs(op.nodes[0] - lo) > 1e-9 * scale or abs(op.nodes[-1] - hi) > 1e-9 * scale:
        raise ValueError(f"operator spans [{op.nodes[0]}, {op.nodes[-1]}], expected [{lo}, {hi}]")


def tanh_residual(op: GlobalOperator, p: TanhProblem, u: np.ndarray) -> np.ndarray:
    """Discrete residual with Dirichlet rows at both ends."""
    d2 = op.derivative(2)
    f = d2 @ u + (u - u * u) * (2 * u - 1) / p.theta**2
    f[0] = u[0] - tanh_exact(op.nodes[0], p.theta)
    f[-1] = u[-1] - tanh_exact(op.nodes[-1], p.theta)
    return f


def tanh_jacobian(op: GlobalOperator, p: TanhProblem, u: np.ndarray) -> np.ndarray:
    j = op.derivative(2) - np.diag(6 * u * u - 6 * u + 1) / p.theta**2
    j[0] = 0.0
    j[0, 0] = 1.0
    j[-1] = 0.0
    j[-1, -1] = 1.0
    return j


def burgers_residual(op: GlobalOperator, p: BurgersProblem, u: np.ndarray) -> np.ndarray:
    """Discrete residual with Robin rows at both ends."""
    d1 = op.d1
    du = d1 @ u
    f = p.nu * (op.derivative(2) @ u) - u * du
    f[0] = p.nu * du[0] - p.kappa * (u[0] - p.alpha_bc)
    f[-1] = p.nu * du[-1] + p.kappa * (u[-1] + p.alpha_bc)
    return f


def burgers_jacobian(op: GlobalOperator, p: BurgersProblem, u: np.ndarray) -> np.ndarray:
    d1 = op.d1
    j = p.nu * op.derivative(2) - np.diag(d1 @ u) - u[:, None] * d1
    j[0] = p.nu * d1[0]
    j[0, 0] -= p.kappa
    j[-1] = p.nu * d1[-1]
    j[-1, -1] += p.kappa
    return j


def _step(jac: np.ndarray, rhs: np.ndarray, solver: str, rcond: float) -> tuple[np.ndarray, int]:
    """Solve ``jac @ du = rhs``; returns the step and the number of dropped modes."""
    scale = np.max(np.abs(jac), axis=1)
    if np.any(scale == 0):
        raise np.linalg.LinAlgError("Jacobian has an all-zero row")
    js = jac / scale[:, None]
    bs = rhs / scale
    if solver == "lu":
        return np.linalg.solve(js, bs), 0
    if solver != "tsvd":
        raise ValueError(f"unknown linear solver {solver!r}")
    u, s, vt = np.linalg.svd(js)
    keep = s > rcond * s[0]
    if not np.any(keep):
        raise np.linalg.LinAlgError("Jacobian is numerically zero")
    coef = (u[:, keep].T @ bs) / s[keep]
    return vt[keep].T @ coef, int(np.count_nonzero(~keep))


def newton(residual: Callable[[np.ndarray], np.ndarray], jacobian: Callable[[np.ndarray], np.ndarray],
           guess: np.ndarray, tol: float = 1e-8, max_iter: int = 30, solver: str = "tsvd",
           rcond: float = 1e-10, max_halvings: int = 20, step_tol: float = 1e-13) -> NewtonReport:
    """Damped Newton iteration on ``residual(u) = 0``.

    At least one step is always taken so that an exact initial guess is
    replaced by the discrete solution. Each step is halved until the max-norm
    residual decreases (at most ``max_halvings`` times). Iteration stops when
    the accepted step is below ``step_tol * max(1, |u|)``, when no damped step
    lowers the residual, or after ``max_iter`` steps. The solve counts as
    converged when the final residual is at or below ``tol``.
    """
    u = np.array(guess, dtype=float)
    r = residual(u)
    hist = [float(np.max(np.abs(r)))]
    dropped: list[int] = []
    it = 0
    while it < max_iter:
        try:
            du, nd = _step(jacobian(u), -r, solver, rcond)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular Jacobian at iteration {it}: {exc}") from exc
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = u + lam * du
            r_trial = residual(trial)
            norm = float(np.max(np.abs(r_trial)))
            if np.isfinite(norm) and norm < hist[-1]:
                break
            lam *= 0.5
        else:
            break
        dropped.append(nd)
        u, r = trial, r_trial
        hist.append(norm)
        it += 1
        if lam * np.max(np.abs(du)) <= step_tol * max(1.0, float(np.max(np.abs(u)))):
            break
    converged = hist[-1] <= tol
    msg = "" if converged else f"residual {hist[-1]:.3e} above tolerance {tol:.1e} after {it} iterations"
    logger.debug("newton: %d iterations, residual %.3e", it, hist[-1])
    return NewtonReport(u, np.array(hist), it, converged, msg, dropped)


def solve_tanh(op: GlobalOperator, p: TanhProblem = TanhProblem(), guess: np.ndarray | None = None,
               tol: float = 1e-8, max_iter: int = 30, solver: str = "tsvd") -> NewtonReport:
    """Newton solve of the tanh front problem on ``op``.

    The default guess is the closed-form solution sampled on the nodes.
    """
    _check_span(op, 0.0, p.domain_truncation)
    if guess is None:
        guess = tanh_exact(op.nodes, p.theta)
    if len(guess) != op.size:
        raise ValueError(f"guess has {len(guess)} entries, operator has {op.size} nodes")
    return newton(lambda u: tanh_residual(op, p, u), lambda u: tanh_jacobian(op, p, u),
                  guess, tol, max_iter, solver)


def burgers_guess(x, p: BurgersProblem):
    """Closed-form profile with ``beta`` replaced by ``alpha``."""
    return burgers_exact(x, p.nu, p.alpha_bc)


def solve_burgers(op: GlobalOperator, p: BurgersProblem = BurgersProblem(), guess: np.ndarray | None = None,
                  tol: float = 1e-8, max_iter: int = 30, solver: str = "tsvd") -> NewtonReport:
    """Newton solve of the stationary Burgers problem on ``op`` (nodes on [0, 1])."""
    _check_span(op, 0.0, 1.0)
    if guess is None:
        guess = burgers_guess(op.nodes, p)
    if len(guess) != op.size:
        raise ValueError(f"guess has {len(guess)} entries, operator has {op.size} nodes")
    return newton(lambda u: burgers_residual(op, p, u), lambda u: burgers_jacobian(op, p, u),
                  guess, tol, max_iter, solver)


def _local_derivative_at(op: GlobalOperator, s: int, u: np.ndarray, order: int, point: float):
    sub = op.subdomains[s]
    vals = sub.derivative(order) @ op.restrict(u, s)
    x0 = sub.mapping.inverse(point)
    return float(BarycentricInterpolator(sub.ref_nodes, vals)(x0)), vals


def derivative_jump(op: GlobalOperator, u, order: int, interface: float) -> float:
    """Relative mismatch of the ``order``-th derivative across an overlap.

    Each neighbouring subdomain differentiates its own nodal values and
    interpolates the result to ``interface``. The absolute difference is
    divided by the largest nodal magnitude of that derivative over both
    subdomains.
    """
    u = np.asarray(u, dtype=float)
    if order < 1:
        raise ValueError("order must be >= 1")
    subs = op.subdomains
    tol = 1e-12 * (op.nodes[-1] - op.nodes[0])
    pair = None
    for s in range(len(subs) - 1):
        lo, hi = subs[s + 1].left, subs[s].right
        if lo - tol <= interface <= hi + tol:
            pair = s
            break
    if pair is None:
        raise ValueError(f"interface {interface} is not inside any overlap region")
    pt = float(np.clip(interface, subs[pair + 1].left, subs[pair].right))
    va, vals_a = _local_derivative_at(op, pair, u, order, pt)
    vb, vals_b = _local_derivative_at(op, pair + 1, u, order, pt)
    scale = max(np.max(np.abs(vals_a)), np.max(np.abs(vals_b)))
    if scale == 0:
        return 0.0
    return abs(va - vb) / scale
