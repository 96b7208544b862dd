"""Figure rendering for the command-line reports (matplotlib, file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="png", dpi=120, metadata=_META)
    plt.close(fig)


def solution_figure(path: Path, nodes, numeric, exact=None, title: str = "") -> None:
    """Solution on the left, pointwise error (log scale) on the right."""
    ncols = 1 if exact is None else 2
    fig, axes = plt.subplots(1, ncols, figsize=(5 * ncols, 3.6), squeeze=False)
    ax = axes[0, 0]
    ax.plot(nodes, numeric, ".-", ms=3, lw=0.8, label="numeric")
    if exact is not None:
        ax.plot(nodes, exact, "-", lw=0.8, alpha=0.7, label="exact")
        err = np.abs(np.asarray(numeric) - np.asarray(exact))
        axes[0, 1].semilogy(nodes, np.maximum(err, 1e-17), ".", ms=3)
        axes[0, 1].set_xlabel("y")
        axes[0, 1].set_ylabel("|error|")
    ax.set_xlabel("y")
    ax.legend(frameon=False)
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def convergence_figure(path: Path, rows: list[dict]) -> None:
    """Max error against total node count, one curve per Taylor-term count."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for terms in sorted({r["taylor_terms"] for r in rows}):
        sel = sorted((r for r in rows if r["taylor_terms"] == terms), key=lambda r: r["N"])
        ax.semilogy([r["N"] for r in sel], [max(r["max_abs_error"], 1e-17) for r in sel], "o-",
                    ms=3, label=f"n = {terms}")
    ax.set_xlabel("N")
    ax.set_ylabel("max |error|")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def pattern_figure(path: Path, pattern: list[tuple[int, int]], size: int, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    if pattern:
        rows, cols = np.array(pattern).T
        ax.plot(cols, rows, "s", ms=max(0.5, 160 / max(size, 1)), color="k")
    ax.set_xlim(-0.5, size - 0.5)
    ax.set_ylim(size - 0.5, -0.5)
    ax.set_aspect("equal")
    ax.set_title(f"{title} nz = {len(pattern)}")
    fig.tight_layout()
    _save(fig, path)


def baseflow_figure(path: Path, r, v, dv, c) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(r, v, label="v")
    ax.plot(r, dv, label="dv/dr")
    ax.plot(r, c, "--", label="c")
    ax.set_xlabel("r")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def spectrum_figure(path: Path, omegas) -> None:
    w = np.asarray(omegas, dtype=complex)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(w.real, w.imag, "o", ms=3, mfc="none")
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel("Re(omega)")
    ax.set_ylabel("Im(omega)")
    fig.tight_layout()
    _save(fig, path)
