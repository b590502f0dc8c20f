"""Matplotlib figure rendering for the report-producing CLI paths.

Every report CSV has a figure twin rendered next to it: hitting-time CDFs
with percentile bands, synthesized certificates (value and generator
views), decrease-probability fields with the minimum marked, and the
margin trace of the alternating synthesis. Figures are presentation
artifacts; the CSV/JSON files remain the canonical outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .polyalg import Polynomial
from .sdemodel import SdeSystem, generator_apply
from .simulate import DecreaseField, HittingCdf
from .sosbuild import DriftCertificate, TraceEntry


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_hitting_cdf(cdf: HittingCdf, path, label: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    h = np.asarray(cdf.horizons)
    ax.plot(h, cdf.p_mean, "-o", color="tab:blue", label=label or "empirical")
    ax.fill_between(h, cdf.p10, cdf.p90, alpha=0.25, color="tab:blue",
                    label="10-90% band")
    ax.set_xlabel("horizon t")
    ax.set_ylabel(r"$\mathbb{P}(\tau \leq t)$")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    return _save(fig, path)


def render_eps_trace(trace: list[TraceEntry], path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    lams = sorted({t.lam for t in trace})
    for lam in lams:
        entries = [t for t in trace if t.lam == lam and t.step == "multiplier"]
        xs = [t.iteration for t in entries]
        ys = [t.eps for t in entries]
        ax.plot(xs, ys, "-o", label=f"$\\lambda$ = {lam:g}")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("margin $\\varepsilon$")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def render_decrease_field(field: DecreaseField, path) -> Path:
    n = field.points.shape[1]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if n == 1:
        x = field.points[:, 0]
        order = np.argsort(x)
        ax.errorbar(x[order], field.estimates[order], yerr=field.stderrs[order],
                    fmt="o-", ms=3, lw=1, capsize=2)
        ax.plot(field.minimum_point[0], field.minimum_estimate, "r*", ms=14,
                label="minimum")
        ax.set_xlabel("x")
        ax.set_ylabel("decrease probability")
    else:
        sc = ax.scatter(field.points[:, 0], field.points[:, 1], c=field.estimates,
                        cmap="viridis", s=22)
        ax.plot(field.minimum_point[0], field.minimum_point[1], "r*", ms=16,
                label="minimum")
        fig.colorbar(sc, ax=ax, label="decrease probability")
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
    ax.grid(alpha=0.3)
    ax.legend(loc="best")
    return _save(fig, path)


def render_drift_certificate(
    sys: SdeSystem, cert: DriftCertificate, path, halfwidth: float | None = None
) -> Path:
    av = generator_apply(sys, cert.V)
    if halfwidth is None:
        halfwidth = max(2.0 * cert.compact_radius, 2.0)
    if sys.n == 1:
        xs = np.linspace(-halfwidth, halfwidth, 400)
        pts = xs[:, None]
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        axes[0].plot(xs, cert.V.eval_batch(pts))
        axes[0].set_title("drift certificate V")
        axes[1].plot(xs, av.eval_batch(pts))
        axes[1].axhline(0.0, color="k", lw=0.8)
        for r in (-cert.compact_radius, cert.compact_radius):
            axes[1].axvline(r, color="tab:red", ls="--", lw=0.8)
        axes[1].set_title("generator of V (dashed: compact radius)")
        for ax in axes:
            ax.set_xlabel("x")
            ax.grid(alpha=0.3)
    elif sys.n == 2:
        xs = np.linspace(-halfwidth, halfwidth, 160)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        V = cert.V.eval_batch(pts).reshape(X.shape)
        AV = av.eval_batch(pts).reshape(X.shape)
        fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
        cs0 = axes[0].contourf(X, Y, V, levels=24, cmap="viridis")
        fig.colorbar(cs0, ax=axes[0])
        axes[0].set_title("drift certificate V")
        cs1 = axes[1].contourf(X, Y, AV, levels=24, cmap="coolwarm")
        axes[1].contour(X, Y, AV, levels=[0.0], colors="k", linewidths=1.2)
        fig.colorbar(cs1, ax=axes[1])
        axes[1].set_title("generator of V with zero contour")
        for ax in axes:
            ax.set_xlabel("$x_1$")
            ax.set_ylabel("$x_2$")
    else:
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.text(0.5, 0.5, f"no plot for state dimension {sys.n}",
                ha="center", va="center")
        ax.set_axis_off()
    return _save(fig, path)
