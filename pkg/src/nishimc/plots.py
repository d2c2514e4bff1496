"""SVG figures for analyze/pipeline runs.

SVGs are written without embedded dates so repeated runs stay
byte-identical.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "nishimc"  # deterministic element ids
import matplotlib.pyplot as plt
import numpy as np
from scipy import stats as sps

from .errors import IoError

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def emit_plots(report: dict, xi_samples, out_dir: str | Path) -> list[Path]:
    """Histogram + QQ plot of xi_12 and, when present, the concentration fit."""
    out_dir = Path(out_dir)
    written: list[Path] = []
    if xi_samples is None or len(xi_samples) == 0:
        warnings.warn("no xi samples; skipping plots")
        return written
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {out_dir}: {e}") from e
    xi = np.asarray(xi_samples, dtype=np.float64)
    sigma2 = report.get("ks_sigma2") or report.get("var_xi") or float(xi.var())
    sigma = np.sqrt(sigma2)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(xi, bins=40, density=True, alpha=0.6, label="samples")
    grid = np.linspace(xi.min(), xi.max(), 400)
    ax.plot(grid, sps.norm.pdf(grid, 0, sigma), "k-", label=f"N(0, {sigma2:.3g})")
    ax.set_xlabel(r"$\xi_{12}$")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = out_dir / "histogram.svg"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    written.append(path)

    n = xi.size
    quantiles = sps.norm.ppf((np.arange(1, n + 1) - 0.5) / n, 0, sigma)
    ordered = np.sort(xi)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(quantiles, ordered, ".", ms=3)
    lims = [min(quantiles[0], ordered[0]), max(quantiles[-1], ordered[-1])]
    ax.plot(lims, lims, "k--", lw=1)
    ax.set_xlabel("theory quantiles")
    ax.set_ylabel("sample quantiles")
    fig.tight_layout()
    path = out_dir / "qq.svg"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    written.append(path)

    conc = report.get("concentration")
    if conc and conc.get("slope2") is not None:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ns = np.asarray(conc["Ns"], dtype=np.float64)
        m2 = np.asarray(conc["mean_sq"], dtype=np.float64)
        ax.loglog(ns, m2, "o-", label=r"$\langle (q_{1*}-\bar q)^2\rangle$")
        ax.set_xlabel("N")
        ax.annotate(f"slope {conc['slope2']:.2f}", xy=(0.05, 0.1),
                    xycoords="axes fraction")
        ax.legend(frameon=False)
        fig.tight_layout()
        path = out_dir / "concentration.svg"
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)
        written.append(path)
    return written


def qq_max_deviation(xi_samples, sigma2: float) -> float:
    """Max |ordered sample - matched Gaussian quantile|, for automated checks."""
    xi = np.sort(np.asarray(xi_samples, dtype=np.float64))
    n = xi.size
    q = sps.norm.ppf((np.arange(1, n + 1) - 0.5) / n, 0, np.sqrt(sigma2))
    return float(np.max(np.abs(xi - q)))
