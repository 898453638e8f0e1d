"""Figure rendering from emitted CSV reports.

The CSV files are the data contract; this module reads them back like
any downstream consumer would and saves matplotlib figures next to
them.  Only invoked behind the CLI --plots flag, so importing the
package never pulls in matplotlib.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from typing import Dict, List, Optional


def _load_rows(csv_path: str) -> List[Dict[str, str]]:
    with open(csv_path, newline="") as fh:
        return list(csv.DictReader(fh))


def _floats(rows, key, where=None) -> List[float]:
    out = []
    for row in rows:
        if where is not None and not where(row):
            continue
        val = row.get(key, "")
        if val not in ("", None):
            out.append(float(val))
    return out


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_plots(kind: str, csv_path: str,
                 out_dir: Optional[str] = None) -> List[str]:
    """Render the figures defined for `kind` from one CSV; returns paths."""
    out_dir = out_dir or os.path.dirname(csv_path) or "."
    rows = _load_rows(csv_path)
    if not rows:
        return []
    renderer = _RENDERERS.get(kind)
    if renderer is None:
        return []
    return renderer(rows, out_dir)


def _save(plt, fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def _plot_lln(rows, out_dir: str) -> List[str]:
    plt = _figure()
    by_rep = defaultdict(list)
    for row in rows:
        by_rep[row["replicate"]].append((float(row["n"]), float(row["v_ratio"])))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for pts in by_rep.values():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                color="steelblue", alpha=0.4, lw=1.0)
    ax.axhline(1.0, color="black", lw=1.0, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("V_n / (c0 n log n)")
    ax.set_title("self-intersection ratio per path")
    return [_save(plt, fig, out_dir, "lln-v-ratio.png")]


def _plot_fclt(rows, out_dir: str) -> List[str]:
    plt = _figure()
    out = []
    inc = [row for row in rows if row.get("kind") == "increment"]
    ratios = _floats(inc, "ratio_exact")
    if ratios:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.hist(ratios, bins=20, color="steelblue", edgecolor="white")
        ax.axvline(1.0, color="black", lw=1.0, ls="--")
        ax.set_xlabel("exact variance / prediction")
        ax.set_ylabel("segments")
        ax.set_title("per-segment variance ratios")
        out.append(_save(plt, fig, out_dir, "fclt-variance-ratio.png"))
    proj = [row for row in rows if row.get("kind") == "projection"]
    pvals = _floats(proj, "ks_p")
    if pvals:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.hist(pvals, bins=20, range=(0.0, 1.0), color="darkseagreen",
                edgecolor="white")
        ax.set_xlabel("KS p-value")
        ax.set_ylabel("projections")
        ax.set_title("projection normality tests")
        out.append(_save(plt, fig, out_dir, "fclt-ks-pvalues.png"))
    return out


def _plot_variance(rows, out_dir: str) -> List[str]:
    plt = _figure()
    exact = _floats(rows, "var_exact")
    mc = _floats(rows, "var_mc")
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.scatter(exact, mc, color="steelblue")
    lim = [0.0, max(exact + mc) * 1.05] if exact else [0.0, 1.0]
    ax.plot(lim, lim, color="black", lw=1.0, ls="--")
    ax.set_xlabel("exact variance")
    ax.set_ylabel("Monte Carlo variance")
    ax.set_title("conditional variance per walk")
    return [_save(plt, fig, out_dir, "variance-exact-vs-mc.png")]


def _plot_cumulants(rows, out_dir: str) -> List[str]:
    plt = _figure()
    stat = [row for row in rows if row.get("kind") == "statistic"]
    if not stat:
        return []
    by_omega = defaultdict(list)
    for row in stat:
        by_omega[row["omega"]].append((float(row["n"]),
                                       abs(float(row["statistic"]))))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for pts in by_omega.values():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker="o", color="steelblue", alpha=0.5)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("|normalized cumulant|")
    ax.set_title("criterion statistic per walk")
    return [_save(plt, fig, out_dir, "cumulants-statistic.png")]


def _plot_newman_wright(rows, out_dir: str) -> List[str]:
    plt = _figure()
    lhs = _floats(rows, "lhs")
    rhs = _floats(rows, "rhs")
    margins = _floats(rows, "margin")
    idx = list(range(len(lhs)))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar([i - 0.2 for i in idx], lhs, width=0.4, label="max-side",
           color="steelblue")
    ax.bar([i + 0.2 for i in idx], [r + m for r, m in zip(rhs, margins)],
           width=0.4, label="bound + margin", color="darkseagreen")
    ax.set_xlabel("work unit")
    ax.set_ylabel("probability")
    ax.set_title("maximal inequality per part and walk")
    ax.legend()
    return [_save(plt, fig, out_dir, "maximal-newman-wright.png")]


def _plot_moricz(rows, out_dir: str) -> List[str]:
    plt = _figure()
    m4 = _floats(rows, "m4_mc")
    bound = _floats(rows, "bound")
    idx = list(range(len(m4)))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(idx, [b / max(m, 1e-300) for m, b in zip(m4, bound)],
           color="steelblue")
    ax.axhline(1.0, color="black", lw=1.0, ls="--")
    ax.set_yscale("log")
    ax.set_xlabel("walk")
    ax.set_ylabel("bound / observed E max^4")
    ax.set_title("fourth-moment maximal bound slack")
    return [_save(plt, fig, out_dir, "maximal-moricz.png")]


def _plot_toral(rows, out_dir: str) -> List[str]:
    plt = _figure()
    exact = _floats(rows, "exact")
    emp = _floats(rows, "empirical")
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.scatter(exact, emp, color="steelblue")
    lo = min(exact + emp + [0.0])
    hi = max(exact + emp + [0.0])
    pad = 0.05 * max(hi - lo, 1e-12)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], color="black",
            lw=1.0, ls="--")
    ax.set_xlabel("exact correlation")
    ax.set_ylabel("empirical correlation")
    ax.set_title("orbit correlations, exact vs sampled")
    return [_save(plt, fig, out_dir, "toral-correlations.png")]


def _plot_estimate_c0(rows, out_dir: str) -> List[str]:
    plt = _figure()
    vals = _floats(rows, "value")
    ses = _floats(rows, "se")
    if not vals:
        return []
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    ax.errorbar([0], vals, yerr=ses if ses else None, fmt="o",
                color="steelblue", capsize=6.0)
    ax.set_xticks([0])
    ax.set_xticklabels(["c0"])
    ax.set_ylabel("fitted coefficient")
    ax.set_title("lattice constant fit")
    return [_save(plt, fig, out_dir, "estimate-c0.png")]


_RENDERERS = {
    "lln": _plot_lln,
    "fclt": _plot_fclt,
    "variance": _plot_variance,
    "cumulants": _plot_cumulants,
    "newman_wright": _plot_newman_wright,
    "moricz": _plot_moricz,
    "toral_verify": _plot_toral,
    "estimate_c0": _plot_estimate_c0,
}
