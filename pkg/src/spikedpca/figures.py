"""Figure rendering for the report paths; headless and byte-reproducible.

The Agg backend is forced before pyplot loads, figures carry fixed PNG
metadata (no library version strings, no timestamps), and inputs arrive
already ordered, so rerendering the same report reproduces the same bytes.
"""

from __future__ import annotations

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_SAVE = {"dpi": 150, "metadata": {"Software": "spikedpca"}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def save_risk_figure(report, path):
    """Mean loss against the closed-form rate, log-log, one line per estimator."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    lims = []
    for label in dict.fromkeys(r.estimator for r in report.rows):
        pts = [(r.theory, r.mean_loss) for r in report.rows
               if r.estimator == label
               and r.mean_loss > 0 and math.isfinite(r.mean_loss)
               and r.theory > 0 and math.isfinite(r.theory)]
        if not pts:
            continue
        xs, ys = zip(*sorted(pts))
        ax.loglog(xs, ys, marker="o", label=label)
        lims.extend(xs)
        lims.extend(ys)
    if lims:
        lo, hi = min(lims), max(lims)
        ax.loglog([lo, hi], [lo, hi], linestyle="--", color="gray",
                  linewidth=1, label="y = x")
    ax.set_xlabel("closed-form rate")
    ax.set_ylabel("mean alignment loss")
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)


def save_concentration_figure(checks, path):
    """Bound next to empirical frequency for every checked tail event."""
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(checks)), 4.5))
    idx = np.arange(len(checks))
    width = 0.38
    ax.bar(idx - width / 2, [c.bound for c in checks], width, label="bound")
    ax.bar(idx + width / 2, [c.empirical for c in checks], width,
           label="empirical")
    ax.set_yscale("log")
    ax.set_xticks(idx)
    ax.set_xticklabels(["%s\n#%d" % (c.kind, i) for i, c in enumerate(checks)],
                       fontsize=7)
    ax.set_ylabel("tail probability")
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)


def _pairwise_losses(family, cap=200):
    members = family.members[:cap]
    cols = np.stack([m[:, family.nu - 1] for m in members])
    gram = np.abs(cols @ cols.T)
    iu = np.triu_indices(len(members), 1)
    return 2.0 * (1.0 - np.minimum(gram[iu], 1.0))


def save_lower_bound_figure(family, fano_value, delta_n, path):
    """Pairwise-loss spread and KL exactness for a packing certificate."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    losses = _pairwise_losses(family)
    ax1.hist(losses, bins=30, color="steelblue")
    ax1.axvline(family.loss_floor, color="crimson", linestyle="--",
                label="certified floor")
    ax1.set_xlabel("pairwise alignment loss")
    ax1.set_ylabel("pair count")
    ax1.legend(loc="best", fontsize=8)
    if family.kl_to_base is not None and len(family.kl_to_base):
        ax2.plot(np.arange(len(family.kl_to_base)), family.kl_to_base, ".",
                 markersize=3, label="member KL")
        if family.expected_kl is not None:
            ax2.axhline(family.expected_kl, color="crimson", linestyle="--",
                        label="n h r^2 / 2")
        ax2.set_xlabel("member index")
        ax2.set_ylabel("KL to base")
        ax2.legend(loc="best", fontsize=8)
    ax2.set_title("Fano bound %.3g, rate %.3g" % (fano_value, delta_n),
                  fontsize=9)
    _finish(fig, path)


def _draw_sign_packing(ax, pack):
    if pack.count > 1:
        gram = pack.vectors @ pack.vectors.T
        iu = np.triu_indices(pack.count, 1)
        ax.hist(gram[iu], bins=40, color="steelblue")
    ax.axvline(0.5, color="crimson", linestyle="--", label="<z, z'> = 1/2")
    ax.set_xlabel("pairwise inner product")
    ax.set_ylabel("pair count")
    ax.set_title("sign: m = %d, m0 = %d, kept %d"
                 % (pack.m, pack.m0, pack.count), fontsize=9)
    ax.legend(loc="best", fontsize=8)


def _draw_support_packing(ax, pack):
    if pack.count > 1:
        inc = np.zeros((pack.count, pack.n_pool))
        for i, sup in enumerate(pack.supports):
            inc[i, list(sup)] = 1.0
        gram = inc @ inc.T
        iu = np.triu_indices(pack.count, 1)
        ax.hist(gram[iu], bins=np.arange(-0.5, pack.m + 1.5, 1.0),
                color="steelblue")
    ax.axvline(pack.max_overlap + 0.5, color="crimson", linestyle="--",
               label="overlap cap")
    ax.set_xlabel("pairwise overlap")
    ax.set_ylabel("pair count")
    ax.set_title("supports: pool %d, m = %d, kept %d"
                 % (pack.n_pool, pack.m, pack.count), fontsize=9)
    ax.legend(loc="best", fontsize=8)


def save_sign_packing_figure(pack, path):
    """Histogram of pairwise inner products against the 1/2 separation line."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    _draw_sign_packing(ax, pack)
    _finish(fig, path)


def save_support_packing_figure(pack, path):
    """Histogram of pairwise support overlaps against the allowed maximum."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    _draw_support_packing(ax, pack)
    _finish(fig, path)


def save_packing_overview(sign_packs, support_packs, path):
    """One panel per packing, sign families first."""
    total = max(1, len(sign_packs) + len(support_packs))
    ncols = min(3, total)
    nrows = (total + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(4.4 * ncols, 3.6 * nrows),
                             squeeze=False)
    flat = axes.ravel()
    i = 0
    for pack in sign_packs:
        _draw_sign_packing(flat[i], pack)
        i += 1
    for pack in support_packs:
        _draw_support_packing(flat[i], pack)
        i += 1
    for ax in flat[i:]:
        ax.axis("off")
    _finish(fig, path)


def save_bracket_figure(reports, path):
    """Bracket frequencies per stage with the nominal 0.95 reference line."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    idx = np.arange(len(reports))
    width = 0.27
    ax.bar(idx - width, [r.lower_rate for r in reports], width,
           label="inner set covered")
    ax.bar(idx, [r.upper_rate for r in reports], width,
           label="inside outer set")
    ax.bar(idx + width, [r.both_rate for r in reports], width, label="both")
    ax.axhline(0.95, color="crimson", linestyle="--", linewidth=1)
    ax.set_xticks(idx)
    ax.set_xticklabels(["stage %d" % r.stage for r in reports])
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("frequency")
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)
