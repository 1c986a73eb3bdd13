"""Regret-exponent estimation: log-log slopes, cluster bootstrap CIs, tables and SVG plots."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np


class TooFewTrialsError(ValueError):
    pass


def theory_exponent(beta: float, known_utility: bool = True) -> float:
    e = 3.0 / (2.0 * beta + 1.0)
    return e if known_utility else max(0.5, e)


def loglog_slope(horizons, mean_regrets) -> float:
    """OLS slope of log(regret) on log(T)."""
    h = np.asarray(horizons, dtype=float)
    r = np.asarray(mean_regrets, dtype=float)
    if h.size != r.size or h.size < 2:
        raise ValueError("need at least two (horizon, regret) pairs")
    if np.any(h <= 0) or np.any(r <= 0):
        raise ValueError("horizons and regrets must be positive")
    x = np.log(h)
    y = np.log(r)
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


@dataclass(frozen=True)
class SlopeReport:
    beta: float
    slope_hat: float
    theory: float
    ci_lo: float
    ci_hi: float
    n_boot: int
    n_trials: int
    policy: str = "ilpr"
    known_utility: bool = True

    @property
    def covers_theory(self) -> bool:
        return self.ci_lo <= self.theory <= self.ci_hi


def _as_matrix(curves, horizons=None) -> tuple[np.ndarray, np.ndarray]:
    """Stack curves (RegretCurve objects or rows) on their shared checkpoints."""
    if isinstance(curves, np.ndarray):
        if horizons is None:
            raise ValueError("horizons required with a regret matrix")
        return np.asarray(horizons), curves
    cps = [np.asarray(c.checkpoints) for c in curves]
    common = cps[0]
    for c in cps[1:]:
        common = np.intersect1d(common, c)
    if horizons is not None:
        common = np.intersect1d(common, np.asarray(horizons))
    mat = np.array([np.asarray(c.cumulative_regret)[np.searchsorted(np.asarray(c.checkpoints), common)]
                    for c in curves])
    return common, mat


def cluster_bootstrap(curves, horizons=None, n_boot: int = 2000, seed: int = 0, beta: float = float("nan"),
                      known_utility: bool = True, policy: str = "ilpr") -> SlopeReport:
    """Percentile CI for the log-log slope, resampling whole trials with replacement.

    ``curves`` is a list of RegretCurve-like objects (``checkpoints``,
    ``cumulative_regret``) or a ``trials x horizons`` matrix with ``horizons``.
    Resample ``b`` draws its indices from ``SeedSequence([seed, b])``.
    """
    h, mat = _as_matrix(curves, horizons)
    n = mat.shape[0]
    if n < 2:
        raise TooFewTrialsError("cluster bootstrap needs at least two trials")
    slope = loglog_slope(h, mat.mean(axis=0))
    logh = np.log(h.astype(float))
    xc = logh - logh.mean()
    denom = xc @ xc
    boots = np.empty(n_boot)
    for b in range(n_boot):
        idx = np.random.default_rng(np.random.SeedSequence([seed, b])).integers(0, n, size=n)
        ly = np.log(mat[idx].mean(axis=0))
        boots[b] = xc @ (ly - ly.mean()) / denom
    lo, hi = np.percentile(boots, [2.5, 97.5])
    # identical trials give identical resamples; snap float noise onto the point estimate
    if np.ptp(boots) < 1e-12:
        lo = hi = slope
    return SlopeReport(float(beta), slope, theory_exponent(beta, known_utility), float(min(lo, slope)),
                       float(max(hi, slope)), n_boot, n, policy, known_utility)


def compare_table(reports) -> list[dict]:
    rows = []
    for r in reports:
        rows.append({
            "policy": r.policy, "known_utility": r.known_utility, "beta": r.beta,
            "slope_hat": round(r.slope_hat, 6), "theory": round(r.theory, 6),
            "ci_lo": round(r.ci_lo, 6), "ci_hi": round(r.ci_hi, 6), "n_trials": r.n_trials,
            "n_boot": r.n_boot, "theory_outside_ci": not r.covers_theory,
        })
    return rows


def write_slopes_csv(path, reports) -> None:
    rows = compare_table(reports)
    cols = ["policy", "known_utility", "beta", "slope_hat", "theory", "ci_lo", "ci_hi", "n_trials", "n_boot",
            "theory_outside_ci"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def difference_summary(a, b) -> dict:
    """Mean difference ``b - a`` with its (unpaired) standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = float(b.mean() - a.mean())
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    return {"mean_a": float(a.mean()), "mean_b": float(b.mean()), "diff": diff, "se": se,
            "margin_over_2se": diff > 2 * se}


def report_dict(r: SlopeReport) -> dict:
    d = asdict(r)
    d["covers_theory"] = r.covers_theory
    return d


# ---------------------------------------------------------------------- plots

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _nice_ticks(lo: float, hi: float) -> list[float]:
    a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
    ticks = []
    for e in range(a, b + 1):
        for m in (1, 2, 5):
            v = m * 10.0**e
            if lo <= v <= hi:
                ticks.append(v)
    return ticks or [lo, hi]


def svg_loglog(path, series: dict, title: str = "", xlabel: str = "T", ylabel: str = "cumulative regret",
               width: int = 640, height: int = 440) -> None:
    """Log-log plot of mean curves with shaded bands.

    ``series`` maps a label to ``(horizons, mean, spread)``; the band is
    ``mean +/- spread`` (lower edge kept positive).
    """
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs, ys = [], []
    for h, m, s in series.values():
        h, m, s = (np.asarray(v, dtype=float) for v in (h, m, s))
        xs.extend(h)
        ys.extend(m + s)
        ys.extend(np.maximum(m - s, m * 0.05))
    x0, x1 = math.log10(min(xs)), math.log10(max(xs))
    y0, y1 = math.log10(max(min(ys), 1e-12)), math.log10(max(ys))
    if x1 == x0:
        x1 += 1
    if y1 == y0:
        y1 += 1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return left + (math.log10(v) - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1 - (math.log10(v) - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in _nice_ticks(10**x0, 10**x1):
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(10**y0, 10**y1):
        Y = py(t)
        out.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="#444"/>')
        out.append(f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end">{t:g}</text>')
    for i, (label, (h, m, s)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        h, m, s = (np.asarray(v, dtype=float) for v in (h, m, s))
        upper = m + s
        lower = np.maximum(m - s, m * 0.05)
        poly = [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(h, upper)]
        poly += [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(h[::-1], lower[::-1])]
        out.append(f'<polygon points="{" ".join(poly)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(h, m))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly}">{_esc(label)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="15" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2:.1f})">{_esc(ylabel)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
