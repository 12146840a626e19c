"""Renderers for lab result CSVs.

Every figure is a pure function of the CSV rows: fixed style, no
timestamps, no recomputation of statistics beyond the display fits.
"""

import csv
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = (
    "experiment", "n", "lam", "alpha", "beta", "chi", "eps", "m", "label",
    "statistic", "estimate", "ci_low", "ci_high", "replicas", "wall_time",
)

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "labplot",
})


class SchemaMismatchError(ValueError):
    """The CSV is missing columns or belongs to a different experiment."""


class EmptyInputError(ValueError):
    """The CSV has a header but no data rows."""


class UnknownKindError(ValueError):
    """The requested figure kind is not registered."""


@dataclass(frozen=True)
class FigureSpec:
    csv_paths: tuple
    kind: str
    out_path: str

    def __post_init__(self):
        if self.kind not in KIND_EXPERIMENTS:
            raise UnknownKindError(f"unknown figure kind {self.kind!r}")
        if not self.csv_paths:
            raise EmptyInputError("no input CSVs given")


KIND_EXPERIMENTS = {
    "crossing_vs_lambda": {"prop21_crossing", "thm11_distance",
                           "cor35_distance", "thm12_loop_distance"},
    "makarov_decay": {"makarov"},
    "iso_qq": {"isomorphism"},
    "variance_gap": {"variance_gap"},
    "repulsion_profile": {"repulsion_profile"},
}


def read_rows(path) -> list:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        cols = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise SchemaMismatchError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return rows


def load_for_kind(paths, kind) -> list:
    rows = []
    for path in paths:
        rows.extend(read_rows(path))
    allowed = KIND_EXPERIMENTS[kind]
    got = {r["experiment"] for r in rows}
    bad = got - allowed
    if bad:
        raise SchemaMismatchError(
            f"experiments {sorted(bad)} do not feed figure kind {kind!r}")
    return rows


def _num(rows, *fields):
    out = []
    for r in rows:
        try:
            out.append(tuple(float(r[f]) for f in fields))
        except ValueError:
            continue
    return out


def _stat(rows, name):
    return [r for r in rows if r["statistic"] == name and r["estimate"] != ""]


def fit_crossing_decay(rows) -> dict:
    """Least-squares fit of log((1-p)/2) against lam^2, per box size.

    Only levels with 0 < p < 1 enter the fit; sizes with fewer than two
    such levels get no entry.  Values are (c, r_squared) with c the decay
    rate in the envelope 1 - 2 e^{-c lam^2}.
    """
    fits = {}
    by_n = {}
    for lam, n, p in _num(_stat(rows, "crossing_prob"), "lam", "n", "estimate"):
        by_n.setdefault(int(n), []).append((lam, p))
    for n, pts in by_n.items():
        usable = [(lam, p) for lam, p in pts if 0.0 < p < 1.0]
        if len(usable) < 2:
            continue
        x = np.array([lam * lam for lam, _ in usable])
        y = np.array([math.log((1.0 - p) / 2.0) for _, p in usable])
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid ** 2).sum()) / ss_tot
        fits[n] = (-slope, r2)
    return fits


def _render_crossing(rows, ax):
    got = _stat(rows, "crossing_prob") or _stat(rows, "short_crossing_prob")
    if not got:
        raise SchemaMismatchError("no crossing probability rows")
    by_n = {}
    for r in got:
        by_n.setdefault(int(float(r["n"])), []).append(r)
    fits = fit_crossing_decay(rows)
    for n in sorted(by_n):
        pts = sorted(_num(by_n[n], "lam", "estimate", "ci_low", "ci_high"))
        lam = [p[0] for p in pts]
        est = [p[1] for p in pts]
        lo = [p[1] - p[2] for p in pts]
        hi = [p[3] - p[1] for p in pts]
        ax.errorbar(lam, est, yerr=[lo, hi], marker="o", capsize=3,
                    label=f"N={n}")
        if n in fits:
            c, r2 = fits[n]
            xs = np.linspace(min(lam), max(lam), 200)
            ax.plot(xs, 1.0 - 2.0 * np.exp(-c * xs ** 2), "--", lw=1,
                    label=f"N={n} fit: c={c:.3f}, R²={r2:.4f}")
    ax.set_xlabel("level λ")
    ax.set_ylabel("crossing probability")
    ax.legend(loc="lower right", fontsize=8)


def _render_makarov(rows, ax):
    got = _stat(rows, "heavy_mass")
    if not got:
        raise SchemaMismatchError("no heavy_mass rows")
    pts = sorted(_num(got, "n", "estimate", "ci_low", "ci_high"))
    ns = [p[0] for p in pts]
    est = [p[1] for p in pts]
    ax.errorbar(ns, est, yerr=[[p[1] - p[2] for p in pts],
                               [p[3] - p[1] for p in pts]],
                marker="s", capsize=3)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("cluster scale n")
    ax.set_ylabel("heavy boundary mass")


def iso_qq_points(rows) -> list:
    emp = {(r["n"], r["label"]): float(r["estimate"])
           for r in _stat(rows, "occ_quantile")}
    theo = {(r["n"], r["label"]): float(r["estimate"])
            for r in _stat(rows, "half_square_quantile")}
    keys = sorted(set(emp) & set(theo))
    if not keys:
        raise SchemaMismatchError("no matching quantile rows")
    return [(theo[k], emp[k]) for k in keys]


def _render_iso_qq(rows, ax):
    pts = iso_qq_points(rows)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    lim = max(max(xs), max(ys)) * 1.05
    ax.plot([0, lim], [0, lim], "k-", lw=0.8)
    ax.plot(xs, ys, "o", ms=3)
    ax.set_xlabel("half-square quantile")
    ax.set_ylabel("occupation quantile")
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)


def _render_variance_gap(rows, ax):
    vx = sorted(_num(_stat(rows, "var_x"), "n", "estimate"))
    gap = sorted(_num(_stat(rows, "variance_gap"), "n", "estimate"))
    if not vx or not gap:
        raise SchemaMismatchError("need var_x and variance_gap rows")
    ax.plot([p[0] for p in vx], [p[1] for p in vx], "o-", label="Var X")
    ax2 = ax.twinx()
    ax2.plot([p[0] for p in gap], [p[1] for p in gap], "s--", color="C1",
             label="gap")
    ax2.grid(False)
    ax.set_xlabel("box size N")
    ax.set_ylabel("Var X")
    ax2.set_ylabel("variance gap")
    lines = list(ax.get_lines()) + list(ax2.get_lines())
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right",
              fontsize=8)


def _render_repulsion(rows, ax):
    for stat, marker in (("pinned_mean", "o"), ("unpinned_mean", "s")):
        got = _stat(rows, stat)
        if not got:
            raise SchemaMismatchError(f"no {stat} rows")
        pts = sorted(_num(got, "n", "estimate", "ci_low", "ci_high"))
        ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                    yerr=[[p[1] - p[2] for p in pts],
                          [p[3] - p[1] for p in pts]],
                    marker=marker, capsize=3, label=stat.replace("_", " "))
    ax.set_xlabel("box size N")
    ax.set_ylabel("conditional centre mean")
    ax.legend(fontsize=8)


_RENDERERS = {
    "crossing_vs_lambda": _render_crossing,
    "makarov_decay": _render_makarov,
    "iso_qq": _render_iso_qq,
    "variance_gap": _render_variance_gap,
    "repulsion_profile": _render_repulsion,
}


def render(spec: FigureSpec) -> str:
    rows = load_for_kind(spec.csv_paths, spec.kind)
    fig, ax = plt.subplots()
    try:
        _RENDERERS[spec.kind](rows, ax)
        fig.tight_layout()
        if spec.out_path.endswith(".svg"):
            fig.savefig(spec.out_path, metadata={"Date": None})
        else:
            fig.savefig(spec.out_path, metadata={"Software": "labplot"})
    finally:
        plt.close(fig)
    return spec.out_path
