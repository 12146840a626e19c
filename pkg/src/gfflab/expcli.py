"""Experiment registry, seeding, execution, and persistence.

Every experiment is a named recipe that maps a flat configuration to CSV
rows.  Replicas are the only unit of parallelism; per-replica seeds come
from a stateless hash of (master seed, experiment, replica, stream), and
aggregation always walks replicas in index order, so a run is bit-exact
reproducible regardless of the worker count.
"""

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .current import domination_check, domination_grid_ok, loop_current_consistency
from .errors import RangeError, SchemaError
from .explore import observable_batch, observable_variance, variance_gap
from .gfield import sample_dgff_batch
from .lattice import build_box, inner_boundary
from .levelset import bfs_distance_grid, level_set, mask_vertices, vertex_mask
from .loopsoup import induced_graph, occupation_field, sample_loop_soup
from .repulsion import entropic_mean_profile
from .walks import makarov_statistic, wilson_interval

CSV_COLUMNS = (
    "experiment", "n", "lam", "alpha", "beta", "chi", "eps", "m", "label",
    "statistic", "estimate", "ci_low", "ci_high", "replicas", "wall_time",
)


@dataclass
class ExperimentConfig:
    experiment: str
    ns: list
    lams: list = field(default_factory=lambda: [1.0])
    alpha: float = 0.25
    beta: float = 0.75
    chi: float = 0.6
    eps: float = 0.0
    m: int = 8
    replicas: int = 1000
    seed: int = 0
    out: str = "."

    def __post_init__(self):
        if self.experiment not in REGISTRY:
            raise SchemaError(f"unknown experiment {self.experiment!r}")
        if not 0.0 < self.alpha < self.beta < 1.0:
            raise RangeError("need 0 < alpha < beta < 1")
        if not self.chi > 0.5:
            raise RangeError("need chi > 1/2")
        if self.replicas < 1:
            raise RangeError("need at least one replica")
        self.ns = [int(n) for n in self.ns]
        self.lams = [float(x) for x in self.lams]


def config_from_file(path, experiment=None) -> ExperimentConfig:
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    bad = set(raw) - known
    if bad:
        raise SchemaError(f"unknown config keys {sorted(bad)}")
    if experiment is not None:
        raw["experiment"] = experiment
    if "experiment" not in raw:
        raise SchemaError("config is missing the experiment id")
    if "ns" not in raw:
        raise SchemaError("config is missing the size list 'ns'")
    return ExperimentConfig(**raw)


def derive_seed(master: int, path) -> int:
    """Stateless 64-bit stream seed for (experiment, replica, stream)."""
    text = str(int(master)) + "|" + "|".join(str(p) for p in path)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _rng(cfg, replica, stream="main"):
    return np.random.default_rng(
        derive_seed(cfg.seed, (cfg.experiment, replica, stream))
    )


def short_distance_threshold(n: int, chi: float) -> float:
    return n * math.exp(math.log(n) ** chi)


# ---------------------------------------------------------------------------
# replica kernels; each returns a plain tuple so results ship cheaply
# between worker processes


def _ring_masks(box, alpha, beta):
    inner = vertex_mask(box, inner_boundary(box, alpha * box.n))
    outer = vertex_mask(box, inner_boundary(box, beta * box.n))
    return inner, outer


def _ring_distance(open_mask, inner, outer) -> float:
    src = open_mask & inner
    if not src.any():
        return math.inf
    dist = bfs_distance_grid(open_mask, src)
    hit = dist[outer & open_mask]
    hit = hit[hit >= 0]
    return float(hit.min()) if hit.size else math.inf


def _crossing_chunk(cfg, n, replicas):
    box = build_box(n)
    inner, outer = _ring_masks(box, cfg.alpha, cfg.beta)
    hits = np.zeros(len(cfg.lams), dtype=int)
    for r in replicas:
        grid = sample_dgff_batch(box, _rng(cfg, r), 1)[0]
        for i, lam in enumerate(cfg.lams):
            open_mask = grid <= lam
            if math.isfinite(_ring_distance(open_mask, inner, outer)):
                hits[i] += 1
    return hits


def _distance_chunk(cfg, n, replicas, sign):
    box = build_box(n)
    inner, outer = _ring_masks(box, cfg.alpha, cfg.beta)
    cut = short_distance_threshold(n, cfg.chi)
    hits = np.zeros(len(cfg.lams), dtype=int)
    for r in replicas:
        grid = sample_dgff_batch(box, _rng(cfg, r), 1)[0]
        for i, lam in enumerate(cfg.lams):
            open_mask = grid <= sign * lam
            if _ring_distance(open_mask, inner, outer) <= cut:
                hits[i] += 1
    return hits


def _loop_distance_chunk(cfg, n, replicas):
    box = build_box(n)
    inner, outer = _ring_masks(box, cfg.alpha, cfg.beta)
    cut = short_distance_threshold(n, cfg.chi)
    hits = 0
    for r in replicas:
        soup = sample_loop_soup(box, 0.5, _rng(cfg, r))
        open_mask = np.zeros((n, n), dtype=bool)
        touched = set()
        for e in induced_graph(soup):
            touched.update(e)
        for v in touched:
            open_mask[box.grid_index(v)] = True
        if _ring_distance(open_mask, inner, outer) <= cut:
            hits += 1
    return hits


def _iso_chunk(cfg, n, replicas):
    box = build_box(n)
    occ = np.empty((len(replicas), len(box.interior)))
    for k, r in enumerate(replicas):
        soup = sample_loop_soup(box, 0.5, _rng(cfg, r))
        occ_field = occupation_field(soup)
        occ[k] = [occ_field.value(v) for v in box.interior]
    return occ


def _makarov_one(cfg, n, replica):
    from scipy import ndimage

    rng = _rng(cfg, replica)
    box = build_box(n)
    grid = sample_dgff_batch(box, rng, 1)[0]
    open_mask = grid <= cfg.lams[0]
    labels, count = ndimage.label(open_mask)
    if count == 0:
        return None
    sizes = ndimage.sum_labels(open_mask, labels, index=np.arange(1, count + 1))
    big = mask_vertices(box, labels == 1 + int(np.argmax(sizes)))
    xs = [v[0] for v in big]
    ys = [v[1] for v in big]
    diam = (max(xs) - min(xs)) + (max(ys) - min(ys))
    if diam < 8:
        return None
    res = makarov_statistic(frozenset(big), cfg.chi, rng, n_walks=6_000)
    return res.statistic


# ---------------------------------------------------------------------------
# experiment drivers


def _row(cfg, **kw):
    base = {
        "experiment": cfg.experiment, "n": "", "lam": "",
        "alpha": cfg.alpha, "beta": cfg.beta, "chi": cfg.chi,
        "eps": cfg.eps, "m": cfg.m, "label": "",
        "statistic": "", "estimate": "", "ci_low": "", "ci_high": "",
        "replicas": cfg.replicas, "wall_time": "",
    }
    base.update(kw)
    return base


def _chunked(replicas, threads):
    chunk = max(1, math.ceil(replicas / max(1, threads * 4)))
    return [range(a, min(a + chunk, replicas)) for a in range(0, replicas, chunk)]


def _map_chunks(fn, arglist, threads):
    if threads <= 1:
        return [fn(*a) for a in arglist]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, *zip(*arglist)))


def _binomial_rows(cfg, stat, per_n_hits):
    rows = []
    for n, lam, hits in per_n_hits:
        lo, hi = wilson_interval(hits, cfg.replicas)
        rows.append(_row(cfg, n=n, lam=lam, statistic=stat,
                         estimate=hits / cfg.replicas, ci_low=lo, ci_high=hi))
    return rows


def _run_prop21(cfg, threads):
    out = []
    for n in cfg.ns:
        args = [(cfg, n, ch) for ch in _chunked(cfg.replicas, threads)]
        hits = sum(_map_chunks(_crossing_chunk, args, threads))
        out.extend((n, lam, int(hits[i])) for i, lam in enumerate(cfg.lams))
    return _binomial_rows(cfg, "crossing_prob", out)


def _run_distance(cfg, threads, sign):
    out = []
    for n in cfg.ns:
        args = [(cfg, n, ch, sign) for ch in _chunked(cfg.replicas, threads)]
        hits = sum(_map_chunks(_distance_chunk, args, threads))
        out.extend((n, lam, int(hits[i])) for i, lam in enumerate(cfg.lams))
    return _binomial_rows(cfg, "short_crossing_prob", out)


def _run_loop_distance(cfg, threads):
    out = []
    for n in cfg.ns:
        args = [(cfg, n, ch) for ch in _chunked(cfg.replicas, threads)]
        hits = sum(_map_chunks(_loop_distance_chunk, args, threads))
        out.append((n, "", int(hits)))
    return _binomial_rows(cfg, "short_crossing_prob", out)


def _run_isomorphism(cfg, threads):
    from scipy.special import erf
    from scipy.stats import ks_1samp

    from .gfield import green_matrix

    rows = []
    for n in cfg.ns:
        box = build_box(n)
        args = [(cfg, n, ch) for ch in _chunked(cfg.replicas, threads)]
        occ = np.concatenate(_map_chunks(_iso_chunk, args, threads))
        gm = green_matrix(box, box.boundary)
        for i, v in enumerate(box.interior):
            sigma = math.sqrt(0.25 * gm.value(v, v))
            res = ks_1samp(occ[:, i], lambda t: erf(np.sqrt(np.maximum(t, 0.0)) / sigma))
            rows.append(_row(cfg, n=n, label=str(v), statistic="ks_stat",
                             estimate=float(res.statistic)))
            rows.append(_row(cfg, n=n, label=str(v), statistic="ks_pvalue",
                             estimate=float(res.pvalue)))
        # quantile table at the centre vertex, for QQ display against the
        # exact half-square law
        center = (0, 0) if n % 2 == 1 else (0, 1)
        ci = box.interior.index(center)
        sigma = math.sqrt(0.25 * gm.value(center, center))
        ps = np.linspace(0.01, 0.99, 49)
        emp = np.quantile(occ[:, ci], ps)
        from scipy.special import erfinv

        theo = (sigma * erfinv(ps)) ** 2
        for p, e, t in zip(ps, emp, theo):
            rows.append(_row(cfg, n=n, label=f"p={p:.3f}",
                             statistic="occ_quantile", estimate=float(e)))
            rows.append(_row(cfg, n=n, label=f"p={p:.3f}",
                             statistic="half_square_quantile", estimate=float(t)))
    return rows


def _run_makarov(cfg, threads):
    rows = []
    for n in cfg.ns:
        args = [(cfg, n, r) for r in range(cfg.replicas)]
        vals = [v for v in _map_chunks(_makarov_one, args, threads) if v is not None]
        if not vals:
            rows.append(_row(cfg, n=n, statistic="heavy_mass", estimate="",
                             label="no usable cluster"))
            continue
        vals = np.array(vals)
        se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        rows.append(_row(cfg, n=n, lam=cfg.lams[0], statistic="heavy_mass",
                         estimate=float(vals.mean()),
                         ci_low=float(vals.mean() - 1.96 * se),
                         ci_high=float(vals.mean() + 1.96 * se),
                         replicas=len(vals)))
    return rows


def _two_site_domain(n=4):
    box = build_box(n)
    keep = {(0, 0), (0, 1)}
    killed = frozenset(v for v in box.vertices if v not in keep)
    return box, killed


def _run_current_consistency(cfg, threads):
    box, killed = _two_site_domain()
    rep = loop_current_consistency(
        box, _rng(cfg, 0), n_samples=cfg.replicas, killed=killed,
    )
    rows = [
        _row(cfg, n=box.n, label=f"w={w}", statistic="weighted_tv", estimate=tv)
        for w, tv in sorted(rep.sensitivity.items())
    ]
    rows.append(_row(cfg, n=box.n, statistic="bins", estimate=len(rep.bins)))
    rows.append(_row(cfg, n=box.n, statistic="undersampled", estimate=rep.undersampled))
    return rows


def _run_domination(cfg, threads):
    box, killed = _two_site_domain()
    rows = []
    for lam in cfg.lams:
        _, violations = domination_grid_ok(lam)
        rep = domination_check(box, lam, _rng(cfg, 0, stream=f"lam{lam}"),
                               replicas=cfg.replicas, killed=killed)
        rows.append(_row(cfg, n=box.n, lam=lam, statistic="grid_violations",
                         estimate=violations))
        rows.append(_row(cfg, n=box.n, lam=lam, statistic="p_same_sign_coupled",
                         estimate=rep.p_crossing,
                         ci_low=rep.p_crossing - 1.96 * rep.se,
                         ci_high=rep.p_crossing + 1.96 * rep.se))
        rows.append(_row(cfg, n=box.n, lam=lam, statistic="p_open_bound",
                         estimate=rep.p_open))
    return rows


def _run_variance_gap(cfg, threads):
    rows = []
    for n in cfg.ns:
        box = build_box(n)
        vx = observable_variance(box, cfg.beta)
        gap = variance_gap(box, cfg.alpha, cfg.beta)
        rows.append(_row(cfg, n=n, statistic="var_x", estimate=vx,
                         ci_low=vx, ci_high=vx, replicas=1))
        rows.append(_row(cfg, n=n, statistic="variance_gap", estimate=gap,
                         ci_low=gap, ci_high=gap, replicas=1))
    return rows


def _run_repulsion_profile(cfg, threads):
    rows = []
    lam = cfg.lams[0]
    sweeps = max(1000, cfg.replicas)
    for n in cfg.ns:
        box = build_box(n)
        for pin, stat in ((True, "pinned_mean"), (False, "unpinned_mean")):
            est = entropic_mean_profile(
                box, lam, max(cfg.alpha, 4.0 / n), _rng(cfg, 0, stat),
                pin=pin, sweeps=sweeps,
            )
            rows.append(_row(cfg, n=n, lam=lam, statistic=stat,
                             estimate=est.mean,
                             ci_low=est.mean - 1.96 * est.se,
                             ci_high=est.mean + 1.96 * est.se,
                             label="" if est.converged else "non-converged"))
    return rows


# ---------------------------------------------------------------------------
# checks (used by --check): cheap sanity predicates on the emitted rows


def _estimates(rows, stat):
    return [r for r in rows if r["statistic"] == stat and r["estimate"] != ""]


def _check_monotone_crossing(rows):
    got = _estimates(rows, "crossing_prob")
    by_n = {}
    for r in got:
        by_n.setdefault(r["n"], []).append(r)
    for group in by_n.values():
        group.sort(key=lambda r: r["lam"])
        for a, b in zip(group, group[1:]):
            if b["ci_high"] < a["ci_low"]:
                return False
    return bool(got)


def _check_positive_margin(rows):
    got = _estimates(rows, "short_crossing_prob")
    return bool(got) and all(r["ci_low"] > 0.02 for r in got)


def _check_iso(rows):
    pvals = [r["estimate"] for r in _estimates(rows, "ks_pvalue")]
    return bool(pvals) and min(pvals) > 0.01 / len(pvals)


def _check_makarov(rows):
    got = sorted(_estimates(rows, "heavy_mass"), key=lambda r: r["n"])
    if len(got) < 2:
        return False
    return all(b["ci_low"] <= a["ci_high"] + 1e-12 or b["estimate"] <= a["estimate"]
               for a, b in zip(got, got[1:]))


def _check_consistency(rows):
    got = _estimates(rows, "weighted_tv")
    return bool(got) and all(r["estimate"] < 0.05 for r in got if r["label"] == "w=0.1")


def _check_domination(rows):
    grid = _estimates(rows, "grid_violations")
    bound = {(r["n"], r["lam"]): r["estimate"]
             for r in _estimates(rows, "p_open_bound")}
    cross = _estimates(rows, "p_same_sign_coupled")
    slack = lambda r: r["ci_high"] - r["estimate"]
    return (bool(grid) and all(r["estimate"] == 0 for r in grid)
            and all(r["estimate"] <= bound[(r["n"], r["lam"])] + slack(r)
                    for r in cross))


def _check_variance_gap(rows):
    got = _estimates(rows, "variance_gap")
    return bool(got) and all(r["estimate"] > 0 for r in got)


def _check_repulsion(rows):
    pinned = sorted(_estimates(rows, "pinned_mean"), key=lambda r: r["n"])
    free = sorted(_estimates(rows, "unpinned_mean"), key=lambda r: r["n"])
    if not pinned or len(free) < 2:
        return False
    growing = all(a["estimate"] < b["estimate"] for a, b in zip(free, free[1:]))
    bound = max(r["lam"] for r in pinned) + 2.0
    return growing and all(r["estimate"] < bound for r in pinned)


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    run: callable
    check: callable


REGISTRY = {}


def _register(name, summary, run, check):
    REGISTRY[name] = Experiment(name, summary, run, check)


_register(
    "prop21_crossing",
    "level-set open crossing probability of the annulus as the level grows",
    _run_prop21, _check_monotone_crossing,
)
_register(
    "thm11_distance",
    "chance the ring-to-ring chemical distance stays below the near-linear cutoff, by level",
    lambda cfg, t: _run_distance(cfg, t, 1.0), _check_monotone_crossing,
)
_register(
    "cor35_distance",
    "same short-distance event at a fixed negative level, across sizes",
    lambda cfg, t: _run_distance(cfg, t, -1.0), _check_positive_margin,
)
_register(
    "thm12_loop_distance",
    "short ring-to-ring distance inside the critical loop-soup subgraph",
    _run_loop_distance, lambda rows: bool(_estimates(rows, "short_crossing_prob")),
)
_register(
    "isomorphism",
    "occupation field of the critical loop soup against half the squared field, per vertex",
    _run_isomorphism, _check_iso,
)
_register(
    "makarov",
    "harmonic measure carried by heavy boundary points of a level-set cluster",
    _run_makarov, _check_makarov,
)
_register(
    "current_consistency",
    "edge jump counts of the loop soup against the even-count law, binned by occupation",
    _run_current_consistency, _check_consistency,
)
_register(
    "domination",
    "coupling bound: same-sign connection probability under the open-edge bound",
    _run_domination, _check_domination,
)
_register(
    "variance_gap",
    "exact ring-average variance and its killed-walk gap, across sizes",
    _run_variance_gap, _check_variance_gap,
)
_register(
    "repulsion_profile",
    "conditional mean at the centre above a hard wall, pinned versus unpinned",
    _run_repulsion_profile, _check_repulsion,
)


# ---------------------------------------------------------------------------
# persistence


@dataclass
class ResultSet:
    config: ExperimentConfig
    rows: list
    environment: dict

    def csv_text(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        stem = f"{self.config.experiment}_seed{self.config.seed}"
        csv_path = os.path.join(out_dir, stem + ".csv")
        json_path = os.path.join(out_dir, stem + ".json")
        _atomic_write(csv_path, self.csv_text())
        sidecar = {
            "config": dataclasses.asdict(self.config),
            "environment": self.environment,
        }
        _atomic_write(json_path, json.dumps(sidecar, indent=2) + "\n")
        return csv_path, json_path


def _fmt(x):
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _environment(cfg):
    return {
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": cfg.seed,
    }


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ResultSet:
    exp = REGISTRY[cfg.experiment]
    t0 = time.perf_counter()
    rows = exp.run(cfg, threads)
    elapsed = time.perf_counter() - t0
    for r in rows:
        r["wall_time"] = round(elapsed, 3)
    return ResultSet(cfg, rows, _environment(cfg))


# ---------------------------------------------------------------------------
# CLI


def _cmd_list(_args):
    width = max(len(k) for k in REGISTRY)
    for name, exp in REGISTRY.items():
        print(f"{name:<{width}}  {exp.summary}")
    return 0


def _cmd_run(args):
    cfg = config_from_file(args.config, experiment=args.experiment)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    rs = run_experiment(cfg, threads=args.threads)
    csv_path, json_path = rs.write(cfg.out)
    print(csv_path)
    print(json_path)
    if args.check:
        if not REGISTRY[cfg.experiment].check(rs.rows):
            print("check failed", file=sys.stderr)
            return 2
        print("check passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lab", description="field and loop-soup simulation experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--experiment", required=True, choices=sorted(REGISTRY))
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--check", action="store_true")
    p_run.set_defaults(func=_cmd_run)
    p_list = sub.add_parser("list", help="print the experiment registry")
    p_list.set_defaults(func=_cmd_list)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
