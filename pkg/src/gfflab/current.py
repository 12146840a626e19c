"""Sourceless random currents on small graphs, parity-conditional laws,
the loop-jump consistency experiment, and the crossing-domination check.

A current assigns a nonnegative integer to every edge so that each vertex
has even total degree; configurations are weighted by the product of
beta^n / n! over edges.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import stats

from .errors import AcceptanceStarvationError, ParityError, RangeError
from .gfield import bridge_above_prob
from .lattice import BoxSpec
from .loopsoup import occupation_field, sample_loop_soup, stage_tables


def _edge_betas(edges, beta):
    edges = tuple(tuple(e) for e in edges)
    if isinstance(beta, dict):
        return edges, np.array([float(beta[e]) for e in edges])
    return edges, np.full(len(edges), float(beta))


@dataclass
class CurrentConfig:
    edges: tuple
    values: tuple

    def __post_init__(self):
        deg = {}
        for (u, v), n in zip(self.edges, self.values):
            deg[u] = deg.get(u, 0) + n
            deg[v] = deg.get(v, 0) + n
        if any(d % 2 for d in deg.values()):
            raise ParityError("odd total degree at a vertex")

    def value(self, e) -> int:
        return self.values[self.edges.index(tuple(e))]


def _degrees_even(edges, values) -> bool:
    deg = {}
    for (u, v), n in zip(edges, values):
        deg[u] = deg.get(u, 0) + n
        deg[v] = deg.get(v, 0) + n
    return not any(d % 2 for d in deg.values())


def brute_force_current_law(edges, beta, n_max: int = 30, tail_tol: float = 1e-8):
    """Exact truncated distribution: dict config-values-tuple -> probability."""
    edges, betas = _edge_betas(edges, beta)
    if len(edges) > 6:
        raise RangeError("brute force restricted to at most 6 edges")
    tail = float(sum(stats.poisson.sf(n_max, b) for b in betas))
    if tail > tail_tol:
        raise RangeError(f"truncation tail {tail:.2e} exceeds {tail_tol:.2e}; raise n_max")
    logfac = np.cumsum(np.log(np.arange(1, n_max + 1)))
    logfac = np.concatenate([[0.0], logfac])
    weights = {}
    for values in product(range(n_max + 1), repeat=len(edges)):
        if not _degrees_even(edges, values):
            continue
        logw = sum(n * math.log(b) - logfac[n] for n, b in zip(values, betas))
        weights[values] = math.exp(logw)
    z = sum(weights.values())
    return {v: w / z for v, w in weights.items()}


def sample_current_rejection(edges, beta, rng, max_tries: int = 1_000_000):
    """Independent Poisson draws accepted when every degree is even."""
    edges, betas = _edge_betas(edges, beta)
    for t in range(1, max_tries + 1):
        values = tuple(int(x) for x in rng.poisson(betas))
        if _degrees_even(edges, values):
            return CurrentConfig(edges, values), t
    raise AcceptanceStarvationError(
        f"no even-degree configuration in {max_tries} proposals")


def sample_current_batch(edges, beta, rng, n_accepts: int):
    """n_accepts rejection samples plus the observed acceptance rate."""
    edges, betas = _edge_betas(edges, beta)
    out = []
    tries = 0
    chunk = max(4 * n_accepts, 1000)
    while len(out) < n_accepts:
        draws = rng.poisson(betas, size=(chunk, len(edges)))
        tries += chunk
        for row in draws:
            if _degrees_even(edges, tuple(row)):
                out.append(tuple(int(x) for x in row))
                if len(out) == n_accepts:
                    break
        if tries > 1000 * n_accepts + 100_000:
            raise AcceptanceStarvationError("acceptance rate too low")
    return out, n_accepts / tries


def f1_pmf(n: int, beta: float) -> float:
    """Odd-conditioned Poisson weight beta^n / (n! sinh beta)."""
    if n % 2 == 0:
        return 0.0
    return math.exp(n * math.log(beta) - math.lgamma(n + 1)) / math.sinh(beta)


def f2_pmf(n: int, beta: float) -> float:
    """Even-conditioned Poisson weight beta^n / (n! cosh beta)."""
    if n % 2 == 1:
        return 0.0
    if n == 0:
        return 1.0 / math.cosh(beta)
    return math.exp(n * math.log(beta) - math.lgamma(n + 1)) / math.cosh(beta)


def sample_parity_conditional(edges, parity, beta, rng):
    """Independent per-edge draws with fixed parities.

    parity maps each edge to 0 (even) or 1 (odd); the parities must sum to
    an even number at every vertex or no valid configuration exists.
    """
    edges, betas = _edge_betas(edges, beta)
    par = [int(parity[e]) % 2 for e in edges]
    deg = {}
    for (u, v), q in zip(edges, par):
        deg[u] = deg.get(u, 0) + q
        deg[v] = deg.get(v, 0) + q
    if any(d % 2 for d in deg.values()):
        raise ParityError("parity assignment has odd total at a vertex")
    values = []
    for q, b in zip(par, betas):
        while True:
            n = int(rng.poisson(b))
            if n % 2 == q:
                values.append(n)
                break
    return CurrentConfig(edges, tuple(values))


# ---------------------------------------------------------------------------
# Loop-jump / current consistency


def edge_jump_counts(soup) -> dict:
    """Number of skeleton traversals per undirected edge."""
    counts = {}
    for loop in soup.loops:
        k = len(loop.vertices)
        for i in range(k):
            u = loop.vertices[i]
            v = loop.vertices[(i + 1) % k]
            e = (u, v) if u < v else (v, u)
            counts[e] = counts.get(e, 0) + 1
    return counts


@dataclass
class ConsistencyReport:
    bin_width: float
    n_samples: int
    bins: dict  # (i, j) -> dict with count, tv, beta
    weighted_tv: float
    undersampled: int
    sensitivity: dict  # bin width -> weighted tv

    def to_json(self) -> str:
        payload = {
            "bin_width": self.bin_width,
            "n_samples": self.n_samples,
            "weighted_tv": self.weighted_tv,
            "undersampled": self.undersampled,
            "sensitivity": {repr(w): tv for w, tv in self.sensitivity.items()},
            "bins": [{"bin": list(key), **{k: _plain(x) for k, x in rec.items()}}
                     for key, rec in sorted(self.bins.items())],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _plain(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def loop_current_consistency(box: BoxSpec, rng, alpha: float = 0.5,
                             n_samples: int = 100_000, bin_width: float = 0.1,
                             killed=None, min_bin: int = 200) -> ConsistencyReport:
    """Conditioned on binned local times, compare loop jump counts with the
    current law at beta = 2 sqrt(l_x l_y) taken at bin centers.

    Restricted to the two-interior-vertex domain where the current law on
    the single edge is the even-conditioned Poisson family.
    """
    killed = box.boundary if killed is None else frozenset(killed) | box.boundary
    free = tuple(v for v in sorted(box.vertices) if v not in killed)
    if len(free) != 2:
        raise RangeError("consistency experiment needs exactly 2 free vertices")
    x, y = free
    if abs(x[0] - y[0]) + abs(x[1] - y[1]) != 1:
        raise RangeError("the two free vertices must be adjacent")
    lx = np.empty(n_samples)
    ly = np.empty(n_samples)
    ne = np.zeros(n_samples, dtype=int)
    for r in range(n_samples):
        soup = sample_loop_soup(box, alpha, rng, killed=killed)
        occ = occupation_field(soup)
        lx[r] = occ.value(x)
        ly[r] = occ.value(y)
        if soup.loops:
            ne[r] = sum(len(lp.vertices) for lp in soup.loops)
    reports = {}
    for w in (bin_width / 2, bin_width, bin_width * 2):
        reports[w] = _binned_tv(lx, ly, ne, w, min_bin)
    bins, wtv, under = reports[bin_width]
    sens = {w: reports[w][1] for w in reports}
    return ConsistencyReport(bin_width, n_samples, bins, wtv, under, sens)


def _binned_tv(lx, ly, ne, width, min_bin):
    bx = (lx / width).astype(int)
    by = (ly / width).astype(int)
    bins = {}
    under = 0
    total = 0
    acc = 0.0
    keys, inverse, counts = np.unique(
        np.stack([bx, by]), axis=1, return_inverse=True, return_counts=True)
    for k in range(keys.shape[1]):
        cnt = int(counts[k])
        if cnt < min_bin:
            under += 1
            continue
        sel = ne[inverse == k]
        cx = (keys[0, k] + 0.5) * width
        cy = (keys[1, k] + 0.5) * width
        beta = 2.0 * math.sqrt(cx * cy)
        n_hi = max(int(sel.max()), 8)
        emp = np.bincount(sel, minlength=n_hi + 1) / cnt
        ref = np.array([f2_pmf(n, beta) for n in range(n_hi + 1)])
        tv = 0.5 * (np.abs(emp - ref).sum() + max(0.0, 1.0 - ref.sum()))
        bins[(int(keys[0, k]), int(keys[1, k]))] = {
            "count": cnt, "tv": float(tv), "beta": beta}
        acc += tv * cnt
        total += cnt
    wtv = acc / total if total else math.nan
    return bins, wtv, under


# ---------------------------------------------------------------------------
# Domination of sign-crossing indicators by the loop soup


@dataclass
class DominationReport:
    lam: float
    grid_ok: bool
    grid_violations: int
    p_crossing: float
    p_open: float
    se: float
    replicas: int


def domination_grid_ok(lam: float, l_max: float = 50.0, n_grid: int = 120):
    """Check 1/cosh(2 sqrt(l l')) <= exp(-(sqrt(2l)-lam)(sqrt(2l')-lam)/4)
    on a grid with both arguments above lam^2/2.  Returns (ok, violations)."""
    if lam < 2:
        raise RangeError("the domination bound needs lam >= 2")
    lo = lam * lam / 2.0
    grid = np.linspace(lo + 1e-9, l_max, n_grid)
    l1, l2 = np.meshgrid(grid, grid)
    lhs = 1.0 / np.cosh(2.0 * np.sqrt(l1 * l2))
    rhs = np.exp(-0.25 * (np.sqrt(2 * l1) - lam) * (np.sqrt(2 * l2) - lam))
    bad = int((lhs > rhs).sum())
    return bad == 0, bad


def domination_check(box: BoxSpec, lam: float, rng, replicas: int = 10_000,
                     killed=None) -> DominationReport:
    """Shared-local-time coupling on the two-vertex domain.

    Each soup replica yields local times, jump count, a cluster-sign coin
    and a bridge-crossing coin; the sign-crossing indicator must not
    exceed the soup open-edge indicator in frequency.
    """
    ok, bad = domination_grid_ok(lam)
    killed = box.boundary if killed is None else frozenset(killed) | box.boundary
    free = tuple(v for v in sorted(box.vertices) if v not in killed)
    if len(free) != 2:
        raise RangeError("domination experiment needs exactly 2 free vertices")
    x, y = free
    n_cross = 0
    n_open = 0
    for _ in range(replicas):
        soup = sample_loop_soup(box, 0.5, rng, killed=killed)
        occ = occupation_field(soup)
        lx, ly = occ.value(x), occ.value(y)
        open_e = bool(soup.loops)
        if open_e:
            n_open += 1
        if 2 * lx <= lam * lam or 2 * ly <= lam * lam:
            continue
        same_sign = open_e or (rng.random() < 0.5)
        if not same_sign:
            continue
        p = bridge_above_prob(math.sqrt(2 * lx), math.sqrt(2 * ly), lam, 4.0)
        if rng.random() < p:
            n_cross += 1
    p_cross = n_cross / replicas
    p_open = n_open / replicas
    se = math.sqrt(p_cross * (1 - p_cross) / replicas + p_open * (1 - p_open) / replicas)
    return DominationReport(lam, ok, bad, p_cross, p_open, se, replicas)
