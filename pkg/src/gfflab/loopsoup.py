"""Random walk loop soup: exact sampler, occupation fields, induced edge
graphs, and a brute-force pattern oracle for tiny domains.

The sampler uses the excursion decomposition: sweep the free vertices in
lexicographic order, and at stage j work in the graph with the earlier
vertices removed.  The number of loops whose minimal vertex is x_j and
which return to it k times is Poisson(alpha F_j^k / k) where F_j is the
return probability of the killed walk; each excursion is drawn from the
exact h-transform.  Stage tables depend only on the domain and are cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import RangeError
from .gfield import green_matrix
from .lattice import BoxSpec

HOLD_RATE = 4.0


@dataclass
class Loop:
    """Cyclic skeleton plus one holding time per visit."""

    vertices: tuple
    holding: np.ndarray

    def edges(self) -> frozenset:
        out = set()
        k = len(self.vertices)
        for i in range(k):
            u = self.vertices[i]
            v = self.vertices[(i + 1) % k]
            out.add((u, v) if u < v else (v, u))
        return frozenset(out)

    @property
    def duration(self) -> float:
        return float(self.holding.sum())


@dataclass
class LoopSoupSample:
    box: BoxSpec
    killed: frozenset
    alpha: float
    loops: list
    trivial: dict  # vertex -> trivial-loop occupation


@dataclass
class StageTables:
    vertices: tuple
    return_prob: np.ndarray  # F_j per stage
    intensity: np.ndarray  # (n, k_max) Poisson intensities per (stage, k)
    first_step: list  # per stage: (targets, cumprobs) from x_j
    kernel: list  # per stage: dict u_index -> (targets, cumprobs); -1 target = x_j


@lru_cache(maxsize=32)
def stage_tables(box: BoxSpec, killed: frozenset, alpha: float,
                 tol: float = 1e-12) -> StageTables:
    free = tuple(v for v in sorted(box.vertices) if v not in killed)
    g = green_matrix(box, killed).mat.copy()
    n = len(free)
    idx = {v: i for i, v in enumerate(free)}
    nbrs = []
    for v in free:
        x, y = v
        nbrs.append([idx[w] for w in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))
                     if w in idx])
    fs = np.zeros(n)
    first_step = []
    kernels = []
    for j in range(n):
        gjj = g[j, j]
        f = 1.0 - 1.0 / gjj
        fs[j] = max(f, 0.0)
        h = g[:, j] / gjj  # hitting probability of x_j in the current graph
        if fs[j] > 0.0:
            t = [w for w in nbrs[j] if w > j]
            p = np.array([0.25 * h[w] for w in t])
            first_step.append((np.array(t), np.cumsum(p) / p.sum()))
        else:
            first_step.append((np.array([], dtype=int), np.array([])))
        kern = {}
        for u in range(j + 1, n):
            if h[u] <= 0.0:
                continue
            t, p = [], []
            for w in nbrs[u]:
                if w == j:
                    t.append(-1)
                    p.append(0.25 / h[u])
                elif w > j:
                    t.append(w)
                    p.append(0.25 * h[w] / h[u])
            p = np.array(p)
            kern[u] = (np.array(t), np.cumsum(p) / p.sum())
        kernels.append(kern)
        # remove x_j from the graph for the later stages
        g = g - np.outer(g[:, j], g[j, :]) / gjj
    k_max = 1
    fmax = fs.max(initial=0.0)
    if fmax > 0.0:
        while alpha * fmax ** (k_max + 1) / (k_max + 1) > tol:
            k_max += 1
    ks = np.arange(1, k_max + 1)
    intensity = alpha * fs[:, None] ** ks[None, :] / ks[None, :]
    return StageTables(free, fs, intensity, first_step, kernels)


def _draw_excursion(tables: StageTables, j: int, rng) -> list:
    """Vertex indices of one excursion from x_j back to x_j (x_j included once)."""
    targets, cum = tables.first_step[j]
    path = [j]
    u = int(targets[np.searchsorted(cum, rng.random())])
    while True:
        path.append(u)
        t, c = tables.kernel[j][u]
        u = int(t[np.searchsorted(c, rng.random())])
        if u == -1:
            return path


def sample_loop_soup(box: BoxSpec, alpha: float, rng, killed=None) -> LoopSoupSample:
    """One soup draw: Poisson loop counts, h-transform excursions,
    exponential holding times, and the independent single-vertex field."""
    if alpha <= 0:
        raise RangeError("alpha must be positive")
    killed = box.boundary if killed is None else frozenset(killed) | box.boundary
    tables = stage_tables(box, killed, alpha)
    free = tables.vertices
    loops = []
    counts = rng.poisson(tables.intensity)
    for j, k in zip(*np.nonzero(counts)):
        n_ex = int(k) + 1
        for _ in range(int(counts[j, k])):
            skel = []
            for _ in range(n_ex):
                skel.extend(_draw_excursion(tables, int(j), rng))
            # uniform phase among the visits to the minimal vertex
            if n_ex > 1:
                roots = [i for i, u in enumerate(skel) if u == j]
                cut = roots[rng.integers(len(roots))]
                skel = skel[cut:] + skel[:cut]
            verts = tuple(free[u] for u in skel)
            hold = rng.exponential(1.0 / HOLD_RATE, size=len(verts))
            loops.append(Loop(verts, hold))
    trivial_vals = rng.gamma(alpha, 1.0 / HOLD_RATE, size=len(free))
    trivial = {v: float(t) for v, t in zip(free, trivial_vals)}
    return LoopSoupSample(box, killed, alpha, loops, trivial)


@dataclass
class OccupationField:
    box: BoxSpec
    values: dict  # vertex -> total time

    def value(self, v) -> float:
        return self.values.get(v, 0.0)


def occupation_field(soup: LoopSoupSample) -> OccupationField:
    vals = dict(soup.trivial)
    for loop in soup.loops:
        for v, t in zip(loop.vertices, loop.holding):
            vals[v] += t
    return OccupationField(soup.box, vals)


def induced_graph(soup: LoopSoupSample) -> frozenset:
    """Edges traversed by at least one loop skeleton."""
    out = set()
    for loop in soup.loops:
        out |= loop.edges()
    return frozenset(out)


def soup_summary(soup: LoopSoupSample) -> dict:
    """Count-level digest of a sample: loops, duration, open edges, clusters."""
    edges = induced_graph(soup)
    parent = {}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for u, v in edges:
        parent.setdefault(u, u)
        parent.setdefault(v, v)
        parent[find(u)] = find(v)
    clusters = len({find(u) for u in parent})
    total = sum(loop.duration for loop in soup.loops)
    total += sum(soup.trivial.values())
    return {"loop_count": len(soup.loops), "total_duration": float(total),
            "open_edges": len(edges), "clusters": clusters}


def dump_loops(soup: LoopSoupSample, path) -> None:
    """Line-delimited loop records: skeleton vertices then holding times."""
    with open(path, "w", encoding="utf-8") as fh:
        for loop in soup.loops:
            skel = ";".join(f"{x},{y}" for x, y in loop.vertices)
            hold = ";".join(repr(float(t)) for t in loop.holding)
            fh.write(f"{skel}|{hold}\n")


def loop_chemical_distance(soup: LoopSoupSample, a, b) -> float:
    """Graph distance between the sets inside the loop-induced subgraph."""
    edges = induced_graph(soup)
    if not edges:
        return 0 if set(a) & set(b) else math.inf
    adj = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    a_cov = set(a) & set(adj)
    b_cov = set(b) & set(adj)
    if set(a) & set(b):
        return 0
    if not a_cov or not b_cov:
        return math.inf
    dist = {u: 0 for u in a_cov}
    frontier = sorted(a_cov)
    d = 0
    while frontier:
        nxt = []
        d += 1
        for u in frontier:
            for w in adj[u]:
                if w not in dist:
                    if w in b_cov:
                        return d
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return math.inf


# ---------------------------------------------------------------------------
# Brute-force oracle on tiny domains


@dataclass
class LoopLawOracle:
    edges: tuple  # possible internal edges, sorted
    bucket_mass: dict  # edge-subset (frozenset) -> loop-measure mass
    pattern_probs: dict  # edge-subset -> probability the open set equals it
    tail_bound: float


def brute_force_loop_law(box: BoxSpec, alpha: float, killed=None,
                         l_max: int = 60, tail_tol: float = 1e-9) -> LoopLawOracle:
    """Exact open-edge-pattern law by enumerating skeletons up to l_max.

    Dynamic program over (current vertex, used edge set); each closed walk
    of length n carries measure (1/4)^n / n, which sums over rootings to
    the unrooted loop-measure mass of its class.
    """
    killed = box.boundary if killed is None else frozenset(killed) | box.boundary
    free = tuple(v for v in sorted(box.vertices) if v not in killed)
    if len(free) > 4:
        raise RangeError("oracle restricted to at most 4 free vertices")
    idx = {v: i for i, v in enumerate(free)}
    edges = []
    for v in free:
        x, y = v
        for w in ((x + 1, y), (x, y + 1)):
            if w in idx:
                edges.append((v, w))
    edges = tuple(sorted(edges))
    epos = {e: i for i, e in enumerate(edges)}
    nbrs = [[] for _ in free]
    for (u, v) in edges:
        ei = epos[(u, v)]
        nbrs[idx[u]].append((idx[v], ei))
        nbrs[idx[v]].append((idx[u], ei))
    # spectral tail bound on the rooted-walk mass beyond l_max
    p = np.zeros((len(free), len(free)))
    for u in range(len(free)):
        for w, _ in nbrs[u]:
            p[u, w] = 0.25
    rho = max(np.abs(np.linalg.eigvals(p))) if len(free) > 1 else 0.0
    if rho > 0:
        tail = len(free) * rho ** (l_max + 1) / ((l_max + 1) * (1.0 - rho))
    else:
        tail = 0.0
    if tail > tail_tol:
        raise RangeError(
            f"tail bound {tail:.2e} exceeds {tail_tol:.2e}; raise l_max")
    bucket = {}
    for r in range(len(free)):
        # weights[(v, mask)] = sum over walks r->v of length n of (1/4)^n
        weights = {(r, 0): 1.0}
        for n in range(1, l_max + 1):
            new = {}
            for (u, mask), w in weights.items():
                for t, ei in nbrs[u]:
                    key = (t, mask | (1 << ei))
                    new[key] = new.get(key, 0.0) + w * 0.25
            weights = new
            for (u, mask), w in weights.items():
                if u == r and n >= 2:
                    bucket[mask] = bucket.get(mask, 0.0) + w / n
    masses = {frozenset(edges[i] for i in range(len(edges)) if m >> i & 1): w
              for m, w in bucket.items()}
    # independent Poisson presence per bucket; patterns are unions
    present_p = {mask: 1.0 - math.exp(-alpha * w) for mask, w in bucket.items()}
    patterns = {0: 1.0}
    for mask, pp in present_p.items():
        new = {}
        for pat, prob in patterns.items():
            new[pat] = new.get(pat, 0.0) + prob * (1.0 - pp)
            new[pat | mask] = new.get(pat | mask, 0.0) + prob * pp
        patterns = new
    pattern_probs = {
        frozenset(edges[i] for i in range(len(edges)) if m >> i & 1): pr
        for m, pr in patterns.items()}
    return LoopLawOracle(edges, masses, pattern_probs, tail)
