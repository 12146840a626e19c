"""Simple-random-walk machinery.

Exact and Monte Carlo harmonic measures on a box, harmonic measure from
infinity, the heavy-set statistic, the potential kernel, escape
probabilities, and the near-logarithmic harmonic profile used to control
values at a marked point on a split edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstructionError, PrecisionError, RangeError
from .lattice import BoxSpec, inner_box, inner_boundary

Z_95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = Z_95):
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


# ---------------------------------------------------------------------------
# Harmonic measure on a box


@dataclass
class HarmonicMeasureRow:
    """Hitting distribution of a target set from one start vertex.

    mass is aligned with targets (sorted).  lost is the probability of
    absorption on the box boundary before reaching the target; it is zero
    whenever the target contains the whole boundary.
    """

    start: tuple
    targets: tuple
    mass: np.ndarray
    lost: float
    method: str
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    n_walks: int = 0

    def mass_at(self, u) -> float:
        return float(self.mass[self.targets.index(u)])

    def mass_on(self, subset) -> float:
        s = set(subset)
        return float(sum(m for t, m in zip(self.targets, self.mass) if t in s))


def hm_table_csv(rows) -> str:
    """Flatten harmonic-measure rows into start,target,mass,ci_low,ci_high."""
    out = ["start,target,mass,ci_low,ci_high"]
    for row in rows:
        for k, t in enumerate(row.targets):
            lo = "" if row.ci_low is None else repr(float(row.ci_low[k]))
            hi = "" if row.ci_high is None else repr(float(row.ci_high[k]))
            out.append(f"\"{row.start}\",\"{t}\",{float(row.mass[k])!r},{lo},{hi}")
    return "\n".join(out) + "\n"


def _absorbing_solve(box: BoxSpec, absorbing: frozenset):
    """Factorized (I - P) on the free vertices plus the free-to-absorbing step map."""
    free = tuple(v for v in sorted(box.vertices) if v not in absorbing)
    idx = {v: i for i, v in enumerate(free)}
    aidx = {v: i for i, v in enumerate(sorted(absorbing))}
    rows, cols, data = [], [], []
    br, bc = [], []
    for v in free:
        i = idx[v]
        x, y = v
        for w in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            j = idx.get(w)
            if j is not None:
                rows.append(i)
                cols.append(j)
                data.append(0.25)
            elif w in aidx:
                br.append(i)
                bc.append(aidx[w])
    p = sp.csr_matrix((data, (rows, cols)), shape=(len(free), len(free)))
    r = sp.csr_matrix((np.full(len(br), 0.25), (br, bc)), shape=(len(free), len(aidx)))
    a = (sp.identity(len(free), format="csc") - p).T.tocsc()
    solve = spla.factorized(a) if free else None
    return free, idx, tuple(sorted(absorbing)), r, solve


def harmonic_measure_exact(box: BoxSpec, target, starts) -> list:
    """Exact hitting rows via sparse linear solves, one per start."""
    target = frozenset(target)
    if not target:
        raise RangeError("target must be nonempty")
    absorbing = target | box.boundary
    free, idx, abs_order, r, solve = _absorbing_solve(box, absorbing)
    targets = tuple(sorted(target))
    tpos = {v: k for k, v in enumerate(targets)}
    rows = []
    for s in starts:
        mass = np.zeros(len(targets))
        lost = 0.0
        if s in target:
            mass[tpos[s]] = 1.0
        elif s in absorbing:
            lost = 1.0
        else:
            y = np.zeros(len(free))
            y[idx[s]] = 1.0
            y = solve(y)
            hit = y @ r
            for v, k in zip(abs_order, hit):
                if v in tpos:
                    mass[tpos[v]] += k
                else:
                    lost += k
            total = mass.sum() + lost
            assert abs(total - 1.0) < 1e-10, "hitting masses must sum to 1"
        rows.append(HarmonicMeasureRow(s, targets, mass, lost, "exact"))
    return rows


def harmonic_measure_mc(box: BoxSpec, start, target, rng, n_walks: int) -> HarmonicMeasureRow:
    """Monte Carlo hitting row with Wilson intervals."""
    if n_walks < 1:
        raise RangeError("n_walks must be >= 1")
    target = frozenset(target)
    targets = tuple(sorted(target))
    tpos = {v: k for k, v in enumerate(targets)}
    counts = np.zeros(len(targets), dtype=int)
    lost = 0
    absorbing = target | box.boundary
    pos = np.empty((n_walks, 2), dtype=int)
    pos[:] = start
    active = np.ones(n_walks, dtype=bool)
    steps = np.array([(0, 1), (1, 0), (0, -1), (-1, 0)])
    while active.any():
        idx = np.flatnonzero(active)
        hit_now = []
        for i in idx:
            v = (int(pos[i, 0]), int(pos[i, 1]))
            if v in absorbing:
                hit_now.append(i)
                if v in tpos:
                    counts[tpos[v]] += 1
                else:
                    lost += 1
        if hit_now:
            active[hit_now] = False
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
        pos[idx] += steps[rng.integers(0, 4, size=idx.size)]
    mass = counts / n_walks
    lo = np.empty(len(targets))
    hi = np.empty(len(targets))
    for k, c in enumerate(counts):
        lo[k], hi[k] = wilson_interval(int(c), n_walks)
    return HarmonicMeasureRow(tuple(start), targets, mass, lost / n_walks, "mc", lo, hi, n_walks)


# ---------------------------------------------------------------------------
# Harmonic measure from infinity


def _distance_to_set(points: frozenset, pad: int):
    """BFS graph-distance grid to the set on a padded window around it."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    w, h = x1 - x0 + 1, y1 - y0 + 1
    dist = np.full((w, h), -1, dtype=int)
    frontier = []
    for (px, py) in points:
        dist[px - x0, py - y0] = 0
        frontier.append((px - x0, py - y0))
    d = 0
    while frontier:
        nxt = []
        for (gx, gy) in frontier:
            for hx, hy in ((gx + 1, gy), (gx - 1, gy), (gx, gy + 1), (gx, gy - 1)):
                if 0 <= hx < w and 0 <= hy < h and dist[hx, hy] < 0:
                    dist[hx, hy] = d + 1
                    nxt.append((hx, hy))
        frontier = nxt
        d += 1
    return dist, (x0, y0)


@dataclass
class HmInfinityRow:
    """Estimated hitting-from-far distribution over a finite set."""

    targets: tuple
    mass: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_walks: int
    converged: bool
    radius: float

    def mass_at(self, u) -> float:
        return float(self.mass[self.targets.index(u)])


def _circle_points(center, radius, k, rng):
    theta = rng.uniform(0.0, 2 * math.pi, size=k)
    x = np.rint(center[0] + radius * np.cos(theta)).astype(int)
    y = np.rint(center[1] + radius * np.sin(theta)).astype(int)
    return np.column_stack([x, y])


def _far_hit_counts(targets, tpos, dist, origin, center, radius, n_walks, rng):
    """Hitting counts from uniform circle starts, with long-jump acceleration.

    A walk that drifts beyond 4x the start radius is dropped and the
    masses are normalized by the number of hits.  Dropping is equivalent
    in law to restarting on the start circle (each attempt is independent,
    so the per-hit distribution is unchanged); from far away the hitting
    distribution is radius-insensitive, which is exactly what the
    doubled-radius check monitors.
    """
    counts = np.zeros(len(targets), dtype=int)
    w, h = dist.shape
    x0, y0 = origin
    tidx = np.full((w, h), -1, dtype=int)
    for v, k in tpos.items():
        tidx[v[0] - x0, v[1] - y0] = k
    pos = _circle_points(center, radius, n_walks, rng)
    restart_r2 = (4.0 * radius) ** 2
    cx, cy = center
    while pos.shape[0]:
        gx = pos[:, 0] - x0
        gy = pos[:, 1] - y0
        inside = (gx >= 0) & (gx < w) & (gy >= 0) & (gy < h)
        d = np.empty(pos.shape[0], dtype=int)
        d[inside] = dist[gx[inside], gy[inside]]
        # outside the window: l1 distance to the window is a valid lower bound
        ox = np.maximum(np.maximum(-gx, gx - (w - 1)), 0)
        oy = np.maximum(np.maximum(-gy, gy - (h - 1)), 0)
        d[~inside] = (ox + oy)[~inside] + 1
        hit = d == 0
        if hit.any():
            np.add.at(counts, tidx[gx[hit], gy[hit]], 1)
            keep = ~hit
            pos = pos[keep]
            d = d[keep]
            if pos.shape[0] == 0:
                break
        k = np.maximum(d - 1, 1)
        jumps = rng.multinomial(k, [0.25, 0.25, 0.25, 0.25])
        pos[:, 0] += jumps[:, 0] - jumps[:, 1]
        pos[:, 1] += jumps[:, 2] - jumps[:, 3]
        r2 = (pos[:, 0] - cx) ** 2 + (pos[:, 1] - cy) ** 2
        far = r2 > restart_r2
        if far.any():
            pos = pos[~far]
    return counts


def hm_infinity(targets, rng, radius_multiplier: float = 8.0, n_walks: int = 50_000) -> HmInfinityRow:
    """Hitting-from-far distribution on a finite connected set.

    Half the walks start on a circle of radius radius_multiplier times
    the set diameter, half on the doubled circle; the two estimates must
    agree within their joint confidence intervals (Richardson-style
    check) or the row is flagged non-converged.
    """
    targets_set = frozenset(tuple(t) for t in targets)
    if radius_multiplier < 4:
        raise RangeError("radius_multiplier must be >= 4")
    order = tuple(sorted(targets_set))
    tpos = {v: k for k, v in enumerate(order)}
    xs = [p[0] for p in order]
    ys = [p[1] for p in order]
    diam = max(max(xs) - min(xs), max(ys) - min(ys), 1)
    center = ((max(xs) + min(xs)) / 2.0, (max(ys) + min(ys)) / 2.0)
    radius = radius_multiplier * diam
    dist, origin = _distance_to_set(targets_set, pad=16)
    n1 = n_walks // 2
    n2 = n_walks - n1
    c1 = _far_hit_counts(order, tpos, dist, origin, center, radius, n1, rng)
    c2 = _far_hit_counts(order, tpos, dist, origin, center, 2 * radius, n2, rng)
    h1 = max(int(c1.sum()), 1)
    h2 = max(int(c2.sum()), 1)
    p1 = c1 / h1
    p2 = c2 / h2
    converged = c1.sum() > 0 and c2.sum() > 0
    for k in range(len(order)):
        se = math.sqrt(p1[k] * (1 - p1[k]) / h1 + p2[k] * (1 - p2[k]) / h2)
        if abs(p1[k] - p2[k]) > max(3.5 * se, 2.0 / min(h1, h2)):
            converged = False
            break
    counts = c1 + c2
    hits = h1 + h2
    mass = counts / hits
    lo = np.empty(len(order))
    hi = np.empty(len(order))
    for k, c in enumerate(counts):
        lo[k], hi[k] = wilson_interval(int(c), hits)
    return HmInfinityRow(order, mass, lo, hi, hits, converged, radius)


@dataclass
class MakarovResult:
    statistic: float
    ci_low: float
    ci_high: float
    threshold: float
    heavy: tuple
    diameter: int
    converged: bool


def makarov_statistic(targets, chi: float, rng, n_walks: int = 50_000) -> MakarovResult:
    """Mass from far away carried by individually heavy target points.

    Pass 1 estimates pointwise masses and thresholds them at
    exp((log n)^chi)/n where n is the l1 diameter; pass 2 re-estimates the
    total mass of the heavy set with fresh walks.
    """
    if chi <= 0.5:
        raise RangeError("chi must exceed 1/2")
    order = tuple(sorted(tuple(t) for t in targets))
    xs = [p[0] for p in order]
    ys = [p[1] for p in order]
    n = (max(xs) - min(xs)) + (max(ys) - min(ys))
    if n < 8:
        raise RangeError("target diameter must be at least 8")
    threshold = math.exp(math.log(n) ** chi) / n
    pass1 = hm_infinity(order, rng, n_walks=n_walks)
    heavy = tuple(v for v, m in zip(pass1.targets, pass1.mass) if m >= threshold)
    if not heavy:
        return MakarovResult(0.0, 0.0, 0.0, threshold, (), n, pass1.converged)
    pass2 = hm_infinity(order, rng, n_walks=n_walks)
    hv = set(heavy)
    trials = pass2.n_walks
    hits = int(round(sum(m for v, m in zip(pass2.targets, pass2.mass) if v in hv) * trials))
    lo, hi = wilson_interval(hits, trials)
    return MakarovResult(hits / trials, lo, hi, threshold, heavy, n,
                         pass1.converged and pass2.converged)


# ---------------------------------------------------------------------------
# Potential kernel


@dataclass(frozen=True)
class PotentialKernel:
    radius: int
    table: np.ndarray  # (2r+1, 2r+1), index [x + r, y + r]

    def value(self, v) -> float:
        x, y = v
        r = self.radius
        if max(abs(x), abs(y)) > r:
            raise RangeError(f"point {v} outside kernel radius {r}")
        return float(self.table[x + r, y + r])


_EULER_GAMMA = 0.5772156649015329
_KAPPA = (2 * _EULER_GAMMA + math.log(8)) / math.pi


def _kernel_solve(radius: int, pad_radius: int) -> np.ndarray:
    """Grid solve of the kernel equation with logarithmic boundary matching."""
    r = pad_radius
    m = 2 * r + 1
    xs = np.arange(-r, r + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    rad = np.hypot(gx, gy)
    with np.errstate(divide="ignore"):
        asym = (2.0 / math.pi) * np.log(rad) + _KAPPA
    asym[r, r] = 0.0
    interior = (np.abs(gx) < r) & (np.abs(gy) < r)
    free = np.flatnonzero(interior.ravel())
    fidx = np.full(m * m, -1, dtype=int)
    fidx[free] = np.arange(free.size)
    rows, cols, data = [], [], []
    rhs = np.zeros(free.size)
    flat_asym = asym.ravel()
    origin_flat = r * m + r
    for f, cell in enumerate(free):
        rows.append(f)
        cols.append(f)
        data.append(4.0)
        if cell == origin_flat:
            rhs[f] -= 4.0
        for nb in (cell + 1, cell - 1, cell + m, cell - m):
            j = fidx[nb]
            if j >= 0:
                rows.append(f)
                cols.append(j)
                data.append(-1.0)
            else:
                rhs[f] += flat_asym[nb]
    a = sp.csc_matrix((data, (rows, cols)), shape=(free.size, free.size))
    sol = spla.spsolve(a, rhs)
    full = flat_asym.copy()
    full[free] = sol
    full -= full[origin_flat]
    grid = full.reshape(m, m)
    lo, hi = r - radius, r + radius + 1
    return grid[lo:hi, lo:hi]


@lru_cache(maxsize=8)
def potential_kernel(radius: int, tol: float = 1e-6) -> PotentialKernel:
    """Kernel table a(x) for |x|_inf <= radius, refined until stable.

    a(0) = 0, a is discrete harmonic off the origin and the average over
    the four unit neighbors is 1 there.
    """
    if radius < 2:
        raise RangeError("radius must be >= 2")
    pad = 4 * radius
    t1 = _kernel_solve(radius, pad)
    t2 = _kernel_solve(radius, 2 * pad)
    if np.abs(t1 - t2).max() > tol:
        t3 = _kernel_solve(radius, 4 * pad)
        if np.abs(t2 - t3).max() > tol:
            raise PrecisionError("potential kernel did not stabilize under refinement")
        t2 = t3
    return PotentialKernel(radius, t2)


# ---------------------------------------------------------------------------
# Escape probabilities


@lru_cache(maxsize=32)
def escape_profile(box: BoxSpec, alpha: float) -> dict:
    """P(hit the inner ring before the box boundary), for every vertex.

    Vertices inside the inner box report 1, the box boundary 0.
    """
    ring = inner_boundary(box, alpha * box.n)
    interior_inner = inner_box(box, alpha * box.n) - ring
    absorbing = ring | box.boundary
    free, idx, abs_order, rmat, solve = _absorbing_solve(box, absorbing)
    target = np.array([1.0 if v in ring else 0.0 for v in abs_order])
    rhs = rmat @ target
    if free:
        a = (sp.identity(len(free), format="csc")
             - _step_kernel_free(box, free)).tocsc()
        h = spla.spsolve(a, rhs)
    else:
        h = np.zeros(0)
    out = {v: 1.0 for v in ring | interior_inner}
    out.update({v: 0.0 for v in box.boundary})
    out.update({v: float(h[i]) for v, i in idx.items()})
    return out


def _step_kernel_free(box: BoxSpec, free: tuple) -> sp.csr_matrix:
    idx = {v: i for i, v in enumerate(free)}
    rows, cols = [], []
    for v in free:
        x, y = v
        for w in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            j = idx.get(w)
            if j is not None:
                rows.append(idx[v])
                cols.append(j)
    n = len(free)
    return sp.csr_matrix((np.full(len(rows), 0.25), (rows, cols)), shape=(n, n))


def escape_before_prob(box: BoxSpec, u, alpha: float) -> float:
    """Exact probability of hitting the inner ring before the box boundary."""
    prof = escape_profile(box, alpha)
    if u not in prof:
        raise RangeError(f"vertex {u} outside the box")
    return prof[u]


def escape_frequency(targets, start, distances, rng, n_walks: int = 2000,
                     step_budget: int = 200_000) -> dict:
    """P(walk from start reaches l1 distance d from start before re-hitting the set).

    The start itself does not count as a hit at time 0.  Walks exceeding
    the step budget count as having reached every distance (conservative
    for decay checks).
    """
    tset = frozenset(tuple(t) for t in targets)
    distances = sorted(distances)
    dmax = distances[-1]
    reached = {d: 0 for d in distances}
    sx, sy = start
    pos = np.empty((n_walks, 2), dtype=int)
    pos[:] = start
    best = np.zeros(n_walks, dtype=int)
    active = np.ones(n_walks, dtype=bool)
    steps = np.array([(0, 1), (1, 0), (0, -1), (-1, 0)])
    for _ in range(step_budget):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        pos[idx] += steps[rng.integers(0, 4, size=idx.size)]
        d = np.abs(pos[idx, 0] - sx) + np.abs(pos[idx, 1] - sy)
        best[idx] = np.maximum(best[idx], d)
        done = best[idx] >= dmax
        for i in idx:
            if (int(pos[i, 0]), int(pos[i, 1])) in tset:
                active[i] = False
        active[idx[done]] = False
    best[active] = dmax
    for d in distances:
        reached[d] = int((best >= d).sum())
    return {d: reached[d] / n_walks for d in distances}


# ---------------------------------------------------------------------------
# Harmonic profile with a marked edge point


@dataclass
class HarmonicProfile:
    """Near-logarithmic profile harmonic away from a marked edge point.

    w sits on the low-conductance parallel edge between v and vprime at
    fractional position s from v (the edge carries total conductance 1/8,
    so the two half-edges have conductances 1/(8s) and 1/(8(1-s))).
    """

    box: BoxSpec
    v: tuple
    vprime: tuple
    s: float
    C: float
    C1: float
    values: dict = field(repr=False)
    f_w: float
    L_C: float
    residual_v: float
    residual_vprime: float

    def value(self, u) -> float:
        return self.values[u]


def build_harmonic_profile(box: BoxSpec, v, vprime, s: float, C: float, C1: float) -> HarmonicProfile:
    """f(u) = (1-s) g(u - v) + s g(u - vprime) with g a shifted kernel multiple.

    Checks the two weighted harmonicity identities at v and vprime to
    1e-9 and reports L(C), the maximal deviation of f from
    C log(|u - w| + 2) + C1.
    """
    if not (0.0 < s < 1.0):
        raise RangeError("s must lie strictly inside (0, 1)")
    if C <= 0 or C1 <= 0:
        raise RangeError("C and C1 must be positive")
    dv = (vprime[0] - v[0], vprime[1] - v[1])
    if abs(dv[0]) + abs(dv[1]) != 1:
        raise RangeError("v and vprime must be lattice neighbors")
    if box.is_boundary(v) or box.is_boundary(vprime):
        raise RangeError("the split edge must join interior vertices")
    kern = potential_kernel(2 * box.n)
    scale = C * math.pi / 2.0

    def g(u):
        return scale * kern.value(u) + C1

    t = 1.0 - s
    values = {}
    for u in sorted(box.vertices):
        values[u] = t * g((u[0] - v[0], u[1] - v[1])) + s * g((u[0] - vprime[0], u[1] - vprime[1]))
    g0 = g((0, 0))
    dg0 = g((0, 1)) + g((0, -1)) + g((1, 0)) + g((-1, 0)) - 4 * g0
    gvv = g(dv)
    gvvm = g((-dv[0], -dv[1]))
    f_w = (s * s + t * t) * g0 - 8 * s * t * dg0 + s * t * (gvv + gvvm)

    def residual(a, b, frac):
        others = [u for u in box.neighbors(a) if u != b]
        lhs = (3 + 7.0 / 8.0 + 1.0 / (8.0 * frac)) * values[a]
        rhs = sum(values[u] for u in others) + (7.0 / 8.0) * values[b] + f_w / (8.0 * frac)
        return lhs - rhs

    res_v = residual(v, vprime, s)
    res_vp = residual(vprime, v, t)
    tol = 1e-9 * max(1.0, abs(values[v]))
    if abs(res_v) > tol or abs(res_vp) > tol:
        raise ConstructionError(
            f"harmonicity identities violated: {res_v:.3e}, {res_vp:.3e}")
    wx = v[0] + s * dv[0]
    wy = v[1] + s * dv[1]
    dev = abs(f_w - C * math.log(2.0) - C1)
    for u, fu in values.items():
        r = math.hypot(u[0] - wx, u[1] - wy)
        dev = max(dev, abs(fu - C * math.log(r + 2.0) - C1))
    return HarmonicProfile(box, tuple(v), tuple(vprime), s, C, C1,
                           values, f_w, dev, res_v, res_vp)
