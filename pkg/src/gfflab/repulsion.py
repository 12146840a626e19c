"""Gibbs sampling of the field under pins and one-sided constraints.

Conditioning the field to stay above a hard wall pushes it upward by an
amount that grows with the box size; pinning a single site near the wall
height caps that growth locally.  The sampler here targets those
conditional laws directly with a single-site heat-bath: every interior
site's full conditional is Gaussian with mean equal to the average of its
four neighbours and variance 1/4, truncated to the site's one-sided window
when it has one.  Softened quartic potentials are kept only for the
finite-dimensional stochastic-ordering checks, where exact quadrature is
available.
"""

import math
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import log_ndtr, ndtr, ndtri, ndtri_exp

from .errors import InfeasibleConstraintError, PrecisionError, RangeError
from .gfield import green_matrix, sample_dgff_batch
from .lattice import BoxSpec, inner_box

COND_SD = 0.5  # sd of a site given its neighbours; shared by every interior site
DIAG_TARGET = 1.05
_UCLIP = 1e-14


@dataclass
class ConstraintSpec:
    """Pins plus one-sided windows for a constrained field.

    ``pinned`` maps vertices to fixed values.  ``above`` maps a vertex to a
    strict lower bound, ``below`` to a strict upper bound.  ``band``, when
    given, is the largest magnitude a pinned value may take.
    """

    pinned: dict = dfield(default_factory=dict)
    above: dict = dfield(default_factory=dict)
    below: dict = dfield(default_factory=dict)
    band: float = None

    def __post_init__(self):
        for v, lo in self.above.items():
            hi = self.below.get(v)
            if hi is not None and not lo < hi:
                raise InfeasibleConstraintError(
                    f"empty window ({lo}, {hi}) at {v}"
                )
        for v, x in self.pinned.items():
            lo = self.above.get(v)
            if lo is not None and not x > lo:
                raise InfeasibleConstraintError(
                    f"pin {x} at {v} violates lower bound {lo}"
                )
            hi = self.below.get(v)
            if hi is not None and not x < hi:
                raise InfeasibleConstraintError(
                    f"pin {x} at {v} violates upper bound {hi}"
                )
            if self.band is not None and abs(x) > self.band:
                raise InfeasibleConstraintError(
                    f"pin {x} at {v} outside band |x| <= {self.band}"
                )

    def is_free(self, box: BoxSpec, v) -> bool:
        return v in box.interior_index and v not in self.pinned


# ---------------------------------------------------------------------------
# truncated-normal draws, stable in the tails


def _draw_lower(mu, lo, rng):
    """Sample N(mu, COND_SD^2) conditioned on being > lo."""
    z = (lo - mu) / COND_SD
    u = np.clip(rng.random(np.shape(mu)), _UCLIP, 1.0)
    return mu - COND_SD * ndtri_exp(np.log(u) + log_ndtr(-z))


def _draw_upper(mu, hi, rng):
    z = (hi - mu) / COND_SD
    u = np.clip(rng.random(np.shape(mu)), _UCLIP, 1.0)
    return mu + COND_SD * ndtri_exp(np.log(u) + log_ndtr(z))


def _draw_window(mu, lo, hi, rng):
    a = ndtr((lo - mu) / COND_SD)
    b = ndtr((hi - mu) / COND_SD)
    u = rng.random(np.shape(mu))
    p = np.clip(a + u * (b - a), _UCLIP, 1.0 - _UCLIP)
    return mu + COND_SD * ndtri(p)


# ---------------------------------------------------------------------------
# the chain


def _site_tables(box: BoxSpec, cs: ConstraintSpec):
    n = box.n
    lo = np.full((n, n), -np.inf)
    hi = np.full((n, n), np.inf)
    free = np.zeros((n, n), dtype=bool)
    base = np.zeros((n, n))
    for v in box.interior:
        free[box.grid_index(v)] = True
    for v, x in cs.pinned.items():
        g = box.grid_index(v)
        base[g] = x
        free[g] = False
    for v, b in cs.above.items():
        g = box.grid_index(v)
        if free[g]:
            lo[g] = b
    for v, b in cs.below.items():
        g = box.grid_index(v)
        if free[g]:
            hi[g] = b

    groups = []
    gx, gy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    for color in (0, 1):
        mask = free & ((gx + gy) % 2 == color)
        has_lo = np.isfinite(lo)
        has_hi = np.isfinite(hi)
        kinds = (
            ("none", mask & ~has_lo & ~has_hi),
            ("lower", mask & has_lo & ~has_hi),
            ("upper", mask & ~has_lo & has_hi),
            ("window", mask & has_lo & has_hi),
        )
        color_groups = []
        for kind, m in kinds:
            ix, iy = np.nonzero(m)
            if ix.size:
                color_groups.append((kind, ix, iy))
        groups.append(color_groups)
    return base, lo, hi, free, groups


def _neighbor_sums(state):
    ns = np.zeros_like(state)
    ns[:, 1:-1, 1:-1] = (
        state[:, :-2, 1:-1]
        + state[:, 2:, 1:-1]
        + state[:, 1:-1, :-2]
        + state[:, 1:-1, 2:]
    )
    return ns


def _sweep(state, lo, hi, groups, rng):
    for color_groups in groups:
        ns = _neighbor_sums(state)
        for kind, ix, iy in color_groups:
            mu = 0.25 * ns[:, ix, iy]
            if kind == "none":
                x = rng.normal(mu, COND_SD)
            elif kind == "lower":
                x = _draw_lower(mu, lo[ix, iy], rng)
            elif kind == "upper":
                x = _draw_upper(mu, hi[ix, iy], rng)
            else:
                x = _draw_window(mu, lo[ix, iy], hi[ix, iy], rng)
            state[:, ix, iy] = x


def split_chain_diagnostic(trace: np.ndarray) -> float:
    """Potential scale reduction factor from half-chains.

    ``trace`` has one row per chain.  Each row gets split in two, and the
    usual between/within variance ratio is computed on the halves.
    """
    trace = np.asarray(trace, dtype=float)
    c, s = trace.shape
    half = s // 2
    if half < 2:
        raise RangeError("need at least 4 recorded sweeps per chain")
    pieces = np.concatenate([trace[:, :half], trace[:, s - half :]], axis=0)
    within = pieces.var(axis=1, ddof=1).mean()
    if within <= 0.0:
        return 1.0
    between = half * pieces.mean(axis=1).var(ddof=1)
    var_hat = (half - 1) / half * within + between / half
    return float(math.sqrt(var_hat / within))


@dataclass
class GibbsResult:
    """Post-burn-in output of the constrained heat-bath chains."""

    box: BoxSpec
    cs: ConstraintSpec
    samples: np.ndarray  # (n_chains, kept, n, n)
    trace: np.ndarray  # (n_chains, sweeps) mean over free sites
    diagnostic: float
    converged: bool
    burn_in: int
    thin: int

    def pooled(self) -> np.ndarray:
        c, k, n, _ = self.samples.shape
        return self.samples.reshape(c * k, n, n)

    def site_values(self, v) -> np.ndarray:
        gx, gy = self.box.grid_index(v)
        return self.samples[:, :, gx, gy]

    def dump_trace(self, path):
        header = ",".join(f"chain{i}" for i in range(self.trace.shape[0]))
        np.savetxt(path, self.trace.T, delimiter=",", header=header, comments="")


def gibbs_constrained_field(
    box: BoxSpec,
    cs: ConstraintSpec,
    rng,
    sweeps: int = 500,
    burn_in: int = 200,
    thin: int = 10,
    n_chains: int = 4,
    max_burn_in: int = 4000,
) -> GibbsResult:
    """Run parallel heat-bath chains for the constrained field.

    Burn-in lasts ``burn_in`` sweeps or until the split-chain diagnostic
    drops under 1.05, whichever comes later (capped at ``max_burn_in``).
    After that, ``sweeps`` more sweeps are run and every ``thin``-th state
    is kept from each chain.
    """
    if n_chains < 2:
        raise RangeError("the split-chain diagnostic needs at least 2 chains")
    base, lo, hi, free, groups = _site_tables(box, cs)
    if not free.any():
        raise InfeasibleConstraintError("no free sites to update")

    # pilot unconditioned draws seed the chains with overdispersed starts,
    # clamped just inside each site's window
    pilot = sample_dgff_batch(box, rng, n_chains)
    state = np.broadcast_to(base, pilot.shape).copy()
    state[:, free] = pilot[:, free]
    lo_eff = np.where(np.isfinite(lo), lo + 0.05 * COND_SD, -np.inf)
    hi_eff = np.where(np.isfinite(hi), hi - 0.05 * COND_SD, np.inf)
    state = np.clip(state, lo_eff, hi_eff)

    window = max(100, burn_in // 2)
    hist = []
    done = 0
    while True:
        target = burn_in if done == 0 else done + window // 2
        target = min(target, max_burn_in)
        while done < target:
            _sweep(state, lo, hi, groups, rng)
            hist.append(state[:, free].mean(axis=1))
            done += 1
        tail = np.array(hist[-window:]).T
        if tail.shape[1] >= 4 and split_chain_diagnostic(tail) < DIAG_TARGET:
            break
        if done >= max_burn_in:
            break

    kept = sweeps // thin
    samples = np.empty((n_chains, kept, box.n, box.n))
    trace = np.empty((n_chains, sweeps))
    k = 0
    for s in range(sweeps):
        _sweep(state, lo, hi, groups, rng)
        trace[:, s] = state[:, free].mean(axis=1)
        if (s + 1) % thin == 0:
            samples[:, k] = state
            k += 1
    diag = split_chain_diagnostic(trace)
    return GibbsResult(
        box, cs, samples, trace, diag, diag < DIAG_TARGET, done, thin
    )


# ---------------------------------------------------------------------------
# repulsion profile


@dataclass
class ProfileEstimate:
    box: BoxSpec
    site: tuple
    pin_site: tuple  # None when the wall runs unpinned
    mean: float
    se: float
    diagnostic: float
    converged: bool


def entropic_mean_profile(
    box: BoxSpec,
    lam: float,
    alpha: float,
    rng,
    pin: bool = True,
    pin_site=None,
    eps: float = None,
    sweeps: int = 2000,
    burn_in: int = 300,
    thin: int = 10,
    n_chains: int = 4,
) -> ProfileEstimate:
    """Estimate the conditional mean at the centre under a hard wall.

    The field is forced above ``lam + eps`` on the inner box of side
    ``alpha * n``.  With ``pin`` set, one site adjacent to the centre (or
    ``pin_site`` itself) is pinned at exactly ``lam``, which keeps the
    centre mean bounded as the box grows; without the pin the mean drifts
    upward with the box size.
    """
    if eps is None:
        eps = 1.0 / box.n
    wall = inner_box(box, alpha * box.n)
    if not wall <= frozenset(box.interior):
        raise RangeError("wall region must sit strictly inside the box")
    v = (0, 0) if box.n % 2 == 1 else (0, 1)
    if v not in wall:
        raise RangeError("centre site not inside the wall region")
    pinned = {}
    if pin:
        if pin_site is None:
            pin_site = next(w for w in ((v[0] + 1, v[1]), (v[0] - 1, v[1])) if w in wall)
        if max(abs(pin_site[0] - v[0]), abs(pin_site[1] - v[1])) > 1:
            raise RangeError("pin site must be within distance 1 of the centre")
        pinned[pin_site] = lam
    else:
        pin_site = None
    above = {u: lam + eps for u in wall if u not in pinned}
    cs = ConstraintSpec(pinned=pinned, above=above, band=abs(lam) + eps)

    if pin_site == v:
        return ProfileEstimate(box, v, v, lam, 0.0, 1.0, True)

    res = gibbs_constrained_field(
        box, cs, rng, sweeps=sweeps, burn_in=burn_in, thin=thin, n_chains=n_chains
    )
    vals = res.site_values(v)
    chain_means = vals.mean(axis=1)
    se = float(chain_means.std(ddof=1) / math.sqrt(len(chain_means)))
    return ProfileEstimate(
        box, v, pin_site, float(vals.mean()), se, res.diagnostic, res.converged
    )


# ---------------------------------------------------------------------------
# variance comparison


@dataclass
class VarianceComparison:
    conditional: float
    conditional_se: float
    unconditional: float
    ordered: bool


def brascamp_lieb_check(
    box: BoxSpec,
    cs: ConstraintSpec,
    weights: dict,
    rng,
    sweeps: int = 2000,
    burn_in: int = 300,
    thin: int = 10,
    n_chains: int = 4,
) -> VarianceComparison:
    """Compare Var(l . Z) with and without the one-sided constraints.

    The unconstrained variance (pins kept, windows dropped) is exact: a
    pinned-site Green matrix gives Var = (1/4) l' G l.  The constrained
    variance comes from the chains, with a standard error from the spread
    of per-chain estimates.  One-sided conditioning can only shrink the
    variance of a linear functional, so the report flags whether
    conditional <= unconditional + 3 se.
    """
    killed = frozenset(box.boundary) | frozenset(cs.pinned)
    var_free = 0.0
    free_w = {v: w for v, w in weights.items() if cs.is_free(box, v) and w != 0.0}
    if free_w:
        gm = green_matrix(box, killed)
        items = list(free_w.items())
        for u, wu in items:
            for v, wv in items:
                var_free += wu * wv * gm.value(u, v)
        var_free *= 0.25

    res = gibbs_constrained_field(
        box, cs, rng, sweeps=sweeps, burn_in=burn_in, thin=thin, n_chains=n_chains
    )
    score = np.zeros(res.samples.shape[:2])
    for v, w in weights.items():
        gx, gy = box.grid_index(v)
        score += w * res.samples[:, :, gx, gy]
    chain_vars = score.var(axis=1, ddof=1)
    cond = float(chain_vars.mean())
    se = float(chain_vars.std(ddof=1) / math.sqrt(len(chain_vars)))
    ordered = cond <= var_free + 3.0 * se + 1e-12
    return VarianceComparison(cond, se, var_free, ordered)


# ---------------------------------------------------------------------------
# softened potentials and stochastic ordering on short chains


@dataclass(frozen=True)
class SitePotential:
    """One quartic penalty qt^4, one-sided or two-sided, shifted to a centre.

    kind "U" penalises values below the centre, "V" values above, "W" both
    sides, "none" nothing.
    """

    kind: str
    center: float = 0.0
    q: float = 1.0

    def __post_init__(self):
        if self.kind not in ("U", "V", "W", "none"):
            raise RangeError(f"unknown potential kind {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float) - self.center
        p = self.q * t**4
        if self.kind == "U":
            return np.where(t < 0.0, p, 0.0)
        if self.kind == "V":
            return np.where(t >= 0.0, p, 0.0)
        if self.kind == "W":
            return p
        return np.zeros_like(t)


def listed_monotone_pairs(q: float, t0: float, t1: float):
    """The (h1, h2) pairs whose joint inequality drives the ordering proof."""
    if not t0 < t1:
        raise RangeError("need t0 < t1")
    u0 = SitePotential("U", t0, q)
    return (
        (SitePotential("W", t0, q), SitePotential("W", t1, q)),
        (SitePotential("W", t0, q), u0),
        (SitePotential("V", t0, q), u0),
        (SitePotential("none", 0.0, q), u0),
        (u0, SitePotential("U", t1, q)),
    )


def monotone_pair_violation(h1, h2, grid) -> float:
    """max of h2(t v t') + h1(t ^ t') - h2(t) - h1(t') over the grid."""
    t, tp = np.meshgrid(np.asarray(grid, dtype=float), np.asarray(grid, dtype=float))
    lhs = h2(np.maximum(t, tp)) + h1(np.minimum(t, tp))
    rhs = h2(t) + h1(tp)
    return float((lhs - rhs).max())


def _chain_precision(d: int) -> np.ndarray:
    q = 4.0 * np.eye(d)
    for i in range(d - 1):
        q[i, i + 1] = q[i + 1, i] = -1.0
    return q


@dataclass
class OrderReport:
    """CDF comparison of two softly-penalised chain measures."""

    dominates: bool
    max_gap: float  # worst F2 - F1 over all coordinates and grid points
    cdf_grid: np.ndarray
    cdf1: np.ndarray  # (d, n_grid)
    cdf2: np.ndarray
    refinement_error: float


def _chain_cdfs(prec, pots, grid, axis_weights):
    d = prec.shape[0]
    log_w = 0.0
    for i in range(d):
        s = [1] * d
        s[i] = -1
        gi = grid.reshape(s)
        log_w = log_w - 0.5 * prec[i, i] * gi**2 - pots[i](grid).reshape(s)
        for j in range(i + 1, d):
            if prec[i, j] != 0.0:
                sj = [1] * d
                sj[j] = -1
                log_w = log_w - prec[i, j] * gi * grid.reshape(sj)
    log_w = np.broadcast_to(log_w, [grid.size] * d)
    w = np.exp(log_w - log_w.max())
    cdfs = np.empty((d, grid.size))
    for i in range(d):
        marg = w
        for j in range(d - 1, -1, -1):
            if j != i:
                marg = np.tensordot(marg, axis_weights, axes=([j], [0]))
        # marg is the 1-d marginal on the grid along axis i
        cdf = cumulative_simpson(marg, x=grid, initial=0.0)
        cdfs[i] = cdf / cdf[-1]
    return cdfs


def stochastic_order_check(
    pots1, pots2, half_width: float = None, tol: float = 1e-6
) -> OrderReport:
    """Test per-coordinate stochastic dominance of measure 2 over measure 1.

    Both measures penalise the same centred Gaussian chain of up to three
    sites, coordinate by coordinate, with the given potentials.  Marginal
    CDFs are computed by trapezoid quadrature on a refined grid until two
    successive refinements agree to ``tol``.
    """
    d = len(pots1)
    if d != len(pots2) or not 1 <= d <= 3:
        raise RangeError("need matching potential lists on 1 to 3 sites")
    prec = _chain_precision(d)
    centers = [p.center for p in list(pots1) + list(pots2)]
    if half_width is None:
        half_width = 4.0 + max((abs(c) for c in centers), default=0.0)

    sizes = (161, 321, 641, 1281, 2561) if d == 1 else (
        (161, 321, 641, 1281) if d == 2 else (81, 161, 241)
    )
    prev = None
    err = np.inf
    for n in sizes:
        grid = np.linspace(-half_width, half_width, n)
        h = grid[1] - grid[0]
        axis_w = np.full(n, 2.0 * h / 3.0)
        axis_w[1::2] = 4.0 * h / 3.0
        axis_w[0] = axis_w[-1] = h / 3.0
        c1 = _chain_cdfs(prec, pots1, grid, axis_w)
        c2 = _chain_cdfs(prec, pots2, grid, axis_w)
        if prev is not None:
            pg, p1, p2 = prev
            f1 = np.array([np.interp(pg, grid, c1[i]) for i in range(d)])
            f2 = np.array([np.interp(pg, grid, c2[i]) for i in range(d)])
            err = max(np.abs(f1 - p1).max(), np.abs(f2 - p2).max())
            if err < tol:
                break
        prev = (grid, c1, c2)
    if not err < tol and d <= 2:
        raise PrecisionError(f"quadrature stalled at refinement error {err:.2e}")
    gap = float((c2 - c1).max())
    return OrderReport(gap <= tol, gap, grid, c1, c2, float(err))
