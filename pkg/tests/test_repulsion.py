"""Constrained heat-bath chains, entropic repulsion and stochastic ordering."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from gfflab.errors import InfeasibleConstraintError, RangeError
from gfflab.lattice import build_box
from gfflab.repulsion import (
    ConstraintSpec,
    SitePotential,
    brascamp_lieb_check,
    entropic_mean_profile,
    gibbs_constrained_field,
    listed_monotone_pairs,
    monotone_pair_violation,
    split_chain_diagnostic,
    stochastic_order_check,
)


def test_constraint_spec_rejects_empty_window():
    with pytest.raises(InfeasibleConstraintError):
        ConstraintSpec(above={(0, 0): 1.0}, below={(0, 0): 0.5})


def test_constraint_spec_rejects_pin_outside_window():
    with pytest.raises(InfeasibleConstraintError):
        ConstraintSpec(pinned={(0, 0): 0.0}, above={(0, 0): 1.0})
    with pytest.raises(InfeasibleConstraintError):
        ConstraintSpec(pinned={(0, 0): 2.0}, below={(0, 0): 1.0})


def test_constraint_spec_band():
    with pytest.raises(InfeasibleConstraintError):
        ConstraintSpec(pinned={(0, 0): 3.0}, band=2.0)
    cs = ConstraintSpec(pinned={(0, 0): 1.5}, band=2.0)
    box = build_box(5)
    assert not cs.is_free(box, (0, 0))
    assert cs.is_free(box, (1, 1))


def test_no_free_sites_raises():
    box = build_box(3)
    cs = ConstraintSpec(pinned={(0, 0): 0.0})
    rng = np.random.default_rng(0)
    with pytest.raises(InfeasibleConstraintError):
        gibbs_constrained_field(box, cs, rng)


def test_split_chain_needs_four_sweeps():
    with pytest.raises(RangeError):
        split_chain_diagnostic(np.zeros((2, 3)))


def test_split_chain_near_one_for_iid():
    rng = np.random.default_rng(1)
    r = split_chain_diagnostic(rng.normal(size=(4, 2000)))
    assert abs(r - 1.0) < 0.05


def test_heat_bath_conditional_is_neighbor_average():
    # pin every interior site except the centre; its conditional is then
    # exactly N(mean of the four neighbours, 1/4)
    box = build_box(5)
    pins = {(-1, -1): 0.3, (-1, 0): -0.2, (-1, 1): 0.7,
            (0, -1): 0.8, (0, 1): 0.4, (1, -1): -0.5,
            (1, 0): 1.0, (1, 1): 0.1}
    cs = ConstraintSpec(pinned=pins)
    rng = np.random.default_rng(2)
    res = gibbs_constrained_field(box, cs, rng, sweeps=3000, thin=1)
    vals = res.site_values((0, 0)).ravel()
    mu = (pins[(0, -1)] + pins[(0, 1)] + pins[(-1, 0)] + pins[(1, 0)]) / 4
    assert abs(vals.mean() - mu) < 4 * 0.5 / math.sqrt(vals.size)
    assert abs(vals.std() - 0.5) < 0.02


def test_single_site_half_normal_mean():
    # one interior site above zero boundary: truncating N(0, 1/4) to the
    # positive axis gives mean sqrt(2/pi)/2
    box = build_box(3)
    cs = ConstraintSpec(above={(0, 0): 0.0})
    rng = np.random.default_rng(3)
    res = gibbs_constrained_field(box, cs, rng, sweeps=3000, thin=1)
    vals = res.site_values((0, 0)).ravel()
    target = 0.5 * math.sqrt(2 / math.pi)
    assert (vals > 0).all()
    assert abs(vals.mean() - target) < 4 * vals.std() / math.sqrt(vals.size)


def test_single_site_high_wall_mean():
    # wall at 1 is 2 sd out; the truncated-normal mean has a closed form
    box = build_box(3)
    cs = ConstraintSpec(above={(0, 0): 1.0})
    rng = np.random.default_rng(4)
    res = gibbs_constrained_field(box, cs, rng, sweeps=3000, thin=1)
    vals = res.site_values((0, 0)).ravel()
    a = 1.0 / 0.5
    target = 0.5 * norm.pdf(a) / norm.sf(a)
    assert (vals > 1.0).all()
    assert abs(vals.mean() - target) < 4 * vals.std() / math.sqrt(vals.size)


def test_unconstrained_variance_matches_exact():
    # with no windows the chain targets the plain field; the variance
    # comparison then reduces to chain noise around the exact value
    box = build_box(7)
    cs = ConstraintSpec()
    rng = np.random.default_rng(5)
    rep = brascamp_lieb_check(box, cs, {(0, 0): 1.0, (1, 0): -1.0}, rng,
                              sweeps=2000, thin=2)
    assert rep.ordered
    assert abs(rep.conditional - rep.unconditional) < 6 * rep.conditional_se


def test_wall_shrinks_variance():
    box = build_box(7)
    wall = {v: 0.0 for v in box.interior}
    cs = ConstraintSpec(above=wall)
    rng = np.random.default_rng(6)
    rep = brascamp_lieb_check(box, cs, {(0, 0): 1.0}, rng, sweeps=2000, thin=2)
    assert rep.ordered
    assert rep.conditional < rep.unconditional


def test_profile_pin_at_centre_shortcut():
    box = build_box(9)
    rng = np.random.default_rng(7)
    est = entropic_mean_profile(box, 1.0, 0.5, rng, pin_site=(0, 0))
    assert est.mean == 1.0 and est.se == 0.0 and est.converged


def test_profile_unpinned_sits_above_wall():
    box = build_box(9)
    rng = np.random.default_rng(8)
    est = entropic_mean_profile(box, 0.0, 0.5, rng, pin=False,
                                sweeps=1000, burn_in=200)
    assert est.pin_site is None
    assert est.mean > 0.1


def test_site_potential_kinds():
    with pytest.raises(RangeError):
        SitePotential("X")
    u = SitePotential("U", 0.0, 2.0)
    assert u(-1.0) == 2.0 and u(1.0) == 0.0
    v = SitePotential("V", 0.0, 2.0)
    assert v(1.0) == 2.0 and v(-1.0) == 0.0
    w = SitePotential("W", 0.5, 1.0)
    assert w(1.5) == 1.0 and w(-0.5) == 1.0
    assert SitePotential("none")(3.0) == 0.0


def test_listed_pairs_satisfy_lattice_inequality():
    grid = np.linspace(-3.0, 3.0, 241)
    for h1, h2 in listed_monotone_pairs(1.0, -0.3, 0.4):
        assert monotone_pair_violation(h1, h2, grid) <= 1e-12
    for h1, h2 in listed_monotone_pairs(2.5, 0.0, 1.0):
        assert monotone_pair_violation(h1, h2, grid) <= 1e-12


def test_unlisted_pair_violates():
    # penalising above in the h2 slot breaks the inequality
    grid = np.linspace(-2.0, 2.0, 81)
    bad = monotone_pair_violation(SitePotential("none"), SitePotential("V", 0.0, 1.0), grid)
    assert bad > 0.5


def test_listed_pairs_need_ordered_centres():
    with pytest.raises(RangeError):
        listed_monotone_pairs(1.0, 0.5, 0.5)


def test_stochastic_order_identical_measures():
    rep = stochastic_order_check((SitePotential("W", 0.0, 1.0),),
                                 (SitePotential("W", 0.0, 1.0),))
    assert rep.dominates
    assert abs(rep.max_gap) < 1e-9


def test_stochastic_order_dropping_upper_penalty_lifts():
    # removing the penalty on positive values pushes mass upward
    rep = stochastic_order_check((SitePotential("W", 0.0, 1.0),),
                                 (SitePotential("U", 0.0, 1.0),))
    assert rep.dominates
    flipped = stochastic_order_check((SitePotential("U", 0.0, 1.0),),
                                     (SitePotential("W", 0.0, 1.0),))
    assert not flipped.dominates


def test_stochastic_order_two_sites():
    pots1 = (SitePotential("W", 0.0, 1.0), SitePotential("W", 0.0, 1.0))
    pots2 = (SitePotential("U", 0.0, 1.0), SitePotential("U", 0.0, 1.0))
    rep = stochastic_order_check(pots1, pots2)
    assert rep.dominates


def test_stochastic_order_rejects_bad_dims():
    w = SitePotential("W")
    with pytest.raises(RangeError):
        stochastic_order_check((w,), (w, w))
    with pytest.raises(RangeError):
        stochastic_order_check((w,) * 4, (w,) * 4)


def test_soft_wall_approaches_hard_wall():
    # the quartic lower penalty concentrates toward the hard-wall law as
    # its strength grows; sup CDF distance shrinks in q
    dists = []
    for q in (1.0, 10.0, 100.0):
        pots = (SitePotential("U", 0.0, q),)
        rep = stochastic_order_check(pots, pots)
        grid = rep.cdf_grid
        hard = np.where(grid > 0, 2 * norm.cdf(2 * grid) - 1, 0.0)
        dists.append(np.abs(rep.cdf1[0] - hard).max())
    assert dists[0] > dists[1] > dists[2]
