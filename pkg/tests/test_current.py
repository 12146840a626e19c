"""Sourceless currents, parity laws and the domination coupling."""

import math

import numpy as np
import pytest

from gfflab.current import (
    brute_force_current_law,
    domination_check,
    domination_grid_ok,
    edge_jump_counts,
    f1_pmf,
    f2_pmf,
    loop_current_consistency,
    sample_current_batch,
    sample_current_rejection,
    sample_parity_conditional,
)
from gfflab.errors import ParityError, RangeError
from gfflab.lattice import build_box
from gfflab.loopsoup import occupation_field, sample_loop_soup

SINGLE = (((0, 0), (0, 1)),)
TRIANGLE = (((0, 0), (0, 1)), ((0, 0), (1, 0)), ((0, 1), (1, 0)))


def two_site_domain():
    box = build_box(4)
    keep = frozenset({(0, 0), (0, 1)})
    return box, box.vertices - keep


def test_single_edge_even_only():
    beta = 1.3
    law = brute_force_current_law(SINGLE, beta)
    for (n,), p in law.items():
        assert n % 2 == 0
        assert p == pytest.approx(beta ** n / math.factorial(n) / math.cosh(beta),
                                  abs=1e-9)
    assert law[(0,)] == pytest.approx(1 / math.cosh(beta), abs=1e-10)


def test_triangle_symmetric_under_permutation():
    # swapping vertices (0,1) <-> (1,0) permutes the first two edges
    law = brute_force_current_law(TRIANGLE, 1.0)
    for (a, b, c), p in law.items():
        assert law[(b, a, c)] == pytest.approx(p, abs=1e-12)


def test_small_beta_concentrates_on_zero():
    p_zero = []
    for beta in (1.0, 0.1, 0.01):
        law = brute_force_current_law(TRIANGLE, beta)
        p_zero.append(law[(0, 0, 0)])
    assert p_zero[0] < p_zero[1] < p_zero[2]
    assert p_zero[2] > 0.999


def test_brute_force_tail_guard():
    with pytest.raises(RangeError):
        brute_force_current_law(TRIANGLE, 8.0, n_max=6)


def test_rejection_sampler_even_degrees():
    rng = np.random.default_rng(0)
    for _ in range(200):
        cfg, tries = sample_current_rejection(TRIANGLE, 1.0, rng)
        assert tries >= 1
        deg = {}
        for e in TRIANGLE:
            for v in e:
                deg[v] = deg.get(v, 0) + cfg.value(e)
        assert all(d % 2 == 0 for d in deg.values())


def test_rejection_matches_brute_force():
    rng = np.random.default_rng(1)
    law = brute_force_current_law(TRIANGLE, 1.0)
    accepts = 30_000
    samples, rate = sample_current_batch(TRIANGLE, 1.0, rng, accepts)
    assert 0 < rate <= 1
    freq = {}
    for key in samples:
        freq[key] = freq.get(key, 0) + 1
    tv = 0.5 * sum(abs(freq.get(k, 0) / accepts - law.get(k, 0.0))
                   for k in set(law) | set(freq))
    assert tv < 0.02


def test_parity_pmfs():
    assert f2_pmf(0, 1.0) == pytest.approx(1 / math.cosh(1.0), abs=1e-9)
    assert f1_pmf(1, 1.0) == pytest.approx(1 / math.sinh(1.0), abs=1e-9)
    assert f1_pmf(0, 1.0) == 0.0
    assert f2_pmf(3, 1.0) == 0.0


def test_parity_pmfs_normalize():
    for beta in (0.5, 1.0, 2.5):
        assert sum(f1_pmf(n, beta) for n in range(80)) == pytest.approx(1.0, abs=1e-12)
        assert sum(f2_pmf(n, beta) for n in range(80)) == pytest.approx(1.0, abs=1e-12)


def test_parity_partial_sums_identity():
    beta = 1.7
    odd = sum(beta ** n / math.factorial(n) for n in range(1, 80, 2))
    even = sum(beta ** n / math.factorial(n) for n in range(0, 80, 2))
    assert odd == pytest.approx(math.sinh(beta), abs=1e-12)
    assert even == pytest.approx(math.cosh(beta), abs=1e-12)


def test_parity_conditional_respects_parity():
    rng = np.random.default_rng(2)
    parity = {TRIANGLE[0]: 1, TRIANGLE[1]: 1, TRIANGLE[2]: 1}
    for _ in range(100):
        cfg = sample_parity_conditional(TRIANGLE, parity, 1.0, rng)
        for e, par in parity.items():
            assert cfg.value(e) % 2 == par


def test_parity_infeasible_raises():
    rng = np.random.default_rng(3)
    parity = {TRIANGLE[0]: 1, TRIANGLE[1]: 0, TRIANGLE[2]: 0}
    with pytest.raises(ParityError):
        sample_parity_conditional(TRIANGLE, parity, 1.0, rng)


def test_parity_mixture_reconstructs_unconditional():
    # mixing parity-conditional draws by the exact parity marginal must
    # give back the unconditional current law
    rng = np.random.default_rng(4)
    law = brute_force_current_law(TRIANGLE, 1.0)
    marginal = {}
    for values, p in law.items():
        key = tuple(n % 2 for n in values)
        marginal[key] = marginal.get(key, 0.0) + p
    keys = sorted(marginal)
    probs = np.array([marginal[k] for k in keys])
    probs = probs / probs.sum()
    reps = 30_000
    freq = {}
    for choice in rng.choice(len(keys), size=reps, p=probs):
        parity = dict(zip(TRIANGLE, keys[choice]))
        cfg = sample_parity_conditional(TRIANGLE, parity, 1.0, rng)
        freq[cfg.values] = freq.get(cfg.values, 0) + 1
    tv = 0.5 * sum(abs(freq.get(k, 0) / reps - law.get(k, 0.0))
                   for k in set(law) | set(freq))
    assert tv < 0.02


def test_consistency_rejects_wrong_domain():
    rng = np.random.default_rng(5)
    with pytest.raises(RangeError):
        loop_current_consistency(build_box(3), rng, n_samples=10)


def test_consistency_two_site():
    rng = np.random.default_rng(6)
    box, killed = two_site_domain()
    rep = loop_current_consistency(box, rng, n_samples=60_000, killed=killed)
    assert rep.weighted_tv < 0.05
    assert rep.n_samples == 60_000
    assert 0.05 in rep.sensitivity and 0.2 in rep.sensitivity
    payload = rep.to_json()
    assert '"weighted_tv"' in payload
    assert '"bins"' in payload


def test_low_local_time_means_few_jumps():
    # samples whose local times are tiny behave like beta near 0, so loop
    # traversals of the edge are rare there
    rng = np.random.default_rng(7)
    box, killed = two_site_domain()
    jumps_low = 0
    count_low = 0
    for _ in range(4000):
        soup = sample_loop_soup(box, 0.5, rng, killed=killed)
        occ = occupation_field(soup)
        x, y = (0, 0), (0, 1)
        if occ.value(x) < 0.05 and occ.value(y) < 0.05:
            count_low += 1
            jumps_low += sum(edge_jump_counts(soup).values())
    assert count_low > 50
    assert jumps_low / count_low < 0.05


def test_domination_grid_examples():
    ok, bad = domination_grid_ok(2.0)
    assert ok and bad == 0
    # spot value along the chain 1/cosh b <= 2 e^{-b} <= e^{-sqrt(l l')}
    lam, lx, ly = 2.0, 8.0, 8.0
    beta = 2 * math.sqrt(lx * ly)
    lhs = 1 / math.cosh(beta)
    rhs = math.exp(-0.25 * (math.sqrt(2 * lx) - lam) * (math.sqrt(2 * ly) - lam))
    assert lhs < rhs
    assert lhs <= 2 * math.exp(-beta) <= math.exp(-math.sqrt(lx * ly))


def test_domination_boundary_case_trivial():
    # at the lower edge of the grid the right side degenerates to 1
    lam = 3.0
    l_edge = lam * lam / 2
    rhs = math.exp(-0.25 * (math.sqrt(2 * l_edge) - lam) ** 2)
    assert rhs == pytest.approx(1.0)
    assert 1 / math.cosh(2 * l_edge) <= rhs


def test_domination_marginal_ordering():
    rng = np.random.default_rng(8)
    box, killed = two_site_domain()
    rep = domination_check(box, 2.0, rng, replicas=20_000, killed=killed)
    assert rep.grid_ok
    assert rep.p_crossing <= rep.p_open + 3 * rep.se


def test_domination_lambda_guard():
    rng = np.random.default_rng(9)
    box, killed = two_site_domain()
    with pytest.raises(RangeError):
        domination_check(box, 1.0, rng, replicas=10, killed=killed)
