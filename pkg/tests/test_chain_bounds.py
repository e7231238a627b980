import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_reversible
from ergobound.chain_bounds import (
    NotStronglyErgodic,
    RateBounds,
    bd_delta,
    bd_entrance_boundary,
    bd_hitting_moment,
    bd_mu,
    bd_rate_bounds,
    bd_S_profile,
    combine_bounds,
    mc1_bound,
    moment_to_exp,
    sd_G,
    sd_S,
    sd_rate_bounds,
    tail_to_moment,
    tree_bounds,
    tree_H,
    tree_m,
    tree_mu,
)
from ergobound.model import BirthDeathSpec, SingleDeathSpec, TreeNode, TreeSpec
from ergobound.oracle import dirichlet_gap, hitting_moments, spectral_gap, truncate_generator

# b_i = 1, a_i = (i+1)^2, from reference.quadratic_chain (backward recursion to
# 10^4 terms in 30-digit arithmetic, zeta tail bracket of half width 3e-13)
QUAD_S = 0.68700679167078882
QUAD_S_N = [0.68700679167078882, 0.40742148933472155, 0.28908027999045249,
            0.22400939589203087, 0.18287525031728483, 0.15452161094863373]
QUAD_DELTA = 0.27958530233606727


def _random_bd(rng):
    c = rng.uniform(0.5, 3.0)
    p = rng.uniform(1.6, 3.0)
    b = rng.uniform(0.5, 2.0)
    return BirthDeathSpec.from_strings(f"{b:.4f}", f"{c:.4f}*(i+1)^{p:.4f}")


# -- birth-death --------------------------------------------------------------

@pytest.mark.parametrize("birth, death, n, expected", [
    ("1", "1", 5, 1.0), ("1", "i^2", 3, 1 / 36), ("2", "1", 4, 16.0),
])
def test_bd_mu(birth, death, n, expected):
    assert bd_mu(BirthDeathSpec.from_strings(birth, death), n) == pytest.approx(expected, rel=1e-14)


def test_bd_mu_is_log_space():
    spec = BirthDeathSpec.from_strings("1", "(i+1)^2")
    assert bd_mu(spec, 150) == pytest.approx(1 / math.factorial(151) ** 2, rel=1e-10)


def test_entrance_quadratic(quadratic_chain):
    v = bd_entrance_boundary(quadratic_chain)
    assert v.is_entrance
    assert v.S == pytest.approx(QUAD_S, rel=1e-10)


def test_entrance_null_recurrent():
    v = bd_entrance_boundary(BirthDeathSpec.from_strings("1", "1"))
    assert not v.is_entrance and v.S == math.inf


def test_entrance_transient():
    # mu_i = 2^i: every term of the first series equals 1, and S diverges
    v = bd_entrance_boundary(BirthDeathSpec.from_strings("2", "1"))
    assert not v.is_entrance
    assert v.first == math.inf and v.S == math.inf


def test_S_profile(quadratic_chain, two_state):
    S, prof = bd_S_profile(quadratic_chain)
    assert S == pytest.approx(QUAD_S, rel=1e-10)
    # inf_i max{S_i, Sbar_i} never exceeds S = S_0
    assert prof <= S * (1 + 1e-12)
    assert bd_S_profile(two_state)[0] == pytest.approx(1.0)


def test_delta(quadratic_chain, two_state):
    assert bd_delta(quadratic_chain) == pytest.approx(QUAD_DELTA, rel=1e-10)
    assert bd_delta(two_state) == pytest.approx(1.0)


@pytest.mark.parametrize("n", range(6))
def test_hitting_moment_series(quadratic_chain, n):
    assert bd_hitting_moment(quadratic_chain, n).moment1 == pytest.approx(QUAD_S_N[n], rel=1e-10)


def test_hitting_moment_monotone_and_vanishing(quadratic_chain):
    vals = [bd_hitting_moment(quadratic_chain, n).moment1 for n in (0, 1, 2, 4, 8, 16, 64, 256)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-2


def test_hitting_moment_diverges():
    with pytest.raises(NotStronglyErgodic):
        bd_hitting_moment(BirthDeathSpec.from_strings("1", "1"), 2)


def test_hitting_equivalence_with_linear_solve(quadratic_chain):
    # reflecting at N drops a tail of order sum_{k>N} (k+2)^-2 < 1/N
    N = 800
    G = truncate_generator(quadratic_chain, N)
    for n in (0, 1, 3, 10, 40):
        u = hitting_moments(G, list(range(n + 1))).max()
        exact = bd_hitting_moment(quadratic_chain, n).moment1
        assert 0.0 <= exact - u <= 1.0 / N


def test_rate_bounds_record(quadratic_chain):
    rb = bd_rate_bounds(quadratic_chain)
    assert isinstance(rb, RateBounds)
    assert rb.kappa_equals_lambda1
    assert rb.S == pytest.approx(QUAD_S, rel=1e-10)
    assert rb.delta == pytest.approx(QUAD_DELTA, rel=1e-10)
    assert rb.lambda1_lower >= 1 / (4 * QUAD_DELTA) * (1 - 1e-12)
    assert rb.lambda1_lower >= 1 / QUAD_S * (1 - 1e-12)
    # R1 certificate: the reported H_n has M_H <= 1/lambda1_upper
    assert rb.M_H <= 1 / rb.lambda1_upper
    n = int(rb.H.strip("{}").split("..")[1])
    assert rb.M_H == pytest.approx(QUAD_S_N[n] if n < 6 else rb.M_H, rel=1e-10)
    assert rb.extras["first_n_with_S_n_le_delta"] is not None
    gap = spectral_gap(truncate_generator(quadratic_chain, 200))
    assert rb.lambda1_lower <= gap <= rb.lambda1_upper


def test_rate_bounds_not_ergodic():
    with pytest.raises(NotStronglyErgodic):
        bd_rate_bounds(BirthDeathSpec.from_strings("1", "1"))


@given(st.floats(0.1, 10.0))
def test_homogeneity(s):
    base = BirthDeathSpec.from_strings("1", "(i+1)^2")
    a, b = bd_rate_bounds(base), bd_rate_bounds(base.scaled(s))
    assert b.lambda1_lower == pytest.approx(s * a.lambda1_lower, rel=1e-10)
    assert b.lambda1_upper == pytest.approx(s * a.lambda1_upper, rel=1e-10)
    assert b.S == pytest.approx(a.S / s, rel=1e-10)
    assert b.delta == pytest.approx(a.delta / s, rel=1e-10)


def test_ordering_chain_random():
    rng = np.random.default_rng(7)
    for _ in range(6):
        spec = _random_bd(rng)
        S, prof = bd_S_profile(spec)
        gap = spectral_gap(truncate_generator(spec, 300))
        assert 1 / S <= 1 / prof * (1 + 1e-12)
        assert 1 / prof <= gap * (1 + 1e-9)


def test_sandwich_lower_half_and_dirichlet_gap():
    # (4 delta)^-1 <= lambda_1, and the gap killed at 0 lies in [(4 delta)^-1, delta^-1]
    rng = np.random.default_rng(11)
    for _ in range(6):
        spec = _random_bd(rng)
        d = bd_delta(spec)
        G = truncate_generator(spec, 300)
        assert 1 / (4 * d) <= spectral_gap(G) * (1 + 1e-9)
        lam0 = dirichlet_gap(G, 0)
        assert 1 / (4 * d) <= lam0 * (1 + 1e-9) and lam0 <= (1 / d) * (1 + 1e-9)


def test_sandwich_invariant_as_stated(quadratic_chain):
    """(4 delta)^-1 - eps <= gap(N) <= delta^-1 + eps, eps from N vs 2N."""
    d = bd_delta(quadratic_chain)
    g1 = spectral_gap(truncate_generator(quadratic_chain, 200))
    g2 = spectral_gap(truncate_generator(quadratic_chain, 400))
    eps = abs(g1 - g2)
    assert eps < 1e-6
    assert 1 / (4 * d) - eps <= g2
    assert g2 <= 1 / d + eps


# -- single-death -------------------------------------------------------------

def test_sd_G_base_and_one_step():
    spec = SingleDeathSpec(np.array([[0, 1, 2, 0.5], [3, 0, 1, 1], [0, 2, 0, 4], [0, 0, 5, 0]], dtype=float))
    assert sd_G(spec, 2, 2) == 1.0
    # n = i - 1: q_n^{(i)} / q_{n,n-1}
    assert sd_G(spec, 1, 2) == pytest.approx((1 + 1) / 3)
    assert sd_G(spec, 2, 3) == pytest.approx(4 / 2)


def test_sd_G_birth_death_embedding():
    rng = np.random.default_rng(3)
    for _ in range(5):
        bd = _random_bd(rng)
        sd = SingleDeathSpec.from_birth_death(bd, N=10)
        for n in range(1, 6):
            for i in range(n, 9):
                prod = np.prod([bd.b(j) / bd.a(j) for j in range(n, i)])
                assert sd_G(sd, n, i) == pytest.approx(prod, rel=1e-12)


def test_sd_S_pure_death():
    # q_{i,i-1} = i^2 on {0..4}: S = sum_k 1/k^2, and it equals max_i E_i tau_0
    N = 5
    table = np.zeros((N, N))
    table[0, 1] = 1.0
    for i in range(1, N):
        table[i, i - 1] = i ** 2
    spec = SingleDeathSpec(table)
    expected = sum(1 / k ** 2 for k in range(1, N))
    assert sd_S(spec) == pytest.approx(expected, rel=1e-12)
    # E_i tau_0 by forward substitution down the ladder
    E = np.cumsum([0.0] + [1 / k ** 2 for k in range(1, N)])
    assert E.max() == pytest.approx(expected, rel=1e-12)


def test_sd_matches_bd(quadratic_chain):
    sd = SingleDeathSpec.from_birth_death(quadratic_chain)
    assert sd_S(sd) == pytest.approx(QUAD_S, rel=1e-8)
    rb = sd_rate_bounds(sd)
    assert rb.kappa_equals_lambda1 and rb.S == pytest.approx(QUAD_S, rel=1e-8)


def test_sd_homogeneity(quadratic_chain):
    sd = SingleDeathSpec.from_birth_death(quadratic_chain)
    assert sd_S(sd.scaled(3.0)) == pytest.approx(sd_S(sd) / 3.0, rel=1e-10)


def test_sd_divergence():
    sd = SingleDeathSpec.from_birth_death(BirthDeathSpec.from_strings("1", "1"))
    assert sd_S(sd) == math.inf
    with pytest.raises(NotStronglyErgodic):
        sd_rate_bounds(sd)


# -- trees --------------------------------------------------------------------

def test_single_edge_tree():
    u, v = 2.0, 5.0
    spec = TreeSpec((TreeNode("o", None), TreeNode("a", "o", u, v)))
    assert tree_mu(spec, "a") == pytest.approx(u / v)
    assert tree_m(spec, "a") == pytest.approx(1 / v)
    rb = tree_bounds(spec)
    assert rb.S == pytest.approx(1 / v) and rb.kappa_equals_lambda1
    assert rb.lambda1_lower == pytest.approx(v)


def test_leaf_m():
    spec = TreeSpec((TreeNode("o", None), TreeNode("a", "o", 2.0, 2.0)))
    assert tree_mu(spec, "a") == 1.0
    assert tree_m(spec, "a") == pytest.approx(0.5)


def test_symmetric_binary_tree():
    nodes = [TreeNode("o", None)]
    for p in ("o", "L", "R"):
        for side in ("L", "R"):
            nid = side if p == "o" else p + side
            nodes.append(TreeNode(nid, p, 1.0, 3.0))
    spec = TreeSpec(tuple(nodes))
    assert tree_m(spec, "L") == pytest.approx(tree_m(spec, "R"))
    assert tree_m(spec, "LL") == pytest.approx(tree_m(spec, "RL"))


def test_path_tree_equals_birth_death(quadratic_chain):
    tree = TreeSpec.path(quadratic_chain, n_explicit=6)
    rb = tree_bounds(tree)
    S, _ = bd_S_profile(quadratic_chain)
    assert rb.S == pytest.approx(S, rel=1e-10)
    assert rb.lambda1_lower == pytest.approx(1 / S, rel=1e-10)


def test_tree_H_sets_grow_and_bound_hitting():
    nodes = (TreeNode("o", None), TreeNode("a", "o", 1.0, 2.0), TreeNode("b", "o", 1.0, 2.0))
    from ergobound.model import TreeRay
    from ergobound.expr import parse_rate_expr
    ray = TreeRay("b", parse_rate_expr("1", "k"), parse_rate_expr("(k+1)^2", "k"))
    spec = TreeSpec(nodes, (ray,))
    sizes = []
    for n in (1, 2, 4, 8):
        H, worst = tree_H(spec, n)
        sizes.append(len(H))
        assert worst <= 1 / n
    assert sizes == sorted(sizes)
    rb = tree_bounds(spec)
    G = truncate_generator(spec, 150)
    assert hitting_moments(G, [G.labels.index("o")]).max() <= rb.S * (1 + 1e-9)


def test_tree_homogeneity(quadratic_chain):
    tree = TreeSpec.path(quadratic_chain, n_explicit=4)
    assert tree_bounds(tree.scaled(2.0)).S == pytest.approx(tree_bounds(tree).S / 2, rel=1e-10)


# -- generic ------------------------------------------------------------------

def test_mc1_two_state(two_state):
    G = truncate_generator(two_state, 2)
    assert mc1_bound(G) == pytest.approx(1.0)
    assert mc1_bound(G) <= spectral_gap(G)


def test_mc1_random_and_dirichlet():
    rng = np.random.default_rng(5)
    for _ in range(10):
        G = random_reversible(5, rng)
        bound = mc1_bound(G)
        assert bound <= spectral_gap(G) + 1e-8
        for x in range(5):
            M_x = hitting_moments(G, [x]).max()
            assert dirichlet_gap(G, x) >= 1 / M_x * (1 - 1e-9)


@given(st.floats(0.1, 10.0))
def test_mc1_homogeneity(s):
    G = random_reversible(4, np.random.default_rng(0))
    assert mc1_bound(G.Q * s, G.pi) == pytest.approx(s * mc1_bound(G), rel=1e-10)


def test_mc1_rejects_non_reversible():
    Q = np.array([[-1, 1, 0], [0, -1, 1], [1, 0, -1]], dtype=float)
    with pytest.raises(ValueError, match="reversible"):
        mc1_bound(Q)


def test_moment_to_exp():
    bound, tail = moment_to_exp(1.0, 0.5)
    assert bound == 2.0 and tail(2.0) == pytest.approx(2 * math.exp(-1.0))
    assert moment_to_exp(1.0, 1e-9)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        moment_to_exp(1.0, 1.0)


def test_tail_to_moment(two_state):
    assert tail_to_moment(1.0, 0.0) == 1.0
    assert tail_to_moment(1.0, 0.5) == 2.0
    with pytest.raises(ValueError):
        tail_to_moment(1.0, 1.0)
    # two-state: P_1(tau_0 > t0) = e^{-t0} gives a bound above the exact mean 1
    t0 = 0.7
    assert tail_to_moment(t0, math.exp(-t0)) >= 1.0


@pytest.mark.parametrize("lam, M, expected", [(2.0, 1.0, (1.0, "R2")), (0.5, 1.0, (0.5, "R1")),
                                              (1.0, 1.0, (1.0, "R1"))])
def test_combine_bounds(lam, M, expected):
    assert combine_bounds(lam, M) == expected


def test_combine_bounds_rejects_nonpositive():
    with pytest.raises(ValueError):
        combine_bounds(0.0, 1.0)


def test_rate_bounds_invariants():
    with pytest.raises(ValueError):
        RateBounds(2.0, False, 2.0, 1.0)
    with pytest.raises(ValueError):
        RateBounds(3.0, True, 1.0, 2.0)
