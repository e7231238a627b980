import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_reversible
from ergobound.chain_bounds import bd_hitting_moment, bd_rate_bounds
from ergobound.model import BirthDeathSpec, DiffusionSpec
from ergobound.oracle import (
    GeneratorMatrix,
    check_main_lemma,
    dirichlet_gap,
    hitting_moments,
    hitting_survival,
    kappa_empirical,
    spectral_gap,
    truncate_generator,
    tv_decay,
)


def _two_state(a=1.0, b=1.0):
    return GeneratorMatrix(np.array([[-b, b], [a, -a]]))


# -- construction ------------------------------------------------------------

def test_two_state_truncation(two_state):
    G = truncate_generator(two_state, 2)
    np.testing.assert_array_equal(G.Q, [[-1, 1], [1, -1]])
    np.testing.assert_allclose(G.pi, [0.5, 0.5])


def test_reflecting_truncation_preserves_detailed_balance(quadratic_chain):
    G = truncate_generator(quadratic_chain, 30)
    assert G.reversible and G.tridiagonal
    assert abs(G.Q.sum(axis=1)).max() < 1e-10
    assert G.Q[-1, -1] == -G.Q[-1, -2]


def test_reflecting_bm_row_sums():
    spec = DiffusionSpec.from_strings("1", "0")
    G = truncate_generator(spec, mesh=0.01, length=1.0)
    Q = G.Q.toarray() if hasattr(G.Q, "toarray") else np.asarray(G.Q)
    assert abs(Q.sum(axis=1)).max() < 1e-9
    # flat stationary density away from the two boundary cells
    np.testing.assert_allclose(G.pi[1:-1], G.pi[1], rtol=1e-10)


def test_generator_rejects_bad_input():
    with pytest.raises(ValueError):
        GeneratorMatrix(np.array([[-1.0, 1.0], [1.0, -2.0]]))
    with pytest.raises(ValueError):
        GeneratorMatrix(np.array([[1.0, -1.0], [1.0, -1.0]]))


def test_truncation_cauchy(quadratic_chain):
    g1 = spectral_gap(truncate_generator(quadratic_chain, 200))
    g2 = spectral_gap(truncate_generator(quadratic_chain, 400))
    assert abs(g1 - g2) < 1e-6
    m1 = hitting_moments(truncate_generator(quadratic_chain, 200), [0]).max()
    m2 = hitting_moments(truncate_generator(quadratic_chain, 400), [0]).max()
    assert m1 < m2 < bd_hitting_moment(quadratic_chain, 0).moment1


# -- spectra -----------------------------------------------------------------

@pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.0, 0.5), (3.0, 7.0)])
def test_two_state_gap(a, b):
    assert spectral_gap(_two_state(a, b)) == pytest.approx(a + b, rel=1e-12)


def test_two_state_dirichlet():
    assert dirichlet_gap(_two_state(), 0) == pytest.approx(1.0)


def test_quadratic_gap_inside_certified_interval(quadratic_chain):
    rb = bd_rate_bounds(quadratic_chain)
    gap = spectral_gap(truncate_generator(quadratic_chain, 200))
    assert rb.lambda1_lower <= gap <= rb.lambda1_upper


def test_dirichlet_vs_gap_and_hitting():
    rng = np.random.default_rng(1)
    for _ in range(20):
        G = random_reversible(6, rng)
        gap = spectral_gap(G)
        for x in range(6):
            lam_x = dirichlet_gap(G, x)
            assert gap >= lam_x * (1 - 1e-10)
            assert lam_x >= 1 / hitting_moments(G, [x]).max() * (1 - 1e-10)


def test_non_reversible_gap_is_tagged():
    Q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    with pytest.warns(UserWarning):
        gap, tag = spectral_gap(GeneratorMatrix(Q), return_tag=True)
    assert "lower bound" in tag and gap > 0


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_reducible_rejected():
    Q = np.zeros((3, 3))
    Q[0, 1] = Q[1, 0] = 1.0
    np.fill_diagonal(Q, -Q.sum(axis=1))
    with pytest.raises(ValueError):
        spectral_gap(GeneratorMatrix(Q, log_pi=np.zeros(3)))


# -- hitting -----------------------------------------------------------------

def test_two_state_hitting():
    u = hitting_moments(_two_state(a=4.0), [0])
    assert u[0] == 0.0 and u[1] == pytest.approx(0.25)


def test_hitting_empty_H():
    with pytest.raises(ValueError):
        hitting_moments(_two_state(), [])


@settings(max_examples=25)
@given(st.integers(3, 8), st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_moment_recursion_bound(n, seed, order):
    G = random_reversible(n, np.random.default_rng(seed))
    M = hitting_moments(G, [0]).max()
    u = hitting_moments(G, [0], order=order)
    assert u.max() <= math.factorial(order) * M ** order * (1 + 1e-10)
    if order == 2:
        assert u.max() <= 2 * M ** 2 * (1 + 1e-10)


@settings(max_examples=20)
@given(st.integers(3, 7), st.integers(0, 2**32 - 1), st.sampled_from([0.5, 0.9]))
def test_exponential_tail_bound(n, seed, frac):
    G = random_reversible(n, np.random.default_rng(seed))
    M = hitting_moments(G, [0]).max()
    beta = frac / M
    times = np.linspace(0.1, 8 * M, 20)
    surv = hitting_survival(G, [0], times)
    bound = np.exp(-beta * times) / (1 - beta * M)
    assert np.all(surv <= bound[None, :] + 1e-12)


@settings(max_examples=20)
@given(st.integers(3, 7), st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_geometric_tail(n, seed, k):
    G = random_reversible(n, np.random.default_rng(seed))
    t0 = 0.5 * hitting_moments(G, [0]).max()
    surv = hitting_survival(G, [0], [t0, k * t0])
    assert surv[:, 1].max() <= surv[:, 0].max() ** k + 1e-12


# -- total variation ---------------------------------------------------------

def test_two_state_tv_curve():
    times = np.linspace(0.0, 3.0, 13)
    curve = tv_decay(_two_state(), times)
    np.testing.assert_allclose(curve.tv, 0.5 * np.exp(-2 * times), rtol=1e-10, atol=1e-15)
    assert curve.tv[0] == pytest.approx(0.5)
    assert curve.normalization == "half-L1"


def test_tv_csv_columns():
    text = tv_decay(_two_state(), [0.5, 1.0]).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "t,tv_sup,tv_0,tv_1" and len(lines) == 3


def test_tv_rejects_decreasing_times():
    with pytest.raises(ValueError):
        tv_decay(_two_state(), [1.0, 0.5])


def test_uniformization_consistency():
    G = random_reversible(6, np.random.default_rng(9))
    times = np.linspace(0.1, 3.0, 10)
    a = tv_decay(G, times, tail=1e-14).per_state
    b = tv_decay(G, times, tail=5e-15).per_state
    assert np.abs(a - b).max() < 1e-10


@settings(max_examples=20)
@given(st.integers(3, 6), st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_submultiplicativity_full_l1(n, seed, i, j):
    # the product inequality holds for the full L1 norm (range [0, 2])
    G = random_reversible(n, np.random.default_rng(seed))
    dt = 0.25 / max(1.0, float(np.max(-np.diag(G.Q))))
    grid = dt * np.arange(1, i + j + 1)
    full = 2 * tv_decay(G, grid).tv
    assert full[i + j - 1] <= full[i - 1] * full[j - 1] + 1e-12


def test_kappa_two_state():
    assert kappa_empirical(_two_state()) == pytest.approx(2.0, abs=1e-6)


def test_kappa_matches_gap_on_random_chains():
    rng = np.random.default_rng(2)
    for n in (3, 5, 8):
        G = random_reversible(n, rng)
        assert kappa_empirical(G) == pytest.approx(spectral_gap(G), rel=0.01)


def test_kappa_matches_gap_on_truncated_chain(quadratic_chain):
    G = truncate_generator(quadratic_chain, 16)
    k = kappa_empirical(G)
    assert k == pytest.approx(spectral_gap(G), rel=0.01)
    assert k >= bd_rate_bounds(quadratic_chain).kappa_lower * (1 - 1e-3)


def test_kappa_window_underflow():
    with pytest.raises(ValueError):
        kappa_empirical(_two_state(), window=(20.0, 40.0))


# -- first-hitting decomposition ---------------------------------------------

def test_main_lemma_two_state():
    rep = check_main_lemma(_two_state(), [0], [0.0, 0.5, 1.0, 2.0])
    assert rep.passed and rep.violations == 0
    # t = 0: right side is the survival probability 1
    assert rep.rhs[0, 0] == pytest.approx(1.0)
    assert rep.lhs[0, 0] == pytest.approx(0.5)


def test_main_lemma_random_sweep():
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(100):
        G = random_reversible(6, rng)
        H = [int(rng.integers(6))]
        t_scale = 1.0 / spectral_gap(G)
        rep = check_main_lemma(G, H, t_scale * np.array([0.25, 1.0, 3.0]), steps=200)
        violations += rep.violations
    assert violations == 0
