import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergobound.chain_bounds import bd_S_profile
from ergobound.continuum_bounds import diff_Mr
from ergobound.model import BirthDeathSpec, DiffusionSpec, SingleDeathSpec
from ergobound.montecarlo import (
    HitEstimate,
    RngConfig,
    SimulationError,
    em_diffusion_hitting,
    mc_hitting,
    mc_tail,
    simulate_ctmc,
)
from ergobound.oracle import hitting_moments, truncate_generator

ASYM = BirthDeathSpec.from_strings("2", "3", size=2)  # b_0 = 2, a_1 = 3


def _occupation(path, horizon, state):
    t = np.append(path.times, horizon)
    s = np.asarray(path.states)
    return float(np.sum(np.diff(t)[s == state])) / horizon


# -- RNG plumbing ------------------------------------------------------------

def test_rng_config_env(monkeypatch):
    monkeypatch.setenv("ERGO_SEED", "77")
    assert RngConfig.from_env().seed == 77
    monkeypatch.delenv("ERGO_SEED")
    assert RngConfig.from_env().seed == RngConfig().seed


def test_rng_config_rejects():
    with pytest.raises(ValueError):
        RngConfig(-1)
    with pytest.raises(ValueError):
        RngConfig(1, streams=0)


def test_hit_estimate_rejects_negative_se():
    with pytest.raises(ValueError):
        HitEstimate(1.0, -0.1, 10)


# -- exact CTMC paths --------------------------------------------------------

def test_zero_horizon(quadratic_chain):
    path = simulate_ctmc(quadratic_chain, 3, 0.0, rng=1)
    assert path.states == (3,) and path.times == (0.0,)


def test_seeded_paths_identical(quadratic_chain):
    a = simulate_ctmc(quadratic_chain, 0, 20.0, rng=RngConfig(5))
    b = simulate_ctmc(quadratic_chain, 0, 20.0, rng=RngConfig(5))
    c = simulate_ctmc(quadratic_chain, 0, 20.0, rng=RngConfig(6))
    assert a == b and a != c


def test_two_state_occupation():
    # pi_0 = a/(a+b) = 3/5; over a horizon T the occupation has variance
    # about 2 pi_0 pi_1 / ((a+b) T)
    T = 4000.0
    path = simulate_ctmc(ASYM, 0, T, rng=RngConfig(11))
    pi0 = 3 / 5
    sigma = math.sqrt(2 * pi0 * (1 - pi0) / (5 * T))
    assert abs(_occupation(path, T, 0) - pi0) <= 3 * sigma


def test_path_jumps_are_nearest_neighbour(quadratic_chain):
    path = simulate_ctmc(quadratic_chain, 5, 10.0, rng=3)
    assert np.all(np.abs(np.diff(path.states)) == 1)
    assert np.all(np.diff(path.times) > 0)


# -- hitting times -----------------------------------------------------------

def test_two_state_mean():
    est = mc_hitting(ASYM, 1, [0], trials=20000, rng=RngConfig(1))
    assert abs(est.mean - 1 / 3) <= 3 * est.std_error
    assert est.censored == 0 and not est.flagged


def test_start_in_H():
    est = mc_hitting(ASYM, 0, [0], trials=100, rng=1)
    assert est.mean == 0.0 and est.std_error == 0.0


def test_exp_moment_bound():
    # M = 1 chain; E e^{tau/2} <= 1/(1 - 1/2) = 2
    spec = BirthDeathSpec.from_strings("1", "1", size=2)
    est = mc_hitting(spec, 1, [0], trials=20000, beta=0.5, rng=2)
    beta, m, se = est.exp_moment
    assert beta == 0.5 and m <= 2 + 3 * se


def test_quadratic_against_linear_solve(quadratic_chain):
    G = truncate_generator(quadratic_chain, 200)
    exact = hitting_moments(G, [0])
    for x0 in (1, 4):
        est = mc_hitting(quadratic_chain, x0, [0], trials=20000, rng=RngConfig(x0))
        assert abs(est.mean - exact[x0]) <= 3 * est.std_error
        assert est.mean <= bd_S_profile(quadratic_chain)[0]


def test_single_death_against_linear_solve(quadratic_chain):
    sd = SingleDeathSpec.from_birth_death(quadratic_chain, N=6)
    G = truncate_generator(sd, 6)
    est = mc_hitting(sd, 5, [0], trials=20000, rng=9)
    assert abs(est.mean - hitting_moments(G, [0])[5]) <= 3 * est.std_error


def test_reproducible(quadratic_chain):
    a = mc_hitting(quadratic_chain, 3, [0], trials=5000, beta=0.3, rng=RngConfig(8))
    b = mc_hitting(quadratic_chain, 3, [0], trials=5000, beta=0.3, rng=RngConfig(8))
    assert a == b


def test_statistical_consistency_repetitions():
    # |mean - exact| <= 3 SE in at least 99 of 100 seeded small runs
    exact = 1 / 3
    hits = 0
    for seed in range(100):
        est = mc_hitting(ASYM, 1, [0], trials=400, rng=RngConfig(seed))
        hits += abs(est.mean - exact) <= 3 * est.std_error
    assert hits >= 99


def test_censoring_flag():
    slow = BirthDeathSpec.from_strings("1", "0.01", size=2)
    est = mc_hitting(slow, 1, [0], trials=1000, horizon=1.0, rng=4)
    assert est.censored > 10 and est.flagged


def test_all_censored():
    slow = BirthDeathSpec.from_strings("1", "1e-9", size=2)
    with pytest.raises(SimulationError):
        mc_hitting(slow, 1, [0], trials=100, horizon=1.0, rng=4)


# -- tails -------------------------------------------------------------------

@pytest.mark.parametrize("t0", [0.2, 0.5])
def test_two_state_tail(t0):
    est = mc_tail(ASYM, [0], t0, trials=20000, rng=3)
    p = math.exp(-3 * t0)
    assert abs(est.delta_hat - p) <= 3 * est.std_errors[1]
    assert est.moment_bound == pytest.approx(t0 / (1 - est.delta_hat))


def test_tail_large_t0():
    est = mc_tail(ASYM, [0], 10.0, trials=2000, rng=3)
    assert est.delta_hat == 0.0 and est.moment_bound == 10.0


def test_tail_bound_dominates_solve(quadratic_chain):
    probes = [1, 4, 16, 64]
    est = mc_tail(quadratic_chain, [0], 1.0, trials=4000, probes=probes, rng=5)
    exact = hitting_moments(truncate_generator(quadratic_chain, 200), [0])
    assert est.moment_bound >= max(exact[p] for p in probes)
    # stochastically monotone: survival nondecreasing in the start, within 3 sigma per pair
    for x, y in zip(probes, probes[1:]):
        se = math.hypot(est.std_errors[x], est.std_errors[y])
        assert est.per_probe[y] >= est.per_probe[x] - 3 * se


def test_tail_needs_probes_on_infinite_chain(quadratic_chain):
    with pytest.raises(ValueError):
        mc_tail(quadratic_chain, [0], 1.0, trials=10)


# -- diffusions --------------------------------------------------------------

def test_em_start_inside():
    est = em_diffusion_hitting(DiffusionSpec.from_strings("1", "-x"), 0.5, 0.5, 1e-3, 10)
    assert est.mean == 0.0


def test_em_ou_against_discretized_solve():
    spec = DiffusionSpec.from_strings("1", "-x")
    est = em_diffusion_hitting(spec, 2.0, 0.5, 1e-3, 4000, rng=RngConfig(21))
    G = truncate_generator(spec, mesh=1e-3, length=8.0)
    xs = np.asarray(G.meta["x"])
    ref = float(np.interp(2.0, xs, hitting_moments(G, np.flatnonzero(xs <= 0.5))))
    rich = est.diagnostics["richardson"]
    allowance = 3 * est.std_error + abs(rich["bias_estimate"]) + 3 * rich["bias_std_error"]
    assert abs(est.mean - ref) <= allowance
    # the discrete monitor can only miss crossings
    assert rich["mean_2dt"] >= est.mean - 3 * rich["bias_std_error"]


def test_em_quartic_below_Mr():
    spec = DiffusionSpec.from_strings("1", "-4*x^3")
    est = em_diffusion_hitting(spec, 1.5, 1.0, 1e-4, 2000, rng=7)
    rich = est.diagnostics["richardson"]
    allowance = 3 * est.std_error + abs(rich["bias_estimate"]) + 3 * rich["bias_std_error"]
    assert est.mean <= diff_Mr(spec, 1.0) + allowance


def test_em_step_violation():
    with pytest.raises(SimulationError):
        em_diffusion_hitting(DiffusionSpec.from_strings("1", "-4*x^3"), 3.0, 0.5, 0.05, 10, rng=1)


@settings(max_examples=5)
@given(st.integers(0, 2**32 - 1))
def test_em_reproducible(seed):
    spec = DiffusionSpec.from_strings("1", "-x")
    a = em_diffusion_hitting(spec, 1.0, 0.5, 1e-2, 50, rng=RngConfig(seed))
    b = em_diffusion_hitting(spec, 1.0, 0.5, 1e-2, 50, rng=RngConfig(seed))
    assert a == b
