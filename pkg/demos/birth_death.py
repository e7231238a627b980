"""Birth-death chain with b_i = 1 and a_i = (i+1)^2.

Compares the closed-form bounds with the truncated-chain oracle, the
empirical TV decay rate and a Monte Carlo hitting time.

    python demos/birth_death.py
"""

from ergobound import (
    BirthDeathSpec,
    RngConfig,
    bd_rate_bounds,
    hitting_moments,
    kappa_empirical,
    mc_hitting,
    spectral_gap,
    truncate_generator,
)
from ergobound.oracle import dirichlet_gap


def main():
    spec = BirthDeathSpec.from_strings("1", "(i+1)^2")
    rb = bd_rate_bounds(spec)
    print(f"S = {rb.S:.12f}   delta = {rb.delta:.12f}")
    print(f"lambda_1 in [{rb.lambda1_lower:.6f}, {rb.lambda1_upper:.6f}]   H = {rb.H}, M_H = {rb.M_H:.6f}")

    for N in (100, 200, 400):
        G = truncate_generator(spec, N)
        print(f"N = {N:3d}: gap = {spectral_gap(G):.10f}   killed at 0: {dirichlet_gap(G, 0):.10f}")
    print(f"(4 delta)^-1 = {1 / (4 * rb.delta):.6f}   delta^-1 = {1 / rb.delta:.6f}")

    G = truncate_generator(spec, 16)
    print(f"N = 16: kappa from TV decay = {kappa_empirical(G):.6f}, gap = {spectral_gap(G):.6f}")

    exact = hitting_moments(truncate_generator(spec, 200), [0])[3]
    est = mc_hitting(spec, 3, [0], trials=100_000, rng=RngConfig())
    print(f"E_3 tau_0: solve {exact:.6f}   Monte Carlo {est.mean:.6f} +- {est.std_error:.6f}")


if __name__ == "__main__":
    main()
