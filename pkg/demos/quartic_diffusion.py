"""Rate bounds for the diffusion f'' - 4x^3 f' on the half line.

Prints each term of the Gautschi estimate, the direct value of delta and
the finite-difference spectral gap at two mesh widths.

    python demos/quartic_diffusion.py
"""

from ergobound import DiffusionSpec, diff_rate_bounds, quartic_example, spectral_gap, truncate_generator


def main():
    q = quartic_example()
    print(f"C_4                      {q.C4:.6f}")
    print(f"int_0^1 Gautschi term    {q.gautschi_term:.6f}")
    print(f"relaxed term             {q.relaxed_term:.4f}")
    print(f"tail bound               {q.tail_bound:.4f}   (exact {q.tail_exact:.6f})")
    print(f"4 delta <=               {q.bound:.4f}   kappa >= {q.kappa_from_bound:.4f}")
    print(f"delta by quadrature      {q.delta_sup:.9f}   kappa >= {q.kappa_from_delta_sup:.4f}")

    spec = DiffusionSpec.from_strings("1", "-4*x^3")
    rb = diff_rate_bounds(spec)
    print(f"lambda_1 in              [{rb.lambda1_lower:.4f}, {rb.lambda1_upper:.4f}]")
    for h in (2e-3, 1e-3):
        G = truncate_generator(spec, mesh=h, length=4.0)
        print(f"oracle gap, mesh {h:g}    {spectral_gap(G):.6f}")


if __name__ == "__main__":
    main()
