"""How fast the welfare loss vanishes, for several value distributions.

Compares the optimal cuts against the simple quantile rule as the message budget grows.

Run:  python3 demos/convergence.py
"""
from boundedauction import TableDistribution, Uniform, benchmark_unbounded, evaluate_priority
from boundedauction import quantile_mechanism, solve_welfare_2bidder

dists = {
    "uniform": Uniform(),
    "triangular": TableDistribution.from_cdf(lambda v: v * v, 0.0, 1.0),
    "skewed": TableDistribution.from_cdf(lambda v: 1 - (1 - v) ** 3, 0.0, 1.0),
}

print(f"{'distribution':>12} {'k':>3} {'optimal loss':>14} {'quantile loss':>14} {'k^2 x optimal':>14}")
for name, d in dists.items():
    full = benchmark_unbounded([d, d])
    for k in (4, 8, 16, 32):
        opt = full - solve_welfare_2bidder(d, d, k, 0.0).value
        q = full - evaluate_priority(quantile_mechanism([d, d], k, 0.0), [d, d], 0.0).expected_welfare
        print(f"{name:>12} {k:>3} {opt:>14.3e} {q:>14.3e} {opt * k * k:>14.4f}")
print("Both rules lose O(1/k^2); the optimal cuts win by a constant factor.")
