"""Revenue with many one-bit bidders: the seller's ladder of reserve prices.

Run:  python3 demos/profit_ladder.py
"""
from boundedauction import Uniform, benchmark_unbounded, evaluate_priority, solve_profit_optimal
from boundedauction.solver import mpg_ladder_2bid

U = Uniform()

print("With one bit each, bidders are ordered by priority and each faces a single price.")
print("Later bidders see higher prices; the seller keeps the item if nobody says 'high'.\n")
for n in (2, 3, 5, 10, 20):
    sol = solve_profit_optimal([U], n, 2, 0.0)
    rep = evaluate_priority(sol.spec, [U] * n, 0.0)
    best = benchmark_unbounded([U], n=n, objective="profit")
    print(f"n={n:>2}: profit {rep.expected_profit:.6f}  vs Myerson {best:.6f}  gap {best - rep.expected_profit:.6f}")

print("\nSeller-kept ladder of one-bit cuts for five bidders:")
print("  " + "  ".join(f"{c:.6f}" for c in mpg_ladder_2bid(U, 5, 0.0)))
