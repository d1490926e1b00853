"""A two-round auction and its one-shot equivalent.

Alice speaks first with one bit; Bob answers with one bit and faces a price that depends
on what Alice said.  Backward induction finds the equilibrium cuts, and flattening turns
the tree into a simultaneous mechanism with the same outcome.

Run:  python3 demos/sequential_vs_simultaneous.py
"""
from boundedauction import Uniform, backward_induction_best_response, evaluate_sequential, flatten_to_simultaneous
from boundedauction.evaluation import expected_welfare_exact, verify_dominant_strategy
from boundedauction.sequential import example_tree

U = Uniform()
tree = example_tree()
s = backward_induction_best_response(tree, [U, U])
for path, t in sorted(s.items()):
    who = "Alice" if not path else f"Bob after Alice sent {path[0]}"
    print(f"{who:>24}: cut {t.interior[0]:.4f}")

rep = evaluate_sequential(tree, s, [U, U])
print(f"\nsequential welfare {rep.expected_welfare:.6f}, profit {rep.expected_profit:.6f}")

flat = flatten_to_simultaneous(tree, s, [U, U])
w = expected_welfare_exact(flat.mechanism, flat.strategies, [U, U])
print(f"flattened  welfare {w:.6f}")
print(f"messages per bidder {flat.message_counts}, bits {flat.bits}, total {flat.total_bits} "
      f"(bound {flat.bit_bound:g})")
print("Bob must now send two bits: one round of adaptivity is paid for with extra messages.")

mono = flatten_to_simultaneous(tree, s, [U, U], monotone=True)
ok, _ = verify_dominant_strategy(mono.mechanism, mono.strategies, [U, U])
print(f"monotone version truthful in dominant strategies: {ok}")
