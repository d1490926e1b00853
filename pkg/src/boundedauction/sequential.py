"""Sequential bounded-communication mechanisms.

A tree of :class:`Decision` nodes (one bidder sends ``bits`` bits, choosing a
child) ending in :class:`Leaf` outcomes. A strategy assigns the acting bidder
a threshold vector at each history, where a history is the tuple of messages
sent so far. Flattening asks every bidder, once and simultaneously, which of
her cuts her value falls between, and replays the tree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .evaluation import envelope_cuts
from .mechanism import SimultaneousMechanism, ThresholdVector, equally_spaced_thresholds, monotonize

DEDUP_TOL = 1e-12


@dataclass(frozen=True)
class Leaf:
    """Outcome: ``winner`` 0 is the seller, ``i >= 1`` is bidder ``i - 1``."""

    winner: int
    payments: tuple

    def __init__(self, winner, payments):
        object.__setattr__(self, "winner", int(winner))
        object.__setattr__(self, "payments", tuple(float(p) for p in payments))


@dataclass(frozen=True)
class Decision:
    bidder: int
    bits: int
    children: tuple

    def __init__(self, bidder, bits, children):
        children = tuple(children)
        if bits < 1:
            raise StructuralError("every decision node must carry at least one bit")
        if len(children) != 2 ** bits:
            raise StructuralError(f"{bits} bits need {2 ** bits} children, got {len(children)}")
        object.__setattr__(self, "bidder", int(bidder))
        object.__setattr__(self, "bits", int(bits))
        object.__setattr__(self, "children", children)

    @property
    def size(self):
        return 2 ** self.bits


def walk(node, path=()):
    """Yield ``(history, node)`` for every node, parents first."""
    yield path, node
    if isinstance(node, Decision):
        for j, child in enumerate(node.children):
            yield from walk(child, path + (j,))


def decision_nodes(tree):
    return [(p, nd) for p, nd in walk(tree) if isinstance(nd, Decision)]


def num_bidders(tree):
    n = 0
    for _, nd in walk(tree):
        if isinstance(nd, Decision):
            n = max(n, nd.bidder + 1)
        else:
            n = max(n, len(nd.payments), nd.winner)
    return n


def communication_requirement(tree) -> int:
    """Largest number of bits sent along any play."""
    if isinstance(tree, Leaf):
        return 0
    return tree.bits + max(communication_requirement(c) for c in tree.children)


# ------------------------------------------------------------------ JSON

def tree_to_dict(node):
    if isinstance(node, Leaf):
        return {"winner": node.winner, "payments": list(node.payments)}
    return {"bidder": node.bidder, "bits": node.bits, "children": [tree_to_dict(c) for c in node.children]}


def tree_from_dict(doc):
    if "winner" in doc:
        return Leaf(doc["winner"], doc.get("payments", []))
    try:
        return Decision(doc["bidder"], doc["bits"], [tree_from_dict(c) for c in doc["children"]])
    except KeyError as exc:
        raise StructuralError(f"tree node missing field {exc}") from None


def tree_to_json(tree) -> str:
    return json.dumps(tree_to_dict(tree), indent=1)


def tree_from_json(text: str):
    try:
        return tree_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed tree JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def strategies_to_json(strategies) -> str:
    return json.dumps({",".join(map(str, p)): list(t.cuts) for p, t in strategies.items()}, indent=1)


def strategies_from_json(text: str) -> dict:
    doc = json.loads(text)
    out = {}
    for key, cuts in doc.items():
        path = tuple(int(x) for x in key.split(",")) if key else ()
        out[path] = ThresholdVector(cuts)
    return out


# ------------------------------------------------------------- evaluation

def _reachable(tree, strategies):
    """Leaves with each bidder's value interval along the way (empty intervals pruned)."""
    n = num_bidders(tree)
    out = []

    def rec(node, path, box):
        if isinstance(node, Leaf):
            out.append((path, node, box))
            return
        t = strategies.get(path)
        if t is None:
            raise StructuralError(f"no strategy for bidder {node.bidder} at history {path}")
        if t.k != node.size:
            raise StructuralError(f"history {path}: {t.k} bids for a {node.bits}-bit message")
        lo, hi = box[node.bidder]
        for j, child in enumerate(node.children):
            a, b = max(lo, t.cuts[j]), min(hi, t.cuts[j + 1])
            if b <= a:
                continue
            nb = list(box)
            nb[node.bidder] = (a, b)
            rec(child, path + (j,), nb)

    rec(tree, (), [(-math.inf, math.inf)] * n)
    return out


@dataclass
class SequentialReport:
    expected_welfare: float
    expected_profit: float
    leaves: list = field(default_factory=list)


def evaluate_sequential(tree, strategies, dists, v0=0.0) -> SequentialReport:
    """Exact welfare and profit: every leaf is a product of value intervals."""
    welfare = profit = 0.0
    leaves = []
    for path, leaf, box in _reachable(tree, strategies):
        masses = [float(d.mass(*iv)) for d, iv in zip(dists, box)]
        prob = math.prod(masses)
        if prob <= 0:
            continue
        if leaf.winner == 0:
            w, r = v0 * prob, v0 * prob
        else:
            i = leaf.winner - 1
            w = float(dists[i].partial_expectation(*box[i])) * math.prod(m for j, m in enumerate(masses) if j != i)
            r = leaf.payments[i] * prob
        welfare += w
        profit += r
        leaves.append({"history": path, "probability": prob, "winner": leaf.winner})
    return SequentialReport(welfare, profit, leaves)


# ------------------------------------------------------ backward induction

def _bidders_below(node):
    if isinstance(node, Leaf):
        return set()
    out = {node.bidder}
    for c in node.children:
        out |= _bidders_below(c)
    return out


def backward_induction_best_response(tree, dists, v0=0.0, tol=1e-12) -> dict:
    """Utility-maximizing threshold profile, last movers first.

    Each bidder may act at most once along any play. Then whoever has moved
    no longer affects the outcome, later movers' values follow the prior, and
    a mover's utility from each message is linear in her value: win
    probability times value minus expected payment. Ties go to the lower
    message; a mover indifferent everywhere gets equally spaced cuts.
    """
    for path, nd in decision_nodes(tree):
        if any(nd.bidder in _bidders_below(c) for c in nd.children):
            raise StructuralError(f"bidder {nd.bidder} moves twice below history {path}")
    strategies = {}

    def line(node, path, i):
        """``(win probability, expected payment)`` for bidder ``i`` below ``node``."""
        if isinstance(node, Leaf):
            win = 1.0 if node.winner == i + 1 else 0.0
            pay = node.payments[i] if i < len(node.payments) else 0.0
            return win, pay
        t = strategies[path]
        d = dists[node.bidder]
        P = E = 0.0
        for j, child in enumerate(node.children):
            mass = float(d.mass(t.cuts[j], t.cuts[j + 1]))
            if mass <= 0:
                continue
            p, e = line(child, path + (j,), i)
            P += mass * p
            E += mass * e
        return P, E

    def solve(node, path):
        if isinstance(node, Leaf):
            return
        for j, child in enumerate(node.children):
            solve(child, path + (j,))
        i = node.bidder
        lo, hi = dists[i].support
        hs, ts = [], []
        for j, child in enumerate(node.children):
            p, e = line(child, path + (j,), i)
            hs.append(p)
            ts.append(-e)
        cuts = envelope_cuts(hs, ts, lo, hi, tol)
        strategies[path] = equally_spaced_thresholds(node.size, lo, hi) if cuts is None else ThresholdVector(cuts)

    solve(tree, ())
    return strategies


# --------------------------------------------------------------- flattening

@dataclass
class FlattenResult:
    mechanism: SimultaneousMechanism
    strategies: list
    message_counts: list
    bits: list
    total_bits: int
    communication_requirement: int
    bit_bound: float
    per_bidder_bounds: list

    @property
    def within_bound(self):
        return self.total_bits <= self.bit_bound and all(
            c <= b for c, b in zip(self.message_counts, self.per_bidder_bounds)
        )


def _union_cuts(tree, strategies, n, supports):
    cuts = [list(s) for s in supports]
    for path, nd in decision_nodes(tree):
        t = strategies.get(path)
        if t is None:
            continue
        cuts[nd.bidder].extend(t.interior)
    out = []
    for i, cs in enumerate(cuts):
        lo, hi = supports[i]
        merged = []
        for c in sorted(min(max(c, lo), hi) for c in cs):
            if not merged or c - merged[-1] > DEDUP_TOL:
                merged.append(c)
        merged[-1] = hi
        out.append(ThresholdVector(merged))
    return out


def _replay(tree, strategies, values):
    node, path = tree, ()
    while isinstance(node, Decision):
        j = strategies[path].bid(values[node.bidder])
        node, path = node.children[j], path + (j,)
    return node


def _last_message_ranks(tree, n, m):
    """Rank bidders by when their last message can start (latest first, rank 1)."""
    latest = [-1] * n

    def rec(node, sent, last):
        if isinstance(node, Leaf):
            for i, g in last.items():
                latest[i] = max(latest[i], g)
            return
        nl = dict(last)
        nl[node.bidder] = sent
        for c in node.children:
            rec(c, sent + node.bits, nl)

    rec(tree, 0, {})
    order = sorted(range(n), key=lambda i: -latest[i])
    ranks = [0] * n
    for r, i in enumerate(order, start=1):
        ranks[i] = r
    return ranks


def flatten_to_simultaneous(tree, strategies, dists=None, v0=0.0, monotone=False, supports=None) -> FlattenResult:
    """Simultaneous mechanism in which each bidder names the cell of her merged cuts.

    Allocation and payments of each cell profile come from replaying the tree
    at the cell midpoint; the replay is repeated near the cell edges and must
    agree. With ``monotone`` the allocation is replaced by the
    highest-conditional-mean rule (needs ``dists``).
    """
    n = num_bidders(tree)
    if supports is None:
        if dists is None:
            raise ValueError("need dists or supports to pin the outer cuts")
        supports = [d.support for d in dists]
    cuts = _union_cuts(tree, strategies, n, supports)
    sizes = tuple(t.k for t in cuts)
    alloc = np.zeros(sizes + (n + 1,))
    pay = np.zeros(sizes + (n,))
    for b in np.ndindex(*sizes):
        probes = []
        for i, t in enumerate(cuts):
            lo, hi = t.cuts[b[i]], t.cuts[b[i] + 1]
            eps = 1e-9 * (hi - lo)
            probes.append((0.5 * (lo + hi), lo + eps, hi - eps))
        leaf = _replay(tree, strategies, [p[0] for p in probes])
        for corner in ((1,) * n, (2,) * n):
            other = _replay(tree, strategies, [p[c] for p, c in zip(probes, corner)])
            if other != leaf:
                raise StructuralError(f"cell {b} reaches different leaves; strategies are not threshold play")
        alloc[b + (leaf.winner,)] = 1.0
        if leaf.winner > 0:
            pay[b + (leaf.winner - 1,)] = leaf.payments[leaf.winner - 1]
    mech = SimultaneousMechanism(alloc, pay, v0)
    if monotone:
        if dists is None:
            raise ValueError("monotone flattening needs the value distributions")
        mech = monotonize(mech, cuts, dists, v0)
    counts = list(sizes)
    bits = [math.ceil(math.log2(c)) if c > 1 else 0 for c in counts]
    m = communication_requirement(tree)
    ranks = _last_message_ranks(tree, n, m)
    return FlattenResult(
        mechanism=mech,
        strategies=cuts,
        message_counts=counts,
        bits=bits,
        total_bits=sum(bits),
        communication_requirement=m,
        bit_bound=n * m - n * (n - 3) / 2,
        per_bidder_bounds=[2 ** (m - r + 2) for r in ranks],
    )


def example_tree():
    """Alice sends a bit, then Bob; Bob's price is ¼ after a 0 and ¾ after a 1,
    and Alice pays ⅓ when she wins after sending a 1."""
    return Decision(0, 1, [
        Decision(1, 1, [Leaf(1, [0.0, 0.0]), Leaf(2, [0.0, 0.25])]),
        Decision(1, 1, [Leaf(1, [1 / 3, 0.0]), Leaf(2, [0.0, 0.75])]),
    ])
