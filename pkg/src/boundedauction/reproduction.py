"""Reference numbers for uniform values next to freshly computed ones.

Each table is a list of :class:`Row`. A row either checks equality
(``|computed - target| <= tolerance``), an upper bound (``computed < target``),
or is informational (``relation == "note"``, never failing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .distributions import Uniform
from .evaluation import benchmark_unbounded, evaluate_priority, expected_welfare_exact, priority_values
from .profit import solve_profit_optimal
from .sequential import backward_induction_best_response, evaluate_sequential, example_tree, flatten_to_simultaneous
from .solver import (
    closed_form_uniform_welfare_2bidder,
    solve_n_bidder_welfare_2bid,
    solve_welfare_2bidder,
    symmetric_optimal_1bit,
    symmetric_threshold_n_2bid,
    symmetric_welfare_2bid,
)

U = Uniform(0.0, 1.0)
HEADER = ("table", "quantity", "relation", "target", "computed", "abs_diff", "tolerance", "ok")


@dataclass
class Row:
    table: str
    quantity: str
    target: float
    computed: float
    tolerance: float = 1e-10
    relation: str = "="

    @property
    def diff(self):
        return abs(self.computed - self.target)

    @property
    def ok(self):
        if self.relation == "=":
            return self.diff <= self.tolerance
        if self.relation == "<":
            return self.computed < self.target
        return True

    def cells(self):
        return (self.table, self.quantity, self.relation, self.target, self.computed, self.diff, self.tolerance, self.ok)


def two_bidder_1bit():
    t = "two-bidder-1bit"
    sol = solve_welfare_2bidder(U, U, 2, 0.0)
    x, y = sol.spec.thresholds[0].interior[0], sol.spec.thresholds[1].interior[0]
    first_best = benchmark_unbounded([U, U])
    sym = symmetric_optimal_1bit("welfare").value
    return [
        Row(t, "cut_low", 1 / 3, x),
        Row(t, "cut_high", 2 / 3, y),
        Row(t, "welfare_exact", 35 / 54, sol.value),
        Row(t, "welfare_3dp", 0.648, sol.value, 5e-4),
        Row(t, "first_best_3dp", 0.667, first_best, 5e-4),
        Row(t, "welfare_loss", 1 / 54, first_best - sol.value),
        Row(t, "symmetric_welfare", 0.625, sym),
    ]


def welfare_cuts(kmax=12):
    rows = []
    for k in range(2, kmax + 1):
        sol = solve_welfare_2bidder(U, U, k, 0.0)
        x, y = (t.interior for t in sol.spec.thresholds)
        err_x = max(abs(x[i] - (2 * i + 1) / (2 * k - 1)) for i in range(k - 1))
        err_y = max(abs(y[i] - (2 * i + 2) / (2 * k - 1)) for i in range(k - 1))
        rows.append(Row("welfare-cuts", f"k={k} max_cut_error", 0.0, max(err_x, err_y), 1e-9))
    return rows


def loss_vs_k(kmax=12):
    rows = []
    for k in range(2, kmax + 1):
        spec = closed_form_uniform_welfare_2bidder(k).spec()
        w = priority_values(spec, [U, U], 0.0)["welfare"]
        rows.append(Row("loss-vs-k", f"k={k} welfare_loss", 1 / (6 * (2 * k - 1) ** 2), 2 / 3 - w))
        # symmetric counterpart: both bidders share the k equal cells, ties split
        sym = sum(((i + 0.5) / k) * (1 / k) * (2 * i + 1) / k for i in range(k))
        rows.append(Row("loss-vs-k", f"k={k} symmetric_loss", 1 / (6 * k * k), 2 / 3 - sym))
    return rows


def loss_vs_n(nmax=100):
    rows = []
    for n in range(2, nmax + 1):
        wel = solve_n_bidder_welfare_2bid(U, n, 0.0, branch="pg")
        pro = solve_profit_optimal([U], n, 2, 0.0, branch="mpg")
        wl = n / (n + 1) - wel.value
        pl = benchmark_unbounded([U] * n, objective="profit") - pro.value
        rows.append(Row("loss-vs-n", f"n={n} welfare_loss_pg", 9 / n, wl, relation="<"))
        rows.append(Row("loss-vs-n", f"n={n} profit_loss_mpg", 9 / n, pl, relation="<"))
        x = symmetric_threshold_n_2bid(U, n)
        rows.append(Row("loss-vs-n", f"n={n} symmetric_welfare_loss", math.nan,
                        n / (n + 1) - symmetric_welfare_2bid(U, n, x), relation="note"))
    return rows


def profit_1bit():
    t = "profit-1bit"
    sol = solve_profit_optimal([U, U], 2, 2, 0.0)
    rep = evaluate_priority(sol.spec, [U, U], 0.0)
    cuts = sorted(c for th in sol.spec.thresholds for c in th.interior)
    return [
        Row(t, "cut_low", 0.5, cuts[0]),
        Row(t, "cut_high", 0.625, cuts[1]),
        Row(t, "profit_exact", 25 / 64, rep.expected_profit),
        Row(t, "profit_2dp", 0.39, rep.expected_profit, 5e-3),
        Row(t, "profit_minus_virtual_surplus", 0.0, rep.expected_profit - rep.expected_virtual_surplus, 1e-9),
        Row(t, "optimal_profit", 5 / 12, rep.benchmark_profit),
        Row(t, "profit_loss", 5 / 12 - 25 / 64, rep.benchmark_profit - rep.expected_profit),
    ]


def profit_n5():
    sol = solve_profit_optimal([U], 5, 2, 0.0)
    cuts = [th.interior[0] for th in sol.spec.thresholds]
    targets = (0.5, 0.625, 0.695, 0.741, 0.775)
    # the reference digits are truncated, not rounded, so they sit up to 1e-3 below
    rows = [Row("profit-n5", f"cut_{i + 1}_3dp", want, got, 1e-3) for i, (want, got) in enumerate(zip(targets, cuts))]
    y = 0.5
    for i, got in enumerate(cuts):
        rows.append(Row("profit-n5", f"cut_{i + 1}_recursion", y, got))
        y = 0.5 + y * y / 2
    return rows


def symmetric_1bit():
    t = "symmetric-1bit"
    w = symmetric_optimal_1bit("welfare")
    p = symmetric_optimal_1bit("profit")
    return [
        Row(t, "welfare", 0.625, w.value, 1e-6),
        Row(t, "welfare_cut", 0.5, w.cuts[0]),
        Row(t, "profit", 0.3849, p.value, 5e-5),
        Row(t, "profit_cut", 1 / math.sqrt(3), p.cuts[0]),
        Row(t, "welfare_below_asymmetric", 35 / 54, w.value, relation="<"),
        Row(t, "profit_below_asymmetric", 25 / 64, p.value, relation="<"),
    ]


def sequential_1bit():
    t = "sequential-1bit"
    tree = example_tree()
    s = backward_induction_best_response(tree, [U, U])
    rep = evaluate_sequential(tree, s, [U, U])
    flat = flatten_to_simultaneous(tree, s, [U, U])
    fw = expected_welfare_exact(flat.mechanism, flat.strategies, [U, U], 0.0)
    return [
        Row(t, "first_cut", 0.5, s[()].interior[0]),
        Row(t, "second_cut_after_0", 0.25, s[(0,)].interior[0]),
        Row(t, "second_cut_after_1", 0.75, s[(1,)].interior[0]),
        Row(t, "welfare_exact", 21 / 32, rep.expected_welfare),
        Row(t, "welfare_3dp_reported", 0.653, rep.expected_welfare, relation="note"),
        Row(t, "beats_simultaneous_optimum", rep.expected_welfare, 35 / 54, relation="<"),
        Row(t, "profit_exact", 0.3125, rep.expected_profit),
        Row(t, "flattened_welfare", rep.expected_welfare, fw, 1e-12),
        Row(t, "flattened_bits", flat.bit_bound + 1e-9, flat.total_bits, relation="<"),
    ]


TABLES = {
    "two-bidder-1bit": two_bidder_1bit,
    "welfare-cuts": welfare_cuts,
    "loss-vs-k": loss_vs_k,
    "loss-vs-n": loss_vs_n,
    "profit-1bit": profit_1bit,
    "profit-n5": profit_n5,
    "symmetric-1bit": symmetric_1bit,
    "sequential-1bit": sequential_1bit,
}


def reproduce(table: str, kmax: int = 12, nmax: int = 100):
    if table not in TABLES:
        raise KeyError(f"unknown table {table!r}; available: {', '.join(TABLES)}")
    if table in ("welfare-cuts", "loss-vs-k"):
        return TABLES[table](kmax)
    if table == "loss-vs-n":
        return TABLES[table](nmax)
    return TABLES[table]()
