"""Brute-force ground truth for two bidders.

Every monotone deterministic two-bidder allocation is a stack of rows
``[A, ..., A, B, ..., B]`` whose A-prefix lengths never shrink as A's bid
grows. For each such table the best threshold strategies are found by
alternating exact best responses from many starting points, and the overall
winner is compared with the closed-form solvers.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificationError, StructuralError
from .evaluation import best_response_thresholds, expected_virtual_surplus_exact, expected_welfare_exact
from .mechanism import SimultaneousMechanism, StrategyProfile, ThresholdVector, equally_spaced_thresholds, is_monotone
from .profit import solve_profit_optimal
from .solver import solve_welfare_2bidder

ENUMERATION_LIMIT = 4
SELLER, A, B = 0, 1, 2


@dataclass
class MechanismFamily:
    n: int
    bid_sizes: tuple
    enumeration: list
    labels: list = field(default_factory=list)


def _table(prefixes, kB, seller_cell=False):
    a = np.zeros((len(prefixes), kB, 3))
    for i, L in enumerate(prefixes):
        a[i, :L, A] = 1.0
        a[i, L:, B] = 1.0
    if seller_cell:
        a[0, 0] = (1.0, 0.0, 0.0)
    return a


def enumerate_monotone_2bidder(k: int, allow_seller: bool = False, kA: int | None = None) -> MechanismFamily:
    """All deterministic monotone tables with A's bid on rows and B's on columns.

    ``kA`` defaults to ``k`` (B always has ``k`` bids). Without the seller
    there are ``C(kA + k, k)`` tables; ``allow_seller`` adds the distinct
    tables in which the seller keeps the all-zero cell.
    """
    kA = k if kA is None else kA
    if max(k, kA) > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration is limited to {ENUMERATION_LIMIT} bids per bidder")
    if min(k, kA) < 1:
        raise ValueError("each bidder needs at least one bid")
    tables, labels = [], []
    for prefixes in itertools.combinations_with_replacement(range(k + 1), kA):
        tables.append(_table(prefixes, k))
        labels.append("L=" + ",".join(map(str, prefixes)))
    if allow_seller:
        # the zero row's first entry is overwritten, so prefixes 0 and 1 there coincide
        seen = set()
        for prefixes in itertools.combinations_with_replacement(range(k + 1), kA):
            a = _table(prefixes, k, seller_cell=True)
            if a.tobytes() in seen:
                continue
            seen.add(a.tobytes())
            tables.append(a)
            labels.append("L=" + ",".join(map(str, prefixes)) + "+seller")
    return MechanismFamily(2, (kA, k), tables, labels)


def diagonal_randomizations(family: MechanismFamily):
    """Variants splitting every diagonal cell ½-½ between the bidders, kept when monotone."""
    out, labels, seen = [], [], set()
    for a, label in zip(family.enumeration, family.labels):
        r = a.copy()
        for i in range(min(r.shape[0], r.shape[1])):
            if r[i, i, SELLER] == 0:
                r[i, i] = (0.0, 0.5, 0.5)
        key = r.tobytes()
        if key in seen or np.array_equal(r, a):
            continue
        if is_monotone(SimultaneousMechanism(r, np.zeros(r.shape[:-1] + (2,)))):
            seen.add(key)
            out.append(r)
            labels.append(label + "+split")
    return out, labels


def _objective_value(m, cuts, dists, v0, objective):
    if objective == "welfare":
        return expected_welfare_exact(m, cuts, dists, v0)
    return expected_virtual_surplus_exact(m, cuts, dists, v0)


def _ascend(m, cuts, dists, v0, objective, tol=1e-14, max_rounds=20000):
    br_obj = "welfare" if objective == "welfare" else "virtual_surplus"
    cuts = list(cuts)
    for _ in range(max_rounds):
        old = [c.as_array() for c in cuts]
        for i in range(2):
            cuts[i] = best_response_thresholds(m, cuts, dists, i, br_obj, v0)
        change = max(float(np.max(np.abs(c.as_array() - o))) for c, o in zip(cuts, old))
        if change <= tol:
            break
    return cuts


def _random_cuts(rng, k, d):
    lo, hi = d.support
    inner = np.sort(rng.uniform(lo, hi, k - 1))
    return ThresholdVector([lo, *inner, hi])


def optimize_thresholds(allocation, dists, v0=0.0, objective="welfare", restarts=32, seed=0):
    """Best cut vectors for a fixed two-bidder allocation table.

    ``objective`` is ``"welfare"`` or ``"profit"``; profit is optimized as
    virtual surplus, which equals the profit of the threshold payments.
    Returns ``(cuts, value)``.
    """
    a = np.asarray(allocation, dtype=float)
    if a.shape[-1] != 3:
        raise StructuralError("the oracle handles two bidders only")
    m = SimultaneousMechanism(a, np.zeros(a.shape[:-1] + (2,)), v0)
    sizes = m.bid_sizes
    rng = np.random.default_rng(seed)
    starts = [[equally_spaced_thresholds(k, *d.support) for k, d in zip(sizes, dists)]]
    starts += [[_random_cuts(rng, k, d) for k, d in zip(sizes, dists)] for _ in range(restarts)]
    best_cuts, best_val = None, -math.inf
    for start in starts:
        cuts = _ascend(m, start, dists, v0, objective)
        val = _objective_value(m, cuts, dists, v0, objective)
        if val > best_val + 1e-13:
            best_cuts, best_val = cuts, val
    return best_cuts, best_val


def grid_optimum_k2(allocation, dists, v0=0.0, objective="welfare", points=400):
    """Exhaustive search over a ``points`` x ``points`` grid of single cuts (two bids each)."""
    a = np.asarray(allocation, dtype=float)
    if a.shape[:2] != (2, 2):
        raise ValueError("grid search is for two bids per bidder")
    kind = "mean" if objective == "welfare" else "virtual"
    grids, mass, val = [], [], []
    for d in dists:
        lo, hi = d.support
        g = np.linspace(lo, hi, points)
        grids.append(g)
        m0 = np.asarray(d.mass(lo, g))
        mass.append(np.stack([m0, 1 - m0]))
        if kind == "mean":
            e0 = np.asarray(d.partial_expectation(lo, g))
            e1 = np.asarray(d.partial_expectation(g, hi))
        else:
            e0 = np.asarray(d.virtual_partial(lo, g))
            e1 = np.asarray(d.virtual_partial(g, hi))
        val.append(np.stack([e0, e1]))
    total = np.zeros((points, points))
    for i in range(2):
        for j in range(2):
            w = a[i, j]
            total += w[SELLER] * v0 * np.outer(mass[0][i], mass[1][j])
            total += w[A] * np.outer(val[0][i], mass[1][j])
            total += w[B] * np.outer(mass[0][i], val[1][j])
    idx = np.unravel_index(np.argmax(total), total.shape)
    return (grids[0][idx[0]], grids[1][idx[1]]), float(total[idx])


def priority_label(a, tol=1e-12):
    """``"PG"``/``"MPG"`` with the order (``"B>A"`` or ``"A>B"``) if ``a`` is a priority game, else ``None``."""
    a = np.asarray(a)
    kA, kB = a.shape[:2]
    if kA != kB:
        return None
    k = kA
    for modified in (False, True):
        for order, L in (("B>A", lambda i: i), ("A>B", lambda i: min(i + 1, k))):
            ref = _table([L(i) for i in range(k)], k, seller_cell=modified)
            if np.allclose(a, ref, atol=tol):
                return ("MPG " if modified else "PG ") + order
    return None


def identical_lines(a):
    """True when two rows or two columns of the table coincide."""
    a = np.asarray(a)
    rows = {a[i].tobytes() for i in range(a.shape[0])}
    cols = {a[:, j].tobytes() for j in range(a.shape[1])}
    return len(rows) < a.shape[0] or len(cols) < a.shape[1]


def certify_2bidder_optimality(k, dists, v0=0.0, objective="welfare", restarts=8, seed=0, tol=1e-8,
                               cut_tol=1e-6, randomized=True):
    """Optimize every monotone table and check that the solver's game is the best.

    Returns a certificate dict; raises :class:`CertificationError` (carrying the
    certificate) when some table beats the solver, when the winner is not a
    priority game, or when the winner's cuts differ from the solver's.
    """
    dists = list(dists)
    if k > 3:
        raise ValueError("exhaustive certification is limited to k <= 3")
    fam = enumerate_monotone_2bidder(k, allow_seller=True)
    tables, labels = list(fam.enumeration), list(fam.labels)
    if randomized:
        extra, extra_labels = diagonal_randomizations(enumerate_monotone_2bidder(k))
        tables += extra
        labels += extra_labels
    entries = []
    for idx, (a, label) in enumerate(zip(tables, labels)):
        cuts, val = optimize_thresholds(a, dists, v0, objective, restarts, seed + idx)
        entries.append({
            "allocation_id": idx,
            "label": label,
            "priority": priority_label(a),
            "optimal_cuts": [list(c.interior) for c in cuts],
            "optimal_value": val,
        })
    if objective == "welfare":
        sol = solve_welfare_2bidder(dists[0], dists[1], k, v0)
    else:
        sol = solve_profit_optimal(dists, 2, k, v0)
    best = max(entries, key=lambda e: e["optimal_value"])
    cert = {
        "k": k,
        "objective": objective,
        "v0": v0,
        "entries": entries,
        "argmax": best["allocation_id"],
        "argmax_label": best["label"],
        "argmax_value": best["optimal_value"],
        "solver_branch": sol.branch,
        "solver_value": sol.value,
        "solver_cuts": [list(t.interior) for t in sol.spec.thresholds],
    }
    problems = []
    if best["optimal_value"] > sol.value + tol:
        problems.append(f"table {best['label']} reaches {best['optimal_value']!r} > solver {sol.value!r}")
    near = [e for e in entries if e["optimal_value"] >= best["optimal_value"] - tol]
    if any(e["priority"] is None for e in near):
        bad = [e["label"] for e in near if e["priority"] is None]
        problems.append(f"non-priority tables attain the optimum: {bad}")
    matched = False
    for e in near:
        if e["priority"] is None:
            continue
        got = np.concatenate([np.asarray(c) for c in e["optimal_cuts"]])
        want = np.concatenate([np.asarray(c) for c in cert["solver_cuts"]])
        if got.shape == want.shape and np.max(np.abs(got - want), initial=0.0) <= cut_tol:
            matched = True
        if e["priority"].endswith("A>B"):
            mirrored = np.concatenate([np.asarray(c) for c in e["optimal_cuts"][::-1]])
            if dists[0] == dists[1] and np.max(np.abs(mirrored - want), initial=0.0) <= cut_tol:
                matched = True
    if not matched:
        problems.append("no optimal priority table has the solver's cuts")
    winner = tables[best["allocation_id"]]
    cert["distinct_rows_and_columns"] = not identical_lines(winner)
    if identical_lines(winner):
        problems.append("the optimal table repeats a row or column")
    cert["certified"] = not problems
    cert["problems"] = problems
    if problems:
        raise CertificationError("; ".join(problems), cert)
    return cert


def certificate_json(cert) -> str:
    """Certificate as JSON: per-table optima plus the argmax id."""
    return json.dumps(cert, indent=1, default=float)
