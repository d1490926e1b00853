"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary. ``python tests/test_acceptance.py``
runs the suite standalone.
"""

import functools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from boundedauction import (
    PrioritySpec,
    SimultaneousMechanism,
    TableDistribution,
    ThresholdVector,
    Uniform,
    benchmark_unbounded,
    best_response_thresholds,
    build_game,
    certify_2bidder_optimality,
    enumerate_monotone_2bidder,
    equally_spaced_thresholds,
    evaluate_priority,
    expected_profit_exact,
    expected_welfare_exact,
    monte_carlo_evaluate,
    quantile_mechanism,
    solve_n_bidder_welfare_2bid,
    solve_profit_optimal,
    solve_welfare_2bidder,
    symmetric_optimal_1bit,
    verify_dominant_strategy,
    verify_ex_post_ir,
)
from boundedauction.evaluation import priority_values
from boundedauction.mechanism import symmetric_game, threshold_payments
from boundedauction.oracle import optimize_thresholds
from boundedauction.sequential import (
    backward_induction_best_response,
    evaluate_sequential,
    example_tree,
    flatten_to_simultaneous,
)

RESULTS = {}
U = Uniform(0.0, 1.0)
TRI = TableDistribution.from_cdf(lambda v: v * v, 0.0, 1.0)


class PrintedDigitsMismatch(AssertionError):
    """A reference value quoted to a few digits disagrees beyond the stated tolerance."""


def criterion(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except AssertionError as exc:
                line = f"criterion {number:2d} FAIL  {title}: {exc}"
                RESULTS[number] = line
                print(line)
                raise
            line = f"criterion {number:2d} PASS  {title} ({time.perf_counter() - t0:.2f}s){': ' + detail if detail else ''}"
            RESULTS[number] = line
            print(line)

        return run

    return wrap


def close(a, b, tol):
    return abs(a - b) <= tol


@criterion(1, "two bidders, one bit, uniform: welfare 35/54 at cuts 1/3, 2/3")
def test_c01_two_bidder_one_bit():
    t0 = time.perf_counter()
    sol = solve_welfare_2bidder(U, U, 2, 0.0)
    x, y = (t.interior[0] for t in sol.spec.thresholds)
    assert close(x, 1 / 3, 1e-10) and close(y, 2 / 3, 1e-10), (x, y)
    # independent oracle: exact rational cell sum over the four bid profiles
    X, Y = Fraction(1, 3), Fraction(2, 3)
    w = (
        X * Y * (Y / 2)                            # both low: B wins, E[vB | low]
        + X * (1 - Y) * ((1 + Y) / 2)              # A low, B high: B wins
        + (1 - X) * Y * ((1 + X) / 2)              # A high, B low: A wins
        + (1 - X) * (1 - Y) * ((1 + Y) / 2)        # both high: B wins
    )
    assert w == Fraction(35, 54)
    assert close(sol.value, 35 / 54, 1e-10), sol.value
    m = build_game(sol.spec)
    assert close(expected_welfare_exact(m, list(sol.spec.thresholds), [U, U], 0.0), 35 / 54, 1e-10)
    loss = benchmark_unbounded([U, U]) - sol.value
    assert close(loss, 1 / 54, 1e-10), loss
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"took {elapsed:.2f}s"
    return f"loss {loss:.12g}"


@criterion(2, "mutually centered cuts x_i=(2i-1)/(2k-1), y_i=2i/(2k-1), k=2..12")
def test_c02_centered_cuts():
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(2, 13):
        sol = solve_welfare_2bidder(U, U, k, 0.0)
        x, y = (t.interior for t in sol.spec.thresholds)
        for i in range(1, k):
            worst = max(worst, abs(x[i - 1] - (2 * i - 1) / (2 * k - 1)), abs(y[i - 1] - 2 * i / (2 * k - 1)))
    assert worst <= 1e-9, worst
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    return f"max error {worst:.2e}"


@criterion(3, "welfare loss 1/(6(2k-1)^2) and symmetric loss 1/(6k^2), k=2..12")
def test_c03_loss_formula():
    for k in range(2, 13):
        sol = solve_welfare_2bidder(U, U, k, 0.0)
        loss = 2 / 3 - priority_values(sol.spec, [U, U], 0.0)["welfare"]
        assert close(loss, 1 / (6 * (2 * k - 1) ** 2), 1e-10), (k, loss)
        # symmetric: both use k equal cells and ties split evenly
        t = equally_spaced_thresholds(k)
        a = np.zeros((k, k, 3))
        for i in range(k):
            for j in range(k):
                a[i, j] = (0, 1, 0) if i > j else (0, 0, 1) if j > i else (0, 0.5, 0.5)
        sym = SimultaneousMechanism(a, threshold_payments(a, [t, t]))
        sloss = 2 / 3 - expected_welfare_exact(sym, [t, t], [U, U], 0.0)
        assert close(sloss, 1 / (6 * k * k), 1e-10), (k, sloss)


@criterion(4, "profit-optimal uniform k=2: MPG cuts 1/2, 5/8 and profit 25/64")
def test_c04_profit_two_bidders():
    sol = solve_profit_optimal([U, U], 2, 2, 0.0)
    assert sol.spec.modified
    cuts = sorted(c for t in sol.spec.thresholds for c in t.interior)
    assert close(cuts[0], 0.5, 1e-10) and close(cuts[1], 0.625, 1e-10), cuts
    m = build_game(sol.spec)
    s = list(sol.spec.thresholds)
    profit = expected_profit_exact(m, s, [U, U], 0.0)
    # independent oracle: A (cut a) low priority, B (cut b) high, seller keeps (0,0).
    # B pays b when high; A pays her critical value when she wins.
    a, b = Fraction(1, 2), Fraction(5, 8)
    if sol.spec.thresholds[0].interior[0] != 0.5:
        a, b = b, a
    oracle = (1 - b) * b + (1 - a) * b * a
    assert oracle == Fraction(25, 64)
    assert close(profit, 25 / 64, 1e-10), profit
    rep = evaluate_priority(sol.spec, [U, U], 0.0)
    assert abs(rep.expected_profit - rep.expected_virtual_surplus) <= 1e-9
    assert close(rep.benchmark_profit, 5 / 12, 1e-10)
    return f"profit loss vs 5/12 = {5 / 12 - profit:.12g}"


@pytest.mark.xfail(raises=PrintedDigitsMismatch, strict=True,
                   reason="reference 0.741 is truncated; the exact fourth cut 0.74173 is 7.3e-4 away")
@criterion(5, "n=5 uniform profit ladder 0.5, 0.625, 0.695, 0.741, 0.775")
def test_c05_profit_ladder_n5():
    sol = solve_profit_optimal([U], 5, 2, 0.0)
    cuts = [t.interior[0] for t in sol.spec.thresholds]
    y = [0.5]
    while len(y) < 5:
        y.append(0.5 + y[-1] ** 2 / 2)
    assert max(abs(a - b) for a, b in zip(cuts, y)) <= 1e-10, (cuts, y)
    quoted = (0.5, 0.625, 0.695, 0.741, 0.775)
    off = [(i + 1, c, p) for i, (c, p) in enumerate(zip(cuts, quoted)) if abs(c - p) > 5e-4]
    if off:
        raise PrintedDigitsMismatch(
            "recursion matches to 1e-10 but the quoted digits miss by more than 5e-4 at "
            + ", ".join(f"cut {i}: {c:.6f} vs {p}" for i, c, p in off)
        )


@criterion(6, "uniform PG welfare loss and MPG profit loss below 9/n, n=2..100")
def test_c06_many_bidders():
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(2, 101):
        wel = solve_n_bidder_welfare_2bid(U, n, 0.0, branch="pg")
        wl = n / (n + 1) - wel.value
        pro = solve_profit_optimal([U], n, 2, 0.0, branch="mpg")
        pl = benchmark_unbounded([U] * n, objective="profit") - pro.value
        assert 0 <= wl < 9 / n and 0 <= pl < 9 / n, (n, wl, pl)
        worst = max(worst, wl * n, pl * n)
    ladder = [t.interior[0] for t in pro.spec.thresholds]
    for i, x in enumerate(ladder, start=1):
        assert 1 - x <= 2 / i, ("upper gap", i, x)
        if i >= 15:
            assert x <= (2 * i - 3) / (2 * i), ("ladder growth", i, x)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0, f"took {elapsed:.2f}s"
    return f"max n*loss {worst:.4f} < 9"


BATTERY = {
    "uniform": U,
    "increasing": TRI,
    "decreasing": TableDistribution.from_cdf(lambda v: 1 - (1 - v) ** 2, 0.0, 1.0),
    "cubic": TableDistribution.from_cdf(lambda v: v ** 3, 0.0, 1.0),
    "exponential": TableDistribution.from_cdf(lambda v: (1 - np.exp(-3 * v)) / (1 - np.exp(-3)), 0.0, 1.0),
}


@criterion(7, "quantile mechanism loss < 8/k^2; equally spaced loss < 1/k")
def test_c07_finite_bounds():
    for d in (U, TRI):
        fb = benchmark_unbounded([d, d])
        for k in (4, 8, 16, 32, 64):
            spec = quantile_mechanism([d, d], k, 0.0)
            loss = fb - priority_values(spec, [d, d], 0.0)["welfare"]
            assert 0 <= loss < 8 / k ** 2, (d, k, loss)
    for name, d in BATTERY.items():
        for n in (2, 3):
            fb = benchmark_unbounded([d] * n)
            for k in (2, 4, 8, 16):
                spec = PrioritySpec(tuple(range(n)), tuple(equally_spaced_thresholds(k) for _ in range(n)))
                loss = fb - priority_values(spec, [d] * n, 0.0)["welfare"]
                assert 0 <= loss < 1 / k, (name, n, k, loss)


@criterion(8, "symmetric one-bit optima 0.625 and 1/sqrt(3) - 1/sqrt(3)^3")
def test_c08_symmetric():
    w = symmetric_optimal_1bit("welfare")
    p = symmetric_optimal_1bit("profit")
    assert close(w.value, 0.625, 1e-6) and w.cuts == (0.5, 0.5)
    x = 1 / math.sqrt(3)
    assert close(p.cuts[0], x, 1e-6) and close(p.value, x - x ** 3, 1e-6) and close(p.value, 0.384900, 1e-6)
    tw = [ThresholdVector([0, c, 1]) for c in w.cuts]
    tp = [ThresholdVector([0, c, 1]) for c in p.cuts]
    assert close(expected_welfare_exact(w.mechanism, tw, [U, U], 0.0), 0.625, 1e-12)
    assert close(expected_profit_exact(p.mechanism, tp, [U, U], 0.0), p.value, 1e-12)
    # no other common cut does better
    for g in np.linspace(0.01, 0.99, 99):
        t = [ThresholdVector([0, g, 1])] * 2
        alt = symmetric_game(2, t[0], modified=True)
        assert expected_profit_exact(alt, t, [U, U], 0.0) <= p.value + 1e-12
    assert w.value < 35 / 54 and p.value < 25 / 64


@pytest.mark.slow
@criterion(9, "exhaustive enumeration: a (modified) priority game is optimal, k=2,3")
def test_c09_oracle_certification():
    t0 = time.perf_counter()
    assert len(enumerate_monotone_2bidder(2).enumeration) == math.comb(4, 2)
    assert len(enumerate_monotone_2bidder(3).enumeration) == math.comb(6, 3)
    for d in (U, TRI):
        for objective in ("welfare", "profit"):
            for k in (2, 3):
                cert = certify_2bidder_optimality(k, [d, d], 0.0, objective, restarts=8, seed=0)
                assert cert["certified"], cert["problems"]
    # one bid for A and two for B: best table reaches 5/8 < 35/54
    fam = enumerate_monotone_2bidder(2, kA=1)
    best = max(optimize_thresholds(a, [U, U], 0.0, "welfare", restarts=4)[1] for a in fam.enumeration)
    assert close(best, 5 / 8, 1e-9) and best < 35 / 54, best
    elapsed = time.perf_counter() - t0
    assert elapsed < 120, f"took {elapsed:.1f}s"
    return f"{elapsed:.1f}s"


@criterion(10, "solver games are dominant-strategy and ex-post IR; best responses iterate to the fixed point")
def test_c10_incentives():
    cases = []
    for k in (2, 3, 4):
        for d, v0 in ((U, 0.0), (U, 0.2), (TRI, 0.0), (Uniform(2, 4), 2.0)):
            cases.append((solve_welfare_2bidder(d, d, k, v0), [d, d]))
        cases.append((solve_profit_optimal([U, U], 2, k, 0.0), [U, U]))
    cases.append((solve_profit_optimal([U], 4, 2, 0.0), [U] * 4))
    cases.append((solve_n_bidder_welfare_2bid(U, 4, 0.0), [U] * 4))
    for sol, dists in cases:
        m = build_game(sol.spec)
        s = list(sol.spec.thresholds)
        ok, worst = verify_dominant_strategy(m, s, dists, value_grid=200, slack=1e-9)
        assert ok, (sol.spec.label, worst)
        assert verify_ex_post_ir(m, s, dists)
    for k in (2, 3, 4, 6):
        sol = solve_welfare_2bidder(U, U, k, 0.0)
        m = build_game(sol.spec)
        s = [equally_spaced_thresholds(k), equally_spaced_thresholds(k)]
        for _ in range(10_000):
            old = np.concatenate([t.as_array() for t in s])
            for i in range(2):
                s[i] = best_response_thresholds(m, s, [U, U], i, "welfare")
                assert len(s[i].interior) <= k - 1
            if np.max(np.abs(np.concatenate([t.as_array() for t in s]) - old)) < 1e-15:
                break
        err = max(np.max(np.abs(a.as_array() - b.as_array())) for a, b in zip(s, sol.spec.thresholds))
        assert err <= 1e-8, (k, err)


@criterion(11, "sequential tree: cuts 1/2; 1/4, 3/4, welfare 21/32, flattening keeps welfare within the bit bound")
def test_c11_sequential():
    tree = example_tree()
    s = backward_induction_best_response(tree, [U, U])
    assert close(s[()].interior[0], 0.5, 1e-12)
    assert close(s[(0,)].interior[0], 0.25, 1e-12) and close(s[(1,)].interior[0], 0.75, 1e-12)
    rep = evaluate_sequential(tree, s, [U, U])
    oracle = Fraction(1, 2) * (Fraction(3, 4) * Fraction(5, 8) + Fraction(1, 4) * Fraction(1, 4)) \
        + Fraction(1, 2) * (Fraction(1, 4) * Fraction(7, 8) + Fraction(3, 4) * Fraction(3, 4))
    assert oracle == Fraction(21, 32)
    assert close(rep.expected_welfare, 21 / 32, 1e-12) and rep.expected_welfare > 35 / 54
    flat = flatten_to_simultaneous(tree, s, [U, U])
    fw = expected_welfare_exact(flat.mechanism, flat.strategies, [U, U], 0.0)
    fp = expected_profit_exact(flat.mechanism, flat.strategies, [U, U], 0.0)
    assert close(fw, rep.expected_welfare, 1e-12) and close(fp, rep.expected_profit, 1e-12)
    assert flat.message_counts == [2, 3] and flat.total_bits == 3 and flat.bit_bound == 5
    assert flat.within_bound
    return "exact welfare 21/32 = 0.65625; a rounded 0.653 is not reproduced"


def _random_case(rng):
    n = int(rng.integers(2, 4))
    sizes = tuple(int(x) for x in rng.integers(2, 5, size=n))
    dists = [U if rng.random() < 0.5 else TRI for _ in range(n)]
    alloc = rng.dirichlet(np.ones(n + 1) * 0.7, size=sizes)
    pay = rng.uniform(0, 1, size=sizes + (n,)) * (alloc[..., 1:] > 0)
    v0 = float(rng.choice([0.0, 0.25]))
    m = SimultaneousMechanism(alloc, pay, v0)
    s = [ThresholdVector([0.0, *np.sort(rng.uniform(0, 1, k - 1)), 1.0]) for k in sizes]
    return m, s, dists, v0


@criterion(12, "Monte Carlo within 4 stderr of exact on 50 random mechanisms; serial equals parallel")
def test_c12_monte_carlo():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for case in range(50):
        m, s, dists, v0 = _random_case(rng)
        mc = monte_carlo_evaluate(m, s, dists, v0, samples=1_000_000, seed=1000 + case)
        w = expected_welfare_exact(m, s, dists, v0)
        p = expected_profit_exact(m, s, dists, v0)
        zw = abs(mc.expected_welfare - w) / mc.mc_stderr
        zp = abs(mc.expected_profit - p) / mc.profit_stderr
        assert zw <= 4 and zp <= 4, (case, zw, zp)
        worst = max(worst, zw, zp)
        if case < 3:
            again = monte_carlo_evaluate(m, s, dists, v0, samples=1_000_000, seed=1000 + case, workers=4)
            assert again.as_dict() == mc.as_dict()
    return f"largest |z| {worst:.2f}"


if __name__ == "__main__":
    import sys

    fns = [v for k, v in sorted(globals().items()) if k.startswith("test_c")]
    failed = 0
    for fn in fns:
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
