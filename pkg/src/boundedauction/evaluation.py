"""Exact and Monte-Carlo evaluation of mechanisms under threshold strategies.

Exact values are cell sums: a bid profile occurs with the product of the
bidders' interval masses, and the winner contributes the conditional mean of
her interval (welfare), her payment (profit) or the conditional mean of her
virtual value (virtual surplus). The seller contributes ``v0`` in all three.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .distributions import ValueDistribution, VirtualTransform
from .errors import NotRegularError, StructuralError
from .mechanism import PrioritySpec, SimultaneousMechanism, StrategyProfile, ThresholdVector, equally_spaced_thresholds

MC_CHUNK = 1 << 16
VALUE_STREAM = 0
TIE_STREAM = 1
CSV_HEADER = (
    "welfare", "profit", "virtual_surplus", "benchmark_welfare", "benchmark_profit",
    "welfare_loss", "profit_loss", "method", "samples", "stderr",
)


@dataclass
class EvaluationReport:
    expected_welfare: float
    expected_profit: float
    expected_virtual_surplus: float | None = None
    benchmark_welfare: float | None = None
    benchmark_profit: float | None = None
    method: str = "exact"
    mc_samples: int | None = None
    mc_stderr: float | None = None
    profit_stderr: float | None = None
    strategies: list | None = None

    @property
    def welfare_loss(self):
        return None if self.benchmark_welfare is None else self.benchmark_welfare - self.expected_welfare

    @property
    def profit_loss(self):
        return None if self.benchmark_profit is None else self.benchmark_profit - self.expected_profit

    def as_dict(self):
        d = asdict(self)
        d["welfare_loss"] = self.welfare_loss
        d["profit_loss"] = self.profit_loss
        return d

    def to_json(self):
        return json.dumps(self.as_dict(), indent=1)

    def to_csv(self):
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return f"{x:.12g}"
            return str(x)

        row = [
            self.expected_welfare, self.expected_profit, self.expected_virtual_surplus,
            self.benchmark_welfare, self.benchmark_profit, self.welfare_loss, self.profit_loss,
            self.method, self.mc_samples, self.mc_stderr,
        ]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerow([fmt(x) for x in row])
        return buf.getvalue()


# ---------------------------------------------------------------- cell data

def _cells(t: ThresholdVector, d: ValueDistribution, what: str):
    c = t.as_array()
    lo, hi = c[:-1], c[1:]
    if what == "mass":
        return np.asarray(d.mass(lo, hi), dtype=float)
    if what == "mean_mass":
        return np.asarray(d.partial_expectation(lo, hi), dtype=float)
    if what == "virtual_mass":
        return np.asarray(d.virtual_partial(lo, hi), dtype=float)
    raise ValueError(what)


def cell_means(t: ThresholdVector, d: ValueDistribution):
    """Conditional mean per bid; zero-mass cells report their midpoint."""
    m = _cells(t, d, "mass")
    pe = _cells(t, d, "mean_mass")
    c = t.as_array()
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(m > 0, pe / np.where(m > 0, m, 1.0), 0.5 * (c[:-1] + c[1:]))


def _prepare(m: SimultaneousMechanism, s, dists):
    s = StrategyProfile(s)
    s.check(m.bid_sizes)
    if len(dists) != m.n:
        raise StructuralError(f"{len(dists)} distributions for {m.n} bidders")
    return s


def _outer(vectors):
    out = np.array(1.0)
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


def _cell_sum(m, s, dists, v0, winner_term):
    """Σ_b Pr(b) Σ_j a_j(b) term_j(b) with per-bidder integrand tables."""
    masses = [_cells(t, d, "mass") for t, d in zip(s, dists)]
    total = float(np.sum(m.allocation[..., 0] * _outer(masses))) * v0
    for i in range(m.n):
        total += float(np.sum(winner_term(i, list(masses))))
    return total


def expected_welfare_exact(m: SimultaneousMechanism, s, dists, v0=None) -> float:
    s = _prepare(m, s, dists)
    v0 = m.v0 if v0 is None else v0
    if m.priority is not None and _matches(m.priority, s):
        return priority_values(m.priority, dists, v0)["welfare"]
    pes = [_cells(t, d, "mean_mass") for t, d in zip(s, dists)]

    def term(i, vecs):
        vecs[i] = pes[i]
        return m.allocation[..., i + 1] * _outer(vecs)

    return _cell_sum(m, s, dists, v0, term)


def expected_profit_exact(m: SimultaneousMechanism, s, dists, v0=None) -> float:
    s = _prepare(m, s, dists)
    v0 = m.v0 if v0 is None else v0

    def term(i, vecs):
        return m.allocation[..., i + 1] * m.payments[..., i] * _outer(vecs)

    return _cell_sum(m, s, dists, v0, term)


def expected_virtual_surplus_exact(m: SimultaneousMechanism, s, dists, v0=None) -> float:
    s = _prepare(m, s, dists)
    v0 = m.v0 if v0 is None else v0
    vps = [_cells(t, d, "virtual_mass") for t, d in zip(s, dists)]

    def term(i, vecs):
        vecs[i] = vps[i]
        return m.allocation[..., i + 1] * _outer(vecs)

    return _cell_sum(m, s, dists, v0, term)


def _matches(spec, s):
    return all(a.cuts == b.cuts for a, b in zip(spec.thresholds, s))


# ------------------------------------------------------ priority fast path

def priority_values(spec: PrioritySpec, dists, v0=None) -> dict:
    """Welfare, profit and virtual surplus of a (modified) priority game.

    Runs in O(n^2 k) without tabulating the k^n profiles. For bidder ``i``
    facing higher-priority bids with maximum ``Mh`` and lower-priority bids with
    maximum ``Ml``, her smallest winning bid is ``max(Mh + 1, Ml)``; she wins
    with bid ``j`` iff that is at most ``j`` and then pays its cut.
    """
    v0 = spec.v0 if v0 is None else float(v0)
    n, k = spec.n, spec.k
    rank = spec.rank
    masses = [_cells(t, d, "mass") for t, d in zip(spec.thresholds, dists)]
    cum = [np.concatenate([[0.0], np.cumsum(p)]) for p in masses]  # cum[i][j+1] = P(b_i <= j)
    top = spec.priority_order[-1]
    out = {"welfare": 0.0, "profit": 0.0, "virtual_surplus": 0.0}
    for i in range(n):
        # Q[m] = P(smallest winning bid <= m) for m = 0..k-1
        Q = np.ones(k)
        for h in range(n):
            if h == i:
                continue
            if rank[h] > rank[i]:
                Q *= cum[h][:k]          # P(b_h <= m - 1)
            else:
                Q *= cum[h][1:k + 1]     # P(b_h <= m)
        if spec.modified and i == top:
            Q[0] = 0.0
        d, t = dists[i], spec.thresholds[i]
        pe = _cells(t, d, "mean_mass")
        out["welfare"] += float(pe @ Q)
        dQ = np.diff(Q, prepend=0.0)
        paid = np.cumsum(np.asarray(t.cuts[:k]) * dQ)
        out["profit"] += float(masses[i] @ paid)
        out["virtual_surplus"] += float(_cells(t, d, "virtual_mass") @ Q)
    if spec.modified:
        keep = math.prod(float(p[0]) for p in masses) * v0
        for key in out:
            out[key] += keep
    return out


# ---------------------------------------------------------------- Monte Carlo

def _stream(seed, stream, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream, chunk])))


def _mc_chunk(m, s, dists, v0, transforms, seed, chunk, size):
    u = _stream(seed, VALUE_STREAM, chunk).random((size, m.n))
    values = np.column_stack([np.asarray(d.sample(u[:, i]), dtype=float) for i, d in enumerate(dists)])
    bids = np.column_stack([t.bids(values[:, i]) for i, t in enumerate(s)])
    flat = np.ravel_multi_index(tuple(bids.T), m.bid_sizes)
    weights = m.allocation.reshape(-1, m.n + 1)[flat]
    r = _stream(seed, TIE_STREAM, chunk).random(size)
    winner = (np.cumsum(weights, axis=1) <= r[:, None]).sum(axis=1)
    winner = np.minimum(winner, m.n)
    # guard against rounding in the cumulative sum landing on a zero-weight winner
    winner = np.where(weights[np.arange(size), winner] > 0, winner, np.argmax(weights, axis=1))
    seller = winner == 0
    idx = np.maximum(winner - 1, 0)
    rows = np.arange(size)
    welfare = np.where(seller, v0, values[rows, idx])
    pays = m.payments.reshape(-1, m.n)[flat]
    profit = np.where(seller, v0, pays[rows, idx])
    out = [float(welfare.sum()), float((welfare ** 2).sum()), float(profit.sum()), float((profit ** 2).sum())]
    if transforms is not None:
        vv = np.column_stack([np.asarray(tr.source.virtual_value(values[:, i])) for i, tr in enumerate(transforms)])
        surplus = np.where(seller, v0, vv[rows, idx])
        out.append(float(surplus.sum()))
    return out


def monte_carlo_evaluate(m: SimultaneousMechanism, s, dists, v0=None, samples=1_000_000, seed=0, workers=1,
                         chunk_size=MC_CHUNK) -> EvaluationReport:
    """Simulate ``samples`` value profiles with counter-based per-chunk streams.

    Each chunk draws from its own Philox stream keyed by ``(seed, stream,
    chunk)`` and chunk sums are merged in chunk order, so the result does not
    depend on ``workers``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    s = _prepare(m, s, dists)
    v0 = m.v0 if v0 is None else float(v0)
    transforms = [VirtualTransform(d) for d in dists]
    if not all(t.regular for t in transforms):
        transforms = None
    sizes = [min(chunk_size, samples - c) for c in range(0, samples, chunk_size)]
    jobs = [(m, s, dists, v0, transforms, seed, c, size) for c, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _mc_chunk(*a), jobs))
    else:
        parts = [_mc_chunk(*a) for a in jobs]
    sums = [0.0] * len(parts[0])
    for p in parts:
        sums = [a + b for a, b in zip(sums, p)]
    N = samples

    def stderr(total, sq):
        if N < 2:
            return 0.0
        var = max(sq - total * total / N, 0.0) / (N - 1)
        return math.sqrt(var / N)

    return EvaluationReport(
        expected_welfare=sums[0] / N,
        expected_profit=sums[2] / N,
        expected_virtual_surplus=sums[4] / N if transforms is not None else None,
        method="monte-carlo",
        mc_samples=N,
        mc_stderr=stderr(sums[0], sums[1]),
        profit_stderr=stderr(sums[2], sums[3]),
        strategies=[list(t.cuts) for t in s],
    )


# ----------------------------------------------------------------- benchmarks

def _gauss_integral(fn, breakpoints, order):
    x, w = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        if b <= a:
            continue
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        total += half * float(np.dot(w, fn(mid + half * x)))
    return total


def _knots(d):
    return np.asarray(getattr(d, "values", d.support), dtype=float)


def _max_with_floor(cdfs, knots, v0, order):
    """``E[max(X_1, ..., X_n, v0)]`` as ``v0 + ∫_{v0} (1 - Π F_i)``."""
    pts = np.unique(np.concatenate([knots, [v0]]))
    pts = pts[pts >= v0]
    if pts.size < 2:
        return float(v0)
    integrand = lambda x: 1.0 - np.prod([np.asarray(F(x)) for F in cdfs], axis=0)
    return float(v0 + _gauss_integral(integrand, pts, order))


def benchmark_unbounded(dists, n=None, v0=0.0, objective="welfare") -> float:
    """First-best welfare or Myerson-optimal profit with unlimited messages.

    Both are ``E[max(Z_1, ..., Z_n, v0)]`` with ``Z_i`` the value (welfare) or
    the virtual value (profit); the integrand is piecewise polynomial between
    knots, so composite Gauss-Legendre quadrature is exact up to rounding.
    """
    dists = list(dists)
    if n is not None and len(dists) == 1 and n > 1:
        dists = dists * n
    order = max(len(dists) + 2, 8)
    if objective == "welfare":
        knots = np.concatenate([_knots(d) for d in dists])
        return _max_with_floor([d.cdf for d in dists], knots, float(v0), order)
    if objective == "profit":
        from .profit import VirtualDistribution

        vds = [VirtualDistribution(d) for d in dists]
        knots = np.concatenate([vd.knots() for vd in vds])
        return _max_with_floor([vd.cdf for vd in vds], knots, float(v0), order)
    raise ValueError(f"unknown objective {objective!r}")


# --------------------------------------------------------- incentive checks

def _bidder_view(m, i):
    """Bidder ``i``'s winning weights and prices with her bid on the last axis."""
    a = np.moveaxis(m.allocation[..., i + 1], i, -1).reshape(-1, m.bid_sizes[i])
    p = np.moveaxis(m.payments[..., i], i, -1).reshape(-1, m.bid_sizes[i])
    return a, p


def verify_dominant_strategy(m: SimultaneousMechanism, s, dists=None, value_grid=200, slack=1e-9):
    """Check that the prescribed bid is a best reply to every pure opponent profile.

    Values probed: ``value_grid`` evenly spaced points per bidder plus every cut
    and cut ± 1e-6. Returns ``(passed, worst_violation)``.
    """
    s = StrategyProfile(s)
    s.check(m.bid_sizes)
    worst = 0.0
    for i, t in enumerate(s):
        c = t.as_array()
        v = np.concatenate([np.linspace(c[0], c[-1], value_grid), c, c - 1e-6, c + 1e-6])
        v = np.unique(np.clip(v, c[0], c[-1]))
        a, p = _bidder_view(m, i)
        util = a[:, :, None] * (v[None, None, :] - p[:, :, None])  # profiles x bids x values
        chosen = t.bids(v)
        own = np.take_along_axis(util, np.broadcast_to(chosen[None, None, :], (util.shape[0], 1, v.size)), axis=1)[:, 0, :]
        worst = max(worst, float(np.max(util.max(axis=1) - own)))
    return worst <= slack, worst


def verify_ex_post_ir(m: SimultaneousMechanism, s, dists=None, slack=1e-9) -> bool:
    """No winner pays more than the lowest value in her bid interval."""
    s = StrategyProfile(s)
    s.check(m.bid_sizes)
    for i, t in enumerate(s):
        a, p = _bidder_view(m, i)
        lower = t.as_array()[:-1]
        if np.any((a > 0) & (p > lower[None, :] + slack)):
            return False
    return True


def verify_interim_ir(m: SimultaneousMechanism, s, dists, slack=1e-9) -> bool:
    """Expected utility given one's own value is nonnegative at every cut."""
    s = StrategyProfile(s)
    s.check(m.bid_sizes)
    for i, t in enumerate(s):
        P, E = _expected_terms(m, s, dists, i)
        c = t.as_array()
        for j in range(t.k):
            for v in (c[j], c[j + 1]):
                if P[j] * v - E[j] < -slack and c[j + 1] > c[j]:
                    return False
    return True


def _opponent_weights(m, s, dists, i):
    """Probability of each opponent profile in the flattened order of :func:`_bidder_view`."""
    masses = [_cells(t, d, "mass") for j, (t, d) in enumerate(zip(s, dists)) if j != i]
    return _outer(masses).reshape(-1) if masses else np.ones(1)


def _expected_terms(m, s, dists, i):
    w = _opponent_weights(m, s, dists, i)
    a, p = _bidder_view(m, i)
    return w @ a, w @ (a * p)


# ------------------------------------------------------------ best responses

def _lines(m, s, dists, i, objective, v0):
    """Slope and intercept of bidder ``i``'s objective as a function of her value, per bid."""
    n, k = m.n, m.bid_sizes[i]
    w = _opponent_weights(m, s, dists, i)
    if objective == "utility":
        P, E = _expected_terms(m, s, dists, i)
        return P, -E
    if objective not in ("welfare", "virtual_surplus"):
        raise ValueError(f"unknown objective {objective!r}")
    kind = "mean_mass" if objective == "welfare" else "virtual_mass"
    h = w @ _bidder_view(m, i)[0]
    alloc = np.moveaxis(m.allocation, i, -2)  # ... x k_i x (n+1)
    alloc = alloc.reshape(-1, k, n + 1)
    others = [j for j in range(n) if j != i]
    masses = [_cells(s[j], dists[j], "mass") for j in others]
    t = w @ alloc[:, :, 0] * v0
    for pos, j in enumerate(others):
        vecs = list(masses)
        vecs[pos] = _cells(s[j], dists[j], kind)
        wj = _outer(vecs).reshape(-1)
        t = t + wj @ alloc[:, :, j + 1]
    return h, t


def envelope_cuts(h, t, lo, hi, tol=1e-12):
    """Cuts of the bid maximizing ``h[bid] x + t[bid]`` on ``[lo, hi]``.

    Ties go to the lower bid and unused bids get zero-width intervals. Returns
    ``None`` when every bid is equally good everywhere.
    """
    h = np.asarray(h, dtype=float)
    t = np.asarray(t, dtype=float)
    k = h.size
    scale = max(1.0, float(np.max(np.abs(h))) * max(abs(lo), abs(hi)), float(np.max(np.abs(t))))
    if np.all(np.abs(h - h[0]) <= tol * scale) and np.all(np.abs(t - t[0]) <= tol * scale):
        return None
    pts = [lo, hi]
    for a in range(k):
        for b in range(a + 1, k):
            if h[a] != h[b]:
                x = (t[b] - t[a]) / (h[a] - h[b])
                if lo < x < hi:
                    pts.append(x)
    pts = np.unique(pts)

    def argmax(x):
        vals = h * x + t
        return int(np.flatnonzero(vals >= vals.max() - tol * scale)[0])

    segments = []  # (bid, start)
    for a, b in zip(pts[:-1], pts[1:]):
        bid = argmax(0.5 * (a + b))
        if not segments or segments[-1][0] != bid:
            segments.append((bid, a))
    used = [b for b, _ in segments]
    if any(b2 <= b1 for b1, b2 in zip(used, used[1:])):
        raise StructuralError(f"best response is not a threshold strategy (bid order {used})")
    starts = dict(segments)
    cuts = [lo]
    for j in range(1, k):
        nxt = [starts[b] for b in used if b >= j]
        cuts.append(nxt[0] if nxt else hi)
    cuts.append(hi)
    return cuts


def best_response_thresholds(m: SimultaneousMechanism, opponent_strategies, dists, bidder, objective="utility",
                             v0=None, tol=1e-12) -> ThresholdVector:
    """Upper envelope of the per-bid lines ``h(bid) v + t(bid)``.

    ``opponent_strategies`` lists a threshold vector per bidder; the entry for
    ``bidder`` only fixes her support (it may be ``None``, in which case the
    distribution's support is used). Ties go to the lower bid; a bidder who is
    indifferent everywhere gets equally spaced cuts.
    """
    v0 = m.v0 if v0 is None else v0
    i = bidder
    k = m.bid_sizes[i]
    d = dists[i]
    own = opponent_strategies[i]
    lo, hi = (own.cuts[0], own.cuts[-1]) if own is not None else d.support
    filler = equally_spaced_thresholds(k, lo, hi)
    s = StrategyProfile([t if j != i else filler for j, t in enumerate(opponent_strategies)])
    s.check(m.bid_sizes)
    h, t = _lines(m, s, dists, i, objective, v0)
    if objective == "virtual_surplus":
        x_lo, x_hi = float(d.virtual_value(lo)), float(d.virtual_value(hi))
    else:
        x_lo, x_hi = lo, hi
    cuts = envelope_cuts(h, t, x_lo, x_hi, tol)
    if cuts is None:
        return filler
    if objective == "virtual_surplus":
        cuts = [lo] + [float(d.virtual_inverse(c)) for c in cuts[1:-1]] + [hi]
    cuts[0], cuts[-1] = lo, hi
    return ThresholdVector(np.maximum.accumulate(cuts))


# ----------------------------------------------------------------- front door

def evaluate(m: SimultaneousMechanism, s, dists, v0=None, method="exact", samples=1_000_000, seed=None,
             workers=1, benchmarks=True) -> EvaluationReport:
    """Full report: exact or simulated values plus unbounded benchmarks."""
    s = _prepare(m, s, dists)
    v0 = m.v0 if v0 is None else float(v0)
    regular = all(VirtualTransform(d).regular for d in dists)
    if method == "exact":
        rep = EvaluationReport(
            expected_welfare=expected_welfare_exact(m, s, dists, v0),
            expected_profit=expected_profit_exact(m, s, dists, v0),
            expected_virtual_surplus=expected_virtual_surplus_exact(m, s, dists, v0) if regular else None,
            strategies=[list(t.cuts) for t in s],
        )
    elif method == "mc":
        if seed is None:
            raise ValueError("Monte-Carlo evaluation needs an explicit seed")
        rep = monte_carlo_evaluate(m, s, dists, v0, samples, seed, workers)
    else:
        raise ValueError(f"unknown method {method!r}")
    if benchmarks:
        rep.benchmark_welfare = benchmark_unbounded(dists, v0=v0, objective="welfare")
        if regular:
            rep.benchmark_profit = benchmark_unbounded(dists, v0=v0, objective="profit")
    return rep


def evaluate_priority(spec: PrioritySpec, dists, v0=None, benchmarks=True) -> EvaluationReport:
    """Exact report for a priority game without tabulating it (any ``n``)."""
    v0 = spec.v0 if v0 is None else float(v0)
    regular = all(VirtualTransform(d).regular for d in dists)
    vals = priority_values(spec, dists, v0)
    rep = EvaluationReport(
        expected_welfare=vals["welfare"],
        expected_profit=vals["profit"],
        expected_virtual_surplus=vals["virtual_surplus"] if regular else None,
        strategies=[list(t.cuts) for t in spec.thresholds],
    )
    if benchmarks:
        rep.benchmark_welfare = benchmark_unbounded(dists, v0=v0, objective="welfare")
        if regular:
            rep.benchmark_profit = benchmark_unbounded(dists, v0=v0, objective="profit")
    return rep
