"""Optimal threshold systems.

Two-bidder welfare optima are priority games whose cuts are *mutually
centered*: each cut of one bidder is the opponent's conditional mean over the
matching interval. The system is solved by shooting: fix the first free cut,
propagate the centering equations forward (each step is a monotone
one-dimensional root), and adjust the first cut until the last one lands on
the top of the support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .distributions import Uniform, ValueDistribution
from .errors import DegeneracyError, SolverError
from .evaluation import priority_values
from .mechanism import (
    PrioritySpec,
    SimultaneousMechanism,
    ThresholdVector,
    equally_spaced_thresholds,
    symmetric_game,
)

__all__ = [
    "SolverConfig", "MutuallyCenteredPair", "Solution", "SymmetricOptimum",
    "extended_mean", "solve_mutually_centered", "solve_mpg_thresholds", "solve_welfare_2bidder",
    "centering_residual", "closed_form_uniform_welfare_2bidder", "closed_form_uniform_profit_2bidder",
    "uniform_profit_theta", "solve_n_bidder_welfare_2bid", "pg_ladder_2bid", "mpg_ladder_2bid",
    "symmetric_threshold_n_2bid", "quantile_mechanism", "equally_spaced_thresholds", "symmetric_optimal_1bit",
]

_OVERSHOOT = math.inf


@dataclass(frozen=True)
class SolverConfig:
    abs_tol: float = 1e-12
    max_iter: int = 200
    residual_tol: float = 1e-10

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


DEFAULT = SolverConfig()


@dataclass(frozen=True)
class MutuallyCenteredPair:
    """Cuts ``x`` for the low-priority bidder A and ``y`` for the high-priority bidder B."""

    x: ThresholdVector
    y: ThresholdVector
    residual: float
    modified: bool = False
    v0: float = 0.0

    def spec(self, swapped=False) -> PrioritySpec:
        """Priority game with B ahead of A; ``swapped`` when A is bidder 1."""
        if swapped:
            return PrioritySpec((1, 0), (self.y, self.x), self.modified, self.v0)
        return PrioritySpec((0, 1), (self.x, self.y), self.modified, self.v0)


@dataclass
class Solution:
    """An optimal (M)PG with the value it attains and the candidates compared."""

    spec: PrioritySpec
    value: float
    branch: str
    candidates: dict = field(default_factory=dict)
    pair: MutuallyCenteredPair | None = None
    failures: dict = field(default_factory=dict)

    @property
    def cuts(self):
        return [t.interior for t in self.spec.thresholds]


# ------------------------------------------------------------- primitives

def extended_mean(d: ValueDistribution, lo, hi):
    """Conditional mean, continued monotonically where the interval has no mass.

    Off the distribution's support (or across a gap of zero density) the value
    is the interval end nearest the mass, so the map stays continuous and
    nondecreasing in both endpoints. This only matters when two bidders'
    supports differ.
    """
    if hi <= lo:
        return lo
    m = float(d.mass(lo, hi))
    if m > 0:
        return min(max(float(d.partial_expectation(lo, hi)) / m, lo), hi)
    return lo if lo >= d.support_hi else hi


def _upper_end(d, lo, target, top, cfg):
    """Smallest ``u`` in ``[lo, top]`` with ``E(v | lo <= v <= u) = target``; inf if out of reach."""
    if target <= lo:
        return lo
    reach = extended_mean(d, lo, top)
    if target > reach:
        return _OVERSHOOT
    if target == reach:
        return top
    return brentq(lambda u: extended_mean(d, lo, u) - target, lo, top,
                  xtol=cfg.abs_tol * 1e-3, rtol=4 * np.finfo(float).eps, maxiter=cfg.max_iter)


def _shoot(fn, lo, hi, cfg):
    """Root of a nondecreasing shooting residual on ``(lo, hi)``; inf counts as positive."""
    span = hi - lo

    def g(z):
        r = fn(z)
        return 4.0 * span + 1.0 if r == _OVERSHOOT else r

    a, b = lo, hi
    ga, gb = g(a), g(b)
    if ga > 0 or gb < 0:
        raise SolverError("shooting residual does not change sign on the bracket", min(abs(ga), abs(gb)))
    if ga == 0:
        return a
    if gb == 0:
        return b
    try:
        z = brentq(g, a, b, xtol=cfg.abs_tol * 1e-3, rtol=4 * np.finfo(float).eps, maxiter=cfg.max_iter)
    except RuntimeError as exc:
        raise SolverError(f"shooting did not converge: {exc}") from None
    # keep the side that does not overshoot
    if g(z) > 0:
        z = np.nextafter(z, a)
    return z


def _union(dA, dB):
    return min(dA.support_lo, dB.support_lo), max(dA.support_hi, dB.support_hi)


def _propagate(dA, dB, xs, ys, k, top, cfg):
    """Extend ``xs``/``ys`` through the centering equations until ``x_k`` is known.

    ``xs`` holds ``x_0..x_i`` and ``ys`` holds ``y_0..y_{i-1}``; alternately
    solve ``x_i = E_B(y_{i-1}, y_i)`` for ``y_i`` and ``y_i = E_A(x_i, x_{i+1})``
    for ``x_{i+1}``.
    """
    while len(xs) <= k:
        i = len(ys)
        if i > k - 1:
            break
        y = _upper_end(dB, ys[-1], xs[i], top, cfg)
        if y == _OVERSHOOT:
            return None
        ys.append(y)
        x = _upper_end(dA, xs[i], y, top, cfg)
        if x == _OVERSHOOT:
            return None
        xs.append(x)
    return xs, ys


def centering_residual(dA, dB, x, y, first=1):
    """Largest violation of ``x_i = E_B(y_{i-1}, y_i)``, ``y_i = E_A(x_i, x_{i+1})`` for ``first <= i < k``."""
    x, y = list(x), list(y)
    k = len(x) - 1
    r = 0.0
    for i in range(first, k):
        r = max(r, abs(x[i] - extended_mean(dB, y[i - 1], y[i])), abs(y[i] - extended_mean(dA, x[i], x[i + 1])))
    return r


# ------------------------------------------------------- two-bidder systems

def solve_mutually_centered(dA: ValueDistribution, dB: ValueDistribution, k: int, cfg: SolverConfig = DEFAULT,
                            bracket=None) -> MutuallyCenteredPair:
    """The unique mutually centered pair with ``x_k = y_k`` at the top of the support.

    ``bracket`` optionally narrows the search interval for ``x_1``.
    """
    if k < 2:
        raise ValueError("mutually centered thresholds need k >= 2")
    lo, top = _union(dA, dB)

    def shoot(x1):
        out = _propagate(dA, dB, [lo, x1], [lo], k, top, cfg)
        return _OVERSHOOT if out is None else out[0][k] - top

    a, b = bracket if bracket is not None else (lo, top)
    x1 = _shoot(shoot, a, b, cfg)
    xs, ys = _propagate(dA, dB, [lo, x1], [lo], k, top, cfg)
    xs[k] = top
    ys.append(top)
    residual = centering_residual(dA, dB, xs, ys)
    if residual > cfg.residual_tol:
        raise SolverError("mutually centered system not solved to tolerance", residual)
    return MutuallyCenteredPair(
        ThresholdVector(xs).pinned(dA.support_lo, dA.support_hi),
        ThresholdVector(ys).pinned(dB.support_lo, dB.support_hi),
        residual, False, lo,
    )


def _first_high_cut(dA, v0, x1, x2):
    """The high-priority bidder's first cut in the modified game."""
    FA = float(dA.cdf(x2))
    if FA <= 0:
        return None
    return (v0 * float(dA.cdf(v0)) + float(dA.partial_expectation(x1, x2))) / FA


def solve_mpg_thresholds(dA: ValueDistribution, dB: ValueDistribution, k: int, v0: float,
                         cfg: SolverConfig = DEFAULT) -> MutuallyCenteredPair:
    """Cuts of the welfare-optimal modified priority game with seller value ``v0``.

    A's first cut sits at ``v0``; B's first cut balances B's value against the
    seller-or-A outcome of the all-zero row, ``E[max(v_A, v0) | v_A <= x_2]``;
    the remaining cuts are mutually centered.
    """
    if k < 2:
        raise ValueError("need k >= 2")
    lo, top = _union(dA, dB)
    if not v0 < top:
        raise ValueError(f"seller value {v0} must lie below the top of the support {top}")
    x1 = max(float(v0), lo)

    def ladder(x2):
        y1 = _first_high_cut(dA, v0, x1, x2)
        if y1 is None:
            y1 = x2
        if k == 2:
            return [lo, x1, top], [lo, y1]
        return _propagate(dA, dB, [lo, x1, x2], [lo, y1], k, top, cfg)

    if k == 2:
        x2 = top
    else:
        def shoot(x2):
            out = ladder(x2)
            return _OVERSHOOT if out is None else out[0][k] - top

        x2 = _shoot(shoot, x1, top, cfg)
    if float(dA.cdf(x2)) <= 0:
        raise DegeneracyError(f"A has no mass below x_2 = {x2}; the first-cut formula divides by zero")
    xs, ys = ladder(x2)
    xs[k] = top
    ys.append(top)
    y1 = _first_high_cut(dA, v0, x1, xs[2])
    residual = max(abs(ys[1] - y1), centering_residual(dA, dB, xs, ys, first=2))
    if residual > cfg.residual_tol:
        raise SolverError("modified system not solved to tolerance", residual)
    return MutuallyCenteredPair(
        ThresholdVector(xs).pinned(dA.support_lo, dA.support_hi),
        ThresholdVector(ys).pinned(dB.support_lo, dB.support_hi),
        residual, True, float(v0),
    )


def solve_welfare_2bidder(dA: ValueDistribution, dB: ValueDistribution, k: int, v0: float | None = None,
                          cfg: SolverConfig = DEFAULT, branch: str = "auto") -> Solution:
    """Welfare-optimal two-bidder mechanism: the best of the PG and MPG candidates.

    With different distributions both priority orders are tried. Ties favour
    the plain priority game with bidder 1 ahead. A candidate whose system
    cannot be solved (for instance a degenerate first cut) is skipped and
    listed in ``Solution.failures``.
    """
    lo, _ = _union(dA, dB)
    if branch not in ("auto", "pg", "mpg"):
        raise ValueError(f"unknown branch {branch!r}")
    v0 = lo if v0 is None else float(v0)
    same = dA == dB
    cands, pairs, failures = {}, {}, {}
    orders = [False] if same else [False, True]
    for modified in (False, True):
        if branch != "auto" and branch != ("mpg" if modified else "pg"):
            continue
        for swapped in orders:
            a, b = (dB, dA) if swapped else (dA, dB)
            try:
                pair = solve_mpg_thresholds(a, b, k, v0, cfg) if modified else solve_mutually_centered(a, b, k, cfg)
            except SolverError as exc:
                failures[("mpg" if modified else "pg") + ("-swapped" if swapped else "")] = str(exc)
                continue
            pair = MutuallyCenteredPair(pair.x, pair.y, pair.residual, pair.modified, v0)
            label = ("mpg" if modified else "pg") + ("-swapped" if swapped else "")
            spec = pair.spec(swapped)
            cands[label] = priority_values(spec, [dA, dB], v0)["welfare"]
            pairs[label] = (pair, spec)
    if not cands:
        raise SolverError(f"no candidate mechanism could be solved: {failures}")
    best = max(cands, key=lambda key: (cands[key], -list(cands).index(key)))
    pair, spec = pairs[best]
    return Solution(spec, cands[best], best, cands, pair, failures)


# ------------------------------------------------------------ closed forms

def _affine(cuts, a, b):
    return ThresholdVector([a + (b - a) * float(c) for c in cuts])


def closed_form_uniform_welfare_2bidder(k: int, a=0.0, b=1.0) -> MutuallyCenteredPair:
    """``x_i = (2i-1)/(2k-1)``, ``y_i = 2i/(2k-1)`` (rescaled to ``[a, b]``)."""
    if k < 2:
        raise ValueError("need k >= 2")
    x = [Fraction(0)] + [Fraction(2 * i - 1, 2 * k - 1) for i in range(1, k)] + [Fraction(1)]
    y = [Fraction(0)] + [Fraction(2 * i, 2 * k - 1) for i in range(1, k)] + [Fraction(1)]
    return MutuallyCenteredPair(_affine(x, a, b), _affine(y, a, b), 0.0, False, a)


def uniform_profit_theta(k: int) -> float:
    """B's first cut in the profit-optimal uniform game: ``(-2α + √(1+3α)) / (2(1-α))``, ``α = 1/(2k-3)²``."""
    if k < 2:
        raise ValueError("need k >= 2")
    if k == 2:
        return 5 / 8  # α = 1 makes the formula 0/0
    alpha = 1.0 / (2 * k - 3) ** 2
    return (-2 * alpha + math.sqrt(1 + 3 * alpha)) / (2 * (1 - alpha))


def closed_form_uniform_profit_2bidder(k: int) -> MutuallyCenteredPair:
    """Profit-optimal uniform[0,1] modified game: A's first cut ½, then an evenly spaced ladder from θ."""
    th = uniform_profit_theta(k)
    step = (1 - th) / (2 * k - 3) if k > 2 else 0.0
    x = [0.0, 0.5] + [th + (2 * j - 3) * step for j in range(2, k)] + [1.0]
    y = [0.0, th] + [th + 2 * (j - 1) * step for j in range(2, k)] + [1.0]
    return MutuallyCenteredPair(ThresholdVector(x), ThresholdVector(y), 0.0, True, 0.0)


# --------------------------------------------------------- n bidders, 1 bit

def _next_cut(d, x):
    """``(1 - F(x)) E(v | v >= x) + F(x) x``: the value of offering at ``x`` with ``x`` as fallback."""
    return float(d.partial_expectation(x, d.support_hi)) + float(d.cdf(x)) * x


def mpg_ladder_2bid(d: ValueDistribution, n: int, v0: float) -> list:
    """Modified-game cuts from the lowest to the highest priority: ``y_1 = v0``, ``y_{m+1} = next(y_m)``."""
    y = [min(max(float(v0), d.support_lo), d.support_hi)]
    while len(y) < n:
        y.append(_next_cut(d, y[-1]))
    return y


def _pg_closing(d, x):
    """Right-hand side of the highest-priority bidder's first-order condition."""
    n = len(x) + 1
    F = [float(d.cdf(v)) for v in x]
    num, tail = 0.0, 1.0
    for i in reversed(range(n - 1)):
        num += tail * float(d.partial_expectation(x[i], d.support_hi))
        tail *= F[i]
    den = 1.0 - tail
    return num / den if den > 0 else d.support_hi


def pg_ladder_2bid(d: ValueDistribution, n: int, xn: float) -> list:
    """Priority-game cuts given the highest-priority cut ``xn``; the last entry is the implied ``xn``."""
    x = [extended_mean(d, d.support_lo, xn)]
    while len(x) < n - 1:
        x.append(_next_cut(d, x[-1]))
    return x + [_pg_closing(d, x)]


def solve_n_bidder_welfare_2bid(d: ValueDistribution, n: int, v0: float | None = None,
                                cfg: SolverConfig = DEFAULT, branch: str = "auto") -> Solution:
    """Welfare-optimal 1-bit mechanism for ``n`` i.i.d. bidders.

    Bidder ``m`` gets the ``m``-th cut of the ladder; priority follows the
    index, so bidder ``n - 1`` is served first. The plain game's cuts come from
    shooting on the top cut; the modified game's cuts from the forward
    recursion started at ``v0``.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    lo, hi = d.support
    v0 = lo if v0 is None else float(v0)
    order = tuple(range(n))
    cands, specs = {}, {}

    def spec_of(cuts, modified):
        return PrioritySpec(order, tuple(ThresholdVector([lo, c, hi]) for c in cuts), modified, v0)

    if branch in ("auto", "pg"):
        xn = _shoot(lambda z: z - pg_ladder_2bid(d, n, z)[-1], lo, hi, cfg)
        x = pg_ladder_2bid(d, n, xn)
        if abs(x[-1] - xn) > cfg.residual_tol:
            raise SolverError("priority-game ladder did not close", abs(x[-1] - xn))
        specs["pg"] = spec_of(x[:-1] + [xn], False)
    if branch in ("auto", "mpg"):
        specs["mpg"] = spec_of(mpg_ladder_2bid(d, n, v0), True)
    if not specs:
        raise ValueError(f"unknown branch {branch!r}")
    for key, spec in specs.items():
        cands[key] = priority_values(spec, [d] * n, v0)["welfare"]
    best = max(cands, key=lambda key: (cands[key], key == "pg"))
    return Solution(specs[best], cands[best], best, cands)


def symmetric_threshold_n_2bid(d: ValueDistribution, n: int) -> float:
    """Common cut maximizing welfare when ties split uniformly and nobody is excluded."""
    if n < 2:
        raise ValueError("need n >= 2")
    lo, hi = d.support
    if isinstance(d, Uniform):
        return lo + (hi - lo) * n ** (-1.0 / (n - 1))
    res = minimize_scalar(lambda x: -symmetric_welfare_2bid(d, n, x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x)


def symmetric_welfare_2bid(d: ValueDistribution, n: int, x: float) -> float:
    """``F^n E(v | v < x) + (1 - F^n) E(v | v >= x)``."""
    Fn = float(d.cdf(x)) ** n
    low = float(d.partial_expectation(d.support_lo, x)) / float(d.cdf(x)) if d.cdf(x) > 0 else d.support_lo
    up_mass = 1.0 - float(d.cdf(x))
    high = float(d.partial_expectation(x, d.support_hi)) / up_mass if up_mass > 0 else d.support_hi
    return Fn * low + (1 - Fn) * high


# ----------------------------------------------------- general (n, k) fallback

def quantile_mechanism(dists, k: int, v0: float | None = None) -> PrioritySpec:
    """Common-cut modified priority game from merged equal-mass quantiles.

    Bidder ``i`` contributes the ``α_i`` interior cuts that split her
    distribution into ``α_i + 1`` equal-mass pieces, with ``Σ α_i = k - 2``;
    together with ``v0`` these form the ``k - 1`` common interior cuts.
    Collisions are replaced by midpoints of the widest gaps.
    """
    dists = list(dists)
    n = len(dists)
    if k < 2 * n:
        raise ValueError(f"the quantile construction needs k >= 2n (k={k}, n={n})")
    lo = min(d.support_lo for d in dists)
    hi = max(d.support_hi for d in dists)
    v0 = lo if v0 is None else float(v0)
    base, extra = divmod(k - 2, n)
    cuts = []
    for i, d in enumerate(dists):
        a = base + (1 if i < extra else 0)
        cuts.extend(float(d.quantile(j / (a + 1))) for j in range(1, a + 1))
    if lo < v0 < hi:
        cuts.append(v0)
    pts = sorted(set(cuts))
    pts = [p for p in pts if lo < p < hi]
    merged = []
    for p in pts:
        if not merged or p - merged[-1] > 1e-12 * (hi - lo):
            merged.append(p)
    while len(merged) < k - 1:
        full = [lo] + merged + [hi]
        gaps = np.diff(full)
        j = int(np.argmax(gaps))
        merged.insert(j, 0.5 * (full[j] + full[j + 1]))
    t = ThresholdVector([lo] + merged + [hi])
    return PrioritySpec(tuple(range(n)), tuple(t for _ in dists), True, v0)


# ------------------------------------------------------ symmetric 1-bit optima

@dataclass(frozen=True)
class SymmetricOptimum:
    mechanism: SimultaneousMechanism
    cuts: tuple
    value: float


def symmetric_optimal_1bit(objective: str = "welfare") -> SymmetricOptimum:
    """Best symmetric 1-bit, 2-bidder mechanism for uniform[0,1] values.

    Welfare: ties split evenly, common cut ½ (value 0.625). Profit: the seller
    keeps the item when both bid 0, common cut ``1/√3`` (value ``x - x³``).
    """
    if objective == "welfare":
        x = 0.5
        t = ThresholdVector([0.0, x, 1.0])
        m = symmetric_game(2, t)
        value = x * x * x / 2 + (1 - x * x) * (1 + x) / 2
    elif objective == "profit":
        x = 1 / math.sqrt(3)
        t = ThresholdVector([0.0, x, 1.0])
        m = symmetric_game(2, t, modified=True)
        value = x - x ** 3
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return SymmetricOptimum(m, (x, x), value)
