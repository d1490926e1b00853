"""Simultaneous bounded-communication mechanisms.

A mechanism over bid sizes ``(k_1, ..., k_n)`` is a pair of tables indexed by
bid profiles: ``allocation[b]`` holds ``n + 1`` winning probabilities (column 0
is the seller, column ``i + 1`` is bidder ``i``) and ``payments[b]`` holds what
each bidder pays *when she wins* at ``b``. Bidders are 0-based everywhere in
the Python API; only winner indices reserve 0 for the seller.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError

MAX_PROFILES = 1 << 20
PROB_TOL = 1e-12


@dataclass(frozen=True)
class ThresholdVector:
    """Cut points ``t_0 <= ... <= t_k``; bid ``j`` covers ``[t_j, t_{j+1})``."""

    cuts: tuple

    def __init__(self, cuts):
        cuts = tuple(float(c) for c in cuts)
        if len(cuts) < 2:
            raise ValueError("a threshold vector needs at least two cut points")
        if any(b < a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cuts must be nondecreasing: {cuts}")
        object.__setattr__(self, "cuts", cuts)

    @property
    def k(self):
        return len(self.cuts) - 1

    @property
    def interior(self):
        return self.cuts[1:-1]

    def __len__(self):
        return len(self.cuts)

    def __getitem__(self, i):
        return self.cuts[i]

    def __iter__(self):
        return iter(self.cuts)

    def as_array(self):
        return np.array(self.cuts)

    def bid(self, v):
        return bid_of(self, v)

    def bids(self, values):
        """Vectorised :func:`bid_of` without the range check."""
        return np.searchsorted(np.array(self.interior), values, side="right")

    def pinned(self, lo, hi):
        """Copy with the outer cuts moved to ``lo`` and ``hi``."""
        return ThresholdVector([lo, *np.clip(self.interior, lo, hi), hi])


def bid_of(strategy: ThresholdVector, v) -> int:
    """Bid ``j`` with ``v`` in ``[t_j, t_{j+1})``; the top cut maps to ``k - 1``."""
    t = strategy.cuts
    if not t[0] <= v <= t[-1]:
        raise ValueError(f"value {v} outside [{t[0]}, {t[-1]}]")
    return int(np.searchsorted(t[1:-1], v, side="right"))


def equally_spaced_thresholds(k, lo=0.0, hi=1.0) -> ThresholdVector:
    """Detail-free cuts ``lo + (hi - lo) * (0, 1/k, ..., 1)``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return ThresholdVector([lo + (hi - lo) * j / k for j in range(k + 1)])


@dataclass(frozen=True)
class PrioritySpec:
    """Recipe for a (modified) priority game.

    ``priority_order`` lists bidders from lowest to highest priority; ties on
    the highest bid go to the bidder appearing later. ``thresholds[i]`` are
    bidder ``i``'s cuts. With ``modified`` the seller keeps the item when all
    bids are 0.
    """

    priority_order: tuple
    thresholds: tuple
    modified: bool = False
    v0: float = 0.0

    def __post_init__(self):
        order = tuple(int(i) for i in self.priority_order)
        ths = tuple(t if isinstance(t, ThresholdVector) else ThresholdVector(t) for t in self.thresholds)
        object.__setattr__(self, "priority_order", order)
        object.__setattr__(self, "thresholds", ths)
        object.__setattr__(self, "v0", float(self.v0))
        if sorted(order) != list(range(len(ths))):
            raise StructuralError("priority_order must be a permutation of the bidders")
        if len({t.k for t in ths}) != 1:
            raise StructuralError("all threshold vectors must have the same length")

    @property
    def n(self):
        return len(self.thresholds)

    @property
    def k(self):
        return self.thresholds[0].k

    @property
    def rank(self):
        """``rank[i]``: position of bidder ``i`` in the priority order."""
        r = [0] * self.n
        for pos, i in enumerate(self.priority_order):
            r[i] = pos
        return r

    def strategies(self):
        return StrategyProfile(self.thresholds)

    def with_thresholds(self, thresholds):
        return PrioritySpec(self.priority_order, tuple(thresholds), self.modified, self.v0)

    def label(self):
        kind = "MPG" if self.modified else "PG"
        return f"{kind}(order={'<'.join(str(i) for i in self.priority_order)})"


@dataclass(frozen=True)
class StrategyProfile:
    """One threshold vector per bidder."""

    thresholds: tuple

    def __init__(self, thresholds):
        ths = tuple(t if isinstance(t, ThresholdVector) else ThresholdVector(t) for t in thresholds)
        object.__setattr__(self, "thresholds", ths)

    def __len__(self):
        return len(self.thresholds)

    def __getitem__(self, i):
        return self.thresholds[i]

    def __iter__(self):
        return iter(self.thresholds)

    def check(self, bid_sizes):
        if len(self.thresholds) != len(bid_sizes):
            raise StructuralError("strategy profile and mechanism disagree on n")
        for i, (t, k) in enumerate(zip(self.thresholds, bid_sizes)):
            if t.k != k:
                raise StructuralError(f"bidder {i}: {t.k + 1} cuts for {k} bids")


class SimultaneousMechanism:
    """Allocation and payment tables over finite bid profiles."""

    def __init__(self, allocation, payments, v0=0.0, priority=None):
        a = np.array(allocation, dtype=float)
        p = np.array(payments, dtype=float)
        n = a.shape[-1] - 1
        if n < 1 or a.ndim != n + 1:
            raise StructuralError(f"allocation shape {a.shape} does not match n = {n}")
        if p.shape != a.shape[:-1] + (n,):
            raise StructuralError(f"payments shape {p.shape} does not match allocation {a.shape}")
        if np.any(a < -PROB_TOL) or np.any(np.abs(a.sum(axis=-1) - 1.0) > 1e-9):
            raise StructuralError("allocation weights must be nonnegative and sum to 1")
        if np.any((a[..., 1:] <= PROB_TOL) & (np.abs(p) > PROB_TOL)):
            raise StructuralError("a bidder who cannot win at a profile must pay 0")
        a = np.clip(a, 0.0, None)
        a.setflags(write=False)
        p.setflags(write=False)
        self.allocation = a
        self.payments = p
        self.v0 = float(v0)
        self.priority = priority

    @property
    def n(self):
        return self.allocation.shape[-1] - 1

    @property
    def bid_sizes(self):
        return self.allocation.shape[:-1]

    def profiles(self):
        return itertools.product(*(range(k) for k in self.bid_sizes))

    def winner_weights(self, profile):
        return self.allocation[tuple(profile)]

    def __repr__(self):
        return f"SimultaneousMechanism(n={self.n}, bid_sizes={self.bid_sizes}, v0={self.v0:g})"

    def to_json(self) -> str:
        return mechanism_to_json(self)

    @classmethod
    def from_json(cls, text: str) -> "SimultaneousMechanism":
        return mechanism_from_json(text)


def _check_size(bid_sizes):
    total = int(np.prod(bid_sizes))
    if total > MAX_PROFILES:
        raise StructuralError(f"{total} bid profiles exceed the tabulation budget {MAX_PROFILES}")


def priority_allocation(spec: PrioritySpec) -> np.ndarray:
    n, k = spec.n, spec.k
    _check_size((k,) * n)
    rank = np.array(spec.rank)
    grids = np.meshgrid(*([np.arange(k)] * n), indexing="ij")
    bids = np.stack(grids, axis=-1)
    # Lexicographic (bid, priority) key picks the unique winner.
    key = bids * n + rank
    winner = np.argmax(key, axis=-1)
    a = np.zeros((k,) * n + (n + 1,))
    np.put_along_axis(a, (winner + 1)[..., None], 1.0, axis=-1)
    if spec.modified:
        zero = (0,) * n
        a[zero] = 0.0
        a[zero + (0,)] = 1.0
    return a


def threshold_payments(allocation, thresholds) -> np.ndarray:
    """Payments supporting the threshold strategies in dominant strategies.

    For bidder ``i`` facing ``b_{-i}``, let ``P_m`` be her winning probability
    with bid ``m``. Her expected payment with bid ``j`` is
    ``sum_{m <= j} t_m (P_m - P_{m-1})``; the returned table holds that amount
    divided by ``P_j`` (the price charged upon winning). For a deterministic
    allocation this is the cut of the smallest still-winning bid.
    """
    a = np.asarray(allocation, dtype=float)
    n = a.shape[-1] - 1
    pay = np.zeros(a.shape[:-1] + (n,))
    for i in range(n):
        t = np.asarray(thresholds[i].cuts if isinstance(thresholds[i], ThresholdVector) else thresholds[i])
        P = np.moveaxis(a[..., i + 1], i, -1)
        k = P.shape[-1]
        dP = np.diff(P, axis=-1, prepend=0.0)
        if np.any(dP < -1e-12):
            warnings.warn(
                f"bidder {i}: winning probability decreases in own bid; threshold payments may not support truth-telling",
                stacklevel=2,
            )
        expected = np.cumsum(dP * t[:k], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            price = np.where(P > PROB_TOL, expected / np.where(P > PROB_TOL, P, 1.0), 0.0)
        pay[..., i] = np.moveaxis(price, -1, i)
    return pay


def build_priority_game(spec: PrioritySpec) -> SimultaneousMechanism:
    """Tabulate PG_k(t): highest bid wins, ties by priority, minimal-winning-value prices."""
    if spec.modified:
        raise ValueError("this priority game is modified; use build_modified_priority_game")
    return _build(spec)


def build_modified_priority_game(spec: PrioritySpec) -> SimultaneousMechanism:
    """Tabulate MPG_k(t): as the priority game but the seller keeps the all-zero profile."""
    if not spec.modified:
        raise ValueError("this priority game is not modified; use build_priority_game")
    return _build(spec)


def build_game(spec: PrioritySpec) -> SimultaneousMechanism:
    return _build(spec)


def _build(spec):
    a = priority_allocation(spec)
    return SimultaneousMechanism(a, threshold_payments(a, spec.thresholds), spec.v0, priority=spec)


def symmetric_game(n, thresholds, modified=False, v0=0.0) -> SimultaneousMechanism:
    """Highest bid wins with ties split uniformly; common or per-bidder cuts."""
    if isinstance(thresholds, ThresholdVector):
        thresholds = [thresholds] * n
    k = thresholds[0].k
    _check_size((k,) * n)
    a = np.zeros((k,) * n + (n + 1,))
    for b in itertools.product(range(k), repeat=n):
        if modified and max(b) == 0:
            a[b + (0,)] = 1.0
            continue
        top = [i for i in range(n) if b[i] == max(b)]
        for i in top:
            a[b + (i + 1,)] = 1.0 / len(top)
    return SimultaneousMechanism(a, threshold_payments(a, thresholds), v0)


def is_monotone(m: SimultaneousMechanism, tol=1e-12) -> bool:
    """Winning probability never drops when a bidder raises only her own bid."""
    a = m.allocation
    for i in range(m.n):
        if np.any(np.diff(a[..., i + 1], axis=i) < -tol):
            return False
    return True


def is_deterministic(m: SimultaneousMechanism, tol=1e-12) -> bool:
    a = m.allocation
    return bool(np.all((a < tol) | (a > 1 - tol)))


def monotonize(m: SimultaneousMechanism, strategies, dists, v0=None) -> SimultaneousMechanism:
    """Give every profile to the participant with the highest conditional mean.

    The seller counts with value ``v0``. Ties go to the highest bidder index,
    which keeps the result monotone because cell means increase with the bid.
    Payments are rebuilt from ``strategies``.
    """
    v0 = m.v0 if v0 is None else v0
    strategies = StrategyProfile(strategies)
    strategies.check(m.bid_sizes)
    means = []
    for t, d in zip(strategies, dists):
        c = t.as_array()
        mass = np.asarray(d.mass(c[:-1], c[1:]))
        pe = np.asarray(d.partial_expectation(c[:-1], c[1:]))
        with np.errstate(divide="ignore", invalid="ignore"):
            means.append(np.where(mass > 0, pe / np.where(mass > 0, mass, 1.0), 0.5 * (c[:-1] + c[1:])))
    a = np.zeros(m.allocation.shape)
    for b in m.profiles():
        vals = [v0] + [means[i][b[i]] for i in range(m.n)]
        best = max(range(m.n + 1), key=lambda j: (vals[j], j))
        a[b + (best,)] = 1.0
    return SimultaneousMechanism(a, threshold_payments(a, strategies.thresholds), v0)


def _fmt(x):
    return float(f"{x:.17g}")


def mechanism_to_json(m: SimultaneousMechanism) -> str:
    alloc, pays = {}, {}
    for b in m.profiles():
        key = ",".join(str(x) for x in b)
        w = m.allocation[b]
        alloc[key] = [{"winner": int(j), "prob": _fmt(w[j])} for j in range(m.n + 1) if w[j] > 0]
        pays[key] = [_fmt(x) for x in m.payments[b]]
    doc = {
        "n": m.n,
        "bid_sizes": [int(k) for k in m.bid_sizes],
        "v0": _fmt(m.v0),
        "allocation": alloc,
        "payments": pays,
    }
    if m.priority is not None:
        doc["priority"] = {
            "order": list(m.priority.priority_order),
            "modified": m.priority.modified,
            "thresholds": [[_fmt(c) for c in t.cuts] for t in m.priority.thresholds],
        }
    return json.dumps(doc, indent=1)


def mechanism_from_json(text: str) -> SimultaneousMechanism:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed mechanism JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        n = int(doc["n"])
        sizes = tuple(int(k) for k in doc["bid_sizes"])
        v0 = float(doc.get("v0", 0.0))
        alloc_doc, pay_doc = doc["allocation"], doc["payments"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"mechanism JSON missing or bad field: {exc}") from None
    if len(sizes) != n:
        raise ValueError("bid_sizes length differs from n")
    a = np.zeros(sizes + (n + 1,))
    p = np.zeros(sizes + (n,))
    for key, entries in alloc_doc.items():
        b = _parse_profile(key, sizes)
        for e in entries:
            a[b + (int(e["winner"]),)] += float(e["prob"])
    for key, row in pay_doc.items():
        b = _parse_profile(key, sizes)
        if len(row) != n:
            raise ValueError(f"payments[{key!r}] has {len(row)} entries, expected {n}")
        p[b] = [float(x) for x in row]
    priority = None
    if "priority" in doc:
        pr = doc["priority"]
        priority = PrioritySpec(tuple(pr["order"]), tuple(ThresholdVector(t) for t in pr["thresholds"]), bool(pr["modified"]), v0)
    m = SimultaneousMechanism(a, p, v0, priority=priority)
    if not is_monotone(m):
        warnings.warn("loaded mechanism is not monotone; payments are taken as given", stacklevel=2)
    return m


def _parse_profile(key, sizes):
    try:
        b = tuple(int(x) for x in key.split(","))
    except ValueError:
        raise ValueError(f"bad profile key {key!r}") from None
    if len(b) != len(sizes) or any(not 0 <= x < k for x, k in zip(b, sizes)):
        raise ValueError(f"profile {key!r} outside bid sizes {sizes}")
    return b
