"""Profit maximization by solving the welfare problem on virtual values.

For regular distributions, a mechanism's expected profit equals the expected
virtual value of the winner (the seller counting ``v0``). So the
profit-optimal cuts are the welfare-optimal cuts of a model in which each
bidder's value is replaced by her virtual value, mapped back through ``ṽ⁻¹``.
The allocation table is the same in both spaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import ValueDistribution, VirtualTransform, _out
from .errors import CharacterizationOpenError, NotRegularError
from .evaluation import expected_virtual_surplus_exact
from .mechanism import PrioritySpec, ThresholdVector
from .solver import DEFAULT, SolverConfig, Solution, solve_n_bidder_welfare_2bid, solve_welfare_2bidder

__all__ = [
    "VirtualDistribution", "VirtualModel", "to_virtual_model", "solve_profit_optimal",
    "map_to_values", "expected_virtual_surplus",
]


class VirtualDistribution(ValueDistribution):
    """Law of ``ṽ(v)`` for ``v ~ source``: CDF ``F(ṽ⁻¹(c))``.

    Integrals use ``∫ ṽ f = lo (1 - F(lo)) - hi (1 - F(hi))`` in value space,
    so nothing is re-tabulated.
    """

    kind = "virtual"

    def __init__(self, source: ValueDistribution):
        self.transform = VirtualTransform(source)
        if not self.transform.regular:
            raise NotRegularError("reduction requires regularity")
        self.source = source
        lo_c, hi_c = self.transform.range
        super().__init__(lo_c, hi_c)

    def __repr__(self):
        return f"VirtualDistribution({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, VirtualDistribution) and self.source == other.source

    __hash__ = None

    def _inv(self, c):
        if isinstance(c, float):
            return self.source.virtual_inverse(min(max(c, self.support_lo), self.support_hi))
        return self.source.virtual_inverse(np.clip(np.asarray(c, dtype=float), self.support_lo, self.support_hi))

    def cdf(self, c):
        c = np.asarray(c, dtype=float)
        F = np.asarray(self.source.cdf(self._inv(c)), dtype=float)
        return _out(np.where(c < self.support_lo, 0.0, np.where(c >= self.support_hi, 1.0, F)))

    def pdf(self, c):
        # f(v) / ṽ'(v), with ṽ' from a central difference
        v = np.asarray(self._inv(c), dtype=float)
        lo, hi = self.source.support
        h = 1e-7 * (hi - lo)
        a, b = np.clip(v - h, lo, hi), np.clip(v + h, lo, hi)
        slope = (np.asarray(self.source.virtual_value(b)) - np.asarray(self.source.virtual_value(a))) / (b - a)
        c = np.asarray(c, dtype=float)
        inside = (c >= self.support_lo) & (c <= self.support_hi)
        return _out(np.where(inside, np.asarray(self.source.pdf(v)) / slope, 0.0))

    def mass(self, lo, hi):
        return _out(np.asarray(self.cdf(hi)) - np.asarray(self.cdf(lo)))

    def partial_expectation(self, lo, hi):
        return self.source.virtual_partial(self._inv(lo), self._inv(hi))

    def quantile(self, q):
        return _out(self.source.virtual_value(self.source.quantile(q)))

    def knots(self):
        """Points between which the CDF is a polynomial of low degree."""
        d = self.source
        vals = np.asarray(getattr(d, "values", d.support), dtype=float)
        if hasattr(d, "_virtual_segments"):
            left, right = d._virtual_segments()
            return np.unique(np.concatenate([left, right]))
        return np.asarray(d.virtual_value(vals), dtype=float)


@dataclass(frozen=True)
class VirtualModel:
    transforms: tuple
    distributions: tuple
    virtual_support: tuple
    virtual_v0: float


def to_virtual_model(dists, v0: float = 0.0) -> VirtualModel:
    """Virtual-value model; the seller's virtual value is ``v0`` itself."""
    vds = []
    for d in dists:
        try:
            vds.append(VirtualDistribution(d))
        except NotRegularError:
            raise NotRegularError(f"reduction requires regularity; {d!r} is not regular") from None
    alpha = min(vd.support_lo for vd in vds)
    beta = max(vd.support_hi for vd in vds)
    return VirtualModel(tuple(vd.transform for vd in vds), tuple(vds), (alpha, beta), float(v0))


def map_to_values(spec: PrioritySpec, dists) -> PrioritySpec:
    """Send every virtual-space cut ``c`` of bidder ``i`` to ``ṽ_i⁻¹(c)``."""
    out = []
    for t, d in zip(spec.thresholds, dists):
        inner = [float(d.virtual_inverse(c)) for c in t.interior]
        out.append(ThresholdVector([d.support_lo, *inner, d.support_hi]))
    return PrioritySpec(spec.priority_order, tuple(out), spec.modified, spec.v0)


def solve_profit_optimal(dists, n: int | None = None, k: int = 2, v0: float = 0.0,
                         cfg: SolverConfig = DEFAULT, branch: str = "auto") -> Solution:
    """Profit-optimal (modified) priority game for two bidders with any ``k``,
    or any number of identically distributed bidders with ``k = 2``.

    The welfare solver runs on the virtual model and picks the branch with the
    higher virtual surplus; ``value`` is that surplus, which equals the
    expected profit of the returned game.
    """
    dists = list(dists)
    if n is None:
        n = len(dists)
    if len(dists) == 1 and n > 1:
        dists = dists * n
    if len(dists) != n:
        raise ValueError(f"{len(dists)} distributions for {n} bidders")
    model = to_virtual_model(dists, v0)
    vds = model.distributions
    if n == 2:
        sol = solve_welfare_2bidder(vds[0], vds[1], k, v0, cfg, branch)
    elif k == 2:
        if any(d != dists[0] for d in dists[1:]):
            raise CharacterizationOpenError(
                "the 1-bit characterization assumes identically distributed bidders; "
                "use quantile_mechanism for an asymptotically optimal alternative"
            )
        sol = solve_n_bidder_welfare_2bid(vds[0], n, v0, cfg, branch)
    else:
        raise CharacterizationOpenError(
            f"no optimal-mechanism characterization for n={n}, k={k}; "
            "use quantile_mechanism for an asymptotically optimal alternative"
        )
    spec = map_to_values(sol.spec, dists)
    return Solution(spec, sol.value, sol.branch, sol.candidates, sol.pair, sol.failures)


def expected_virtual_surplus(m, s, dists, v0=None) -> float:
    """Expected virtual value of the recipient (``v0`` when the seller keeps the item)."""
    for d in dists:
        if not VirtualTransform(d).regular:
            raise NotRegularError(f"virtual surplus requires regularity; {d!r} is not regular")
    return expected_virtual_surplus_exact(m, s, dists, v0)
