"""Bidder value distributions and the per-distribution quantities the
mechanism formulas consume.

Two concrete laws are provided: :class:`Uniform` with closed forms everywhere,
and :class:`TableDistribution`, a CDF tabulated on a grid and interpolated
linearly (so the density is piecewise constant and every integral is exact per
segment). All methods accept scalars or numpy arrays.
"""

from __future__ import annotations

import csv
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateIntervalError, NotRegularError, UnsupportedPointError

REGULARITY_GRID = 1001
REGULARITY_TOL = 1e-12


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


class ValueDistribution(ABC):
    """A value law on ``[support_lo, support_hi]`` with positive density."""

    kind = "abstract"

    def __init__(self, support_lo, support_hi):
        support_lo = float(support_lo)
        support_hi = float(support_hi)
        if not support_lo < support_hi:
            raise ValueError(f"empty support [{support_lo}, {support_hi}]")
        self.support_lo = support_lo
        self.support_hi = support_hi

    @property
    def support(self):
        return (self.support_lo, self.support_hi)

    @abstractmethod
    def cdf(self, v):
        ...

    @abstractmethod
    def pdf(self, v):
        ...

    @abstractmethod
    def partial_expectation(self, lo, hi):
        """``∫_lo^hi v f(v) dv`` with the endpoints clipped to the support."""

    def mass(self, lo, hi):
        return _out(np.asarray(self.cdf(hi)) - np.asarray(self.cdf(lo)))

    def conditional_mean(self, lo, hi):
        return conditional_mean(self, lo, hi)

    def quantile(self, q):
        """Smallest ``v`` with ``F(v) >= q``, by bisection on the CDF."""
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile level outside [0, 1]")
        return _bisect_increasing(self.cdf, q, self.support_lo, self.support_hi)

    def virtual_value(self, v):
        """``v - (1 - F(v)) / f(v)``."""
        v = np.asarray(v, dtype=float)
        f = np.asarray(self.pdf(v), dtype=float)
        if np.any(f <= 0):
            raise UnsupportedPointError("density vanishes at the requested point")
        return _out(v - (1.0 - np.asarray(self.cdf(v))) / f)

    def virtual_partial(self, lo, hi):
        """``∫_lo^hi ṽ(v) f(v) dv``.

        Since ``ṽ f = v f - (1 - F)`` is the derivative of ``-v (1 - F(v))``,
        the integral is ``lo (1 - F(lo)) - hi (1 - F(hi))`` exactly.
        """
        lo = np.clip(np.asarray(lo, dtype=float), self.support_lo, self.support_hi)
        hi = np.clip(np.asarray(hi, dtype=float), self.support_lo, self.support_hi)
        return _out(lo * (1.0 - np.asarray(self.cdf(lo))) - hi * (1.0 - np.asarray(self.cdf(hi))))

    def virtual_inverse(self, c):
        """Inverse of :meth:`virtual_value`, clamped to the support."""
        lo_c = self.virtual_value(self.support_lo)
        return _bisect_increasing(
            lambda v: self.virtual_value(v),
            np.clip(np.asarray(c, dtype=float), lo_c, self.support_hi),
            self.support_lo,
            self.support_hi,
        )

    def regularity_grid(self):
        return np.linspace(self.support_lo, self.support_hi, REGULARITY_GRID)

    def sample(self, u):
        """Inverse-CDF transform of uniform draws."""
        return self.quantile(u)


def _bisect_increasing(fn, target, lo, hi, iters=200):
    target = np.asarray(target, dtype=float)
    a = np.full(target.shape, lo, dtype=float)
    b = np.full(target.shape, hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if np.all((mid == a) | (mid == b)):
            break
        below = np.asarray(fn(mid)) < target
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return _out(b)


class Uniform(ValueDistribution):
    """Uniform law on ``[a, b]``."""

    kind = "uniform"

    def __init__(self, a=0.0, b=1.0):
        super().__init__(a, b)
        self._width = self.support_hi - self.support_lo

    def __repr__(self):
        return f"Uniform({self.support_lo:g}, {self.support_hi:g})"

    def __eq__(self, other):
        return isinstance(other, Uniform) and self.support == other.support

    __hash__ = None

    def cdf(self, v):
        if isinstance(v, float):
            return min(max((v - self.support_lo) / self._width, 0.0), 1.0)
        v = np.asarray(v, dtype=float)
        return _out(np.clip((v - self.support_lo) / self._width, 0.0, 1.0))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v >= self.support_lo) & (v <= self.support_hi)
        return _out(np.where(inside, 1.0 / self._width, 0.0))

    def mass(self, lo, hi):
        lo = np.clip(np.asarray(lo, dtype=float), self.support_lo, self.support_hi)
        hi = np.clip(np.asarray(hi, dtype=float), self.support_lo, self.support_hi)
        return _out((hi - lo) / self._width)

    def partial_expectation(self, lo, hi):
        if isinstance(lo, float) and isinstance(hi, float):
            lo, hi = (min(max(x, self.support_lo), self.support_hi) for x in (lo, hi))
            return (hi - lo) * (hi + lo) / (2.0 * self._width)
        lo = np.clip(np.asarray(lo, dtype=float), self.support_lo, self.support_hi)
        hi = np.clip(np.asarray(hi, dtype=float), self.support_lo, self.support_hi)
        return _out((hi - lo) * (hi + lo) / (2.0 * self._width))

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile level outside [0, 1]")
        return _out(self.support_lo + q * self._width)

    def virtual_value(self, v):
        return _out(2.0 * np.asarray(v, dtype=float) - self.support_hi)

    def virtual_inverse(self, c):
        if isinstance(c, float):
            return min(max(0.5 * (c + self.support_hi), self.support_lo), self.support_hi)
        c = np.asarray(c, dtype=float)
        return _out(np.clip(0.5 * (c + self.support_hi), self.support_lo, self.support_hi))


class TableDistribution(ValueDistribution):
    """CDF tabulated at strictly increasing knots, linear in between.

    The density is the slope of the segment containing ``v`` (right-continuous,
    with the top knot using the last segment).
    """

    kind = "table"

    def __init__(self, values, cdf_values):
        v = np.array(values, dtype=float)
        F = np.array(cdf_values, dtype=float)
        if v.ndim != 1 or v.shape != F.shape or v.size < 2:
            raise ValueError("need matching 1-d arrays of at least two knots")
        if np.any(np.diff(v) <= 0):
            raise ValueError("knots must be strictly increasing")
        if abs(F[0]) > 1e-12 or abs(F[-1] - 1.0) > 1e-12:
            raise ValueError("tabulated CDF must run from 0 to 1")
        F[0], F[-1] = 0.0, 1.0
        if np.any(np.diff(F) <= 0):
            raise ValueError("tabulated CDF must be strictly increasing (positive density)")
        super().__init__(v[0], v[-1])
        self.values = v
        self.cdf_values = F
        self.slopes = np.diff(F) / np.diff(v)
        seg = self.slopes * np.diff(v) * (v[1:] + v[:-1]) / 2.0
        self._moment = np.concatenate([[0.0], np.cumsum(seg)])
        for arr in (self.values, self.cdf_values, self.slopes, self._moment):
            arr.setflags(write=False)

    @classmethod
    def from_cdf(cls, cdf, lo, hi, points=1025):
        """Tabulate a callable CDF on an even grid of ``points`` knots."""
        grid = np.linspace(lo, hi, points)
        return cls(grid, [cdf(x) for x in grid])

    @classmethod
    def from_csv(cls, path):
        """Read rows ``v,F(v)``; a non-numeric first row is treated as a header."""
        rows = []
        with open(Path(path), newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise
        if not rows:
            raise ValueError(f"no CDF rows in {path}")
        v, F = zip(*rows)
        return cls(v, F)

    def __repr__(self):
        return f"TableDistribution([{self.support_lo:g}, {self.support_hi:g}], {self.values.size} knots)"

    def __eq__(self, other):
        return (
            isinstance(other, TableDistribution)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.cdf_values, other.cdf_values)
        )

    __hash__ = None

    def _segment(self, v):
        j = np.searchsorted(self.values, v, side="right") - 1
        return np.clip(j, 0, self.slopes.size - 1)

    def cdf(self, v):
        return _out(np.interp(np.asarray(v, dtype=float), self.values, self.cdf_values))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v >= self.support_lo) & (v <= self.support_hi)
        return _out(np.where(inside, self.slopes[self._segment(v)], 0.0))

    def mass(self, lo, hi):
        lo = np.clip(np.asarray(lo, dtype=float), self.support_lo, self.support_hi)
        hi = np.clip(np.asarray(hi, dtype=float), self.support_lo, self.support_hi)
        jl, jh = self._segment(lo), self._segment(hi)
        same = self.slopes[jl] * (hi - lo)
        split = (
            self.slopes[jl] * (self.values[jl + 1] - lo)
            + (self.cdf_values[jh] - self.cdf_values[np.minimum(jl + 1, jh)])
            + self.slopes[jh] * (hi - self.values[jh])
        )
        return _out(np.where(jl == jh, same, split))

    def partial_expectation(self, lo, hi):
        lo = np.clip(np.asarray(lo, dtype=float), self.support_lo, self.support_hi)
        hi = np.clip(np.asarray(hi, dtype=float), self.support_lo, self.support_hi)
        jl, jh = self._segment(lo), self._segment(hi)
        vl1 = self.values[jl + 1]
        vh = self.values[jh]
        same = self.slopes[jl] * (hi - lo) * (hi + lo) / 2.0
        split = (
            self.slopes[jl] * (vl1 - lo) * (vl1 + lo) / 2.0
            + (self._moment[jh] - self._moment[np.minimum(jl + 1, jh)])
            + self.slopes[jh] * (hi - vh) * (hi + vh) / 2.0
        )
        return _out(np.where(jl == jh, same, split))

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile level outside [0, 1]")
        return _out(np.interp(q, self.cdf_values, self.values))

    def _virtual_segments(self):
        # ṽ is affine with slope 2 on each segment: ṽ = 2v - v_j - (1 - F_j) / s_j.
        v, F, s = self.values, self.cdf_values, self.slopes
        left = v[:-1] - (1.0 - F[:-1]) / s
        right = v[1:] - (1.0 - F[1:]) / s
        return left, right

    def is_regular(self):
        left, right = self._virtual_segments()
        return bool(np.all(right[:-1] <= left[1:] + REGULARITY_TOL))

    def virtual_inverse(self, c):
        if not self.is_regular():
            raise NotRegularError("virtual valuation is not monotone")
        c = np.asarray(c, dtype=float)
        left, _ = self._virtual_segments()
        j = np.clip(np.searchsorted(left, c, side="right") - 1, 0, left.size - 1)
        shift = self.values[j] + (1.0 - self.cdf_values[j]) / self.slopes[j]
        v = np.minimum(0.5 * (c + shift), self.values[j + 1])
        return _out(np.clip(v, self.support_lo, self.support_hi))

    def regularity_grid(self):
        # The knots are where ṽ can jump; probe both sides of each.
        eps = 1e-9 * (self.support_hi - self.support_lo)
        grid = np.concatenate([super().regularity_grid(), self.values, self.values[1:-1] - eps])
        return np.unique(np.clip(grid, self.support_lo, self.support_hi))


@dataclass(frozen=True)
class VirtualTransform:
    """Myerson virtual valuation of ``source`` with a certified regularity flag."""

    source: ValueDistribution
    regular: bool = field(init=False)

    def __post_init__(self):
        grid = self.source.regularity_grid()
        vv = np.asarray(self.source.virtual_value(grid))
        object.__setattr__(self, "regular", bool(np.all(np.diff(vv) > REGULARITY_TOL)))

    @property
    def range(self):
        d = self.source
        return (float(d.virtual_value(d.support_lo)), float(d.virtual_value(d.support_hi)))

    def __call__(self, v):
        return virtual_value(self, v)

    def inverse(self, c, clamp=True):
        """ṽ⁻¹; with ``clamp`` values outside the range map to the support ends."""
        if not self.regular:
            raise NotRegularError("virtual valuation is not strictly increasing")
        if not clamp:
            return inverse_virtual(self, c)
        return self.source.virtual_inverse(c)


def conditional_mean(d: ValueDistribution, lo, hi):
    """``E(v | lo <= v <= hi)`` under ``d``."""
    lo_a = np.asarray(lo, dtype=float)
    hi_a = np.asarray(hi, dtype=float)
    if np.any(lo_a >= hi_a):
        raise ValueError("conditional_mean needs lo < hi")
    tol = 1e-12 * (d.support_hi - d.support_lo)
    if np.any(lo_a < d.support_lo - tol) or np.any(hi_a > d.support_hi + tol):
        raise ValueError("interval leaves the support")
    m = np.asarray(d.mass(lo_a, hi_a))
    if np.any(m <= 0):
        raise DegenerateIntervalError(f"degenerate interval [{lo}, {hi}]: zero mass")
    mean = np.asarray(d.partial_expectation(lo_a, hi_a)) / m
    return _out(np.clip(mean, lo_a, hi_a))


def virtual_value(t: VirtualTransform, v):
    d = t.source
    v_a = np.asarray(v, dtype=float)
    tol = 1e-12 * (d.support_hi - d.support_lo)
    if np.any(v_a < d.support_lo - tol) or np.any(v_a > d.support_hi + tol):
        raise ValueError("value outside the support")
    return d.virtual_value(v_a)


def inverse_virtual(t: VirtualTransform, c):
    """``v`` with ``ṽ(v) = c``; raises outside ``[ṽ(lo), ṽ(hi)]``."""
    if not t.regular:
        raise NotRegularError("virtual valuation is not strictly increasing")
    lo_c, hi_c = t.range
    c_a = np.asarray(c, dtype=float)
    tol = 1e-12 * max(1.0, hi_c - lo_c)
    if np.any(c_a < lo_c - tol) or np.any(c_a > hi_c + tol):
        raise ValueError(f"virtual value outside [{lo_c}, {hi_c}]")
    return t.source.virtual_inverse(c_a)


def quantile(d: ValueDistribution, q):
    return d.quantile(q)


def parse_distribution(spec: str) -> ValueDistribution:
    """Parse ``uniform:<a>,<b>`` or ``table:<path>``."""
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        try:
            a, b = (float(x) for x in rest.split(","))
        except ValueError:
            raise ValueError(f"bad uniform spec {spec!r}; expected uniform:<a>,<b>") from None
        return Uniform(a, b)
    if kind == "table":
        if not rest:
            raise ValueError("table spec needs a path: table:<path>")
        return TableDistribution.from_csv(rest)
    raise ValueError(f"unknown distribution kind {kind!r} in {spec!r}")
