"""Unions of sorted disjoint closed intervals on the real line."""

from __future__ import annotations

import math


def _normalize(intervals):
    ivals = [(float(lo), float(hi)) for lo, hi in intervals if lo <= hi]
    ivals.sort()
    merged = []
    for lo, hi in ivals:
        if merged and lo <= merged[-1][1]:
            if hi > merged[-1][1]:
                merged[-1][1] = hi
        else:
            merged.append([lo, hi])
    return tuple((lo, hi) for lo, hi in merged)


class IntervalUnion:
    """Immutable union of closed intervals, kept sorted, disjoint and merged.

    Touching intervals ([a, b] and [b, c]) are merged; degenerate intervals
    [c, c] are allowed and carry zero length.
    """

    __slots__ = ("_ivals",)

    def __init__(self, intervals=()):
        object.__setattr__(self, "_ivals", _normalize(intervals))

    def __setattr__(self, name, value):
        raise AttributeError("IntervalUnion is immutable")

    @property
    def pairs(self):
        return self._ivals

    @property
    def is_empty(self):
        return not self._ivals

    @property
    def total_length(self):
        return math.fsum(hi - lo for lo, hi in self._ivals)

    def __len__(self):
        return len(self._ivals)

    def __iter__(self):
        return iter(self._ivals)

    def __eq__(self, other):
        if not isinstance(other, IntervalUnion):
            return NotImplemented
        return self._ivals == other._ivals

    def __hash__(self):
        return hash(self._ivals)

    def __repr__(self):
        inner = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in self._ivals)
        return f"IntervalUnion({inner})"

    def contains(self, x, tol=0.0):
        return any(lo - tol <= x <= hi + tol for lo, hi in self._ivals)

    __contains__ = contains

    def clip(self, lo, hi):
        """Intersection with the single interval [lo, hi]."""
        out = []
        for a, b in self._ivals:
            a2, b2 = max(a, lo), min(b, hi)
            if a2 <= b2:
                out.append((a2, b2))
        return IntervalUnion(out)

    def intersection(self, other):
        out = []
        a = list(self._ivals)
        b = list(other._ivals)
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo <= hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return IntervalUnion(out)

    def union(self, other):
        return IntervalUnion(self._ivals + other._ivals)

    def symmetric_difference_length(self, other):
        inter = self.intersection(other)
        return self.total_length + other.total_length - 2.0 * inter.total_length

    def issubset(self, other, tol=0.0):
        """True when every interval of self is covered by one interval of other."""
        for lo, hi in self._ivals:
            if not any(a - tol <= lo and hi <= b + tol for a, b in other._ivals):
                return False
        return True

    def to_pairs(self):
        return [[lo, hi] for lo, hi in self._ivals]
