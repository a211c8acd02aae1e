"""Ordered quantile triples and the prediction intervals derived from them.

Endpoints are extended reals: ``-inf``/``inf`` are ordinary values, used by the
trivial network and by intervals expanded with an infinite constant.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class PiTriple(NamedTuple):
    """Lower, median and upper outputs of a PI-network at one input."""

    l: float
    m: float
    u: float

    def interval(self) -> "PiInterval":
        return PiInterval(self.l, self.u)

    @property
    def is_trivial(self) -> bool:
        return self.l == -math.inf and self.u == math.inf


class PiInterval(NamedTuple):
    """Closed interval ``[lo, hi]`` with possibly infinite endpoints."""

    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, y: float) -> bool:
        return self.lo <= y <= self.hi
