"""
Pinball loss and the monotone head
==================================

The pinball loss is minimized by a quantile. The head turns any three raw
outputs into an ordered (l, m, u).
"""

import numpy as np
from scipy import stats

from pinet import monotone_head, pinball

y = stats.norm.ppf(np.random.default_rng(0).random(50_000))
grid = np.linspace(-3, 3, 601)

for tau in (0.05, 0.5, 0.95):
    risk = [pinball(tau, y - g).mean() for g in grid]
    print(f"tau={tau:4.2f}  argmin {grid[np.argmin(risk)]:+.3f}  "
          f"true quantile {stats.norm.ppf(tau):+.3f}")

# out-of-order raw outputs get clamped, ordered ones pass through
print(monotone_head(1.0, 0.5, 2.0))
print(monotone_head(-1.0, 0.0, 3.0))
