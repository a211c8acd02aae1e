"""
Choosing tau on a grid
======================

One network per grid value; the selected tau is the largest whose interval
covers at least 1 - alpha of the calibration rows. tau = 0 is the whole line,
so a choice always exists.
"""

from pinet import SyntheticSpec, TrainConfig, fit, gen_synthetic
from pinet.calibrate import (
    conservative_sample_bound,
    coverage_of,
    pav_sample_bound,
    pav_select,
)
from pinet.data import assign_roles

spec = SyntheticSpec(d=5, signal=3, seed=4)
data = assign_roles(gen_synthetic(spec, 5000), (2500, 1500, 1000), seed=5)
(X1, y1), (X2, y2), (X3, y3) = (data.subset(r) for r in ("D1", "D2", "D3"))

grid = (0.2, 0.15, 0.1, 0.05, 0.0)
cfg = TrainConfig(epochs=40, batch_size=32)
nets = {t: fit(X1, y1, t, cfg, hidden=(32,)) for t in grid if t}

sel = pav_select(nets, X2, y2, alpha=0.1, grid=grid)
for t in grid:
    print(f"tau={t:4.2f}  calibration coverage {sel.coverage[t]:.3f}")
print("selected", sel.tau_hat)

chosen = sel.network(nets, median_from=nets[max(nets)])
print("test coverage", round(coverage_of(chosen.predict(X3), y3), 4))

# how many calibration rows the guarantees ask for
print("hoeffding n2 for eps=delta=0.05, K=10:", pav_sample_bound(0.05, 0.05, 10))
print("average-coverage n2 for alpha=0.1, eps=0.05, K=10:",
      conservative_sample_bound(0.1, 0.05, 10))
