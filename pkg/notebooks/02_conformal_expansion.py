"""
Split-conformal expansion of a PI-network
=========================================

Fit a network on D1, compute the expansion constant c_hat on D2 and check
coverage on D3. A c_hat above 1 widens the raw interval, below 1 shrinks it.
"""

import numpy as np

from pinet import SyntheticSpec, TrainConfig, fit, gen_synthetic, split_conformal
from pinet.calibrate import coverage_of
from pinet.data import assign_roles

spec = SyntheticSpec(d=10, signal=5, seed=1)
data = assign_roles(gen_synthetic(spec, 6000), (3000, 1000, 2000), seed=2)
(X1, y1), (X2, y2), (X3, y3) = (data.subset(r) for r in ("D1", "D2", "D3"))

net = fit(X1, y1, tau=0.1, cfg=TrainConfig(epochs=60, batch_size=32), hidden=(64,))
print("raw coverage on D3      ", round(coverage_of(net.predict(X3), y3), 4))

cal = split_conformal(net, X2, y2, alpha=0.1)
print("c_hat", round(cal.c_hat, 4), "from rank", cal.k, "of", cal.n2)

t = cal.triples(net, X3)
print("calibrated coverage on D3", round(coverage_of(t, y3), 4))
print("mean length", round(float(np.mean(t[:, 2] - t[:, 0])), 3))
