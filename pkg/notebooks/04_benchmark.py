"""
Heteroskedastic benchmark
=========================

All five methods on the synthetic data. The fixed-width interval covers too
much where the noise is small and too little where it is large; the ratio
scores adapt.
"""

import numpy as np

from pinet.experiment import DataConfig, ExperimentConfig, run_experiment
from pinet.net import TrainConfig

cfg = ExperimentConfig(
    data=DataConfig(d=10, signal=5, n=4000, n_test=4000),
    hidden=(64,),
    train=TrainConfig(epochs=50, batch_size=32),
    methods=("pav", "conf-nn", "conf-fw", "neg-ll", "oracle"),
    out="benchmark-out",
    seed=0,
)
report = run_experiment(cfg, write=False)

print(f"{'method':8s} {'cover':>6s} {'length':>7s} {'mad':>6s} {'q-mad':>6s}")
for m, mt in report.metrics.items():
    print(f"{m:8s} {mt.ave_coverage:6.3f} {mt.ave_length:7.3f} {mt.mad:6.3f} "
          f"{report.oracle_mad[m]:6.3f}")

# coverage by decile of the index
cut = np.quantile(report.index_test, np.linspace(0, 1, 11))
dec = np.clip(np.searchsorted(cut, report.index_test, side="right") - 1, 0, 9)
y = report.y_test
print("\ndecile  " + "  ".join(f"{m:>7s}" for m in report.triples))
for k in range(10):
    sel = dec == k
    row = [np.mean((t[sel, 0] <= y[sel]) & (y[sel] <= t[sel, 2])) for t in report.triples.values()]
    print(f"{k:6d}  " + "  ".join(f"{c:7.3f}" for c in row))
