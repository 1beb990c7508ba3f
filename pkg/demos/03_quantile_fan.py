"""Probabilistic output: a quantile fan per farm and horizon.

The decoder emits 19 quantile levels which are sorted and clipped to [0, 1].
Training on the pinball loss calibrates them; this script trains briefly,
prints the fan for one forecast origin and checks empirical coverage of the
central 90% interval on the test windows. Run: ``python demos/03_quantile_fan.py``.
"""

import numpy as np

from stdhl.data import prepare, synth_dataset
from stdhl.model import ModelConfig, build_forecaster
from stdhl.training import TrainConfig, evaluate, predict_batch, train

series = synth_dataset(n_farms=4, length=6000, seed=2, nwp_noise=1.0)
data = prepare(series, look_back=12, horizon=4, nwp_extension=4)
config = ModelConfig(n_nodes=4)
model = build_forecaster("stdhl", config)
train(model, data.train, data.val, TrainConfig(max_epochs=10, patience=5))

origin = data.test.subset(slice(0, 1))
fan = predict_batch(model, origin)
levels = np.asarray(fan.levels)
print(f"forecast origin {origin.origins[0]}")
for farm in range(2):
    print(f"\nfarm {data.farm_ids[farm]}  (rows: 5%, 25%, 50%, 75%, 95%; columns: +1h..+4h)")
    for level in (0.05, 0.25, 0.5, 0.75, 0.95):
        k = int(np.argmin(np.abs(levels - level)))
        print(f"  {level:4.2f}  " + "  ".join(f"{v:.3f}" for v in fan.values[0, k, farm]))
    print("  truth " + "  ".join(f"{v:.3f}" for v in origin.target[0, farm]))

q = predict_batch(model, data.test)
lo, hi = q.values[:, 0], q.values[:, -1]
inside = (data.test.target >= lo) & (data.test.target <= hi)
print(f"\ncoverage of the 5%-95% band on {len(data.test)} test windows: {inside.mean():.1%} (nominal 90%)")
report = evaluate(model, data.test)
print(f"CRPS {report.crps:.4f}, pinball {report.pinball:.4f}, MAE of the median {report.mae:.4f}")
