"""Train the forecaster on synthetic farms and compare it with the baselines.

The synthetic generator plants lead-lag structure between farms and gives the
pseudo-NWP a timing error, bias and drifting noise. Persistence only repeats
the last measurement and the mechanism model only reads NWP, while the
learned models combine both. One year of hourly data and ten epochs take a
few minutes on one core. Run: ``python demos/02_train_and_compare.py``.
"""

import logging
import time

from stdhl.data import prepare, synth_dataset
from stdhl.metrics import TABLE_COLUMNS, relative_improvement
from stdhl.model import ModelConfig, build_forecaster
from stdhl.training import TrainConfig, evaluate, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

series = synth_dataset(n_farms=6, length=8760, seed=1, nwp_noise=1.0)
data = prepare(series, look_back=12, horizon=4, nwp_extension=4)
print(f"windows: {len(data.train)} train, {len(data.val)} validation, {len(data.test)} test")

config = ModelConfig(n_nodes=len(series))
reports = {}
for name in ("persistence", "mechanism"):
    reports[name] = evaluate(build_forecaster(name, config), data.test)

for name in ("stdhl", "linear"):
    model = build_forecaster(name, config, history=data.history)
    start = time.perf_counter()
    result = train(model, data.train, data.val, TrainConfig(max_epochs=10, patience=5))
    print(f"{name}: best epoch {result.best_epoch}, {time.perf_counter() - start:.0f}s")
    reports[name] = evaluate(model, data.test)


def cell(value):
    return "-" if value is None else f"{value:.4f}"


print("\n" + "model".ljust(12) + "".join(c.rjust(9) for c in TABLE_COLUMNS))
for name, report in reports.items():
    print(name.ljust(12) + "".join(cell(v).rjust(9) for v in report.table_row().values()))

gain = relative_improvement(reports["stdhl"].mae, reports["persistence"].mae)
print(f"\nMAE improvement over persistence: {gain:.1f}%")
print("persistence MAE by horizon:", [round(v, 4) for v in reports["persistence"].horizon_mae])
print("stdhl MAE by horizon:      ", [round(v, 4) for v in reports["stdhl"].horizon_mae])
