"""Deterministic and probabilistic forecast scores.

Arrays follow the layout ``(..., N, T)`` for observations and point forecasts;
quantile forecasts carry the level axis at ``-3``. Every mean runs jointly over
all farms, origins and steps supplied.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encdec import ForecastQuantiles, quantile_loss

PASS_THRESHOLD = 0.25
ASSESSMENT_HORIZON = 4
TABLE_COLUMNS = ("MAE", "RMSE", "AR", "PP", "CRPS", "PS")


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: observations {y.shape} vs forecast {y_hat.shape}")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def accuracy_rate(y_4h, y_hat_4h) -> float:
    """``(1 - RMSE) * 100`` on fourth-hour forecasts."""
    return (1.0 - rmse(y_4h, y_hat_4h)) * 100.0


def pass_rate(y_4h, y_hat_4h, threshold: float = PASS_THRESHOLD) -> float:
    """Percentage of fourth-hour errors strictly below ``threshold``."""
    y, y_hat = _pair(y_4h, y_hat_4h)
    return float(np.mean(np.abs(y - y_hat) < threshold) * 100.0)


def pinball(y, q: ForecastQuantiles) -> float:
    return quantile_loss(y, q)


def sample_quantiles(q: ForecastQuantiles, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws ``(..., M, N, T)``: uniform levels through the piecewise-linear
    quantile function, flat beyond the outermost levels."""
    u = rng.uniform(size=n_samples)
    values = np.moveaxis(q.values, -3, -1)  # (..., N, T, Q)
    flat = values.reshape(-1, q.n_levels)
    # np.interp is 1-D; vectorise through searchsorted on the shared level grid
    pos = np.searchsorted(q.levels, u, side="right")
    lo = np.clip(pos - 1, 0, q.n_levels - 1)
    hi = np.clip(pos, 0, q.n_levels - 1)
    span = q.levels[hi] - q.levels[lo]
    frac = np.where(span > 0, (u - q.levels[lo]) / np.where(span > 0, span, 1.0), 0.0)
    draws = flat[:, lo] + frac * (flat[:, hi] - flat[:, lo])  # (K, M)
    return np.moveaxis(draws.reshape(values.shape[:-1] + (n_samples,)), -1, -3)


def crps(y, q: ForecastQuantiles, n_samples: int = 100, seed: int = 0) -> float:
    """Sample CRPS, ``E|S - y| - 0.5 E|S - S'|``, averaged over every (farm, time).

    ``E|S - S'|`` runs over distinct sample pairs. Quantiles must already be
    monotone across levels.
    """
    if n_samples < 2:
        raise ValueError("CRPS needs at least two samples")
    if not q.is_monotone():
        raise ValueError("quantile forecasts cross; rearrange before scoring")
    y = np.asarray(y, dtype=np.float64)
    draws = sample_quantiles(q, n_samples, np.random.default_rng(seed))
    if draws.shape[:-3] + draws.shape[-2:] != y.shape:
        raise ValueError(f"observation shape {y.shape} does not match forecasts {q.values.shape}")
    spread_to_truth = np.abs(draws - y[..., None, :, :]).mean(axis=-3)
    s = np.sort(draws, axis=-3)
    m = n_samples
    rank_weights = (2 * np.arange(m) - m + 1).reshape((m, 1, 1))
    pair_mean = 2.0 * (rank_weights * s).sum(axis=-3) / (m * (m - 1))
    return float(np.mean(spread_to_truth - 0.5 * pair_mean))


def relative_improvement(value: float, reference: float) -> float:
    """Percentage by which ``value`` improves on (is lower than) ``reference``."""
    return (reference - value) / reference * 100.0


@dataclass
class EvaluationReport:
    mae: float
    rmse: float
    ar_percent: float
    pp_percent: float
    crps: float | None
    pinball: float | None
    horizon_mae: list[float] = field(default_factory=list)
    n_windows: int = 0

    def table_row(self) -> dict[str, float | None]:
        """Scores in the column order MAE, RMSE, AR, PP, CRPS, PS."""
        return dict(zip(TABLE_COLUMNS, (self.mae, self.rmse, self.ar_percent, self.pp_percent, self.crps, self.pinball)))

    def to_json(self, path=None) -> str:
        text = json.dumps({**self.table_row(), "horizon_mae": self.horizon_mae, "n_windows": self.n_windows}, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    def to_csv(self, path, model: str = "") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("Model",) + TABLE_COLUMNS)
            w.writerow([model] + ["" if v is None else repr(float(v)) for v in self.table_row().values()])

    def horizon_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("horizon", "mae"))
            for h, v in enumerate(self.horizon_mae, start=1):
                w.writerow((h, repr(float(v))))


def evaluation_report(
    y: np.ndarray,
    q: ForecastQuantiles,
    probabilistic: bool = True,
    n_samples: int = 100,
    seed: int = 0,
) -> EvaluationReport:
    """All scores for forecasts ``q`` of observations ``y`` shaped ``(S, N, T)``.

    The deterministic forecast is the median; AR and PP use the fourth step
    ahead (or the last step if the horizon is shorter).
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        y = y[None]
        q = ForecastQuantiles(q.levels, q.values[None])
    point = q.median()
    step = min(ASSESSMENT_HORIZON, y.shape[-1]) - 1
    return EvaluationReport(
        mae=mae(y, point),
        rmse=rmse(y, point),
        ar_percent=accuracy_rate(y[..., step], point[..., step]),
        pp_percent=pass_rate(y[..., step], point[..., step]),
        crps=crps(y, q, n_samples, seed) if probabilistic else None,
        pinball=pinball(y, q) if probabilistic else None,
        horizon_mae=[mae(y[..., h], point[..., h]) for h in range(y.shape[-1])],
        n_windows=int(y.shape[0]),
    )
