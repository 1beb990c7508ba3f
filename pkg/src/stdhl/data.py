"""Wind-farm series I/O (GEFCom2014 wind-track CSV), features, windows and splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .model import PowerCurve

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("ZONEID", "TIMESTAMP", "TARGETVAR", "U10", "V10", "U100", "V100")
TIMESTAMP_FORMAT = "%Y%m%d %H:%M"
NWP_FEATURES = ("speed10", "sin10", "cos10", "speed100", "sin100", "cos100")
SPEED_CHANNELS = (0, 3)
POWER_TOLERANCE = 0.01
HOUR = np.timedelta64(1, "h")


class DataError(ValueError):
    """Input data cannot be used; ``errors`` lists row-level problems when known."""

    def __init__(self, message: str, errors: Sequence[tuple[int, str]] = ()):
        self.errors = list(errors)
        if self.errors:
            shown = "; ".join(f"row {r}: {m}" for r, m in self.errors[:5])
            more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
            message = f"{message}: {shown}{more}"
        super().__init__(message)


@dataclass
class FarmSeries:
    """Hourly power and NWP wind components for one farm."""

    farm_id: str
    timestamps: np.ndarray  # datetime64[m], strictly increasing
    power: np.ndarray
    u10: np.ndarray
    v10: np.ndarray
    u100: np.ndarray
    v100: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[m]")
        for name in ("power", "u10", "v10", "u100", "v100"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.timestamps.shape:
                raise ValueError(f"{name} has {arr.shape[0]} values for {self.timestamps.size} timestamps")
            setattr(self, name, arr)
        if self.timestamps.size > 1 and np.any(np.diff(self.timestamps) <= np.timedelta64(0, "m")):
            raise ValueError(f"farm {self.farm_id}: timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.timestamps.size

    def gaps(self) -> list[tuple[np.datetime64, np.datetime64]]:
        """(last present, next present) pairs around each missing hour run."""
        if len(self) < 2:
            return []
        steps = np.diff(self.timestamps)
        idx = np.flatnonzero(steps > HOUR)
        return [(self.timestamps[i], self.timestamps[i + 1]) for i in idx]


def load_csv(path) -> list[FarmSeries]:
    """Read a GEFCom2014 wind-track CSV into one series per ZONEID, sorted by time.

    Power within 0.01 of the unit interval is clamped; anything further out,
    and unparseable timestamps or numbers, raise :class:`DataError` listing
    every offending row (1-based, header excluded). Blank power marks a
    missing hour and the row is skipped.
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return []
    missing = [c for c in CSV_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    if df.empty:
        return []
    errors: list[tuple[int, str]] = []
    rows = np.arange(1, len(df) + 1)
    ts = pd.to_datetime(df["TIMESTAMP"].str.strip(), format=TIMESTAMP_FORMAT, errors="coerce")
    for r in rows[ts.isna().to_numpy()]:
        errors.append((int(r), f"unparseable timestamp {df['TIMESTAMP'].iloc[r - 1]!r}"))
    values = {}
    for col in CSV_COLUMNS[2:]:
        raw = df[col].str.strip()
        num = pd.to_numeric(raw.replace("", np.nan), errors="coerce")
        bad = num.isna() & (raw != "")
        if col != "TARGETVAR":
            bad |= raw == ""
        for r in rows[bad.to_numpy()]:
            errors.append((int(r), f"bad {col} value {df[col].iloc[r - 1]!r}"))
        values[col] = num.to_numpy(dtype=np.float64)
    power = values["TARGETVAR"]
    out_of_range = (power < -POWER_TOLERANCE) | (power > 1 + POWER_TOLERANCE)
    for r in rows[out_of_range]:
        errors.append((int(r), f"power {power[r - 1]} outside [0, 1]"))
    if errors:
        errors.sort()
        raise DataError(f"{path}: {len(errors)} invalid row(s)", errors)

    frame = pd.DataFrame(
        {
            "zone": df["ZONEID"].str.strip(),
            "time": ts,
            "power": np.clip(power, 0.0, 1.0),
            "u10": values["U10"],
            "v10": values["V10"],
            "u100": values["U100"],
            "v100": values["V100"],
        }
    )
    frame = frame[frame["power"].notna()]
    dupes = frame.duplicated(["zone", "time"])
    if dupes.any():
        raise DataError(f"{path}: duplicate zone/timestamp rows")
    series = []
    for zone, g in sorted(frame.groupby("zone"), key=lambda kv: _zone_key(kv[0])):
        g = g.sort_values("time")
        s = FarmSeries(
            str(zone),
            g["time"].to_numpy().astype("datetime64[m]"),
            g["power"].to_numpy(),
            g["u10"].to_numpy(),
            g["v10"].to_numpy(),
            g["u100"].to_numpy(),
            g["v100"].to_numpy(),
        )
        if s.gaps():
            logger.warning("farm %s has %d gap(s) in its hourly record", s.farm_id, len(s.gaps()))
        series.append(s)
    return series


def _zone_key(zone: str):
    return (0, int(zone), "") if zone.isdigit() else (1, 0, zone)


def save_csv(series: Sequence[FarmSeries], path) -> None:
    """Write series in the GEFCom2014 schema (zone-major, time-sorted rows).

    Floats use ``repr`` so a load round-trips bit-exactly; missing power is blank.
    """
    def fmt(v: float) -> str:
        return "" if v != v else repr(v)

    lines = [",".join(CSV_COLUMNS)]
    for s in series:
        stamps = pd.DatetimeIndex(s.timestamps.astype("datetime64[ns]")).strftime(TIMESTAMP_FORMAT)
        cols = [a.astype(np.float64).tolist() for a in (s.power, s.u10, s.v10, s.u100, s.v100)]
        for k in range(len(s)):
            lines.append(",".join([s.farm_id, stamps[k]] + [fmt(c[k]) for c in cols]))
    Path(path).write_text("\n".join(lines) + "\n")


def wind_features(u, v):
    """Speed and direction components ``(speed, sin, cos)`` from wind vector ``(u, v)``.

    A calm ``(0, 0)`` maps to speed 0 with ``sin = 0, cos = 1``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    speed = np.hypot(u, v)
    calm = speed == 0
    safe = np.where(calm, 1.0, speed)
    sin = np.where(calm, 0.0, v / safe)
    cos = np.where(calm, 1.0, u / safe)
    return speed, sin, cos


# -- windows ---------------------------------------------------------------------


@dataclass
class WindowSample:
    """One forecast origin: covariate windows and the target horizon."""

    origin: np.datetime64
    measured: np.ndarray  # (1 + F', N, T')
    nwp: np.ndarray  # (F, N, T + 2 tau)
    target: np.ndarray  # (N, T)
    speed100: np.ndarray  # raw 100 m NWP speed over the target window, (N, T)


class WindowList(list):
    """List of samples that also remembers how many origins were dropped."""

    def __init__(self, items: Iterable[WindowSample] = (), dropped: int = 0, farm_ids: Sequence[str] = ()):
        super().__init__(items)
        self.dropped = dropped
        self.farm_ids = list(farm_ids)


@dataclass
class AlignedSeries:
    """All farms on one hourly grid, missing hours as NaN."""

    farm_ids: list[str]
    timestamps: np.ndarray  # (L,)
    power: np.ndarray  # (N, L)
    features: np.ndarray  # (F, N, L) NWP-derived features

    @property
    def n_nodes(self) -> int:
        return len(self.farm_ids)


def align(series: Sequence[FarmSeries]) -> AlignedSeries:
    if not series:
        raise DataError("no farm series supplied")
    stamps = np.concatenate([s.timestamps for s in series])
    if np.any(stamps.astype("datetime64[h]") != stamps):
        raise DataError("farm timestamps are not aligned to whole hours")
    start, stop = stamps.min(), stamps.max()
    grid = np.arange(start, stop + HOUR, HOUR).astype("datetime64[m]")
    n, length = len(series), grid.size
    power = np.full((n, length), np.nan)
    feats = np.full((len(NWP_FEATURES), n, length), np.nan)
    for i, s in enumerate(series):
        pos = ((s.timestamps - start) // HOUR).astype(int)
        power[i, pos] = s.power
        sp10, sin10, cos10 = wind_features(s.u10, s.v10)
        sp100, sin100, cos100 = wind_features(s.u100, s.v100)
        feats[:, i, pos] = np.stack([sp10, sin10, cos10, sp100, sin100, cos100])
    return AlignedSeries([s.farm_id for s in series], grid, power, feats)


def valid_origins(length: int, look_back: int, horizon: int, nwp_extension: int) -> np.ndarray:
    """Zero-based origin indices whose measured, NWP and target spans fit in ``length`` steps."""
    first = max(look_back, nwp_extension) - 1
    last = length - 1 - horizon - nwp_extension
    return np.arange(first, last + 1) if last >= first else np.arange(0)


def make_windows(
    series: Sequence[FarmSeries] | AlignedSeries,
    look_back: int,
    horizon: int,
    nwp_extension: int,
    stride: int = 1,
    power_only: bool = False,
) -> WindowList:
    """Cut every valid forecast origin into a :class:`WindowSample`.

    Measured data cover ``[t0 - T' + 1, t0]``, NWP ``[t0 - tau + 1, t0 + T + tau]``
    and the target ``[t0 + 1, t0 + T]``. Origins touching a missing hour are
    dropped and counted in ``.dropped``. Features are left unnormalised.
    """
    data = series if isinstance(series, AlignedSeries) else align(series)
    power, feats = data.power, data.features
    complete = np.isfinite(power).all(axis=0) & np.isfinite(feats).all(axis=(0, 1))
    # prefix count of incomplete steps gives O(1) span checks
    bad_prefix = np.concatenate([[0], np.cumsum(~complete)])
    samples = []
    dropped = 0
    for t0 in valid_origins(power.shape[1], look_back, horizon, nwp_extension)[::stride]:
        lo = min(t0 - look_back + 1, t0 - nwp_extension + 1)
        hi = t0 + horizon + nwp_extension
        if bad_prefix[hi + 1] - bad_prefix[lo] > 0:
            dropped += 1
            continue
        m_sl = slice(t0 - look_back + 1, t0 + 1)
        n_sl = slice(t0 - nwp_extension + 1, t0 + horizon + nwp_extension + 1)
        y_sl = slice(t0 + 1, t0 + horizon + 1)
        measured = power[None, :, m_sl] if power_only else np.concatenate([power[None, :, m_sl], feats[:, :, m_sl]])
        samples.append(
            WindowSample(
                origin=data.timestamps[t0],
                measured=np.array(measured),
                nwp=np.array(feats[:, :, n_sl]),
                target=np.array(power[:, y_sl]),
                speed100=np.array(feats[3, :, y_sl]),
            )
        )
    if dropped:
        logger.info("dropped %d window(s) touching missing hours", dropped)
    return WindowList(samples, dropped, data.farm_ids)


def chronological_split(samples: Sequence[WindowSample], train: float = 0.70, val: float = 0.10,
                        test: float = 0.20):
    """Split by origin order, no shuffling: floors for train/val, remainder to test."""
    if min(train, val, test) < 0 or abs(train + val + test - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {train}, {val}, {test}")
    ordered = sorted(samples, key=lambda s: s.origin)
    n = len(ordered)
    n_train = int(np.floor(train * n + 1e-9))
    n_val = int(np.floor(val * n + 1e-9))
    return ordered[:n_train], ordered[n_train : n_train + n_val], ordered[n_train + n_val :]


@dataclass
class Normalizer:
    """Per-farm min-max scaling of NWP wind speed; direction components pass through."""

    speed_min: np.ndarray  # (2, N): rows are 10 m and 100 m
    speed_max: np.ndarray

    @classmethod
    def fit(cls, samples: Sequence[WindowSample]) -> "Normalizer":
        if not samples:
            raise DataError("cannot fit normalisation on an empty partition")
        nwp = np.stack([s.nwp[list(SPEED_CHANNELS)] for s in samples])  # (S, 2, N, T)
        return cls(nwp.min(axis=(0, 3)), nwp.max(axis=(0, 3)))

    def _scale(self, feats: np.ndarray, offset: int) -> np.ndarray:
        out = feats.copy()
        span = np.where(self.speed_max > self.speed_min, self.speed_max - self.speed_min, 1.0)
        for k, ch in enumerate(SPEED_CHANNELS):
            out[offset + ch] = (feats[offset + ch] - self.speed_min[k][:, None]) / span[k][:, None]
        return out

    def apply(self, samples: Sequence[WindowSample]) -> list[WindowSample]:
        out = []
        for s in samples:
            measured = s.measured if s.measured.shape[0] == 1 else self._scale(s.measured, 1)
            out.append(WindowSample(s.origin, measured, self._scale(s.nwp, 0), s.target, s.speed100))
        return out

    def to_dict(self) -> dict:
        return {"speed_min": self.speed_min.tolist(), "speed_max": self.speed_max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["speed_min"], dtype=np.float64), np.array(d["speed_max"], dtype=np.float64))


@dataclass
class WindowBatch:
    """Stacked samples ready for a forecaster."""

    measured: np.ndarray  # (S, 1 + F', N, T')
    nwp: np.ndarray  # (S, F, N, T + 2 tau)
    target: np.ndarray  # (S, N, T)
    speed100: np.ndarray  # (S, N, T)
    origins: np.ndarray = field(default_factory=lambda: np.array([], dtype="datetime64[m]"))

    def __post_init__(self):
        if len(self.origins) != len(self.target):
            if len(self.origins):
                raise DataError(f"{len(self.origins)} origins for {len(self.target)} windows")
            self.origins = np.full(len(self.target), np.datetime64("NaT"), dtype="datetime64[m]")

    def __len__(self) -> int:
        return self.target.shape[0]

    def subset(self, index) -> "WindowBatch":
        return WindowBatch(
            self.measured[index], self.nwp[index], self.target[index], self.speed100[index], self.origins[index]
        )


def stack_samples(samples: Sequence[WindowSample]) -> WindowBatch:
    if not samples:
        raise DataError("no samples to stack")
    return WindowBatch(
        np.stack([s.measured for s in samples]),
        np.stack([s.nwp for s in samples]),
        np.stack([s.target for s in samples]),
        np.stack([s.speed100 for s in samples]),
        np.array([s.origin for s in samples], dtype="datetime64[m]"),
    )


@dataclass
class PreparedData:
    farm_ids: list[str]
    train: WindowBatch
    val: WindowBatch
    test: WindowBatch
    normalizer: Normalizer
    history: np.ndarray  # (N, T_train) power up to the last training origin


def prepare(
    series: Sequence[FarmSeries],
    look_back: int,
    horizon: int,
    nwp_extension: int,
    splits: tuple[float, float, float] = (0.70, 0.10, 0.20),
    power_only: bool = False,
    farms: Sequence[str] | None = None,
    normalizer: Normalizer | None = None,
) -> PreparedData:
    """Window, split chronologically, fit normalisation on train only, and stack.

    A supplied ``normalizer`` (e.g. restored from a checkpoint) is used instead
    of refitting.
    """
    if farms is not None:
        by_id = {s.farm_id: s for s in series}
        unknown = [f for f in farms if f not in by_id]
        if unknown:
            raise DataError(f"unknown farm id(s): {', '.join(unknown)}")
        series = [by_id[f] for f in farms]
    aligned = align(series)
    windows = make_windows(aligned, look_back, horizon, nwp_extension, power_only=power_only)
    train, val, test = chronological_split(windows, *splits)
    if not train or not val or not test:
        raise DataError(f"too few windows ({len(windows)}) for a train/val/test split")
    norm = Normalizer.fit(train) if normalizer is None else normalizer
    last = int(np.flatnonzero(aligned.timestamps == train[-1].origin)[0])
    history = aligned.power[:, : last + 1]
    history = history[:, np.isfinite(history).all(axis=0)]
    return PreparedData(
        windows.farm_ids,
        stack_samples(norm.apply(train)),
        stack_samples(norm.apply(val)),
        stack_samples(norm.apply(test)),
        norm,
        history,
    )


# -- synthetic data ------------------------------------------------------------------


def synth_dataset(
    n_farms: int = 10,
    length: int = 8760,
    seed: int = 0,
    propagation_lags: Sequence[int] | None = None,
    nwp_bias: float = 0.5,
    nwp_lag: int = 2,
    noise: float = 0.02,
    nwp_noise: float = 0.0,
    memory_lag: int = 0,
    start: str = "2012-01-01 01:00",
    curve: PowerCurve | None = None,
) -> list[FarmSeries]:
    """Synthetic farms sharing a regional signal with planted lead-lag structure.

    A mean-reverting, smoothed latent walk is squashed to (0, 1). Farm ``i``
    sees it ``propagation_lags[i]`` hours late plus Gaussian ``noise``. The
    pseudo-NWP 100 m speed inverts the power curve on the farm's noise-free
    power, arrives ``nwp_lag`` hours late, is shifted by ``nwp_bias`` m/s and
    perturbed by AR(1) errors of scale ``nwp_noise``. ``memory_lag > 0`` adds a
    seasonal autoregressive component at that lag.
    """
    curve = PowerCurve.load() if curve is None else curve
    lags = np.asarray(
        np.round(np.linspace(0, 6, n_farms)) if propagation_lags is None else propagation_lags, dtype=int
    )
    if lags.shape != (n_farms,):
        raise ValueError("need one propagation lag per farm")
    if np.any(lags < 0) or max(int(lags.max()), nwp_lag, memory_lag) >= length:
        raise ValueError("lags must be non-negative and shorter than the series")
    rng = np.random.default_rng(seed)
    burn = int(lags.max()) + nwp_lag + 24 + 12 * max(memory_lag, 1)
    total = length + burn

    z = np.zeros(total)
    eps = rng.normal(0.0, 0.35, size=total)
    for t in range(1, total):
        z[t] = 0.97 * z[t - 1] + eps[t]
    if memory_lag > 0:
        seasonal = np.zeros(total)
        eta = rng.normal(0.0, 0.5, size=total)
        for t in range(memory_lag, total):
            seasonal[t] = 0.9 * seasonal[t - memory_lag] + eta[t]
        z = z + seasonal
    kernel = np.ones(4) / 4.0
    z = np.convolve(z, kernel, mode="full")[:total]
    latent = 1.0 / (1.0 + np.exp(-(z - 0.3)))

    heading = np.cumsum(rng.normal(0.0, 0.08, size=total)) + rng.uniform(0, 2 * np.pi)
    shear = (10.0 / 100.0) ** (1.0 / 7.0)
    stamps = np.datetime64(pd.Timestamp(start).to_datetime64(), "m") + np.arange(length) * HOUR
    out = []
    for i in range(n_farms):
        idx = np.arange(burn, total)
        clean = latent[idx - lags[i]]
        power = np.clip(clean + noise * rng.normal(size=length), 0.0, 1.0)
        speed_truth = curve.inverse(latent[np.arange(total) - lags[i]])
        err = np.zeros(total)
        if nwp_noise > 0:
            shocks = rng.normal(0.0, nwp_noise * np.sqrt(1 - 0.9**2), size=total)
            for t in range(1, total):
                err[t] = 0.9 * err[t - 1] + shocks[t]
        speed100 = np.maximum(speed_truth[idx - nwp_lag] + nwp_bias + err[idx], 0.0)
        theta = heading[idx] + 0.2 * i
        speed10 = shear * speed100
        out.append(
            FarmSeries(
                str(i + 1),
                stamps,
                power,
                speed10 * np.cos(theta),
                speed10 * np.sin(theta),
                speed100 * np.cos(theta),
                speed100 * np.sin(theta),
            )
        )
    return out
