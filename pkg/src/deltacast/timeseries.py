"""Canonical univariate series, calendar grids, time features and scalers."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

EPS = 1e-10
N_TIME_FEATURES = 6


class Unit(enum.IntEnum):
    SECONDS = 0
    MINUTES = 1
    HOURS = 2
    DAYS = 3
    WEEKS = 4
    MONTHS = 5
    QUARTERS = 6
    YEARS = 7


_UNIT_LETTER = {
    Unit.SECONDS: "S",
    Unit.MINUTES: "T",
    Unit.HOURS: "H",
    Unit.DAYS: "D",
    Unit.WEEKS: "W",
    Unit.MONTHS: "M",
    Unit.QUARTERS: "Q",
    Unit.YEARS: "A",
}
_LETTER_UNIT = {v: k for k, v in _UNIT_LETTER.items()}
_LETTER_UNIT["Y"] = Unit.YEARS
_LETTER_UNIT["MIN"] = Unit.MINUTES

_FIXED_SECONDS = {
    Unit.SECONDS: 1,
    Unit.MINUTES: 60,
    Unit.HOURS: 3600,
    Unit.DAYS: 86400,
    Unit.WEEKS: 7 * 86400,
}
_MONTHS_PER_STEP = {Unit.MONTHS: 1, Unit.QUARTERS: 3, Unit.YEARS: 12}

# cycles per "natural" season; divided by the frequency multiple when divisible
_BASE_SEASON = {
    Unit.SECONDS: 86400,
    Unit.MINUTES: 1440,
    Unit.HOURS: 24,
    Unit.DAYS: 7,
    Unit.WEEKS: 52,
    Unit.MONTHS: 12,
    Unit.QUARTERS: 4,
    Unit.YEARS: 1,
}

_FREQ_RE = re.compile(r"^\s*(\d*)\s*([A-Za-z]+)\s*$")


@dataclass(frozen=True, order=True)
class Frequency:
    unit: Unit
    multiple: int = 1

    def __post_init__(self):
        if self.multiple < 1:
            raise ValueError(f"frequency multiple must be >= 1, got {self.multiple}")
        object.__setattr__(self, "unit", Unit(self.unit))

    @classmethod
    def parse(cls, text: str) -> "Frequency":
        """Parse strings such as ``"15T"``, ``"H"``, ``"10S"`` or ``"A"``."""
        m = _FREQ_RE.match(text)
        if m is None or m.group(2).upper() not in _LETTER_UNIT:
            raise ValueError(f"unrecognised frequency string {text!r}")
        mult = int(m.group(1)) if m.group(1) else 1
        return cls(_LETTER_UNIT[m.group(2).upper()], mult)

    def __str__(self) -> str:
        letter = _UNIT_LETTER[self.unit]
        return letter if self.multiple == 1 else f"{self.multiple}{letter}"

    @property
    def is_subdaily(self) -> bool:
        return self.unit <= Unit.HOURS

    @property
    def coarser_than_daily(self) -> bool:
        return self.unit > Unit.DAYS or (self.unit == Unit.DAYS and self.multiple > 1)

    def scaled(self, factor: int) -> "Frequency":
        return Frequency(self.unit, self.multiple * int(factor))


def seasonal_period(freq: Frequency) -> int:
    base = _BASE_SEASON[freq.unit]
    if base % freq.multiple == 0:
        return base // freq.multiple
    return 1


# ---------------------------------------------------------------------------
# calendar grids

_MAX_TS = np.datetime64("9999-12-31T23:59:59", "s")
_MIN_TS = np.datetime64("0001-01-01T00:00:00", "s")


def to_datetime64(value) -> np.datetime64:
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[s]")
    return np.datetime64(value, "s")


def date_grid(start, freq: Frequency, n: int) -> np.ndarray:
    """Timestamps ``start, start+freq, ...`` (``n`` of them) as ``datetime64[s]``."""
    start = to_datetime64(start)
    if n <= 0:
        return np.empty(0, dtype="datetime64[s]")
    if freq.unit in _FIXED_SECONDS:
        step = _FIXED_SECONDS[freq.unit] * freq.multiple
        last = int(start.astype(np.int64)) + (n - 1) * step
        if last > int(_MAX_TS.astype(np.int64)):
            raise OverflowError(f"calendar overflow rolling {start} forward by {n} x {freq}")
        return start + (np.arange(n, dtype=np.int64) * step).astype("timedelta64[s]")
    months_step = _MONTHS_PER_STEP[freq.unit] * freq.multiple
    m0 = start.astype("datetime64[M]")
    offset = (start - m0.astype("datetime64[s]")).astype(np.int64)
    day0, tod = divmod(int(offset), 86400)
    total_months = int(m0.astype(np.int64)) + (n - 1) * months_step
    if total_months > int(_MAX_TS.astype("datetime64[M]").astype(np.int64)):
        raise OverflowError(f"calendar overflow rolling {start} forward by {n} x {freq}")
    months = m0 + (np.arange(n, dtype=np.int64) * months_step).astype("timedelta64[M]")
    month_len = ((months + 1).astype("datetime64[D]") - months.astype("datetime64[D]")).astype(np.int64)
    day = np.minimum(day0, month_len - 1)
    days = months.astype("datetime64[D]") + day.astype("timedelta64[D]")
    return days.astype("datetime64[s]") + np.timedelta64(tod, "s")


def calendar_fields(stamps: np.ndarray) -> dict[str, np.ndarray]:
    secs = stamps.astype("datetime64[s]").astype(np.int64)
    days = stamps.astype("datetime64[D]")
    months = stamps.astype("datetime64[M]")
    years = stamps.astype("datetime64[Y]")
    doy = (days - years.astype("datetime64[D]")).astype(np.int64) + 1
    return {
        "second": secs % 60,
        "minute": (secs // 60) % 60,
        "hour": (secs // 3600) % 24,
        # 1970-01-01 was a Thursday; Monday == 0
        "dayofweek": (days.astype(np.int64) + 3) % 7,
        "day": (days - months.astype("datetime64[D]")).astype(np.int64) + 1,
        "dayofyear": doy,
        "weekofyear": (doy - 1) // 7 + 1,
        "month": (months - years.astype("datetime64[M]")).astype(np.int64) + 1,
    }


def time_features(start, freq: Frequency, history_len: int, horizon: int) -> np.ndarray:
    """Calendar features for ``history_len + horizon`` steps, each in [-0.5, 0.5].

    Columns depend on the granularity of ``freq``:

    * sub-daily: second, minute, hour, day-of-week, day-of-month, day-of-year
    * daily: day-of-week, day-of-month, day-of-year
    * weekly: week-of-year
    * monthly: month-of-year
    * quarterly / yearly: relative index position
    """
    n = history_len + horizon
    if n < 1:
        raise ValueError("history_len + horizon must be >= 1")
    stamps = date_grid(start, freq, n)
    f = calendar_fields(stamps)
    if freq.is_subdaily:
        cols = [f["second"] / 59, f["minute"] / 59, f["hour"] / 23,
                f["dayofweek"] / 6, (f["day"] - 1) / 30, (f["dayofyear"] - 1) / 365]
    elif freq.unit == Unit.DAYS:
        cols = [f["dayofweek"] / 6, (f["day"] - 1) / 30, (f["dayofyear"] - 1) / 365]
    elif freq.unit == Unit.WEEKS:
        cols = [(f["weekofyear"] - 1) / 52]
    elif freq.unit == Unit.MONTHS:
        cols = [(f["month"] - 1) / 11]
    else:
        cols = [np.arange(n) / max(n - 1, 1)]
    return np.stack(cols, axis=1).astype(np.float64) - 0.5


def padded_time_features(start, freq: Frequency, history_len: int, horizon: int) -> np.ndarray:
    """``time_features`` zero-padded to the fixed model input width."""
    feats = time_features(start, freq, history_len, horizon)
    out = np.zeros((feats.shape[0], N_TIME_FEATURES))
    out[:, : feats.shape[1]] = feats
    return out


# ---------------------------------------------------------------------------
# series


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeries:
    """Univariate series with an explicit observation mask (``True`` = observed).

    Values at missing positions are canonicalised to 0.0 and never take part in
    arithmetic.
    """

    values: np.ndarray
    mask: np.ndarray
    start: np.datetime64 = field(default_factory=lambda: np.datetime64("2000-01-01T00:00:00", "s"))
    freq: Frequency = field(default_factory=lambda: Frequency(Unit.HOURS))
    id: str = ""
    provenance: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 1 or mask.shape != values.shape:
            raise ValueError(f"values/mask shape mismatch: {values.shape} vs {mask.shape}")
        values[~mask] = 0.0
        if not np.all(np.isfinite(values)):
            raise ValueError(f"series {self.id!r} has non-finite observed values")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))
        object.__setattr__(self, "start", to_datetime64(self.start))
        if isinstance(self.freq, str):
            object.__setattr__(self, "freq", Frequency.parse(self.freq))

    @classmethod
    def from_array(cls, values, **kwargs) -> "TimeSeries":
        """Build from an array where NaN marks a missing value."""
        values = np.asarray(values, dtype=np.float64)
        mask = np.isfinite(values)
        return cls(np.where(mask, values, 0.0), mask, **kwargs)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def observed(self) -> np.ndarray:
        return self.values[self.mask]

    def as_nan_array(self) -> np.ndarray:
        return np.where(self.mask, self.values, np.nan)

    def with_values(self, values, mask=None, **kwargs) -> "TimeSeries":
        return replace(self, values=values, mask=self.mask if mask is None else mask, **kwargs)

    def slice(self, lo: int, hi: int) -> "TimeSeries":
        start = date_grid(self.start, self.freq, lo + 1)[-1] if lo > 0 else self.start
        return replace(self, values=self.values[lo:hi], mask=self.mask[lo:hi], start=start)

    def timestamps(self) -> np.ndarray:
        return date_grid(self.start, self.freq, len(self))


def append_provenance(provenance: str, record: dict) -> str:
    """Provenance is a JSON list of stage records; legacy plain strings are wrapped."""
    if provenance:
        try:
            stages = json.loads(provenance)
            if not isinstance(stages, list):
                stages = [{"op": "note", "text": provenance}]
        except json.JSONDecodeError:
            stages = [{"op": "note", "text": provenance}]
    else:
        stages = []
    stages.append(record)
    return json.dumps(stages, sort_keys=True, separators=(",", ":"))


def provenance_stages(provenance: str) -> list[dict]:
    if not provenance:
        return []
    try:
        stages = json.loads(provenance)
    except json.JSONDecodeError:
        return [{"op": "note", "text": provenance}]
    return stages if isinstance(stages, list) else [{"op": "note", "text": provenance}]


# ---------------------------------------------------------------------------
# scalers


class ScalerKind(str, enum.Enum):
    ROBUST = "robust"
    MINMAX = "minmax"
    MEDIAN = "median"
    MEAN = "mean"


@dataclass(frozen=True)
class Scaler:
    kind: ScalerKind
    shift: float
    scale: float

    def apply(self, x):
        return _map_series(x, lambda v: (v - self.shift) / self.scale)

    def invert(self, x):
        return _map_series(x, lambda v: v * self.scale + self.shift)


def _map_series(x, fn):
    if isinstance(x, TimeSeries):
        return x.with_values(np.where(x.mask, fn(x.values), 0.0))
    return fn(np.asarray(x, dtype=np.float64))


def fit_scaler(kind: ScalerKind | str, values: Iterable[float], mask=None) -> Scaler:
    """Fit a scaler on the observed entries of ``values``.

    Robust uses the median and the interquartile range (linear interpolation
    between order statistics). Median and Mean scale by the median / mean of
    absolute values with zero shift.
    """
    kind = ScalerKind(kind)
    if isinstance(values, TimeSeries):
        obs = values.observed
    else:
        v = np.asarray(values, dtype=np.float64)
        obs = v[np.asarray(mask, dtype=bool)] if mask is not None else v[np.isfinite(v)]
    if obs.size == 0:
        raise ValueError("cannot fit a scaler on an empty observed set")
    if kind is ScalerKind.ROBUST:
        q25, q50, q75 = np.quantile(obs, [0.25, 0.5, 0.75], method="linear")
        shift, scale = float(q50), float(q75 - q25)
    elif kind is ScalerKind.MINMAX:
        shift, scale = float(obs.min()), float(obs.max() - obs.min())
    elif kind is ScalerKind.MEDIAN:
        shift, scale = 0.0, float(np.median(np.abs(obs)))
    else:
        shift, scale = 0.0, float(np.mean(np.abs(obs)))
    if not scale > EPS:
        scale = EPS
    return Scaler(kind, shift, scale)


def apply(scaler: Scaler, series):
    return scaler.apply(series)


def invert(scaler: Scaler, series):
    return scaler.invert(series)
