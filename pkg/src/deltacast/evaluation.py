"""Forecast metrics, the seasonal-naive baseline, normalized reporting and the missing-value sweep."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .augment.missing import nan_inject
from .seeding import derive_rng
from .timeseries import TimeSeries

CHUNK = 16  # tasks per prediction call; fixed so results do not depend on the worker count


@dataclass(frozen=True)
class EvalTask:
    history: TimeSeries
    target: np.ndarray
    season: int = 1
    id: str = ""
    dataset: str = "default"
    target_mask: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.target, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("target must be a non-empty 1-D array")
        if self.season < 1:
            raise ValueError("season must be >= 1")
        m = np.isfinite(t) if self.target_mask is None else np.asarray(self.target_mask, bool)
        object.__setattr__(self, "target", np.where(m, t, 0.0))
        object.__setattr__(self, "target_mask", m)

    @property
    def horizon(self) -> int:
        return self.target.size


# ---------------------------------------------------------------------------
# baseline and metrics


def seasonal_naive_forecast(history, season: int, horizon: int, mask=None) -> np.ndarray:
    """Repeat the most recent observed value one (or more) seasons back.

    ``history`` is a TimeSeries or an array (NaN = missing).
    """
    if isinstance(history, TimeSeries):
        y, m = history.values, history.mask
    else:
        y = np.asarray(history, dtype=float)
        m = np.isfinite(y) if mask is None else np.asarray(mask, bool)
    if not m.any():
        raise ValueError("seasonal naive needs at least one observed history value")
    if season < 1:
        raise ValueError("season must be >= 1")
    T = y.size
    last = y[np.flatnonzero(m)[-1]]
    out = np.empty(horizon)
    for k in range(1, horizon + 1):
        idx = T + k - 1 - season * math.ceil(k / season)
        while idx >= 0 and not m[idx]:
            idx -= season
        out[k - 1] = y[idx] if idx >= 0 else last
    return out


def seasonal_scale(history, season: int, mask=None) -> float:
    """In-sample mean ``|y_t - y_{t-season}|`` over observed pairs."""
    if isinstance(history, TimeSeries):
        y, m = history.values, history.mask
    else:
        y = np.asarray(history, dtype=float)
        m = np.isfinite(y) if mask is None else np.asarray(mask, bool)
    if y.size <= season:
        raise ValueError("history must be longer than the season")
    ok = m[season:] & m[:-season]
    if not ok.any():
        raise ValueError("history has no observed seasonal pair")
    return float(np.mean(np.abs(y[season:][ok] - y[:-season][ok])))


def mase(forecast, target, history, season: int, target_mask=None, history_mask=None) -> float:
    forecast = np.asarray(forecast, dtype=float)
    target = np.asarray(target, dtype=float)
    tm = np.isfinite(target) if target_mask is None else np.asarray(target_mask, bool)
    denom = seasonal_scale(history, season, history_mask)
    if denom == 0.0:
        raise ZeroDivisionError("seasonal naive in-sample error is zero")
    return float(np.mean(np.abs(target[tm] - forecast[tm]))) / denom


def quantile_loss_sum(pred, target, quantiles, mask=None) -> float:
    """``sum_t (2/|Q|) sum_q rho_q(y_t - yhat_{t,q})`` over observed steps."""
    pred = np.asarray(pred, dtype=float).reshape(len(target), -1)
    target = np.asarray(target, dtype=float)
    q = np.asarray(quantiles, dtype=float)
    m = np.ones(target.size, bool) if mask is None else np.asarray(mask, bool)
    e = target[m, None] - pred[m]
    rho = np.where(e >= 0, q * e, (q - 1) * e)
    return float(2.0 * rho.sum() / q.size)


def crps_from_quantiles(pred, target, quantiles, mask=None) -> float:
    """Mean over the (observed) horizon of ``(2/|Q|) sum_q rho_q``."""
    m = np.ones(len(target), bool) if mask is None else np.asarray(mask, bool)
    n = int(m.sum())
    if n == 0:
        raise ValueError("no observed target values")
    return quantile_loss_sum(pred, target, quantiles, m) / n


# ---------------------------------------------------------------------------
# predictors


class SeasonalNaivePredictor:
    """Every quantile equals the seasonal-naive point forecast."""

    name = "seasonal_naive"

    def __init__(self, quantiles):
        self.quantiles = tuple(quantiles)

    def predict(self, tasks: list[EvalTask]) -> list[np.ndarray]:
        out = []
        for t in tasks:
            point = seasonal_naive_forecast(t.history, t.season, t.horizon)
            out.append(np.repeat(point[:, None], len(self.quantiles), axis=1))
        return out


class OraclePredictor:
    name = "oracle"

    def __init__(self, quantiles):
        self.quantiles = tuple(quantiles)

    def predict(self, tasks):
        return [np.repeat(t.target[:, None], len(self.quantiles), axis=1) for t in tasks]


class ModelPredictor:
    """Wraps a Forecaster: robust-scales each history, predicts, inverts and sorts quantiles."""

    name = "model"

    def __init__(self, model):
        self.model = model
        self.quantiles = tuple(model.config.quantiles)
        self.crossings = 0

    def predict(self, tasks):
        import torch

        from .model.forecaster import make_batch
        from .training import safe_scaler

        torch.set_num_threads(1)
        scalers = [safe_scaler("robust", t.history) for t in tasks]
        dtype = next(self.model.parameters()).dtype
        batch = make_batch([t.history for t in tasks], [t.horizon for t in tasks], scalers, dtype=dtype)
        pred, crossings = self.model.forecast(batch)
        self.crossings += crossings
        return [pred[i, :t.horizon] for i, t in enumerate(tasks)]


def median_index(quantiles) -> int:
    return int(np.argmin(np.abs(np.asarray(quantiles) - 0.5)))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class TaskRow:
    task_id: str
    dataset: str
    season: int
    horizon: int
    crps: float
    mase: float
    loss_sum: float
    abs_sum: float
    error: str = ""


@dataclass
class MetricReport:
    predictor: str
    rows: list[TaskRow]
    datasets: dict = field(default_factory=dict)  # dataset -> {"crps": .., "mase": ..}
    normalized: dict = field(default_factory=dict)  # dataset -> {"crps": .., "mase": ..}
    overall: dict = field(default_factory=dict)  # {"crps", "mase", "crps_normalized", "mase_normalized"}


def _predict_chunk(args):
    predictor, tasks = args
    return predictor.predict(tasks)


def predict_all(predictor, tasks: list[EvalTask], workers: int = 1) -> list[np.ndarray]:
    chunks = [tasks[i:i + CHUNK] for i in range(0, len(tasks), CHUNK)]
    if workers <= 1 or len(chunks) <= 1:
        results = [predictor.predict(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_predict_chunk, [(predictor, c) for c in chunks]))
    return [p for chunk in results for p in chunk]


def score_tasks(preds, tasks: list[EvalTask], quantiles) -> list[TaskRow]:
    rows = []
    mi = median_index(quantiles)
    for i, (p, t) in enumerate(zip(preds, tasks)):
        tid = t.id or str(i)
        try:
            p = np.sort(np.asarray(p, dtype=float), axis=1)
            if p.shape != (t.horizon, len(quantiles)) or not np.all(np.isfinite(p)):
                raise ValueError(f"bad prediction shape {p.shape} or non-finite values")
            loss = quantile_loss_sum(p, t.target, quantiles, t.target_mask)
            n = int(t.target_mask.sum())
            crps = loss / n if n else float("nan")
            try:
                m = mase(p[:, mi], t.target, t.history, t.season, t.target_mask)
            except (ValueError, ZeroDivisionError) as exc:
                m, err = float("nan"), f"mase: {exc}"
            else:
                err = ""
            rows.append(TaskRow(tid, t.dataset, t.season, t.horizon, crps, m, loss,
                                float(np.abs(t.target[t.target_mask]).sum()), err))
        except Exception as exc:  # recorded per task, not fatal
            rows.append(TaskRow(tid, t.dataset, t.season, t.horizon, float("nan"), float("nan"),
                                float("nan"), float("nan"), str(exc)))
    return rows


def aggregate(rows: list[TaskRow]) -> dict:
    out = {}
    for ds in dict.fromkeys(r.dataset for r in rows):
        sub = [r for r in rows if r.dataset == ds]
        loss = math.fsum(r.loss_sum for r in sub if math.isfinite(r.loss_sum))
        absy = math.fsum(r.abs_sum for r in sub if math.isfinite(r.loss_sum))
        mases = [r.mase for r in sub if math.isfinite(r.mase)]
        out[ds] = {"crps": loss / absy if absy > 0 else float("nan"),
                   "mase": math.fsum(mases) / len(mases) if mases else float("nan")}
    return out


def geometric_mean(values) -> float:
    vals = [v for v in values if math.isfinite(v) and v > 0]
    if not vals:
        return float("nan")
    return math.exp(math.fsum(math.log(v) for v in vals) / len(vals))


def evaluate(predictor, tasks: list[EvalTask], workers: int = 1, baseline=None) -> MetricReport:
    """Score ``predictor`` and normalize by seasonal naive on the same tasks."""
    if not tasks:
        raise ValueError("no tasks to evaluate")
    quantiles = predictor.quantiles
    rows = score_tasks(predict_all(predictor, tasks, workers), tasks, quantiles)
    datasets = aggregate(rows)
    baseline = baseline or SeasonalNaivePredictor(quantiles)
    if isinstance(predictor, SeasonalNaivePredictor) and predictor.quantiles == baseline.quantiles:
        base = datasets
    else:
        base = aggregate(score_tasks(predict_all(baseline, tasks, workers), tasks, quantiles))
    normalized = {ds: {k: datasets[ds][k] / base[ds][k] if base[ds][k] else float("nan") for k in ("crps", "mase")}
                  for ds in datasets}
    overall = {
        "crps": geometric_mean(d["crps"] for d in datasets.values()),
        "mase": geometric_mean(d["mase"] for d in datasets.values()),
        "crps_normalized": geometric_mean(d["crps"] for d in normalized.values()),
        "mase_normalized": geometric_mean(d["mase"] for d in normalized.values()),
    }
    return MetricReport(getattr(predictor, "name", type(predictor).__name__), rows, datasets, normalized, overall)


def nan_robustness_curve(predictor, tasks: list[EvalTask], fractions, seed: int = 0,
                         workers: int = 1) -> list[tuple[float, float, float]]:
    """``(fraction, crps, crps / crps_at_0)`` rows, in the order given."""
    fractions = [float(f) for f in fractions]
    if any(not 0.0 <= f < 1.0 for f in fractions):
        raise ValueError("fractions must lie in [0, 1)")
    quantiles = predictor.quantiles

    def crps_at(fi: int, f: float) -> float:
        if f == 0.0:
            damaged = tasks
        else:
            damaged = []
            for i, t in enumerate(tasks):
                h = nan_inject(t.history, derive_rng(seed, "nan-sweep", fi, i), point_rate=f)
                if not h.mask.any():  # keep one observation so the forecasters stay defined
                    m = h.mask.copy()
                    m[-1] = True
                    h = h.with_values(t.history.values, m)
                damaged.append(EvalTask(h, t.target, t.season, t.id, t.dataset, t.target_mask))
        rows = score_tasks(predict_all(predictor, damaged, workers), damaged, quantiles)
        loss = math.fsum(r.loss_sum for r in rows if math.isfinite(r.loss_sum))
        absy = math.fsum(r.abs_sum for r in rows if math.isfinite(r.loss_sum))
        return loss / absy if absy > 0 else float("nan")

    base = crps_at(-1, 0.0)
    out = []
    for fi, f in enumerate(fractions):
        c = base if f == 0.0 else crps_at(fi, f)
        out.append((f, c, c / base if base else float("nan")))
    return out


# ---------------------------------------------------------------------------
# csv output

TASK_FIELDS = ("task_id", "season", "horizon", "crps", "mase", "dataset", "error")
CURVE_FIELDS = ("fraction", "crps", "crps_normalized")


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_task_report(path, report: MetricReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TASK_FIELDS)
        for r in report.rows:
            w.writerow([r.task_id, r.season, r.horizon, _fmt(r.crps), _fmt(r.mase), r.dataset, r.error])
        w.writerow(["ALL", "", sum(r.horizon for r in report.rows), _fmt(report.overall["crps"]),
                    _fmt(report.overall["mase"]), "ALL", ""])


def write_normalized_report(path, report: MetricReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "crps", "mase", "crps_normalized", "mase_normalized"])
        for ds, vals in report.datasets.items():
            n = report.normalized[ds]
            w.writerow([ds, _fmt(vals["crps"]), _fmt(vals["mase"]), _fmt(n["crps"]), _fmt(n["mase"])])
        o = report.overall
        w.writerow(["ALL", _fmt(o["crps"]), _fmt(o["mase"]), _fmt(o["crps_normalized"]), _fmt(o["mase_normalized"])])


def write_curve(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for f, c, n in rows:
            w.writerow([_fmt(f), _fmt(c), _fmt(n)])
