"""Command-line entry point.

Exit codes: 0 success, 1 usage error (bad flag, bad config), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .dataset_io import read_dataset, write_dataset
from .evaluation import (EvalTask, ModelPredictor, SeasonalNaivePredictor, evaluate, nan_robustness_curve,
                         write_curve, write_normalized_report, write_task_report)
from .generators import GenerationError, GeneratorKind, generate
from .seeding import derive_rng
from .timeseries import Frequency, TimeSeries, seasonal_period

log = logging.getLogger("deltacast")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
GENERATION_RETRIES = 5
GEN_CHUNK = 8  # slots per worker task


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# generation


def generate_item(seed: int, index: int, kinds: list[str], weights: np.ndarray, length: int,
                  freqs: tuple[str, ...]) -> list[TimeSeries]:
    """Series for corpus slot ``index``; a failed draw is retried on a fresh sub-stream."""
    for attempt in range(GENERATION_RETRIES):
        rng = derive_rng(seed, "generate", index, attempt)
        kind = kinds[int(rng.choice(len(kinds), p=weights))]
        freq = Frequency.parse(freqs[int(rng.integers(len(freqs)))])
        try:
            out = generate(kind, rng, length, freq)
        except GenerationError:
            continue
        if len(out) == 1:
            return [out[0].with_values(out[0].values, id=f"{index:06d}-{kind}")]
        return [s.with_values(s.values, id=f"{index:06d}-{kind}-{c}") for c, s in enumerate(out)]
    raise GenerationError(f"slot {index}: {GENERATION_RETRIES} generation attempts failed")


def _generate_slots(args):
    seed, indices, kinds, weights, length, freqs = args
    return [generate_item(seed, i, kinds, weights, length, freqs) for i in indices]


def generate_corpus(cfg: RunConfig, count: int, workers: int = 1) -> list[TimeSeries]:
    """First ``count`` series of the slot sequence; independent of ``workers``."""
    g = cfg.generation
    kinds = [k for k, w in g.kinds.items() if w > 0]
    weights = np.array([g.kinds[k] for k in kinds], dtype=float)
    weights /= weights.sum()
    out: list[TimeSeries] = []
    next_slot = 0
    while len(out) < count:
        need = count - len(out)
        slots = list(range(next_slot, next_slot + need))
        next_slot += need
        args = [(cfg.master_seed, slots[i:i + GEN_CHUNK], kinds, weights, g.length, g.freqs)
                for i in range(0, len(slots), GEN_CHUNK)]
        if workers > 1 and len(args) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunks = list(pool.map(_generate_slots, args))
        else:
            chunks = [_generate_slots(a) for a in args]
        for chunk in chunks:
            for item in chunk:
                out.extend(item)
    return out[:count]


# ---------------------------------------------------------------------------
# tasks


def tasks_from_series(series: list[TimeSeries], horizon: int, season: int | None) -> list[EvalTask]:
    """Hold out the last ``horizon`` points of every series long enough to keep a history."""
    tasks = []
    for i, s in enumerate(series):
        n = len(s)
        if n <= horizon or not s.mask[:n - horizon].any():
            log.warning("skipping series %r: too short or no observed history", s.id)
            continue
        m = season or seasonal_period(s.freq)
        tasks.append(EvalTask(s.slice(0, n - horizon), s.values[n - horizon:], m, s.id or str(i),
                              target_mask=s.mask[n - horizon:]))
    if not tasks:
        raise ValueError("no usable evaluation tasks")
    return tasks


class PredictionFilePredictor:
    """Serves quantiles from a predictions JSONL file, keyed by task id."""

    name = "predictions"

    def __init__(self, path):
        self.table = {}
        self.quantiles = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                q = tuple(float(x) for x in rec["quantiles"])
                if self.quantiles is None:
                    self.quantiles = q
                elif q != self.quantiles:
                    raise ValueError("predictions use inconsistent quantile levels")
                self.table[rec["task_id"]] = np.asarray(rec["values"], dtype=float)
        if self.quantiles is None:
            raise ValueError(f"{path}: no predictions")

    def predict(self, tasks):
        out = []
        for t in tasks:
            if t.id not in self.table:
                out.append(np.full((t.horizon, len(self.quantiles)), np.nan))
            else:
                out.append(self.table[t.id])
        return out


def write_predictions(path, ids, horizons, quantiles, preds) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tid, h, p in zip(ids, horizons, preds):
            rec = {"task_id": tid, "horizon": int(h), "quantiles": list(quantiles),
                   "values": [[float(x) for x in row] for row in p]}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_model(path):
    from .model.checkpoint import load_checkpoint

    model, _, _ = load_checkpoint(path)
    model.eval()
    return model


def summarize(series: list[TimeSeries]) -> dict:
    lengths = np.array([len(s) for s in series])
    observed = sum(int(s.mask.sum()) for s in series)
    total = int(lengths.sum())
    obs = np.concatenate([s.observed for s in series]) if series else np.zeros(0)
    freqs: dict[str, int] = {}
    for s in series:
        freqs[str(s.freq)] = freqs.get(str(s.freq), 0) + 1
    return {
        "count": len(series),
        "length": {"min": int(lengths.min()), "mean": float(lengths.mean()), "max": int(lengths.max())}
        if len(series) else None,
        "missing_fraction": 1.0 - observed / total if total else 0.0,
        "value": {"mean": float(obs.mean()), "std": float(obs.std()), "min": float(obs.min()),
                  "max": float(obs.max())} if obs.size else None,
        "freqs": dict(sorted(freqs.items())),
    }


# ---------------------------------------------------------------------------
# subcommands


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(master_seed=args.seed)
    return cfg


def _out(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.paths.out
    if not out:
        raise UsageError("--out is required (or set paths.out in the config)")
    return Path(out)


def _data(args, cfg: RunConfig) -> list[str]:
    data = list(getattr(args, "data", None) or cfg.paths.data)
    if not data:
        raise UsageError("--data is required (or set paths.data in the config)")
    return data


def _checkpoint(args, cfg: RunConfig) -> str | None:
    return getattr(args, "checkpoint", None) or cfg.paths.checkpoint


def cmd_generate(args) -> int:
    cfg = _config(args)
    g = cfg.generation
    changes = {}
    if args.length is not None:
        changes["length"] = args.length
    if args.freq:
        changes["freqs"] = tuple(args.freq)
    if args.kinds:
        changes["kinds"] = {k: 1.0 for k in args.kinds}
    if changes:
        cfg = cfg.replace(generation=replace(g, **changes))
    count = cfg.generation.count if args.count is None else args.count
    series = generate_corpus(cfg, count, args.workers)
    write_dataset(series, _out(args, cfg), args.format)
    log.info("wrote %d series", len(series))
    return EXIT_OK


def cmd_augment(args) -> int:
    from .augment.pipeline import augment_pipeline

    cfg = _config(args)
    pool = [s for path in _data(args, cfg) for s in read_dataset(path)]
    count = len(pool) if args.count is None else args.count
    out = []
    for i in range(count):
        s = augment_pipeline(pool, derive_rng(cfg.master_seed, "augment", i), cfg.augmentation)
        out.append(s.with_values(s.values, id=f"aug-{i:06d}"))
    write_dataset(out, _out(args, cfg), args.format)
    return EXIT_OK


def cmd_train(args) -> int:
    import torch

    from .model.forecaster import Forecaster
    from .training import train

    cfg = _config(args)
    tcfg = replace(cfg.training, seed=cfg.master_seed)
    if args.iterations is not None:
        tcfg = replace(tcfg, iterations=args.iterations)
    paths = list(args.data or cfg.paths.data)
    if paths:
        sources = {Path(p).stem: read_dataset(p) for p in paths}
    else:
        sources = {"generated": generate_corpus(cfg, cfg.generation.count, args.workers)}
    torch.manual_seed(cfg.master_seed)
    model = Forecaster(cfg.model)
    out = _out(args, cfg)
    result = train(model, sources, tcfg, out_dir=out, resume=args.resume)
    log.info("trained %d steps; last checkpoint %s", len(result.trace),
             result.checkpoints[-1] if result.checkpoints else None)
    return EXIT_OK


def cmd_forecast(args) -> int:
    cfg = _config(args)
    ckpt = _checkpoint(args, cfg)
    if not ckpt:
        raise UsageError("--checkpoint is required")
    model = load_model(ckpt)
    horizon = args.horizon or cfg.evaluation.horizon
    series = [s for path in _data(args, cfg) for s in read_dataset(path)]
    if args.holdout:
        tasks = tasks_from_series(series, horizon, cfg.evaluation.season)
    else:
        tasks = [EvalTask(s, np.zeros(horizon), 1, s.id or str(i)) for i, s in enumerate(series)]
    predictor = ModelPredictor(model)
    from .evaluation import predict_all

    preds = predict_all(predictor, tasks, args.workers)
    write_predictions(_out(args, cfg), [t.id for t in tasks], [t.horizon for t in tasks],
                      predictor.quantiles, preds)
    return EXIT_OK


def _predictor(args, cfg):
    ckpt = _checkpoint(args, cfg)
    if getattr(args, "predictions", None):
        return PredictionFilePredictor(args.predictions)
    if args.baseline or not ckpt:
        return SeasonalNaivePredictor(cfg.model.quantiles)
    return ModelPredictor(load_model(ckpt))


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    series = [s for path in _data(args, cfg) for s in read_dataset(path)]
    tasks = tasks_from_series(series, args.horizon or cfg.evaluation.horizon, args.season or cfg.evaluation.season)
    report = evaluate(_predictor(args, cfg), tasks, workers=args.workers)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_task_report(out / "report.csv", report)
    write_normalized_report(out / "normalized.csv", report)
    print(json.dumps({"predictor": report.predictor, **report.overall}, sort_keys=True))
    return EXIT_OK


def cmd_nan_sweep(args) -> int:
    cfg = _config(args)
    series = [s for path in _data(args, cfg) for s in read_dataset(path)]
    tasks = tasks_from_series(series, args.horizon or cfg.evaluation.horizon, args.season or cfg.evaluation.season)
    fractions = args.fractions if args.fractions is not None else cfg.evaluation.nan_fractions
    rows = nan_robustness_curve(_predictor(args, cfg), tasks, fractions, seed=cfg.master_seed,
                                workers=args.workers)
    write_curve(_out(args, cfg), rows)
    return EXIT_OK


def cmd_inspect(args) -> int:
    cfg = _config(args)
    series = [s for path in _data(args, cfg) for s in read_dataset(path)]
    text = json.dumps(summarize(series), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _fractions(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid fraction list {text!r}") from None


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid int value {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> Parser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = Parser(prog="deltacast", description="Synthetic-data forecasting toolkit.", formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    sub.required = True

    def add(name, fn, help_text, out_help="output path"):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        p.add_argument("--config", default=None, help="run-config JSON file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", default=None, help=out_help)
        p.set_defaults(func=fn)
        return p

    p = add("generate", cmd_generate, "sample a synthetic corpus into a dataset file")
    p.add_argument("--count", type=int, default=None, help="number of series (default: generation.count)")
    p.add_argument("--length", type=_positive, default=None, help="series length (default: generation.length)")
    p.add_argument("--freq", action="append", default=None, help="frequency string; repeatable")
    p.add_argument("--kinds", nargs="+", choices=[k.value for k in GeneratorKind], default=None,
                   help="restrict to these generators (equal weights)")
    p.add_argument("--workers", type=_positive, default=1, help="worker processes")
    p.add_argument("--format", choices=("jsonl", "bin"), default=None, help="dataset format (default: by suffix)")

    p = add("augment", cmd_augment, "augment a dataset with the offline pipeline")
    p.add_argument("--data", action="append", default=None, help="input dataset; repeatable")
    p.add_argument("--count", type=int, default=None, help="number of outputs (default: input size)")
    p.add_argument("--format", choices=("jsonl", "bin"), default=None, help="dataset format (default: by suffix)")

    p = add("train", cmd_train, "train a forecaster; writes checkpoints and loss.csv", "output directory")
    p.add_argument("--data", action="append", default=None,
                   help="training dataset, one source per file (default: generate from the config)")
    p.add_argument("--iterations", type=int, default=None, help="override training.iterations")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--workers", type=_positive, default=1, help="worker processes for corpus generation")

    p = add("forecast", cmd_forecast, "write quantile forecasts as JSON Lines")
    p.add_argument("--checkpoint", default=None, help="model checkpoint")
    p.add_argument("--data", action="append", default=None, help="dataset of histories; repeatable")
    p.add_argument("--horizon", type=_positive, default=None, help="forecast length (default: evaluation.horizon)")
    p.add_argument("--holdout", action="store_true",
                   help="forecast the last HORIZON points of each series instead of beyond its end")
    p.add_argument("--workers", type=_positive, default=1, help="worker processes")

    for name, fn, text, out_help in (
        ("evaluate", cmd_evaluate, "score forecasts against held-out targets", "report directory"),
        ("nan-sweep", cmd_nan_sweep, "CRPS as a function of the missing-value fraction", "curve CSV path"),
    ):
        p = add(name, fn, text, out_help)
        p.add_argument("--data", action="append", default=None, help="task dataset; repeatable")
        p.add_argument("--checkpoint", default=None, help="model checkpoint")
        p.add_argument("--baseline", action="store_true", help="use the seasonal-naive baseline")
        p.add_argument("--horizon", type=_positive, default=None, help="held-out length (default: evaluation.horizon)")
        p.add_argument("--season", type=_positive, default=None, help="season (default: from each frequency)")
        p.add_argument("--workers", type=_positive, default=1, help="worker processes")
        if name == "evaluate":
            p.add_argument("--predictions", default=None, help="predictions JSONL from `forecast --holdout`")
        else:
            p.add_argument("--fractions", type=_fractions, default=None,
                           help="comma-separated missing fractions (default: evaluation.nan_fractions)")

    p = add("inspect", cmd_inspect, "print summary statistics of a dataset", "write the summary here")
    p.add_argument("--data", action="append", default=None, help="dataset; repeatable")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
