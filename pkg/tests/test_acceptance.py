"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

The lines are repeated at the end of the run in an "acceptance criteria" summary section.
"""

import csv
import json
import math
import time

import numpy as np
import pytest
import torch
from scipy.stats import qmc

from _support import (fd_agreement, finite_difference_check, gradient_model, keyed_sampler, random_recurrence_config,
                      random_recurrence_inputs, report, toy_batch)
from deltacast.augment import (DEFAULT_CATEGORY_WEIGHTS, augment_pipeline, inclusion_probability, replay,
                               sample_categories)
from deltacast.augment.transforms import censor, negation, quantize, reversal
from deltacast.cli import main
from deltacast.evaluation import (CURVE_FIELDS, EvalTask, ModelPredictor, SeasonalNaivePredictor, crps_from_quantiles,
                                  evaluate, mase, nan_robustness_curve, seasonal_naive_forecast, write_curve)
from deltacast.experiments import sine_corpus, toy_model_config, toy_train_config
from deltacast.generators import generate
from deltacast.gp import RBF, Sum, White, gram, sample_gp
from deltacast.model import (DEFAULT_QUANTILES, Forecaster, ModelConfig, householder_step, recurrence_chunkwise,
                             recurrence_sequential, transition_operator)
from deltacast.sde import OUConfig, RegimeParams, fbm_increments, simulate_ou_path, simulate_regime_chain
from deltacast.seeding import derive_rng
from deltacast.timeseries import Frequency, TimeSeries
from deltacast.training import DEFAULT_LENGTHS, TrainConfig, batch_loss, sample_structure, train

F64 = torch.float64


def _unit(g, *shape):
    return torch.nn.functional.normalize(torch.randn(*shape, generator=g, dtype=F64), dim=-1)


# ---------------------------------------------------------------------------
# 1-4: linear RNN


def test_criterion_01_recurrence_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.process_time()
    err64 = err32 = 0.0
    for i in range(50):
        shape, chunk = random_recurrence_config(rng)
        args = random_recurrence_inputs(torch.Generator().manual_seed(i), **shape)
        o_seq, s_seq = recurrence_sequential(*args)
        o_chk, s_chk = recurrence_chunkwise(*args, chunk_len=chunk)
        err64 = max(err64, float((o_seq - o_chk).abs().max()), float((s_seq - s_chk).abs().max()))
        o32, s32 = recurrence_chunkwise(*[a.float() for a in args], chunk_len=chunk)
        err32 = max(err32, float((o_seq - o32.double()).abs().max()), float((s_seq - s32.double()).abs().max()))
    cpu = time.process_time() - t0
    ok = err64 <= 1e-10 and err32 <= 1e-4 and cpu <= 120
    assert report(1, "recurrence equivalence", ok, f"f64 {err64:.2e}, f32 {err32:.2e}, {cpu:.0f}s CPU")


def test_criterion_02_gradient_correctness():
    t0 = time.process_time()
    model = gradient_model(0)
    assert model.config.state_weaving
    batch, target, tmask = toy_batch([32, 32], [8, 8])
    rel, absolute = finite_difference_check(model, batch, target, tmask, n_coords=200, h=1e-5, seed=0)
    agree = fd_agreement(rel, absolute)
    frac = float(np.mean(agree))
    floored = int(np.sum(agree & (rel > 1e-4)))
    cpu = time.process_time() - t0
    ok = frac >= 0.99 and cpu <= 300
    assert report(2, "gradient correctness", ok,
                  f"{frac:.1%} of 200 coordinates agree, median relative error {np.median(rel):.1e}, "
                  f"{floored} agree only at the round-off floor, {cpu:.0f}s CPU")


def test_criterion_03_householder_algebra():
    g = torch.Generator().manual_seed(3)
    norm_err = 0.0
    for _ in range(200):
        k = _unit(g, 16)
        x = torch.randn(16, 4, generator=g, dtype=F64)
        y = householder_step(x, k, torch.zeros(4, dtype=F64), 2.0)
        norm_err = max(norm_err, float((y.norm(dim=0) - x.norm(dim=0)).abs().max()))
    expansion = 0.0
    for _ in range(500):
        n = int(torch.randint(1, 5, (1,), generator=g))
        A = transition_operator(_unit(g, n, 12), 2.0 * torch.rand(n, generator=g, dtype=F64))
        expansion = max(expansion, float(torch.linalg.matrix_norm(A, ord=2)) - 1.0)
    neg_err = 0.0
    for _ in range(50):
        k = _unit(g, 1, 10)
        A = transition_operator(k, torch.tensor([2.0], dtype=F64))
        neg_err = max(neg_err, float((A @ k[0] + k[0]).abs().max()))
    ok = norm_err <= 1e-10 and expansion <= 1e-12 and neg_err <= 1e-12
    assert report(3, "householder algebra", ok,
                  f"norm drift {norm_err:.1e}, max expansion {expansion:.1e}, eigen -1 residual {neg_err:.1e}")


def test_criterion_04_parameter_count():
    torch.manual_seed(0)
    n = Forecaster(ModelConfig()).parameter_count()
    ratio = n / 34.69e6
    assert report(4, "parameter count", abs(ratio - 1) <= 0.10, f"{n:,} parameters, {ratio:.3f} of 34.69M")


# ---------------------------------------------------------------------------
# 5-8: stochastic processes and gaussian processes


def _const_ou(theta, mu, sigma, **kw):
    return OUConfig(regime=RegimeParams((theta, theta), (mu, mu), (sigma, sigma)), **kw)


def test_criterion_05_ou_statistics():
    y, _ = simulate_ou_path(_const_ou(2.0, 1.0, 0.5, dt=0.01, length=200_000, burn_in=0.1), np.random.default_rng(0))
    mean, var = float(y.mean()), float(y.var())
    target = 0.5**2 / (2 * 2.0)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        n = int(round(1.0 / dt))
        cfg = _const_ou(2.0, 1.0, 0.0, dt=dt, length=n + 1, burn_in=0.0, initial_value=3.0)
        path, _ = simulate_ou_path(cfg, np.random.default_rng(0))
        errs.append(abs(path[-1] - (1.0 + 2.0 * math.exp(-2.0))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = (y.size == 200_000 and abs(mean - 1.0) <= 0.05 and abs(var / target - 1) <= 0.10
          and all(1.8 <= r <= 2.2 for r in ratios))
    assert report(5, "OU statistics", ok, f"mean {mean:.4f}, variance {var:.5f} vs {target}, "
                  f"error ratios {', '.join(f'{r:.2f}' for r in ratios)}")


def test_criterion_06_fbm():
    dt = 0.01
    slopes = {}
    for h in (0.3, 0.5, 0.7):
        b = np.cumsum(fbm_increments(np.random.default_rng(2), 60_000, h, dt))
        lags = np.arange(1, 65)
        v = [np.var(b[k:] - b[:-k]) for k in lags]
        slopes[h] = float(np.polyfit(np.log(lags * dt), np.log(v), 1)[0])
    x = fbm_increments(np.random.default_rng(3), 100_000, 0.5, 0.04, max_length=2**17)
    z = x - x.mean()
    rho = float(np.dot(z[:-1], z[1:]) / np.dot(z, z))
    ok = all(abs(s - 2 * h) <= 0.1 for h, s in slopes.items()) and abs(rho) < 0.01
    assert report(6, "fBm", ok, ", ".join(f"H={h} slope {s:.3f}" for h, s in slopes.items()) + f", rho1 {rho:.4f}")


def test_criterion_07_regime_chain():
    path = simulate_regime_chain(np.random.default_rng(6), 1_000_000, 0.95, 0.9)
    prev, nxt = path[:-1], path[1:]
    stay0 = float(np.mean(nxt[prev == 0] == 0))
    stay1 = float(np.mean(nxt[prev == 1] == 1))
    ok = abs(stay0 - 0.95) <= 0.01 and abs(stay1 - 0.9) <= 0.01
    assert report(7, "regime chain", ok, f"stay 0: {stay0:.4f} vs 0.95, stay 1: {stay1:.4f} vs 0.9")


def test_criterion_08_gp_correctness():
    white_ok = np.array_equal(gram(White(1.0), np.linspace(0, 1, 9)), np.eye(9))
    rbf_err = abs(gram(RBF(1.0), np.array([0.0, 1.0]))[0, 1] - math.exp(-0.5))
    k = Sum((RBF(0.8), White(0.05)))
    t = np.linspace(0, 2, 8)
    paths = sample_gp(k, t, np.random.default_rng(8), n_samples=20_000)
    emp = paths @ paths.T / paths.shape[1]
    g = gram(k, t)
    frob = float(np.linalg.norm(emp - g) / np.linalg.norm(g))
    ok = white_ok and rbf_err <= 1e-12 and frob < 0.05
    assert report(8, "GP correctness", ok,
                  f"white identity {white_ok}, RBF lag-1 error {rbf_err:.1e}, covariance error {frob:.3f}")


# ---------------------------------------------------------------------------
# 9-11: augmentation, metrics, structure sampling


def test_criterion_09_augmentation_contracts():
    inv = all(np.array_equal(f(f(x)), x) for seed in range(20)
              for x in [np.random.default_rng(seed).normal(size=97) * 10.0 ** seed] for f in (reversal, negation))
    cens = True
    for seed in range(50):
        rng = np.random.default_rng(seed)
        x = rng.standard_t(3, size=200)
        q = rng.uniform(0.5, 0.99)
        cens &= bool(censor(x, rng, q=q).max() <= np.quantile(x, q))
    quant = True
    for seed in range(30):
        x = np.random.default_rng(seed).normal(size=300)
        out = quantize(x, np.random.default_rng(seed), n_levels=8)
        u = qmc.Sobol(d=1, scramble=True, seed=np.random.default_rng(seed)).random(8)[:, 0]
        quant &= len(np.unique(out)) <= 8 and bool(np.all(np.isin(out, x.min() + u * (x.max() - x.min()))))

    w, k_range, runs = DEFAULT_CATEGORY_WEIGHTS, (2, 5), 10_000
    rng_a, rng_b = np.random.default_rng(0), np.random.default_rng(1)
    got, oracle = dict.fromkeys(w, 0), dict.fromkeys(w, 0)
    for _ in range(runs):
        for c in sample_categories(rng_a, w, k_range):
            got[c] += 1
        for c in keyed_sampler(rng_b, w, k_range):
            oracle[c] += 1
    freq_err = max(max(abs(got[c] - oracle[c]) / runs, abs(got[c] / runs - inclusion_probability(w, k_range, c)))
                   for c in w)

    pool = [generate("sine_wave", derive_rng(0, "pool", i), 96, Frequency.parse("D"))[0] for i in range(12)]
    replayed = all(np.array_equal(replay(out.provenance, pool).values, out.values)
                   for out in (augment_pipeline(pool, derive_rng(1, "aug", i)) for i in range(30)))
    ok = inv and cens and quant and freq_err <= 0.02 and replayed
    assert report(9, "augmentation contracts", ok, f"involutions {inv}, censor {cens}, quantize {quant}, "
                  f"category frequency error {freq_err:.4f}, replay {replayed}")


def test_criterion_10_metric_oracles():
    mase_ex = mase([2, 4], [3, 3], [1, 2, 2, 3], 2)
    crps_ex = crps_from_quantiles(np.zeros((1, 9)), np.array([1.0]), DEFAULT_QUANTILES)
    naive_ex = seasonal_naive_forecast([1, 2, 3, 4], 2, 3).tolist()
    rng = np.random.default_rng(10)
    tasks = []
    for i in range(60):
        v = np.sin(np.arange(72) / rng.uniform(1, 4)) + rng.normal(size=72) * 0.3
        tasks.append(EvalTask(TimeSeries.from_array(v[:60]), v[60:], season=6, id=f"t{i}", dataset=f"d{i % 3}"))
    rep = evaluate(SeasonalNaivePredictor(DEFAULT_QUANTILES), tasks)
    self_norm = [rep.overall["crps_normalized"], rep.overall["mase_normalized"]]
    self_norm += [v for d in rep.normalized.values() for v in d.values()]
    mae_same = 0
    for _ in range(1000):
        h = int(rng.integers(1, 30))
        y, p = rng.normal(size=h) * 10, rng.normal(size=h) * 10
        mae_same += crps_from_quantiles(p[:, None], y, (0.5,)) == np.mean(np.abs(y - p))
    ok = mase_ex == 1.0 and crps_ex == 1.0 and naive_ex == [3, 4, 3] and all(v == 1.0 for v in self_norm) \
        and mae_same == 1000
    assert report(10, "metric oracles", ok, f"MASE {mase_ex}, CRPS {crps_ex}, naive {naive_ex}, "
                  f"self-normalized all 1.0: {all(v == 1.0 for v in self_norm)}, median CRPS == MAE {mae_same}/1000")


def test_criterion_11_structure_sampling():
    cfg = TrainConfig()
    rng = np.random.default_rng(11)
    draws = [sample_structure(rng, cfg) for _ in range(100_000)]
    totals = np.array([d.total_len for d in draws])
    errs = {n: abs(float(np.mean(totals == n)) - p) for n, p in DEFAULT_LENGTHS.items()}
    cut = float(np.mean([d.mode == "cut" for d in draws]))
    ok = max(errs.values()) <= 0.01 and abs(cut - 0.5) <= 0.01
    assert report(11, "structure sampling", ok, f"max length-frequency error {max(errs.values()):.4f}, "
                  f"cut share {cut:.4f}")


# ---------------------------------------------------------------------------
# 12-13: toy learning and the NaN sweep


def _sine_tasks():
    held = sine_corpus(50, 128, 1, "held")
    return [EvalTask(s.slice(0, 96), s.values[96:120], 24, s.id) for s in held]


@pytest.fixture(scope="module")
def toy_run():
    torch.set_num_threads(1)
    corpus = {"sine": sine_corpus(512, 128, 0)}
    cfg = toy_train_config(log_every=0)
    torch.manual_seed(0)
    model = Forecaster(toy_model_config())
    t0 = time.process_time()
    initial = batch_loss(model, corpus, cfg, range(20))
    result = train(model, corpus, cfg)
    cpu = time.process_time() - t0
    return model, initial, result, cpu


def test_criterion_12_toy_learning(toy_run):
    model, initial, result, cpu = toy_run
    final = float(np.mean([loss for _, _, loss in result.trace[-50:]]))
    tasks = _sine_tasks()
    ours = evaluate(ModelPredictor(model), tasks).overall["mase"]
    naive = evaluate(SeasonalNaivePredictor(model.config.quantiles), tasks).overall["mase"]
    ok = len(result.trace) == 2000 and final <= 0.2 * initial and ours / naive < 1.0 and cpu <= 900
    assert report(12, "toy learning", ok, f"initial {initial:.4f}, smoothed final {final:.4f} "
                  f"(ratio {final / initial:.3f}), MASE vs seasonal naive {ours / naive:.3f}, {cpu:.0f}s CPU")


def test_criterion_13_nan_sweep(toy_run, tmp_path):
    model = toy_run[0]
    fractions = [0.0, 0.3, 0.6, 0.9]
    rows = nan_robustness_curve(ModelPredictor(model), _sine_tasks(), fractions, seed=13)
    path = tmp_path / "curve.csv"
    write_curve(path, rows)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        body = [[float(x) for x in r] for r in reader]
    schema = header == CURVE_FIELDS and [r[0] for r in body] == fractions and all(
        len(r) == 3 and math.isfinite(r[1]) and math.isfinite(r[2]) for r in body)
    zero = body[0][2]
    direction = "degrades" if body[-1][2] > 1.0 else "does not degrade"
    ok = schema and zero == 1.0
    assert report(13, "NaN sweep", ok, f"0% entry {zero!r}, schema valid {schema}, "
                  f"curve {', '.join(f'{r[2]:.3f}' for r in body)} ({direction} at 90%)")


# ---------------------------------------------------------------------------
# 14: determinism through the command line


def test_criterion_14_determinism(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "master_seed": 14,
        "model": {"embed_dim": 16, "layers": 2, "heads": 2, "householders": 2, "chunk_len": 8},
        "training": {"iterations": 4, "batch_size": 4, "length_distribution": {"96": 1.0},
                     "horizon_range": [4, 16], "log_every": 0},
        "evaluation": {"horizon": 16, "nan_fractions": [0.0, 0.5]},
    }))
    common = ["--config", str(config)]
    outputs = {}

    def run(tag, argv, path):
        assert main(argv) == 0, tag
        outputs[tag] = path.read_bytes()

    for fmt in ("jsonl", "bin"):
        for workers in ("1", "1", "2", "3"):
            path = tmp_path / f"g-{fmt}-{workers}-{len(outputs)}.{fmt}"
            run(f"gen-{fmt}-{len(outputs)}", ["generate", *common, "--count", "24", "--length", "160",
                                              "--workers", workers, "--format", fmt, "--out", str(path)], path)
    data = str(next(tmp_path.glob("g-jsonl-1-*.jsonl")))
    for rep in range(2):
        out = tmp_path / f"train{rep}"
        run(f"train-{rep}", ["train", *common, "--data", data, "--out", str(out)], out / "step_0000004.ckpt")
        outputs[f"trace-{rep}"] = (out / "loss.csv").read_bytes()
    ckpt = str(tmp_path / "train0" / "step_0000004.ckpt")
    for i, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"eval{i}"
        run(f"eval-{i}", ["evaluate", *common, "--data", data, "--checkpoint", ckpt, "--workers", workers,
                          "--out", str(out)], out / "report.csv")
        path = tmp_path / f"curve{i}.csv"
        run(f"sweep-{i}", ["nan-sweep", *common, "--data", data, "--checkpoint", ckpt, "--workers", workers,
                           "--out", str(path)], path)

    groups = {}
    for tag, blob in outputs.items():
        groups.setdefault(tag.rsplit("-", 1)[0], set()).add(blob)
    bad = sorted(g for g, blobs in groups.items() if len(blobs) != 1)
    assert report(14, "determinism", not bad, f"{len(outputs)} outputs in {len(groups)} groups, "
                  f"non-identical groups: {bad or 'none'}")
