import csv
import math

import numpy as np
import pytest
import torch

from _support import gradient_model, toy_series
from deltacast.model import Forecaster, ModelConfig, gradients, load_checkpoint, make_batch
from deltacast.timeseries import Frequency, ScalerKind, TimeSeries
from deltacast.training import (DEFAULT_LENGTHS, OptimizerState, TrainConfig, TrainingError, adamw_step,
                                clip_by_global_norm, compose_batch, decays, lr_at, quantile_loss, sample_structure,
                                shorten, train)


def test_structure_frequencies():
    cfg = TrainConfig()
    rng = np.random.default_rng(0)
    draws = [sample_structure(rng, cfg) for _ in range(100_000)]
    totals = np.array([d.total_len for d in draws])
    for length, p in DEFAULT_LENGTHS.items():
        assert abs(np.mean(totals == length) - p) <= 0.01
    assert abs(np.mean([d.mode == "cut" for d in draws]) - 0.5) <= 0.01
    for d in draws[:5000]:
        assert d.horizon >= 1 and d.history_len >= 1
        assert d.horizon <= d.total_len // 2 and d.history_len + d.horizon == d.total_len


def test_structure_short_source_is_kept_whole():
    st = sample_structure(np.random.default_rng(1), TrainConfig(), source_len=100)
    assert st.total_len == 100 and st.mode == "none"


def test_shorten_modes():
    s = TimeSeries.from_array(np.arange(100.0), freq=Frequency.parse("H"))
    rng = np.random.default_rng(2)
    from deltacast.training import Structure
    cut = shorten(s, Structure(20, 15, 5, "cut"), rng)
    assert len(cut) == 20 and np.all(np.diff(cut.values) == 1)
    sub = shorten(s, Structure(20, 15, 5, "subsample"), rng)
    assert len(sub) == 20 and np.all(np.diff(sub.values) == 5)
    assert sub.freq == Frequency.parse("5H")


def _pool(name_lengths):
    return {name: [toy_series(n, i) for i in range(4)] for name, n in name_lengths.items()}


def test_compose_batch_single_source_and_robust_only():
    cfg = TrainConfig(length_distribution={32: 1.0}, horizon_range=(4, 8), scaler_aug_prob=0.0, nan_prob=0.0)
    b = compose_batch(_pool({"only": 64}), np.random.default_rng(3), cfg, size=50)
    assert {p["source"] for p in b.provenance} == {"only"}
    assert {sc.kind for sc in b.scalers} == {ScalerKind.ROBUST}
    assert b.target_mask.sum() == sum(p["horizon"] for p in b.provenance)


def test_compose_batch_alternative_scalers_exclude_robust():
    cfg = TrainConfig(length_distribution={32: 1.0}, horizon_range=(4, 8), scaler_aug_prob=1.0, nan_prob=0.0)
    b = compose_batch(_pool({"a": 64}), np.random.default_rng(4), cfg, size=60)
    kinds = {sc.kind for sc in b.scalers}
    assert ScalerKind.ROBUST not in kinds and len(kinds) == 3


def test_compose_batch_mixture_frequency():
    cfg = TrainConfig(length_distribution={8: 1.0}, horizon_range=(1, 2), nan_prob=0.0,
                      mixture_weights={"A": 2.0, "B": 1.0})
    sources = {"A": [toy_series(8, 0)], "B": [toy_series(8, 1)]}
    rng = np.random.default_rng(5)
    hits = total = 0
    for _ in range(30):
        b = compose_batch(sources, rng, cfg, size=1000)
        hits += sum(p["source"] == "A" for p in b.provenance)
        total += 1000
    assert abs(hits / total - 2 / 3) <= 0.02


def test_default_mixture_favours_cauker_and_augmented():
    w = TrainConfig().mixture_weights
    assert w["cauker"] == 2.0 and w["augmented"] == 3.0


def test_nan_injection_only_touches_history():
    cfg = TrainConfig(length_distribution={48: 1.0}, horizon_range=(8, 16), nan_prob=1.0,
                      nan_point_rate=(0.5, 0.5))
    b = compose_batch(_pool({"a": 96}), np.random.default_rng(6), cfg, size=20)
    hist = b.tokens.hist_len
    observed = torch.stack([b.tokens.mask[i, :hist[i]].float().mean() for i in range(20)])
    assert observed.max() < 0.9
    assert b.target_mask.sum() == sum(p["horizon"] for p in b.provenance)


def test_quantile_loss_examples():
    mask = torch.ones(1, 1, dtype=torch.bool)
    one = torch.ones(1, 1, dtype=torch.float64)
    zero = torch.zeros(1, 1, 1, dtype=torch.float64)
    assert quantile_loss(zero, one, (0.5,), mask).item() == 0.5
    assert quantile_loss(zero, one, (0.9,), mask).item() == pytest.approx(0.9)
    assert quantile_loss(zero + 1, 0 * one, (0.9,), mask).item() == pytest.approx(0.1)
    assert quantile_loss(one[..., None], one, (0.1, 0.5), mask).item() == 0.0
    with pytest.raises(ValueError):
        quantile_loss(zero, one, (0.5,), ~mask)


def test_lr_schedule_cosine():
    cfg = TrainConfig(peak_lr=1e-3, warmup_ratio=0.1)
    total = 1000
    assert lr_at(0, total, cfg) == 0.0
    assert lr_at(100, total, cfg) == pytest.approx(1e-3)
    assert lr_at(total, total, cfg) == pytest.approx(1e-5)
    lrs = np.array([lr_at(s, total, cfg) for s in range(total + 1)])
    assert np.all(np.diff(lrs[:101]) > 0) and np.all(np.diff(lrs[100:]) <= 0)
    assert np.max(np.abs(np.diff(lrs))) < 2e-5  # continuous
    mid = 100 + 450
    assert lr_at(mid, total, cfg) == pytest.approx(1e-5 + 0.5 * (1e-3 - 1e-5))
    with pytest.raises(ValueError):
        lr_at(total + 1, total, cfg)


def test_lr_schedule_variants():
    wsd = TrainConfig(peak_lr=1.0, warmup_ratio=0.003, schedule="wsd", stable_ratio=0.9)
    assert lr_at(500, 1000, wsd) == 1.0 and lr_at(1000, 1000, wsd) == pytest.approx(0.01)
    rst = TrainConfig(peak_lr=1.0, warmup_ratio=0.0, schedule="cosine_restarts", restarts=4)
    assert lr_at(250, 1000, rst) == 1.0 and lr_at(249, 1000, rst) < 0.02
    with pytest.raises(ValueError):
        TrainConfig(schedule="linear")


def test_clip_contract():
    g = {"a": torch.tensor([120.0, 160.0], dtype=torch.float64)}  # norm 200
    clipped, norm = clip_by_global_norm(g, 100.0)
    assert norm == 200.0
    assert math.isclose(float(clipped["a"].norm()), 100.0, rel_tol=0, abs_tol=1e-12)
    same, _ = clip_by_global_norm({"a": torch.ones(2)}, 100.0)
    assert torch.equal(same["a"], torch.ones(2))


def test_adamw_zero_gradient_is_noop():
    p = {"w": torch.randn(5, dtype=torch.float64)}
    before = p["w"].clone()
    st = OptimizerState.zeros_like(p)
    cfg = TrainConfig(weight_decay=0.0)
    for _ in range(5):
        adamw_step(p, {"w": torch.zeros(5, dtype=torch.float64)}, st, 1e-2, cfg)
    assert torch.equal(p["w"], before)


def test_adamw_constant_gradient_step_size():
    p = {"w": torch.zeros(3, dtype=torch.float64)}
    st = OptimizerState.zeros_like(p)
    cfg = TrainConfig(weight_decay=0.0)
    g = {"w": torch.tensor([0.3, -2.0, 5.0], dtype=torch.float64)}
    for _ in range(200):
        prev = p["w"].clone()
        adamw_step(p, g, st, 1e-3, cfg)
    delta = (p["w"] - prev).abs()
    assert torch.all((delta / 1e-3 - 1).abs() <= 0.01)


def test_weight_decay_exclusions():
    assert decays("blocks.0.mixer.q_proj.weight")
    for name in ("blocks.0.norm1.weight", "head.bias", "nan_embedding", "blocks.1.h0", "final_norm.weight"):
        assert not decays(name)


def test_accumulation_matches_large_batch():
    model = gradient_model(3)
    series = [toy_series(20 + 3 * i, i) for i in range(4)]
    g = torch.Generator().manual_seed(0)
    target = torch.randn(4, 6, generator=g, dtype=torch.float64)
    tmask = torch.ones(4, 6, dtype=torch.bool)
    _, full = gradients(model, make_batch(series, 6, dtype=torch.float64), target, tmask)
    _, a = gradients(model, make_batch(series[:2], 6, dtype=torch.float64), target[:2], tmask[:2], scale=0.5)
    _, b = gradients(model, make_batch(series[2:], 6, dtype=torch.float64), target[2:], tmask[2:], scale=0.5)
    for k in full:
        assert (full[k] - (a[k] + b[k])).abs().max() <= 1e-10


# ---------------------------------------------------------------------------
# training loop


def _tiny_run_config(**kw):
    base = dict(iterations=6, batch_size=4, accumulation=2, peak_lr=1e-3, warmup_ratio=0.2,
                length_distribution={32: 0.5, 48: 0.5}, horizon_range=(2, 8), nan_prob=0.5, seed=3, log_every=0)
    base.update(kw)
    return TrainConfig(**base)


def _tiny_model():
    torch.manual_seed(0)
    return Forecaster(ModelConfig(embed_dim=16, layers=1, heads=2, householders=1, chunk_len=8))


def test_zero_iterations_writes_initial_checkpoint(tmp_path):
    res = train(_tiny_model(), _pool({"a": 64}), _tiny_run_config(iterations=0), out_dir=tmp_path)
    assert res.trace == [] and [p.name for p in res.checkpoints] == ["step_0000000.ckpt"]


def test_training_is_deterministic_and_writes_trace(tmp_path):
    a = train(_tiny_model(), _pool({"a": 64}), _tiny_run_config(), out_dir=tmp_path / "a")
    b = train(_tiny_model(), _pool({"a": 64}), _tiny_run_config(), out_dir=tmp_path / "b")
    assert a.trace == b.trace
    assert (tmp_path / "a" / "loss.csv").read_bytes() == (tmp_path / "b" / "loss.csv").read_bytes()
    assert (tmp_path / "a" / "step_0000006.ckpt").read_bytes() == (tmp_path / "b" / "step_0000006.ckpt").read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a" / "loss.csv")))
    assert [int(r["step"]) for r in rows] == list(range(6))
    cfg = _tiny_run_config()
    assert [float(r["lr"]) for r in rows] == [lr_at(s + 1, 6, cfg) for s in range(6)]


def test_resume_reproduces_trace(tmp_path):
    cfg = _tiny_run_config(iterations=8, checkpoint_every=3)
    full = train(_tiny_model(), _pool({"a": 64}), cfg, out_dir=tmp_path / "full")
    part = train(_tiny_model(), _pool({"a": 64}), cfg, out_dir=tmp_path / "part", stop_after=3)
    assert part.checkpoints[-1].name == "step_0000003.ckpt"
    model, _, meta = load_checkpoint(part.checkpoints[-1])
    assert meta["step"] == 3
    rest = train(model, _pool({"a": 64}), cfg, out_dir=tmp_path / "rest", resume=part.checkpoints[-1])
    assert [s for s, _, _ in rest.trace] == list(range(3, 8))
    for (s1, lr1, l1), (s2, lr2, l2) in zip(full.trace[3:], rest.trace):
        assert s1 == s2 and lr1 == lr2 and abs(l1 - l2) <= 1e-6


def test_non_finite_loss_aborts_with_provenance():
    bad = TimeSeries.from_array(np.r_[np.ones(40), 1e38 * np.ones(24)], freq=Frequency.parse("H"), id="bad")
    model = _tiny_model()
    cfg = _tiny_run_config(nan_prob=0.0, length_distribution={64: 1.0}, horizon_range=(20, 24))
    with pytest.raises(TrainingError, match=r"step 0.*bad"):
        train(model, {"a": [bad]}, cfg)
