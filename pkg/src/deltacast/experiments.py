"""Desk-scale experiment presets: a noiseless modulated-sine corpus and a toy model/training config."""

from __future__ import annotations

import numpy as np

from .generators.waveforms import gen_sine
from .model.forecaster import ModelConfig
from .seeding import derive_rng
from .timeseries import Frequency, TimeSeries
from .training import TrainConfig

TOY_FREQ = Frequency.parse("H")


SINE_PERIODS = (4.0, 24.0)


def sine_corpus(n: int, length: int, seed: int, stream: str = "sine-corpus") -> list[TimeSeries]:
    """Modulated sines (one or two components) without noise or trend."""
    out = []
    for i in range(n):
        s = gen_sine(derive_rng(seed, stream, i), length, TOY_FREQ, noise=False, trend=False,
                     max_components=2, period_range=SINE_PERIODS)
        out.append(s.with_values(s.values, id=f"{stream}-{i}"))
    return out


def toy_model_config(**overrides) -> ModelConfig:
    base = dict(embed_dim=64, layers=2, heads=2, householders=2, conv_kernel=16, chunk_len=16)
    base.update(overrides)
    return ModelConfig(**base)


def toy_train_config(**overrides) -> TrainConfig:
    base = dict(iterations=2000, batch_size=32, accumulation=1, peak_lr=3e-3, warmup_ratio=0.02,
                length_distribution={96: 1.0}, horizon_range=(4, 24), nan_prob=0.0, seed=0,
                cut_vs_subsample=1.0, scaler_aug_prob=0.0,
                log_every=100)
    base.update(overrides)
    return TrainConfig(**base)
