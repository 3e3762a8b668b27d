"""Synthetic series generators and their name registry."""

from __future__ import annotations

from enum import Enum
from functools import partial

import numpy as np

from ..timeseries import Frequency, TimeSeries
from ._common import GenerationError, robust_standardize
from .audio import gen_audio
from .forecastpfn import gen_forecastpfn
from .gp_family import gen_cauker, gen_gp, gen_kernel_synth
from .waveforms import gen_anomaly, gen_sawtooth, gen_sine, gen_spikes, gen_step


class GeneratorKind(str, Enum):
    FORECAST_PFN = "forecast_pfn"
    KERNEL_SYNTH = "kernel_synth"
    GP = "gp"
    CAUKER = "cauker"
    SAWTOOTH = "sawtooth"
    STEP = "step"
    ANOMALY = "anomaly"
    SPIKES = "spikes"
    SINE_WAVE = "sine_wave"
    AUDIO_STOCHASTIC_RHYTHM = "audio_stochastic_rhythm"
    AUDIO_FINANCIAL_VOLATILITY = "audio_financial_volatility"
    AUDIO_NETWORK_TOPOLOGY = "audio_network_topology"
    AUDIO_MULTI_SCALE_FRACTAL = "audio_multi_scale_fractal"
    SDE = "sde"


def _gen_sde(rng, length, freq):
    from ..sde import gen_sde  # sde imports generators._common; avoid a cycle at import time

    return gen_sde(rng, length, freq)


GENERATORS = {
    GeneratorKind.FORECAST_PFN: gen_forecastpfn,
    GeneratorKind.KERNEL_SYNTH: gen_kernel_synth,
    GeneratorKind.GP: gen_gp,
    GeneratorKind.CAUKER: gen_cauker,
    GeneratorKind.SAWTOOTH: gen_sawtooth,
    GeneratorKind.STEP: gen_step,
    GeneratorKind.ANOMALY: gen_anomaly,
    GeneratorKind.SPIKES: gen_spikes,
    GeneratorKind.SINE_WAVE: gen_sine,
    GeneratorKind.AUDIO_STOCHASTIC_RHYTHM: partial(gen_audio, "stochastic_rhythm"),
    GeneratorKind.AUDIO_FINANCIAL_VOLATILITY: partial(gen_audio, "financial_volatility"),
    GeneratorKind.AUDIO_NETWORK_TOPOLOGY: partial(gen_audio, "network_topology"),
    GeneratorKind.AUDIO_MULTI_SCALE_FRACTAL: partial(gen_audio, "multi_scale_fractal"),
    GeneratorKind.SDE: _gen_sde,
}

MIN_LENGTH = {
    GeneratorKind.FORECAST_PFN: 8, GeneratorKind.STEP: 8, GeneratorKind.ANOMALY: 8, GeneratorKind.SPIKES: 8,
    GeneratorKind.SINE_WAVE: 4, GeneratorKind.AUDIO_STOCHASTIC_RHYTHM: 32,
    GeneratorKind.AUDIO_FINANCIAL_VOLATILITY: 32, GeneratorKind.AUDIO_NETWORK_TOPOLOGY: 32,
    GeneratorKind.AUDIO_MULTI_SCALE_FRACTAL: 32, GeneratorKind.SDE: 16,
}


def generate(kind: GeneratorKind | str, rng: np.random.Generator, length: int,
             freq: Frequency) -> list[TimeSeries]:
    """Run one generator call; always returns a list (CauKer yields 21 channels)."""
    kind = GeneratorKind(kind)
    out = GENERATORS[kind](rng, length, freq)
    return out if isinstance(out, list) else [out]


__all__ = ["GeneratorKind", "GENERATORS", "MIN_LENGTH", "GenerationError", "generate", "robust_standardize",
           "gen_forecastpfn", "gen_kernel_synth", "gen_gp", "gen_cauker", "gen_sawtooth", "gen_step",
           "gen_anomaly", "gen_spikes", "gen_sine", "gen_audio"]
