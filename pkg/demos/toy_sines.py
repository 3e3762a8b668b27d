"""Train the toy forecaster on noiseless modulated sines and compare it with seasonal naive.

Same setup as acceptance criterion 12 (2000 steps, about 12 minutes on one core). Pass a smaller
step count as the first argument for a quicker look, e.g. ``python demos/toy_sines.py 300``.
"""

import sys

import numpy as np
import torch

from deltacast.evaluation import EvalTask, ModelPredictor, SeasonalNaivePredictor, evaluate, nan_robustness_curve
from deltacast.experiments import sine_corpus, toy_model_config, toy_train_config
from deltacast.model import Forecaster
from deltacast.training import batch_loss, train


def main(iterations: int = 2000) -> None:
    torch.set_num_threads(1)
    corpus = {"sine": sine_corpus(512, 128, 0)}
    cfg = toy_train_config(iterations=iterations, log_every=0)
    torch.manual_seed(0)
    model = Forecaster(toy_model_config())
    initial = batch_loss(model, corpus, cfg, range(20))
    result = train(model, corpus, cfg)
    final = np.mean([loss for _, _, loss in result.trace[-50:]])
    print(f"loss: untrained {initial:.4f}, last 50 steps {final:.4f} ({final / initial:.3f}x)")

    tasks = [EvalTask(s.slice(0, 96), s.values[96:120], 24, s.id) for s in sine_corpus(50, 128, 1, "held")]
    for predictor in (ModelPredictor(model), SeasonalNaivePredictor(model.config.quantiles)):
        o = evaluate(predictor, tasks).overall
        print(f"{predictor.name:>15}: CRPS {o['crps']:.4f}  MASE {o['mase']:.4f}  "
              f"normalized CRPS {o['crps_normalized']:.3f}  MASE {o['mase_normalized']:.3f}")
    for frac, crps, rel in nan_robustness_curve(ModelPredictor(model), tasks, [0.0, 0.3, 0.6, 0.9]):
        print(f"missing {frac:.0%}: CRPS {crps:.4f} ({rel:.3f}x)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000)
