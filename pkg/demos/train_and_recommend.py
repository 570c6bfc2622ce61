"""
Train a curve predictor and pick CRFs
=====================================

A small simulated dataset, a short training run, and CRF picks from the
predicted curves. Training takes around half a minute on one core.
"""

import time

import numpy as np

from rqcurve import simcodec
from rqcurve.evaluation import evaluate
from rqcurve.pipeline import PredictorConfig, TrainConfig, train
from rqcurve.strategy import crf_for_slope, crf_for_target_vmaf

# 600 training and 100 test videos with noisy features and an exact anchor at CRF 30.4
train_set, test_set = simcodec.synth_dataset(600, 100, seed=1)
print("feature dims (codec, content, anchor):", train_set[0].features.dims)

# a shorter schedule than the default 60 epochs
config = PredictorConfig(train=TrainConfig(epochs=20))
t = time.perf_counter()
model, report = train(train_set, config, seed=0, test_samples=test_set,
                      progress=lambda row: row["epoch"] % 10 == 9 and print(row))
print(f"trained in {time.perf_counter() - t:.0f} s")

# accuracy against the oracle curves
result = evaluate(model, test_set)
print(f"test VMAF MAE {result.vmaf_mae:.3f}, bitrate MAE {result.bitrate_mae:.1f} kbps, "
      f"VACC {result.vacc:.2%}")

# one predicted curve drives both policies
for sample, curve in list(zip(test_set, model.predict_samples(test_set)))[:5]:
    q = crf_for_target_vmaf(curve, 91.0)
    true_vmaf = sample.truth.vmaf[q.index]
    knee = crf_for_slope(curve)
    print(f"{sample.id}: target 91 -> CRF {q.crf:.1f} (true VMAF {true_vmaf:.2f}), "
          f"knee CRF {knee.crf:.1f}")

# the largest misses
worst = sorted(result.rows, key=lambda r: r.d, reverse=True)[:3]
print("largest |VMAF - 91|:", [(r.id, round(r.d, 2)) for r in worst])
print("mean |VMAF - 91|:", np.mean([r.d for r in result.rows]).round(3))
