"""Pilot run on the simulated codec: 2000 train / 500 test videos, noise 0.3.

Trains the full model and its three ablations with shared seeds, scores
each on the test split, then rescores the full model with a dynamic
anchor near the VMAF target. The acceptance thresholds were frozen from
this run; its output lives next to this file in ``pilot_output.txt``.

    python benchmarks/pilot.py | tee benchmarks/pilot_output.txt
"""

import platform
import time

import numpy as np

from rqcurve import simcodec
from rqcurve.evaluation import evaluate, evaluate_dynamic
from rqcurve.pipeline import ABLATIONS, PredictorConfig, train

DATA_SEED = 7
TRAIN_SEED = 0


def main():
    print(f"python {platform.python_version()}  numpy {np.__version__}")
    t0 = time.perf_counter()
    tr, te = simcodec.synth_dataset(2000, 500, seed=DATA_SEED)
    print(f"dataset: {len(tr)} train / {len(te)} test, seed {DATA_SEED}, "
          f"noise {simcodec.DEFAULT_NOISE} ({time.perf_counter() - t0:.1f} s)")
    print(f"train config: {PredictorConfig().train}")
    print()
    print(f"{'method':<20}{'VMAF MAE':>10}{'VACC':>9}{'bitrate MAE':>13}{'seconds':>9}")
    reports, models = {}, {}
    for name in ABLATIONS:
        t = time.perf_counter()
        models[name], _ = train(tr, PredictorConfig(ablation=name), seed=TRAIN_SEED)
        reports[name] = r = evaluate(models[name], te)
        dt = time.perf_counter() - t
        print(f"{name:<20}{r.vmaf_mae:>10.4f}{r.vacc * 100:>8.2f}%{r.bitrate_mae:>13.2f}{dt:>9.1f}",
              flush=True)

    t = time.perf_counter()
    dyn = evaluate_dynamic(models["full"], te, simcodec.SimCodecBackend())
    print(f"{'full, dynamic':<20}{dyn.vmaf_mae:>10.4f}{dyn.vacc * 100:>8.2f}%"
          f"{dyn.bitrate_mae:>13.2f}{time.perf_counter() - t:>9.1f}")

    full = reports["full"].vmaf_mae
    print()
    print("relative gaps in test VMAF MAE:")
    for a, b in (("no_suspension", "full"), ("no_anchor_features", "no_suspension"),
                 ("no_end2end", "full")):
        gap = reports[a].vmaf_mae / reports[b].vmaf_mae - 1
        print(f"  {a} vs {b}: {gap * 100:+.1f}%")
    print(f"full VACC fixed {reports['full'].vacc:.3f}, dynamic {dyn.vacc:.3f}")
    print(f"full VMAF MAE {full:.4f}")
    print(f"total {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
