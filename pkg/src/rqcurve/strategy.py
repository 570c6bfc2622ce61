"""Pick an encoding CRF from a predicted curve.

Two policies share one predicted curve, so changing policy never means
retraining: constant quality (hit a VMAF target) and a bitrate-saving knee
on the bitrate-VMAF curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RateQualityCurve

__all__ = [
    "CrfDecision",
    "pav_nonincreasing",
    "monotone_project",
    "crf_for_target_vmaf",
    "crf_for_slope",
    "DEFAULT_SLOPE_THRESHOLD",
]

DEFAULT_SLOPE_THRESHOLD = 0.005


@dataclass(frozen=True)
class CrfDecision:
    crf: float
    vmaf: float
    bitrate: float
    index: int
    unreachable: bool = False  # target above the curve's best quality
    saturated: bool = False  # target below the curve's worst quality
    all_worthwhile: bool = False  # no slope fell under the knee threshold

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def pav_nonincreasing(y) -> np.ndarray:
    """Least-squares non-increasing fit by pool-adjacent-violators."""
    y = np.asarray(y, dtype=np.float64)
    means, sizes = [], []
    for v in y:
        means.append(v)
        sizes.append(1)
        # a later block above an earlier one violates the order: pool them
        while len(means) > 1 and means[-1] > means[-2]:
            m2, n2 = means.pop(), sizes.pop()
            m1, n1 = means.pop(), sizes.pop()
            means.append((m1 * n1 + m2 * n2) / (n1 + n2))
            sizes.append(n1 + n2)
    return np.repeat(means, sizes)


def monotone_project(curve: RateQualityCurve) -> RateQualityCurve:
    return RateQualityCurve(pav_nonincreasing(curve.vmaf), pav_nonincreasing(curve.bitrate),
                            curve.grid)


def crf_for_target_vmaf(curve: RateQualityCurve, target: float, project: bool = True) -> CrfDecision:
    """Largest grid CRF whose VMAF still meets ``target``.

    On a non-increasing curve the interpolated crossing lies between the
    last grid point at or above the target and the next one; snapping
    toward lower CRF lands on that last point, so quality never falls short
    of the prediction.
    """
    if project:
        curve = monotone_project(curve)
    v, b, grid = curve.vmaf, curve.bitrate, curve.grid
    if target > v[0]:
        return CrfDecision(grid.crf_of(0), float(v[0]), float(b[0]), 0, unreachable=True)
    if target < v[-1]:
        last = grid.count - 1
        return CrfDecision(grid.crf_of(last), float(v[-1]), float(b[-1]), last, saturated=True)
    i = int(np.nonzero(v >= target)[0].max())
    return CrfDecision(grid.crf_of(i), float(v[i]), float(b[i]), i)


def crf_for_slope(curve: RateQualityCurve, slope_threshold: float = DEFAULT_SLOPE_THRESHOLD,
                  project: bool = True) -> CrfDecision:
    """Knee of the bitrate-VMAF curve.

    ``s_i = (vmaf[i] - vmaf[i+1]) / (bitrate[i] - bitrate[i+1])`` is the VMAF
    gained per extra kbps going from grid point ``i+1`` down to ``i``.
    Scanning from the highest CRF downwards, the first step whose gain
    drops below ``slope_threshold`` stops the scan at CRF ``i+1``.
    """
    if not slope_threshold > 0:
        raise ValueError("slope_threshold must be positive")
    if project:
        curve = monotone_project(curve)
    v, b, grid = curve.vmaf, curve.bitrate, curve.grid
    for i in range(grid.count - 2, -1, -1):
        db = b[i] - b[i + 1]
        if db == 0:
            continue
        if (v[i] - v[i + 1]) / db < slope_threshold:
            return CrfDecision(grid.crf_of(i + 1), float(v[i + 1]), float(b[i + 1]), i + 1)
    return CrfDecision(grid.crf_of(0), float(v[0]), float(b[0]), 0, all_worthwhile=True)
