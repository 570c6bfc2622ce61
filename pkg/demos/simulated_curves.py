"""
Rate-quality curves from the simulated codec
============================================

Each synthetic video is a latent vector. The latent fixes a logistic
CRF-VMAF curve and an exponential CRF-bitrate curve, sampled on the
101-point grid from CRF 20 to 40.
"""

from rqcurve import simcodec
from rqcurve.core import GRID, derive_rate_quality_pairs
from rqcurve.strategy import crf_for_slope, crf_for_target_vmaf

# three videos, from easy to hard to compress
videos = [simcodec.LatentVideo.from_seed(s) for s in (3, 11, 42)]
for v in videos:
    th = v.theta
    print(f"{v.id}: v_mid {th.v_mid:.1f}  k {th.k:.3f}  r20 {th.r20:.0f} kbps  rho {th.rho:.3f}")

# the curves at a few grid points
crfs = [20.0, 24.0, 28.0, 30.4, 32.0, 36.0, 40.0]
print()
print("crf   " + "".join(f"{v.id:>22}" for v in videos))
curves = [simcodec.oracle_curve(v.theta) for v in videos]
for crf in crfs:
    i = GRID.index_of(crf)
    cells = "".join(f"{c.vmaf[i]:>10.2f} {c.bitrate[i]:>9.0f}k " for c in curves)
    print(f"{crf:<6.1f}{cells}")

# bitrate-VMAF pairs are what the slope policy works on
pairs = derive_rate_quality_pairs(curves[0])
print()
print("first (kbps, VMAF) pairs of", videos[0].id,
      [(round(float(b), 1), round(float(q), 2)) for b, q in pairs[:3]])

# two encoding policies on the same curve
for v, c in zip(videos, curves):
    q = crf_for_target_vmaf(c, 91.0)
    s = crf_for_slope(c, 0.005)
    print(f"{v.id}: VMAF 91 at CRF {q.crf:.1f} ({q.bitrate:.0f} kbps), "
          f"knee at CRF {s.crf:.1f} ({s.vmaf:.1f} VMAF, {s.bitrate:.0f} kbps)")
