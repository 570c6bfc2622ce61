"""
Content features of a raw clip
==============================

A synthetic Y4M clip goes through the content half of feature
extraction: downsampling, texture statistics, motion statistics and the
no-reference quality proxies.
"""

from fractions import Fraction

import numpy as np

from rqcurve.features import SamplingConfig, extract_content, glcm, glcm_stats, temporal_stats
from rqcurve.ingest import VideoClip, downsample_to_360p, parse_y4m, write_y4m
from rqcurve.schema import CONTENT_FIELDS

# a 720p clip: a drifting gradient plus mild noise
rng = np.random.default_rng(0)
h, w, n = 720, 1280, 12
yy, xx = np.mgrid[0:h, 0:w]
frames = np.stack([
    np.clip(0.15 * (xx + 6 * t) + 0.05 * yy + rng.normal(0, 4, (h, w)), 0, 255)
    for t in range(n)
]).astype(np.uint8)
clip = VideoClip(w, h, Fraction(30), frames)

# Y4M is the exchange format; the round trip is bit-exact
data = write_y4m(clip)
assert np.array_equal(parse_y4m(data).frames, clip.frames)
print(f"{len(data) / 1e6:.1f} MB of Y4M for {n} frames")

small = downsample_to_360p(clip)
print("downsampled to", small.width, "x", small.height)

# texture of the first frame at the default 16 grey levels
p = glcm(small.frames[0], (1, 0), 16)
print("GLCM (1, 0) statistics:", {k: round(v, 4) for k, v in glcm_stats(p)._asdict().items()})

# motion between consecutive and every other frame
for stride in (1, 2):
    print(f"temporal stats, stride {stride}:", temporal_stats(small, stride))

# the full 65-entry content vector
vec = extract_content(small, SamplingConfig(max_frames=8))
for name, value in list(zip(CONTENT_FIELDS, vec))[-11:]:
    print(f"  {name:<18} {value:.4g}")
