"""Field-by-field layouts of the codec and content feature segments.

Both layouts are versioned; the tag is written into every feature file and
model bundle so a model is never fed features laid out differently from
the ones it was trained on.
"""

CODEC_SCHEMA_VERSION = "codec-v1"
CONTENT_SCHEMA_VERSION = "content-v1"

PRE_ENCODE_CRFS = (18.0, 33.0)

GLCM_STATS = ("contrast", "energy", "entropy", "homogeneity", "correlation")
# (dx, dy) pixel offsets
GLCM_OFFSETS = {"right": (1, 0), "down": (0, 1), "downright": (1, 1), "downleft": (-1, 1)}
QUALITY_PROXIES = ("noise_sigma", "blockiness", "blur")
TEMPORAL_STATS = ("mad_mean", "mad_var", "mad_max", "zero_motion_frac")
GLOBAL_STATS = (
    "luma_mean", "luma_var", "luma_entropy", "row_grad_energy", "col_grad_energy",
    "frame_rate", "duration_s", "width", "height", "pixel_count", "sampled_frames",
)

PARTITION_BINS = (
    "I16", "I8", "I4",
    "P16x16", "P16x8", "P8x16", "P8x8", "P4x4",
    "B16x16", "B16x8", "B8x16", "Bdirect",
    "skip",
)


def _per_encode_fields():
    f = []
    f += [f"frame_prop_{t}" for t in "IPB"]
    f += ["qp_avg"] + [f"qp_{t}" for t in "IPB"]
    f += [f"bits_share_{t}" for t in "IPB"]
    f += [f"frame_kbit_{t}" for t in "IPB"]
    f += ["psnr_y", "psnr_u", "psnr_v", "psnr_avg", "psnr_global"]
    f += ["bitrate_kbps", "log_bitrate", "vmaf"]
    f += [f"part_{b}" for b in PARTITION_BINS]
    f += ["mode_intra", "mode_inter", "mode_skip"]
    f += ["skip_in_P", "skip_in_B"]
    f += ["mv_mean", "mv_var"]
    f += ["t8x8_intra", "t8x8_inter"]
    f += [f"coded_{k}_{c}" for k in ("intra", "inter") for c in ("y", "uvdc", "uvac")]
    f += ["bdir_L0", "bdir_L1", "bdir_BI"]
    f += [f"i16_{m}" for m in ("v", "h", "dc", "p")]
    return f


PER_ENCODE_FIELDS = tuple(_per_encode_fields())

CODEC_FIELDS = tuple(
    f"crf{int(crf)}_{name}" for crf in PRE_ENCODE_CRFS for name in PER_ENCODE_FIELDS
) + ("log_bitrate_ratio",)

# groups that must each sum to one
PROPORTION_GROUPS = {
    "frame_prop": tuple(f"frame_prop_{t}" for t in "IPB"),
    "bits_share": tuple(f"bits_share_{t}" for t in "IPB"),
    "part": tuple(f"part_{b}" for b in PARTITION_BINS),
    "mode": ("mode_intra", "mode_inter", "mode_skip"),
}


def _content_fields():
    glcm = [f"glcm_{s}_{o}" for o in GLCM_OFFSETS for s in GLCM_STATS]
    quality = list(QUALITY_PROXIES)
    f = [f"{n}_mean" for n in glcm] + [f"{n}_var" for n in glcm]
    f += [f"{n}_mean" for n in quality] + [f"{n}_var" for n in quality]
    f += [f"temporal_{n}_s1" for n in TEMPORAL_STATS]
    f += [f"temporal_{n}_s2" for n in TEMPORAL_STATS]
    f += list(GLOBAL_STATS)
    return f


CONTENT_FIELDS = tuple(_content_fields())

CODEC_DIM = len(CODEC_FIELDS)
CONTENT_DIM = len(CONTENT_FIELDS)
ANCHOR_DIM = 2

assert len(PER_ENCODE_FIELDS) == 56
assert CODEC_DIM == 113
assert CONTENT_DIM == 65
