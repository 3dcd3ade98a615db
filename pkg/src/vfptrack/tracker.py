"""Frame-by-frame inference: fixed first-frame templates, search cropping
around the previous box, forward pass, center-prior score penalty, decode.

Crops are square (template side 2*sqrt(w*h), search side 4*sqrt(w*h),
matching the 2x template/search resolution ratio), edge-padded at image
borders, and resized by nearest neighbor. The score penalty is a convex
blend with an outer product of 1D Hann windows scaled to peak at 1, so
penalized scores stay in (0,1).
"""

from dataclasses import dataclass

import numpy as np

from .data_synth import FramePair, write_pnm
from .errors import ConfigError
from .head import BBox, HeadOutputs, decode_box
from .ops import constant


@dataclass
class TrackState:
    template_rgb: np.ndarray
    template_tir: np.ndarray
    box: np.ndarray  # previous (x, y, w, h) in image pixels
    gamma: float
    search_factor: float = 4.0


def crop_square(img, center, side, out_size):
    """Square crop of `side` pixels around `center`=(cx,cy), edge-padded,
    nearest-neighbor resized to out_size. Returns (crop, x0, y0, side)."""
    c, h, w = img.shape
    side = max(int(round(side)), 2)
    x0 = int(round(center[0])) - side // 2
    y0 = int(round(center[1])) - side // 2
    xs = np.clip(np.arange(x0, x0 + side), 0, w - 1)
    ys = np.clip(np.arange(y0, y0 + side), 0, h - 1)
    patch = img[:, ys[:, None], xs[None, :]]
    idx = np.minimum((np.arange(out_size) * side) // out_size, side - 1)
    return patch[:, idx[:, None], idx[None, :]], x0, y0, side


def padded_pixel_count(center, side, h, w):
    """How many crop pixels fall outside the image (edge replication)."""
    side = max(int(round(side)), 2)
    x0 = int(round(center[0])) - side // 2
    y0 = int(round(center[1])) - side // 2
    vis_x = max(0, min(x0 + side, w) - max(x0, 0))
    vis_y = max(0, min(y0 + side, h) - max(y0, 0))
    return side * side - vis_x * vis_y


def as_model_input(img):
    """Replicate single-channel (TIR) images to the 3-channel model input."""
    if img.shape[0] == 1:
        return np.repeat(img, 3, axis=0)
    return img


def hann_window(n):
    """1D Hann scaled to peak at exactly 1 (degenerate lengths -> ones)."""
    w = np.hanning(n)
    top = w.max()
    if top <= 0.0:
        return np.ones(n)
    return w / top


def hanning_penalty(score, gamma):
    """score' = (1-gamma) * score + gamma * hann_row x hann_col."""
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"penalty weight must lie in [0,1], got {gamma}")
    hs, ws = score.shape
    prior = np.outer(hann_window(hs), hann_window(ws))
    return (1.0 - gamma) * score + gamma * prior


def template_side(box):
    return 2.0 * np.sqrt(box[2] * box[3])


def search_side(box):
    return 4.0 * np.sqrt(box[2] * box[3])


def box_center(box):
    return (box[0] + box[2] / 2.0, box[1] + box[3] / 2.0)


def init(frame0: FramePair, gt0, model, gamma=0.49):
    """Fix both templates from the first frame's ground-truth box."""
    gt0 = np.asarray(gt0, dtype=np.float64)
    if gt0[2] <= 0 or gt0[3] <= 0:
        raise ConfigError(f"degenerate initial box {gt0.tolist()}")
    side = template_side(gt0)
    center = box_center(gt0)
    out = model.enc_cfg.template_size
    tpl_rgb, _, _, _ = crop_square(frame0.rgb, center, side, out)
    tpl_tir, _, _, _ = crop_square(as_model_input(frame0.tir), center, side, out)
    return TrackState(template_rgb=tpl_rgb, template_tir=tpl_tir, box=gt0.copy(), gamma=gamma)


def norm_box_to_image(b: BBox, x0, y0, side):
    """Normalized search-region box -> image-pixel (x, y, w, h)."""
    cx = x0 + b.cx * side
    cy = y0 + b.cy * side
    w = b.w * side
    h = b.h * side
    return np.array([cx - w / 2.0, cy - h / 2.0, w, h])


def image_box_to_norm(box, x0, y0, side):
    cx, cy = box_center(box)
    return BBox((cx - x0) / side, (cy - y0) / side, box[2] / side, box[3] / side)


def clamp_box(box, h, w):
    x, y, bw, bh = box
    bw = min(max(bw, 2.0), w)
    bh = min(max(bh, 2.0), h)
    x = min(max(x, 0.0), w - bw)
    y = min(max(y, 0.0), h - bh)
    return np.array([x, y, bw, bh])


def track_frame(state: TrackState, frame: FramePair, model):
    """Advance one frame; returns the image-space box (and stores it)."""
    box, score = track_frame_scored(state, frame, model)
    return box


def track_frame_scored(state: TrackState, frame: FramePair, model):
    side = search_side(state.box)
    center = box_center(state.box)
    out = model.enc_cfg.search_size
    srch_rgb, x0, y0, side_px = crop_square(frame.rgb, center, side, out)
    srch_tir, _, _, _ = crop_square(as_model_input(frame.tir), center, side, out)
    head_out, _, _, _ = model.forward(
        (state.template_rgb, srch_rgb), (state.template_tir, srch_tir)
    )
    score = hanning_penalty(head_out.score.data, state.gamma)
    b = decode_box(HeadOutputs(score=constant(score), offset=head_out.offset, size=head_out.size))
    img_h, img_w = frame.rgb.shape[1], frame.rgb.shape[2]
    box = clamp_box(norm_box_to_image(b, x0, y0, side_px), img_h, img_w)
    state.box = box
    return box, score


def run_sequence(frames, model, gamma=0.49, dump_scores_dir=None, zero_modality=None):
    """Track a loaded sequence from its first-frame ground truth.

    zero_modality in (None, 'rgb', 'tir') blanks one input stream, the
    single-modality ablation. Returns an array of (x, y, w, h) rows, one
    per frame; frame 0 echoes the init box.
    """
    frames = list(frames)
    if zero_modality is not None:
        frames = [
            FramePair(
                rgb=np.zeros_like(fp.rgb) if zero_modality == "rgb" else fp.rgb,
                tir=np.zeros_like(fp.tir) if zero_modality == "tir" else fp.tir,
                gt=fp.gt,
                flags=fp.flags,
            )
            for fp in frames
        ]
    state = init(frames[0], frames[0].gt, model, gamma=gamma)
    boxes = [state.box.copy()]
    for i, fp in enumerate(frames[1:], start=1):
        box, score = track_frame_scored(state, fp, model)
        boxes.append(box.copy())
        if dump_scores_dir is not None:
            write_pnm(
                f"{dump_scores_dir}/{i:06d}.pgm", np.clip(score, 0.0, 1.0)[None, :, :]
            )
    return np.array(boxes)


def save_results(path, boxes):
    with open(path, "w", encoding="utf-8") as fh:
        for i, (x, y, w, h) in enumerate(boxes):
            fh.write(f"{i},{x:.17g},{y:.17g},{w:.17g},{h:.17g}\n")


def load_results(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            rows.append([float(v) for v in parts[1:5]])
    return np.array(rows)
