"""Tracking metrics: success rate (AUC), precision, normalized precision.

Conventions, fixed so numbers reproduce bit for bit:
  - success curve thresholds tau = 0.00, 0.05, ..., 0.95 (20 points,
    right endpoint excluded); a frame counts at tau when IoU > tau
    (strict). SR is the mean of the curve.
  - precision uses center error <= 20 px (inclusive); its curve spans
    0..50 px in 1 px steps.
  - normalized precision divides the per-axis center distance by the
    ground-truth width/height before the L2 norm; threshold 0.2, curve
    0..0.5 in 0.01 steps.
Aggregates over several sequences pool frames (frame-weighted).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

SUCCESS_TAUS = np.arange(20) * 0.05
PRECISION_TAUS = np.arange(51, dtype=np.float64)
NORM_PRECISION_TAUS = np.arange(51) * 0.01
PRECISION_PX = 20.0
NORM_PRECISION_T = 0.2


def iou(a, b):
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = max(aw, 0.0) * max(ah, 0.0) + max(bw, 0.0) * max(bh, 0.0) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def center_error(a, b):
    dx = (a[0] + a[2] / 2.0) - (b[0] + b[2] / 2.0)
    dy = (a[1] + a[3] / 2.0) - (b[1] + b[3] / 2.0)
    return float(np.hypot(dx, dy))


def norm_center_error(a, b):
    """Center distance with each axis normalized by the gt box extent b."""
    dx = ((a[0] + a[2] / 2.0) - (b[0] + b[2] / 2.0)) / b[2]
    dy = ((a[1] + a[3] / 2.0) - (b[1] + b[3] / 2.0)) / b[3]
    return float(np.hypot(dx, dy))


@dataclass
class EvalReport:
    sr: float
    pr: float
    npr: float
    n_frames: int
    success_curve: np.ndarray
    precision_curve: np.ndarray
    norm_precision_curve: np.ndarray
    per_sequence: list = field(default_factory=list)  # (name, sr, pr, npr, n)


def _frame_scores(preds, gts):
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape:
        raise DimensionError(f"predictions {preds.shape} vs ground truth {gts.shape} mismatch")
    ious = np.array([iou(p, g) for p, g in zip(preds, gts)])
    cerr = np.array([center_error(p, g) for p, g in zip(preds, gts)])
    nerr = np.array([norm_center_error(p, g) for p, g in zip(preds, gts)])
    return ious, cerr, nerr


def _report_from_scores(ious, cerr, nerr):
    n = len(ious)
    succ = np.array([(ious > t).mean() for t in SUCCESS_TAUS])
    prec = np.array([(cerr <= t).mean() for t in PRECISION_TAUS])
    nprec = np.array([(nerr <= t).mean() for t in NORM_PRECISION_TAUS])
    return EvalReport(
        sr=float(succ.mean()),
        pr=float((cerr <= PRECISION_PX).mean()),
        npr=float((nerr <= NORM_PRECISION_T).mean()),
        n_frames=n,
        success_curve=succ,
        precision_curve=prec,
        norm_precision_curve=nprec,
    )


def evaluate(preds, gts):
    """One sequence of predicted boxes against its ground truth."""
    return _report_from_scores(*_frame_scores(preds, gts))


def evaluate_many(named_runs):
    """[(name, preds, gts), ...] -> frame-weighted aggregate report."""
    all_i, all_c, all_n = [], [], []
    per_seq = []
    for name, preds, gts in named_runs:
        ious, cerr, nerr = _frame_scores(preds, gts)
        rep = _report_from_scores(ious, cerr, nerr)
        per_seq.append((name, rep.sr, rep.pr, rep.npr, rep.n_frames))
        all_i.append(ious)
        all_c.append(cerr)
        all_n.append(nerr)
    agg = _report_from_scores(np.concatenate(all_i), np.concatenate(all_c), np.concatenate(all_n))
    agg.per_sequence = per_seq
    return agg


def report_text(rep: EvalReport):
    lines = [
        f"frames = {rep.n_frames}",
        f"sr = {rep.sr:.17g}",
        f"pr = {rep.pr:.17g}",
        f"npr = {rep.npr:.17g}",
    ]
    for name, sr, pr, npr, n in rep.per_sequence:
        lines.append(f"seq.{name} = sr:{sr:.17g} pr:{pr:.17g} npr:{npr:.17g} frames:{n}")
    return "\n".join(lines) + "\n"


def curve_csv(taus, values):
    lines = ["threshold,value"]
    for t, v in zip(taus, values):
        lines.append(f"{t:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"
