"""Objective: penalty-reduced focal classification on a Gaussian center
map plus GIoU and L1 regression at the ground-truth center cell.

    L = L_cls + lambda_giou * L_giou + lambda_l1 * L_1
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import DimensionError
from .head import BBox, HeadOutputs
from .tensor import Tensor

LOG_CLAMP = 1e-12


@dataclass
class LossWeights:
    lambda_giou: float = 2.0
    lambda_l1: float = 5.0


def center_cell(gt: BBox, hs, ws):
    ci = min(max(int(gt.cy * hs), 0), hs - 1)
    cj = min(max(int(gt.cx * ws), 0), ws - 1)
    return ci, cj


def gaussian_target(gt: BBox, hs, ws):
    """Target map: exactly 1 at the center cell, isotropic Gaussian falloff
    with sigma = max(1, (w*Ws + h*Hs)/12) in cell units."""
    ci, cj = center_cell(gt, hs, ws)
    sigma = max(1.0, (gt.w * ws + gt.h * hs) / 12.0)
    ii = np.arange(hs)[:, None] - ci
    jj = np.arange(ws)[None, :] - cj
    target = np.exp(-(ii * ii + jj * jj) / (2.0 * sigma * sigma))
    target[ci, cj] = 1.0
    return target


def focal_loss(score, target):
    """Penalty-reduced focal loss, mean over positive cells.

    positives (target == 1):  -(1-p)^2 log p
    elsewhere:                -(1-t)^4 p^2 log(1-p)
    """
    score = ops.as_tensor(score)
    target = np.asarray(target, dtype=np.float64)
    if score.data.shape != target.shape:
        raise DimensionError(f"score {score.data.shape} vs target {target.shape} mismatch")
    p = np.clip(score.data, LOG_CLAMP, 1.0 - LOG_CLAMP)
    pos = target >= 1.0
    n_pos = max(int(pos.sum()), 1)
    neg_w = (1.0 - target) ** 4
    pos_term = -((1.0 - p) ** 2) * np.log(p)
    neg_term = -neg_w * p * p * np.log(1.0 - p)
    value = (pos_term[pos].sum() + neg_term[~pos].sum()) / n_pos

    def vjp(g):
        d = np.where(
            pos,
            2.0 * (1.0 - p) * np.log(p) - (1.0 - p) ** 2 / p,
            -neg_w * (2.0 * p * np.log(1.0 - p) - p * p / (1.0 - p)),
        )
        return (float(g) * d / n_pos,)

    return Tensor(np.float64(value), parents=(score,), vjp=vjp)


def _scalar(v):
    return ops.constant(np.float64(v))


def giou_loss_terms(pcx, pcy, pw, ph, gt: BBox):
    """1 - GIoU between a predicted box given as four scalar graph nodes
    and a fixed ground-truth box. Areas clamp at zero for degenerate boxes."""
    half_w, half_h = ops.scale(pw, 0.5), ops.scale(ph, 0.5)
    px1, px2 = ops.sub(pcx, half_w), ops.add(pcx, half_w)
    py1, py2 = ops.sub(pcy, half_h), ops.add(pcy, half_h)
    gx1, gy1, gx2, gy2 = (_scalar(v) for v in gt.corners())

    iw = ops.clamp_min(ops.sub(ops.minimum(px2, gx2), ops.maximum(px1, gx1)), 0.0)
    ih = ops.clamp_min(ops.sub(ops.minimum(py2, gy2), ops.maximum(py1, gy1)), 0.0)
    inter = ops.mul(iw, ih)

    area_p = ops.mul(ops.clamp_min(pw, 0.0), ops.clamp_min(ph, 0.0))
    area_g = _scalar(max(gt.w, 0.0) * max(gt.h, 0.0))
    union = ops.sub(ops.add(area_p, area_g), inter)
    iou = ops.div(inter, union)

    cw = ops.sub(ops.maximum(px2, gx2), ops.minimum(px1, gx1))
    ch = ops.sub(ops.maximum(py2, gy2), ops.minimum(py1, gy1))
    enclosing = ops.mul(cw, ch)
    giou = ops.sub(iou, ops.div(ops.sub(enclosing, union), enclosing))
    return ops.sub(_scalar(1.0), giou)


def l1_loss_terms(pcx, pcy, pw, ph, gt: BBox):
    """Mean absolute difference over (cx, cy, w, h)."""
    total = ops.abs_(ops.sub(pcx, _scalar(gt.cx)))
    total = ops.add(total, ops.abs_(ops.sub(pcy, _scalar(gt.cy))))
    total = ops.add(total, ops.abs_(ops.sub(pw, _scalar(gt.w))))
    total = ops.add(total, ops.abs_(ops.sub(ph, _scalar(gt.h))))
    return ops.scale(total, 0.25)


def giou_loss(pred: BBox, gt: BBox):
    """Plain-number form of the GIoU loss, in [0, 2]."""
    return giou_loss_terms(*(_scalar(v) for v in pred.as_array()), gt).item()


def l1_loss(pred: BBox, gt: BBox):
    return l1_loss_terms(*(_scalar(v) for v in pred.as_array()), gt).item()


def _pred_box_at(out: HeadOutputs, ci, cj, hs, ws):
    off = ops.gather_cell(out.offset, ci, cj)
    siz = ops.gather_cell(out.size, ci, cj)
    pcx = ops.scale(ops.shift(ops.take_scalar(off, 0), cj), 1.0 / ws)
    pcy = ops.scale(ops.shift(ops.take_scalar(off, 1), ci), 1.0 / hs)
    return pcx, pcy, ops.take_scalar(siz, 0), ops.take_scalar(siz, 1)


def total_loss(out: HeadOutputs, gt: BBox, weights: LossWeights = LossWeights()):
    """Weighted objective; regression reads the ground-truth center cell.

    Returns (scalar graph node, {term name: float}).
    """
    hs, ws = ops.as_tensor(out.score).shape
    target = gaussian_target(gt, hs, ws)
    cls = focal_loss(out.score, target)
    ci, cj = center_cell(gt, hs, ws)
    pcx, pcy, pw, ph = _pred_box_at(out, ci, cj, hs, ws)
    giou = giou_loss_terms(pcx, pcy, pw, ph, gt)
    l1 = l1_loss_terms(pcx, pcy, pw, ph, gt)
    total = ops.add(cls, ops.add(ops.scale(giou, weights.lambda_giou), ops.scale(l1, weights.lambda_l1)))
    parts = {"cls": cls.item(), "giou": giou.item(), "l1": l1.item(), "total": total.item()}
    return total, parts
