"""Training: parameter partitioning, decoupled-weight-decay Adam, the pair
sampling loop, and the checkpoint format.

The backbone stays frozen; only prompts, cross-modal maps, fusion blocks,
gates, and the head receive optimizer updates. Pairs are sampled as a
template crop around the ground truth of frame t and a search crop around
the ground truth of frame t+k (k uniform in 1..max_gap) with a small
seeded center jitter, so the head has to localize rather than memorize
the grid center.

Checkpoint file: magic "VFPC", the resolved config text, seed and step
counters, then a name-sorted table of tensors (params and both Adam
moments) in the flat "VFPT" tensor format. Byte-identical round trips.
"""

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .errors import AuditError, OptimizerError, ParseError
from .loss import total_loss
from .model import TrackerModel
from .rng import substream
from .tensor import backward, hash_named_tensors, read_tensor, write_tensor
from .tracker import as_model_input, box_center, crop_square, image_box_to_norm, search_side, template_side

CKPT_MAGIC = b"VFPC"
LR_DROP_FRACTION = 0.75
LR_DROP_FACTOR = 0.1


def partition_params(model: TrackerModel):
    """Split the registry into (frozen, trainable); audit the partition."""
    named = model.named_params()
    frozen, trainable = {}, {}
    for name, p in named.items():
        if p.trainable:
            trainable[name] = p
        else:
            frozen[name] = p
    overlap = set(frozen) & set(trainable)
    if overlap:
        raise AuditError(f"params in both sets: {sorted(overlap)}")
    if set(frozen) | set(trainable) != set(named):
        raise AuditError("partition does not cover the parameter registry")
    if not all(name.startswith("encoder.") for name in frozen):
        raise AuditError("non-backbone parameter found in the frozen set")
    if any(name.startswith("encoder.") for name in trainable):
        raise AuditError("backbone parameter found in the trainable set")
    return frozen, trainable


def frozen_fingerprint(model: TrackerModel):
    frozen, _ = partition_params(model)
    return hash_named_tensors({k: p.data for k, p in frozen.items()})


def scheduled_lr(base_lr, step, total_steps):
    """Constant, then x0.1 from step ceil(0.75*T) on (1-based steps)."""
    drop_at = int(np.ceil(LR_DROP_FRACTION * total_steps))
    return base_lr * LR_DROP_FACTOR if step >= drop_at else base_lr


@dataclass
class OptimState:
    lr: float
    weight_decay: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    total_steps: int = 1
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def ensure_slots(self, trainable):
        for name, p in trainable.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)


def optimizer_step(state: OptimState, trainable):
    """One decoupled-weight-decay adaptive-moment update with bias correction."""
    state.ensure_slots(trainable)
    state.step += 1
    t = state.step
    lr = scheduled_lr(state.lr, t, state.total_steps)
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in sorted(trainable):
        p = trainable[name]
        g = p.grad
        bad = ~np.isfinite(g)
        if bad.any():
            raise OptimizerError(
                f"non-finite gradient in {name!r} at step {t} "
                f"({int(bad.sum())}/{g.size} entries)"
            )
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data[...] -= lr * (mhat / (np.sqrt(vhat) + state.eps) + state.weight_decay * p.data)
    return state


def sample_pair(frames, rng, max_gap, jitter_frac, scale_jitter, template_size, search_size):
    """(template crops, search crops, normalized gt in the search region).

    The search crop's center and scale are jittered; at inference both come
    from the previous box, so the head must learn to correct either error."""
    n = len(frames)
    t = int(rng.integers(0, n))
    k = int(rng.integers(1, max_gap + 1))
    t2 = min(t + k, n - 1)
    f_t, f_t2 = frames[t], frames[t2]

    tpl_center = box_center(f_t.gt)
    tpl_rgb, _, _, _ = crop_square(f_t.rgb, tpl_center, template_side(f_t.gt), template_size)
    tpl_tir, _, _, _ = crop_square(as_model_input(f_t.tir), tpl_center, template_side(f_t.gt), template_size)

    side = search_side(f_t2.gt)
    if scale_jitter > 0:
        side *= rng.uniform(1.0 / (1.0 + scale_jitter), 1.0 + scale_jitter)
    center = np.array(box_center(f_t2.gt)) + rng.uniform(-jitter_frac, jitter_frac, 2) * side
    srch_rgb, x0, y0, side_px = crop_square(f_t2.rgb, center, side, search_size)
    srch_tir, _, _, _ = crop_square(as_model_input(f_t2.tir), center, side, search_size)
    gt_norm = image_box_to_norm(f_t2.gt, x0, y0, side_px)
    return (tpl_rgb, srch_rgb), (tpl_tir, srch_tir), gt_norm


@dataclass
class TrainResult:
    model: TrackerModel
    opt: OptimState
    loss_rows: list  # (step, total, cls, giou, l1)


def train(cfg, frames, model=None, steps=None, log_every=0):
    """Optimize the trainable set on one sequence; deterministic per seed."""
    if not frames:
        raise AuditError("training dataset is empty")
    model = TrackerModel(cfg) if model is None else model
    _, trainable = partition_params(model)
    steps = cfg.train_steps if steps is None else steps
    opt = OptimState(
        lr=cfg.optim_lr,
        weight_decay=cfg.optim_weight_decay,
        beta1=cfg.optim_beta1,
        beta2=cfg.optim_beta2,
        eps=cfg.optim_eps,
        total_steps=steps,
    )
    rng = substream(cfg.seed, "sampling")
    rows = []
    for step in range(1, steps + 1):
        rgb_pair, tir_pair, gt_norm = sample_pair(
            frames, rng, cfg.train_max_frame_gap, cfg.train_jitter,
            cfg.train_scale_jitter, cfg.encoder_template, cfg.encoder_search,
        )
        model.zero_grads()
        head_out, _, _, _ = model.forward(rgb_pair, tir_pair)
        loss, parts = total_loss(head_out, gt_norm, model.loss_weights)
        backward(loss)
        optimizer_step(opt, trainable)
        rows.append((step, parts["total"], parts["cls"], parts["giou"], parts["l1"]))
        if log_every and step % log_every == 0:
            print(f"step {step:5d}  total {parts['total']:.5f}  cls {parts['cls']:.5f}")
    return TrainResult(model=model, opt=opt, loss_rows=rows)


def write_loss_curve(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,total,cls,giou,l1\n")
        for step, total, cls, giou, l1 in rows:
            fh.write(f"{step},{total:.17g},{cls:.17g},{giou:.17g},{l1:.17g}\n")


# ----------------------------------------------------------------- checkpoint


def _write_checkpoint(fh, model: TrackerModel, opt, step):
    named = {name: p.data for name, p in model.named_params().items()}
    if opt is not None:
        step = opt.step
        for name in sorted(opt.m):
            named[f"optim.m.{name}"] = opt.m[name]
            named[f"optim.v.{name}"] = opt.v[name]
    cfg_text = cfgmod.config_text(model.cfg).encode("utf-8")
    fh.write(CKPT_MAGIC)
    fh.write(struct.pack("<I", len(cfg_text)))
    fh.write(cfg_text)
    fh.write(struct.pack("<qq", int(model.seed), int(step)))
    fh.write(struct.pack("<I", len(named)))
    for name in sorted(named):
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        write_tensor(fh, named[name])


def save_checkpoint(path, model: TrackerModel, opt: OptimState = None, step=0):
    with open(path, "wb") as fh:
        _write_checkpoint(fh, model, opt, step)


def load_checkpoint(path):
    """-> (model, OptimState or None, step). Rebuilds from the stored config
    and overwrites every parameter with the stored tensors."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CKPT_MAGIC:
            raise ParseError(f"{path}: bad checkpoint magic {magic!r} at byte 0")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        cfg = cfgmod.parse_config_text(fh.read(cfg_len).decode("utf-8"))
        seed, step = struct.unpack("<qq", fh.read(16))
        (count,) = struct.unpack("<I", fh.read(4))
        table = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            table[name] = read_tensor(fh, path)

    model = TrackerModel(cfg, seed=seed)
    named = model.named_params()
    for name, p in named.items():
        if name not in table:
            raise ParseError(f"{path}: checkpoint is missing tensor {name!r}")
        if table[name].shape != p.data.shape:
            raise ParseError(
                f"{path}: tensor {name!r} has shape {table[name].shape}, expected {p.data.shape}"
            )
        p.data[...] = table[name]

    opt = None
    moment_names = [n for n in table if n.startswith("optim.m.")]
    if moment_names:
        opt = OptimState(
            lr=cfg.optim_lr,
            weight_decay=cfg.optim_weight_decay,
            beta1=cfg.optim_beta1,
            beta2=cfg.optim_beta2,
            eps=cfg.optim_eps,
            total_steps=cfg.train_steps,
            step=step,
        )
        for n in moment_names:
            pname = n[len("optim.m.") :]
            opt.m[pname] = table[n]
            opt.v[pname] = table[f"optim.v.{pname}"]
    return model, opt, step


def checkpoint_bytes(model, opt=None, step=0):
    buf = io.BytesIO()
    _write_checkpoint(buf, model, opt, step)
    return buf.getvalue()
