"""Synthetic paired RGB/TIR sequences with controllable degradations.

A single moving target (disc or rectangle) follows piecewise-linear
waypoints with optional per-frame wobble; distractor blobs share the
target's RGB color but stay cold in TIR, so the two modalities genuinely
disagree about what is confusable. Event windows degrade one modality at
a time: darkness crushes RGB contrast, thermal crossover hides the target
in TIR, occlusion covers it in both. Ground truth follows the trajectory
through occlusion; flags mark the active events.

On disk: rgb/%06d.ppm (binary P6), tir/%06d.pgm (binary P5), gt.txt with
`frame,x,y,w,h,flags` lines, spec.txt echoing the generator settings.
"""

import os
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError, ParseError
from .rng import substream

BG_RGB = np.array([0.35, 0.40, 0.45])
TARGET_RGB = np.array([0.85, 0.30, 0.20])
OCCLUDER_RGB = np.array([0.55, 0.55, 0.58])
BG_TIR = 0.30
TARGET_TIR = 0.90
DISTRACTOR_TIR = 0.34
OCCLUDER_TIR = 0.55
DARKNESS_CONTRAST = 0.05


@dataclass
class SyntheticSpec:
    length: int = 30
    height: int = 128
    width: int = 128
    target_shape: str = "disc"  # disc | rectangle
    target_w: float = 24.0
    target_h: float = 24.0
    waypoints: tuple = ((32.0, 32.0), (96.0, 96.0))  # (x, y) centers
    jitter: float = 0.5
    distractors: int = 2
    darkness: tuple = ()  # (start, end), end exclusive
    crossover: tuple = ()
    occlusion: tuple = ()
    noise_rgb: float = 0.02
    noise_tir: float = 0.02
    seed: int = 0

    def validate(self):
        if self.length < 1:
            raise ConfigError("sequence length must be positive")
        if self.target_shape not in ("disc", "rectangle"):
            raise ConfigError(f"unknown target shape {self.target_shape!r}")
        if self.target_w <= 0 or self.target_h <= 0:
            raise ConfigError("target extents must be positive")
        if len(self.waypoints) < 1:
            raise ConfigError("at least one waypoint is required")
        for name in ("darkness", "crossover", "occlusion"):
            win = getattr(self, name)
            if win and not (0 <= win[0] < win[1] <= self.length):
                raise ConfigError(f"{name} window {win} outside [0, {self.length})")
        x0, y0 = self.waypoints[0]
        if not (
            self.target_w / 2 <= x0 <= self.width - self.target_w / 2
            and self.target_h / 2 <= y0 <= self.height - self.target_h / 2
        ):
            raise ConfigError("target must start fully inside the image")
        return self


@dataclass
class FramePair:
    rgb: np.ndarray  # [3, H, W] in [0, 1]
    tir: np.ndarray  # [1, H, W] in [0, 1]
    gt: np.ndarray  # (x, y, w, h) image pixels, top-left corner
    flags: tuple = field(default_factory=tuple)


def _window_active(win, frame):
    return bool(win) and win[0] <= frame < win[1]


def trajectory(spec: SyntheticSpec):
    """Per-frame (cx, cy); exact at waypoint frames, wobbly in between."""
    n = spec.length
    pts = np.asarray(spec.waypoints, dtype=np.float64)
    if len(pts) == 1:
        centers = np.tile(pts[0], (n, 1))
        anchor_frames = np.array([0])
    else:
        anchor_frames = np.round(np.linspace(0, n - 1, len(pts))).astype(int)
        t = np.arange(n)
        centers = np.stack(
            [np.interp(t, anchor_frames, pts[:, 0]), np.interp(t, anchor_frames, pts[:, 1])],
            axis=1,
        )
    if spec.jitter > 0:
        rng = substream(spec.seed, "data.trajectory")
        wob = rng.normal(0.0, spec.jitter, size=centers.shape)
        wob[anchor_frames] = 0.0
        centers = centers + wob
    return centers


def _shape_mask(yy, xx, cx, cy, w, h, shape):
    if shape == "disc":
        return ((xx - cx) / (w / 2)) ** 2 + ((yy - cy) / (h / 2)) ** 2 <= 1.0
    return (np.abs(xx - cx) <= w / 2) & (np.abs(yy - cy) <= h / 2)


def generate(spec: SyntheticSpec):
    """Render the sequence; deterministic for a given spec."""
    spec.validate()
    h, w = spec.height, spec.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    centers = trajectory(spec)

    drng = substream(spec.seed, "data.distractors")
    dists = []
    for _ in range(spec.distractors):
        start = drng.uniform([w * 0.1, h * 0.1], [w * 0.9, h * 0.9])
        vel = drng.uniform(-1.5, 1.5, size=2)
        size = drng.uniform(0.7, 1.2) * np.array([spec.target_w, spec.target_h])
        dists.append((start, vel, size))

    nrng = substream(spec.seed, "data.noise")
    frames = []
    for i in range(spec.length):
        rgb = np.empty((3, h, w))
        rgb[:] = BG_RGB[:, None, None]
        tir = np.full((1, h, w), BG_TIR)

        for start, vel, size in dists:
            c = start + vel * i
            mask = _shape_mask(yy, xx, c[0] % w, c[1] % h, size[0], size[1], spec.target_shape)
            rgb[:, mask] = TARGET_RGB[:, None]
            tir[0, mask] = DISTRACTOR_TIR

        cx, cy = centers[i]
        flags = []
        tgt_tir = TARGET_TIR
        if _window_active(spec.crossover, i):
            flags.append("crossover")
            tgt_tir = BG_TIR
        mask = _shape_mask(yy, xx, cx, cy, spec.target_w, spec.target_h, spec.target_shape)
        rgb[:, mask] = TARGET_RGB[:, None]
        tir[0, mask] = tgt_tir

        if _window_active(spec.occlusion, i):
            flags.append("occlusion")
            pad = 2.0
            occ = (np.abs(xx - cx) <= spec.target_w / 2 + pad) & (
                np.abs(yy - cy) <= spec.target_h / 2 + pad
            )
            rgb[:, occ] = OCCLUDER_RGB[:, None]
            tir[0, occ] = OCCLUDER_TIR

        if _window_active(spec.darkness, i):
            flags.append("darkness")
            rgb = BG_RGB[:, None, None] + DARKNESS_CONTRAST * (rgb - BG_RGB[:, None, None])

        rgb = np.clip(rgb + nrng.normal(0.0, spec.noise_rgb, rgb.shape), 0.0, 1.0)
        tir = np.clip(tir + nrng.normal(0.0, spec.noise_tir, tir.shape), 0.0, 1.0)
        gt = np.array([cx - spec.target_w / 2, cy - spec.target_h / 2, spec.target_w, spec.target_h])
        frames.append(FramePair(rgb=rgb, tir=tir, gt=gt, flags=tuple(flags)))
    return frames


# ----------------------------------------------------------------- image i/o


def write_pnm(path, img):
    """img: [C,H,W] float in [0,1]; C=3 -> binary PPM, C=1 -> binary PGM."""
    c, h, w = img.shape
    if c not in (1, 3):
        raise ConfigError(f"can only write 1- or 3-channel images, got {c}")
    magic = b"P6" if c == 3 else b"P5"
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(data.transpose(1, 2, 0).tobytes())


def _next_token(buf, pos, path):
    while pos < len(buf):
        ch = buf[pos : pos + 1]
        if ch == b"#":
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise ParseError(f"{path}: unterminated comment at byte {pos}")
            pos = nl + 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= len(buf):
        raise ParseError(f"{path}: unexpected end of header at byte {pos}")
    end = pos
    while end < len(buf) and not buf[end : end + 1].isspace():
        end += 1
    return buf[pos:end], end


def read_pnm(path):
    """Binary PPM/PGM -> [C,H,W] float64 in [0,1]; errors carry byte offsets."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _next_token(buf, 0, path)
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"{path}: unsupported magic {magic!r} at byte 0")
    channels = 3 if magic == b"P6" else 1
    vals = []
    for _ in range(3):
        tok, pos = _next_token(buf, pos, path)
        if not re.fullmatch(rb"\d+", tok):
            raise ParseError(f"{path}: non-numeric header token {tok!r} at byte {pos - len(tok)}")
        vals.append(int(tok))
    w, h, maxval = vals
    if maxval != 255:
        raise ParseError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = w * h * channels
    payload = buf[pos : pos + expected]
    if len(payload) < expected:
        raise ParseError(
            f"{path}: truncated pixel data at byte {pos + len(payload)} "
            f"(expected {expected} bytes from byte {pos})"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels)
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


# ------------------------------------------------------------- sequence  i/o


def _format_window(win):
    return f"{win[0]}:{win[1]}" if win else "-"


def _parse_window(text):
    text = text.strip()
    if text in ("-", ""):
        return ()
    lo, hi = text.split(":")
    return (int(lo), int(hi))


def spec_to_text(spec: SyntheticSpec):
    lines = []
    for f in fields(SyntheticSpec):
        v = getattr(spec, f.name)
        if f.name == "waypoints":
            v = ";".join(f"{x:g}:{y:g}" for x, y in v)
        elif f.name in ("darkness", "crossover", "occlusion"):
            v = _format_window(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def spec_from_text(text):
    spec = SyntheticSpec()
    known = {f.name: f for f in fields(SyntheticSpec)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown sequence key {key!r}")
        try:
            if key == "waypoints":
                pts = tuple(
                    tuple(float(t) for t in pt.split(":")) for pt in value.split(";") if pt
                )
                spec = replace(spec, waypoints=pts)
            elif key in ("darkness", "crossover", "occlusion"):
                spec = replace(spec, **{key: _parse_window(value)})
            elif key in ("length", "height", "width", "distractors", "seed"):
                spec = replace(spec, **{key: int(value)})
            elif key == "target_shape":
                spec = replace(spec, target_shape=value)
            else:
                spec = replace(spec, **{key: float(value)})
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return spec.validate()


def save(seq, out_dir, spec=None):
    os.makedirs(os.path.join(out_dir, "rgb"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "tir"), exist_ok=True)
    lines = []
    for i, fp in enumerate(seq):
        write_pnm(os.path.join(out_dir, "rgb", f"{i:06d}.ppm"), fp.rgb)
        write_pnm(os.path.join(out_dir, "tir", f"{i:06d}.pgm"), fp.tir)
        flags = "+".join(fp.flags) if fp.flags else "-"
        x, y, w, h = fp.gt
        lines.append(f"{i},{x:.17g},{y:.17g},{w:.17g},{h:.17g},{flags}")
    with open(os.path.join(out_dir, "gt.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    if spec is not None:
        with open(os.path.join(out_dir, "spec.txt"), "w", encoding="utf-8") as fh:
            fh.write(spec_to_text(spec))


def load(seq_dir):
    gt_path = os.path.join(seq_dir, "gt.txt")
    if not os.path.isfile(gt_path):
        raise ParseError(f"{gt_path}: missing annotation file")
    frames = []
    with open(gt_path, "r", encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    for lineno, row in enumerate(rows, 1):
        parts = row.split(",")
        if len(parts) < 5:
            raise ParseError(f"{gt_path}: line {lineno} has {len(parts)} fields, expected >= 5")
        idx = int(parts[0])
        gt = np.array([float(v) for v in parts[1:5]])
        flags = ()
        if len(parts) > 5 and parts[5] not in ("-", ""):
            flags = tuple(parts[5].split("+"))
        rgb = read_pnm(os.path.join(seq_dir, "rgb", f"{idx:06d}.ppm"))
        tir = read_pnm(os.path.join(seq_dir, "tir", f"{idx:06d}.pgm"))
        frames.append(FramePair(rgb=rgb, tir=tir, gt=gt, flags=flags))
    return frames


def load_gt_boxes(seq_dir):
    """Just the per-frame (x, y, w, h) rows of gt.txt."""
    with open(os.path.join(seq_dir, "gt.txt"), "r", encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    return np.array([[float(v) for v in row.split(",")[1:5]] for row in rows])
