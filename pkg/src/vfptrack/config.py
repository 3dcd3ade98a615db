"""Run configuration: every knob of the pipeline behind dotted text keys.

The on-disk format is line-oriented ``key = value`` with ``#`` comments.
Unknown keys are rejected so typos cannot silently fall back to defaults.
Layer sets are strings like "all", "none", "1,3,4" or "2-4", resolved
against the layer count when the model is built.
"""

from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass
class Config:
    encoder_layers: int = 4
    encoder_dim: int = 64
    encoder_heads: int = 4
    encoder_mlp_ratio: int = 4
    encoder_patch: int = 8
    encoder_template: int = 32
    encoder_search: int = 64
    encoder_mfpg_layers: str = "all"
    prompts_count: int = 8
    prompts_alpha: float = 0.2
    prompts_layers: str = "all"
    prompts_fft_mode: str = "both"
    prompts_fft_output: str = "real"
    prompts_adaptive_alpha: bool = False
    prompts_per_layer_transform: bool = True
    mfpg_beta: int = 8
    mfpg_shared_projection: bool = True
    loss_lambda_giou: float = 2.0
    loss_lambda_l1: float = 5.0
    optim_lr: float = 4e-4
    optim_weight_decay: float = 1e-4
    optim_beta1: float = 0.9
    optim_beta2: float = 0.999
    optim_eps: float = 1e-8
    train_steps: int = 300
    train_max_frame_gap: int = 10
    train_jitter: float = 0.15
    train_scale_jitter: float = 0.25
    track_gamma: float = 0.49
    seed: int = 0


def _key_of(attr):
    if attr == "seed":
        return "seed"
    section, rest = attr.split("_", 1)
    return f"{section}.{rest}"


_KEYS = {_key_of(f.name): (f.name, f.type) for f in fields(Config)}


def paper_scale():
    """The full-size configuration the numbers in the write-ups use."""
    return Config(
        encoder_layers=12,
        encoder_dim=768,
        encoder_heads=12,
        encoder_patch=16,
        encoder_template=128,
        encoder_search=256,
        mfpg_beta=96,
    )


def parse_value(text, typ):
    text = text.strip()
    if typ is bool or typ == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if typ is int or typ == "int":
        return int(text)
    if typ is float or typ == "float":
        return float(text)
    return text


def parse_config_text(text, base=None):
    cfg = Config(**vars(base)) if base is not None else Config()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        attr, typ = _KEYS[key]
        try:
            setattr(cfg, attr, parse_value(value, typ))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    validate(cfg)
    return cfg


def load_config(path, base=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base)


def config_text(cfg):
    """Canonical echo: one sorted 'key = value' line per knob."""
    lines = []
    for key in sorted(_KEYS):
        attr, _ = _KEYS[key]
        val = getattr(cfg, attr)
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def resolve_layers(spec, n_layers):
    """'all' | 'none' | '1,3' | '2-4' (1-based, inclusive) -> sorted tuple."""
    spec = str(spec).strip().lower()
    if spec == "all":
        return tuple(range(1, n_layers + 1))
    if spec in ("none", ""):
        return ()
    out = set()
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo, hi = int(lo), int(hi)
            if lo > hi:
                raise ConfigError(f"empty layer range {part!r}")
            out.update(range(lo, hi + 1))
        else:
            out.add(int(part))
    for l in out:
        if not 1 <= l <= n_layers:
            raise ConfigError(f"layer {l} outside 1..{n_layers}")
    return tuple(sorted(out))


def validate(cfg: Config):
    if cfg.encoder_dim % cfg.encoder_heads:
        raise ConfigError(f"encoder.dim {cfg.encoder_dim} not divisible by heads {cfg.encoder_heads}")
    if cfg.encoder_dim % 4:
        raise ConfigError(f"encoder.dim {cfg.encoder_dim} must be divisible by 4 for the head")
    if cfg.encoder_template % cfg.encoder_patch or cfg.encoder_search % cfg.encoder_patch:
        raise ConfigError("template/search sizes must be divisible by encoder.patch")
    if cfg.encoder_dim % cfg.mfpg_beta:
        raise ConfigError(f"encoder.dim {cfg.encoder_dim} not divisible by mfpg.beta {cfg.mfpg_beta}")
    if not 0.0 <= cfg.prompts_alpha <= 1.0:
        raise ConfigError(f"prompts.alpha must lie in [0,1], got {cfg.prompts_alpha}")
    if not 0.0 <= cfg.track_gamma <= 1.0:
        raise ConfigError(f"track.gamma must lie in [0,1], got {cfg.track_gamma}")
    if cfg.loss_lambda_giou < 0 or cfg.loss_lambda_l1 < 0:
        raise ConfigError("loss weights must be nonnegative")
    if cfg.train_steps < 1:
        raise ConfigError("train.steps must be positive")
    resolve_layers(cfg.encoder_mfpg_layers, cfg.encoder_layers)
    resolve_layers(cfg.prompts_layers, cfg.encoder_layers)
    return cfg
