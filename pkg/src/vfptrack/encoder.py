"""Frozen dual-stream transformer encoder with per-layer prompt injection.

Both modality streams run through the same frozen weights. At each carried
layer the current prompt tokens are prepended to the [template; search]
token sequence, the block runs, the prompt-slot outputs are recorded for
the opposite stream's next-layer update, and fresh prompts replace them at
the next layer (deep prompting). Fusion layers mix the two streams'
[template; search] features through the fusion block residually.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError
from .mfpg import inject_residual, mfpg_forward
from .prompts import MODALITIES, assemble_prompt_tokens, other_modality, update_prompts
from .tensor import Param

LN_EPS = 1e-5


@dataclass
class EncoderConfig:
    n_layers: int = 4
    dim: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    patch: int = 8
    template_size: int = 32
    search_size: int = 64
    mfpg_layers: tuple = (1, 2, 3, 4)

    def validate(self):
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.template_size % self.patch or self.search_size % self.patch:
            raise ConfigError(
                f"template/search sizes {self.template_size}/{self.search_size} "
                f"must be divisible by patch {self.patch}"
            )
        for l in self.mfpg_layers:
            if not 1 <= l <= self.n_layers:
                raise ConfigError(f"fusion layer {l} outside 1..{self.n_layers}")

    @property
    def template_grid(self):
        g = self.template_size // self.patch
        return (g, g)

    @property
    def search_grid(self):
        g = self.search_size // self.patch
        return (g, g)

    @property
    def n_template_tokens(self):
        return self.template_grid[0] * self.template_grid[1]

    @property
    def n_search_tokens(self):
        return self.search_grid[0] * self.search_grid[1]


@dataclass
class TokenLayout:
    """Offsets of the [prompt | template | search] segments in a sequence."""

    n_prompt: int
    n_template: int
    n_search: int
    template_grid: tuple
    search_grid: tuple

    @property
    def total(self):
        return self.n_prompt + self.n_template + self.n_search

    @property
    def template_span(self):
        return (self.n_prompt, self.n_prompt + self.n_template)

    @property
    def search_span(self):
        start = self.n_prompt + self.n_template
        return (start, start + self.n_search)


@dataclass
class BlockParams:
    ln1_g: Param
    ln1_b: Param
    wq: Param
    bq: Param
    wk: Param
    bk: Param
    wv: Param
    bv: Param
    wo: Param
    bo: Param
    ln2_g: Param
    ln2_b: Param
    w1: Param
    b1: Param
    w2: Param
    b2: Param


@dataclass
class EncoderParams:
    """Frozen backbone weights, shared by both modality streams."""

    patch_w: Param
    patch_b: Param
    pos_z: Param
    pos_x: Param
    final_ln_g: Param = None
    final_ln_b: Param = None
    blocks: list = field(default_factory=list)

    def named_params(self):
        out = {
            "encoder.patch.w": self.patch_w,
            "encoder.patch.b": self.patch_b,
            "encoder.pos_z": self.pos_z,
            "encoder.pos_x": self.pos_x,
            "encoder.final_ln.g": self.final_ln_g,
            "encoder.final_ln.b": self.final_ln_b,
        }
        fields = (
            "ln1_g ln1_b wq bq wk bk wv bv wo bo ln2_g ln2_b w1 b1 w2 b2".split()
        )
        for i, blk in enumerate(self.blocks):
            for name in fields:
                out[f"encoder.blocks.{i}.{name}"] = getattr(blk, name)
        return out


def init_encoder(cfg: EncoderConfig, rng):
    """Random frozen backbone (pretrained weights are out of scope here);
    the freeze contract, not the feature quality, is what matters."""
    cfg.validate()
    d = cfg.dim
    hidden = cfg.mlp_ratio * d

    def w(shape, std=0.02):
        return Param(rng.normal(0.0, std, size=shape), trainable=False)

    def zeros(shape):
        return Param(np.zeros(shape), trainable=False)

    def ones(shape):
        return Param(np.ones(shape), trainable=False)

    enc = EncoderParams(
        patch_w=w((3 * cfg.patch * cfg.patch, d)),
        patch_b=zeros(d),
        pos_z=w((cfg.n_template_tokens, d)),
        pos_x=w((cfg.n_search_tokens, d)),
        # final norm keeps the feature scale bounded for the heads
        final_ln_g=ones(d),
        final_ln_b=zeros(d),
    )
    for _ in range(cfg.n_layers):
        enc.blocks.append(
            BlockParams(
                ln1_g=ones(d), ln1_b=zeros(d),
                wq=w((d, d)), bq=zeros(d),
                wk=w((d, d)), bk=zeros(d),
                wv=w((d, d)), bv=zeros(d),
                wo=w((d, d)), bo=zeros(d),
                ln2_g=ones(d), ln2_b=zeros(d),
                w1=w((d, hidden)), b1=zeros(hidden),
                w2=w((hidden, d)), b2=zeros(d),
            )
        )
    return enc


def patchify(img, patch):
    """[3,H,W] array -> [N, 3*P*P] row-major patch matrix."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    c, h, w = img.shape
    if h % patch or w % patch:
        raise ConfigError(f"image {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    pat = img.reshape(c, gh, patch, gw, patch).transpose(1, 3, 0, 2, 4)
    return np.ascontiguousarray(pat).reshape(gh * gw, c * patch * patch)


def patch_embed(img, enc: EncoderParams, cfg: EncoderConfig, segment):
    """Project non-overlapping patches to D and add the segment's frozen
    positional embedding. segment is 'template' or 'search'."""
    patches = ops.constant(patchify(np.asarray(img), cfg.patch))
    tok = ops.linear(patches, enc.patch_w, enc.patch_b)
    pos = enc.pos_z if segment == "template" else enc.pos_x
    if tok.shape[0] != pos.shape[0]:
        raise ConfigError(
            f"{segment} image yields {tok.shape[0]} tokens, expected {pos.shape[0]}"
        )
    return ops.add(tok, pos)


def vit_block(x, blk: BlockParams, heads, eps=LN_EPS):
    """Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.))."""
    d = x.shape[-1]
    dh = d // heads
    xn = ops.layer_norm(x, blk.ln1_g, blk.ln1_b, eps)
    q = ops.heads_split(ops.linear(xn, blk.wq, blk.bq), heads)
    k = ops.heads_split(ops.linear(xn, blk.wk, blk.bk), heads)
    v = ops.heads_split(ops.linear(xn, blk.wv, blk.bv), heads)
    att = ops.scale(ops.bmatmul(q, ops.transpose_last2(k)), 1.0 / np.sqrt(dh))
    att = ops.softmax(att)
    o = ops.heads_merge(ops.bmatmul(att, v))
    x = ops.add(x, ops.linear(o, blk.wo, blk.bo))
    xn2 = ops.layer_norm(x, blk.ln2_g, blk.ln2_b, eps)
    m = ops.linear(ops.gelu(ops.linear(xn2, blk.w1, blk.b1)), blk.w2, blk.b2)
    return ops.add(x, m)


def forward_dual(rgb_pair, tir_pair, enc, cfg, pcfg, pset, mfpg_params):
    """Run both modality streams through the shared frozen encoder.

    rgb_pair/tir_pair are (template_img, search_img) [3,*,*] arrays.
    Returns ({mod: [N_z+N_x, D] features}, {mod: {layer: [M, D] prompt
    outputs}}, layout).
    """
    cfg.validate()
    pcfg.validate(cfg.n_layers)
    m = pcfg.count if pcfg.prompt_layers else 0
    layout = TokenLayout(
        n_prompt=m,
        n_template=cfg.n_template_tokens,
        n_search=cfg.n_search_tokens,
        template_grid=cfg.template_grid,
        search_grid=cfg.search_grid,
    )
    pairs = {"rgb": rgb_pair, "tir": tir_pair}
    feats = {}
    for mod in MODALITIES:
        z = patch_embed(pairs[mod][0], enc, cfg, "template")
        x = patch_embed(pairs[mod][1], enc, cfg, "search")
        feats[mod] = ops.concat0([z, x])

    carried_layers = set(pcfg.prompt_layers) if pcfg.count > 0 else set()
    prompt_outs = {mod: {} for mod in MODALITIES}
    for layer in range(1, cfg.n_layers + 1):
        carried = layer in carried_layers
        for mod in MODALITIES:
            if carried:
                prev = prompt_outs[other_modality(mod)].get(layer - 1)
                if layer >= 2 and prev is not None:
                    t_cur = update_prompts(pset, layer, mod, prev)
                else:
                    t_cur = pset.tokens[mod][layer].value
                t_cur = assemble_prompt_tokens(pset, pcfg, mod, layer, t_cur)
                seq = ops.concat0([t_cur, feats[mod]])
            else:
                seq = feats[mod]
            out = vit_block(seq, enc.blocks[layer - 1], cfg.heads)
            if carried:
                prompt_outs[mod][layer] = ops.slice0(out, 0, pcfg.count)
                feats[mod] = ops.slice0(out, pcfg.count, layout.total)
            else:
                feats[mod] = out
        if layer in cfg.mfpg_layers and mfpg_params is not None:
            fused = mfpg_forward(feats["rgb"], feats["tir"], mfpg_params[layer], layout)
            feats["rgb"], feats["tir"] = inject_residual(feats["rgb"], feats["tir"], fused)
    for mod in MODALITIES:
        feats[mod] = ops.layer_norm(feats[mod], enc.final_ln_g, enc.final_ln_b, LN_EPS)
    return feats, prompt_outs, layout
