"""Fusion prompt block: compress both streams, add, convolve back, normalize.

Both modality feature sets are projected down the channel axis by a shared
linear map (a config switch allows separate ones), summed, reshaped onto
their template/search grids, expanded back to full width by a shared 3x3
convolution applied per grid, re-flattened, and layer-normalized. The
result is added residually to both streams, so a zero-initialized block is
an exact identity on the features.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, DimensionError
from .tensor import Param

LN_EPS = 1e-5


@dataclass
class MFPGLayerParams:
    proj_w: Param  # [D, D/beta]
    proj_b: Param
    proj_w_tir: Param | None  # only when projections are not shared
    conv_w: Param  # [D, D/beta, 3, 3]
    conv_b: Param
    ln_g: Param
    ln_b: Param


@dataclass
class MFPGParams:
    beta: int
    shared_projection: bool
    layers: dict = field(default_factory=dict)  # layer index -> MFPGLayerParams

    def named_params(self):
        out = {}
        for l, p in sorted(self.layers.items()):
            out[f"mfpg.l{l}.proj_w"] = p.proj_w
            out[f"mfpg.l{l}.proj_b"] = p.proj_b
            if p.proj_w_tir is not None:
                out[f"mfpg.l{l}.proj_w_tir"] = p.proj_w_tir
            out[f"mfpg.l{l}.conv_w"] = p.conv_w
            out[f"mfpg.l{l}.conv_b"] = p.conv_b
            out[f"mfpg.l{l}.ln_g"] = p.ln_g
            out[f"mfpg.l{l}.ln_b"] = p.ln_b
        return out


def bottleneck_width(dim, beta):
    if dim % beta != 0:
        raise ConfigError(f"channel width {dim} not divisible by beta {beta}")
    return dim // beta


def layer_param_count(dim, beta, shared_projection=True):
    """Scalar budget of one fusion layer (audited by enumeration in tests)."""
    c = bottleneck_width(dim, beta)
    total = dim * c + c  # down projection
    total += dim * c * 9 + dim  # 3x3 expansion convolution
    total += 2 * dim  # layer norm
    if not shared_projection:
        total += dim * c
    return total


def init_mfpg(layers, dim, beta, rng, shared_projection=True):
    """Fresh fusion params for the given layer indices.

    The expansion convolution and its bias start at zero and the norm bias
    at zero, so a new block leaves both streams exactly unchanged.
    """
    c = bottleneck_width(dim, beta)
    params = MFPGParams(beta=beta, shared_projection=shared_projection)
    for l in sorted(layers):
        params.layers[l] = MFPGLayerParams(
            proj_w=Param(rng.normal(0.0, 0.02, size=(dim, c))),
            proj_b=Param(np.zeros(c)),
            proj_w_tir=None if shared_projection else Param(rng.normal(0.0, 0.02, size=(dim, c))),
            conv_w=Param(np.zeros((dim, c, 3, 3))),
            conv_b=Param(np.zeros(dim)),
            ln_g=Param(np.ones(dim)),
            ln_b=Param(np.zeros(dim)),
        )
    return params


def _conv_segment(tokens, grid, p: MFPGLayerParams):
    gh, gw = grid
    g = ops.tokens_to_grid(tokens, gh, gw)
    g = ops.conv2d(g, p.conv_w, p.conv_b)
    return ops.grid_to_tokens(g)


def mfpg_forward(f_rgb, f_tir, p: MFPGLayerParams, layout):
    """Fused prompt P from both streams' [template; search] features."""
    f_rgb, f_tir = ops.as_tensor(f_rgb), ops.as_tensor(f_tir)
    if f_rgb.shape != f_tir.shape:
        raise DimensionError(f"modality features {f_rgb.shape} vs {f_tir.shape} disagree")
    n = layout.n_template + layout.n_search
    if f_rgb.shape[0] != n:
        raise DimensionError(
            f"features carry {f_rgb.shape[0]} tokens but layout expects {n}"
        )
    pr = ops.linear(f_rgb, p.proj_w, p.proj_b)
    w_tir = p.proj_w if p.proj_w_tir is None else p.proj_w_tir
    pt = ops.linear(f_tir, w_tir, p.proj_b)
    s = ops.add(pr, pt)
    s_z = _conv_segment(ops.slice0(s, 0, layout.n_template), layout.template_grid, p)
    s_x = _conv_segment(ops.slice0(s, layout.n_template, n), layout.search_grid, p)
    fused = ops.concat0([s_z, s_x])
    return ops.layer_norm(fused, p.ln_g, p.ln_b, LN_EPS)


def inject_residual(f_rgb, f_tir, fused):
    """Add the fused prompt to both streams."""
    return ops.add(f_rgb, fused), ops.add(f_tir, fused)
