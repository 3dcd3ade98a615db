"""Learnable prompt tokens, their spatial/frequency split, and the
layer-to-layer cross-modal refinement.

Every carried layer owns M fresh prompt tokens per modality. A fixed
fraction (the first `round(alpha*M)` rows, half-up rounding) takes the
frequency path through the Fourier transform before entering the encoder;
the rest stay spatial. From the second carried layer on, a modality's
initial tokens are refined by a learned linear map of the opposite
modality's previous-layer prompt outputs, added residually.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, ProtocolError
from .fourier import FFT_MODES, FFT_OUTPUTS, fourier_prompt_variant
from .tensor import Param

MODALITIES = ("rgb", "tir")


def other_modality(modality):
    return "tir" if modality == "rgb" else "rgb"


@dataclass
class PromptConfig:
    count: int = 8  # M, prompt tokens per carried layer
    alpha: float = 0.2  # fraction routed through the Fourier transform
    prompt_layers: tuple = ()  # 1-based layer indices carrying prompts
    fft_mode: str = "both"
    fft_output: str = "real"
    adaptive_alpha: bool = False
    per_layer_transform: bool = True  # cross-modal map per layer vs shared

    def validate(self, n_layers):
        if self.count < 0:
            raise ConfigError(f"prompts.count must be >= 0, got {self.count}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"prompts.alpha must lie in [0,1], got {self.alpha}")
        if self.fft_mode not in FFT_MODES:
            raise ConfigError(f"prompts.fft_mode {self.fft_mode!r} not in {FFT_MODES}")
        if self.fft_output not in FFT_OUTPUTS:
            raise ConfigError(f"prompts.fft_output {self.fft_output!r} not in {FFT_OUTPUTS}")
        for l in self.prompt_layers:
            if not 1 <= l <= n_layers:
                raise ConfigError(f"prompt layer {l} outside 1..{n_layers}")

    @property
    def fourier_count(self):
        """m = round(alpha*M), ties at .5 rounding up."""
        m = int(np.floor(self.alpha * self.count + 0.5))
        return min(max(m, 0), self.count)


SHARED = 0  # cross_w/cross_b key when one transform serves every layer


@dataclass
class PromptSet:
    """Trainable prompt state for both modality streams."""

    tokens: dict = field(default_factory=dict)  # tokens[mod][layer] -> Param[M,D]
    cross_w: dict = field(default_factory=dict)  # cross_w[mod][layer or SHARED] -> Param[D,D]
    cross_b: dict = field(default_factory=dict)
    gate_w: dict = field(default_factory=dict)  # gate_w[mod] -> Param[D,1]
    gate_b: dict = field(default_factory=dict)

    def cross_transform(self, modality, layer):
        per_layer = self.cross_w[modality]
        key = layer if layer in per_layer else SHARED
        return per_layer[key], self.cross_b[modality][key]

    def named_params(self):
        out = {}
        for mod in MODALITIES:
            for l, p in sorted(self.tokens.get(mod, {}).items()):
                out[f"prompts.{mod}.l{l}.tokens"] = p
            for l, p in sorted(self.cross_w.get(mod, {}).items()):
                tag = "shared" if l == SHARED else f"l{l}"
                out[f"prompts.{mod}.{tag}.cross_w"] = p
                out[f"prompts.{mod}.{tag}.cross_b"] = self.cross_b[mod][l]
            if mod in self.gate_w:
                out[f"prompts.{mod}.gate_w"] = self.gate_w[mod]
                out[f"prompts.{mod}.gate_b"] = self.gate_b[mod]
        return out


def expected_param_count(cfg: PromptConfig, dim, n_layers):
    """Closed-form trainable scalar count for the prompt pathway."""
    carried = [l for l in cfg.prompt_layers if 1 <= l <= n_layers]
    n_cross = len([l for l in carried if l >= 2])
    if not cfg.per_layer_transform:
        n_cross = min(n_cross, 1)
    total = 2 * len(carried) * cfg.count * dim
    total += 2 * n_cross * (dim * dim + dim)
    if cfg.adaptive_alpha:
        total += 2 * (dim + 1)
    return total


def init_prompts(cfg: PromptConfig, dim, n_layers, rng):
    """Fresh PromptSet: tokens ~ U(-0.5/sqrt(D), 0.5/sqrt(D)), maps zeroed.

    Zero-initialized cross-modal maps make every carried layer behave like
    the first one until training moves them. Gate parameters (adaptive
    alpha) start at zero too, i.e. an even blend.
    """
    cfg.validate(n_layers)
    bound = 0.5 / np.sqrt(dim)
    pset = PromptSet()
    for mod in MODALITIES:
        pset.tokens[mod] = {}
        pset.cross_w[mod] = {}
        pset.cross_b[mod] = {}
        cross_layers = [l for l in sorted(cfg.prompt_layers) if l >= 2]
        for l in sorted(cfg.prompt_layers):
            pset.tokens[mod][l] = Param(rng.uniform(-bound, bound, size=(cfg.count, dim)))
        if cfg.per_layer_transform:
            for l in cross_layers:
                pset.cross_w[mod][l] = Param(np.zeros((dim, dim)))
                pset.cross_b[mod][l] = Param(np.zeros(dim))
        elif cross_layers:
            pset.cross_w[mod][SHARED] = Param(np.zeros((dim, dim)))
            pset.cross_b[mod][SHARED] = Param(np.zeros(dim))
        if cfg.adaptive_alpha:
            pset.gate_w[mod] = Param(np.zeros((dim, 1)))
            pset.gate_b[mod] = Param(np.zeros(1))
    return pset


def update_prompts(pset: PromptSet, layer, modality, other_prompt_out_prev):
    """Refine layer-l initial tokens with the opposite stream's l-1 output."""
    if layer < 2:
        raise ProtocolError("cross-modal prompt update starts at layer 2; layer 1 uses its init")
    base = pset.tokens[modality][layer]
    w, b = pset.cross_transform(modality, layer)
    return ops.add(base, ops.linear(other_prompt_out_prev, w, b))


def assemble_prompt_tokens(pset: PromptSet, cfg: PromptConfig, modality, layer, t_current):
    """Route the first m rows through the Fourier transform; keep the rest.

    With adaptive alpha the transformed rows are gated against their
    spatial originals by a learned logistic scalar per modality.
    """
    m = cfg.fourier_count
    if m == 0:
        return t_current
    t_current = ops.as_tensor(t_current)
    rows_f = ops.slice0(t_current, 0, m)
    tf = fourier_prompt_variant(rows_f, cfg.fft_mode, cfg.fft_output)
    if cfg.adaptive_alpha:
        pooled = ops.reshape(ops.mean0(t_current), (1, -1))
        gate = ops.sigmoid(ops.linear(pooled, pset.gate_w[modality], pset.gate_b[modality]))
        gate = ops.reshape(gate, (1,))
        inv_gate = ops.sub(ops.constant(np.ones(1)), gate)
        tf = ops.add(ops.scale_by(tf, gate), ops.scale_by(rows_f, inv_gate))
    if m == cfg.count:
        return tf
    return ops.concat0([tf, ops.slice0(t_current, m, cfg.count)])
