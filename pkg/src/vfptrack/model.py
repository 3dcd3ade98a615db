"""Assembly of the full tracker: frozen encoder + prompts + fusion + head.

Each component draws its initial weights from its own named RNG stream,
so sweeping one axis (say fusion layer placement) never shifts another
component's initialization.
"""

from . import config as cfgmod
from .encoder import EncoderConfig, forward_dual, init_encoder
from .head import head_forward, fuse_and_reshape, init_head
from .loss import LossWeights
from .mfpg import init_mfpg
from .prompts import PromptConfig, init_prompts
from .rng import substream


class TrackerModel:
    def __init__(self, cfg, seed=None):
        cfgmod.validate(cfg)
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.enc_cfg = EncoderConfig(
            n_layers=cfg.encoder_layers,
            dim=cfg.encoder_dim,
            heads=cfg.encoder_heads,
            mlp_ratio=cfg.encoder_mlp_ratio,
            patch=cfg.encoder_patch,
            template_size=cfg.encoder_template,
            search_size=cfg.encoder_search,
            mfpg_layers=cfgmod.resolve_layers(cfg.encoder_mfpg_layers, cfg.encoder_layers),
        )
        self.prompt_cfg = PromptConfig(
            count=cfg.prompts_count,
            alpha=cfg.prompts_alpha,
            prompt_layers=cfgmod.resolve_layers(cfg.prompts_layers, cfg.encoder_layers),
            fft_mode=cfg.prompts_fft_mode,
            fft_output=cfg.prompts_fft_output,
            adaptive_alpha=cfg.prompts_adaptive_alpha,
            per_layer_transform=cfg.prompts_per_layer_transform,
        )
        self.loss_weights = LossWeights(cfg.loss_lambda_giou, cfg.loss_lambda_l1)
        self.encoder = init_encoder(self.enc_cfg, substream(self.seed, "init.encoder"))
        self.pset = init_prompts(
            self.prompt_cfg, cfg.encoder_dim, cfg.encoder_layers, substream(self.seed, "init.prompts")
        )
        self.mfpg = init_mfpg(
            self.enc_cfg.mfpg_layers,
            cfg.encoder_dim,
            cfg.mfpg_beta,
            substream(self.seed, "init.mfpg"),
            shared_projection=cfg.mfpg_shared_projection,
        )
        self.head = init_head(cfg.encoder_dim, substream(self.seed, "init.head"))

    def named_params(self):
        out = {}
        out.update(self.encoder.named_params())
        out.update(self.pset.named_params())
        out.update(self.mfpg.named_params())
        out.update(self.head.named_params())
        return out

    def forward(self, rgb_pair, tir_pair):
        """(template, search) arrays per modality -> (HeadOutputs, features,
        prompt outputs, layout)."""
        feats, prompt_outs, layout = forward_dual(
            rgb_pair,
            tir_pair,
            self.encoder,
            self.enc_cfg,
            self.prompt_cfg,
            self.pset,
            self.mfpg.layers if self.mfpg.layers else None,
        )
        fused = fuse_and_reshape(feats["rgb"], feats["tir"], layout)
        return head_forward(fused, self.head), feats, prompt_outs, layout

    def zero_grads(self):
        for p in self.named_params().values():
            p.zero_grad()
