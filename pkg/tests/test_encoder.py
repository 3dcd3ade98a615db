import numpy as np
import pytest

from oracles import naive_attention_block
from vfptrack import ops
from vfptrack.encoder import (
    EncoderConfig,
    forward_dual,
    init_encoder,
    patch_embed,
    patchify,
    vit_block,
)
from vfptrack.errors import ConfigError
from vfptrack.prompts import PromptConfig, init_prompts
from vfptrack.rng import substream
from vfptrack.tensor import Tensor, backward

TOY = EncoderConfig(n_layers=2, dim=16, heads=2, mlp_ratio=2, patch=8,
                    template_size=16, search_size=32, mfpg_layers=())


def make_enc(cfg=TOY, seed=0):
    return init_encoder(cfg, substream(seed, "init.encoder"))


def test_patch_counts_paper_scale():
    # 128x128 template and 256x256 search at patch 16
    cfg = EncoderConfig(n_layers=1, dim=768, heads=12, patch=16,
                        template_size=128, search_size=256, mfpg_layers=())
    assert cfg.n_template_tokens == 64
    assert cfg.n_search_tokens == 256


def test_patch_counts_toy():
    cfg = EncoderConfig(n_layers=1, dim=16, heads=2, patch=8,
                        template_size=32, search_size=32, mfpg_layers=())
    assert cfg.n_template_tokens == 16


def test_patch_embed_shapes_and_divisibility():
    enc = make_enc()
    img = np.random.default_rng(0).random((3, 16, 16))
    tok = patch_embed(img, enc, TOY, "template")
    assert tok.shape == (4, 16)
    with pytest.raises(ConfigError):
        patchify(np.zeros((3, 17, 16)), 8)


def test_patchify_layout_row_major():
    img = np.zeros((3, 16, 16))
    img[:, 0:8, 8:16] = 1.0  # second patch in row-major order
    pat = patchify(img, 8)
    assert pat.shape == (4, 192)
    assert np.all(pat[1] == 1.0)
    assert np.all(pat[0] == 0.0) and np.all(pat[2] == 0.0)


def test_vit_block_residual_identity_with_zeroed_projections():
    enc = make_enc()
    blk = enc.blocks[0]
    blk.wo.data[...] = 0.0
    blk.bo.data[...] = 0.0
    blk.w2.data[...] = 0.0
    blk.b2.data[...] = 0.0
    x = np.random.default_rng(1).normal(size=(1, 16))
    out = vit_block(Tensor(x), blk, TOY.heads).data
    np.testing.assert_array_equal(out, x)


def test_vit_block_permutation_equivariance():
    enc = make_enc()
    x = np.random.default_rng(2).normal(size=(5, 16))
    perm = [3, 1, 0, 4, 2]
    out = vit_block(Tensor(x), enc.blocks[0], TOY.heads).data
    out_p = vit_block(Tensor(x[perm]), enc.blocks[0], TOY.heads).data
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


def test_vit_block_matches_loop_oracle():
    enc = make_enc(seed=3)
    x = np.random.default_rng(3).normal(size=(4, 16))
    got = vit_block(Tensor(x), enc.blocks[0], TOY.heads).data
    want = naive_attention_block(x, enc.blocks[0], TOY.heads)
    assert np.abs(got - want).max() < 1e-10


def _dual_inputs(cfg, seed=4):
    rng = np.random.default_rng(seed)
    z = rng.random((3, cfg.template_size, cfg.template_size))
    x = rng.random((3, cfg.search_size, cfg.search_size))
    z2 = rng.random((3, cfg.template_size, cfg.template_size))
    x2 = rng.random((3, cfg.search_size, cfg.search_size))
    return (z, x), (z2, x2)


def test_dual_stream_reduces_to_single_stream_when_bare():
    """M=0 and fusion off: each stream must equal a plain ViT forward."""
    enc = make_enc()
    pcfg = PromptConfig(count=0, alpha=0.0, prompt_layers=())
    pset = init_prompts(pcfg, TOY.dim, TOY.n_layers, substream(0, "init.prompts"))
    rgb_pair, tir_pair = _dual_inputs(TOY)
    feats, prompt_outs, layout = forward_dual(rgb_pair, tir_pair, enc, TOY, pcfg, pset, None)
    assert prompt_outs == {"rgb": {}, "tir": {}}

    for pair, mod in ((rgb_pair, "rgb"), (tir_pair, "tir")):
        seq = ops.concat0([
            patch_embed(pair[0], enc, TOY, "template"),
            patch_embed(pair[1], enc, TOY, "search"),
        ])
        for blk in enc.blocks:
            seq = vit_block(seq, blk, TOY.heads)
        seq = ops.layer_norm(seq, enc.final_ln_g, enc.final_ln_b, 1e-5)
        assert np.abs(feats[mod].data - seq.data).max() < 1e-12


def test_identical_inputs_and_prompts_give_identical_streams():
    enc = make_enc()
    pcfg = PromptConfig(count=3, alpha=0.5, prompt_layers=(1, 2))
    pset = init_prompts(pcfg, TOY.dim, TOY.n_layers, substream(1, "init.prompts"))
    for l in pset.tokens["tir"]:
        pset.tokens["tir"][l].data[...] = pset.tokens["rgb"][l].data
    rgb_pair, _ = _dual_inputs(TOY)
    feats, prompt_outs, _ = forward_dual(rgb_pair, rgb_pair, enc, TOY, pcfg, pset, None)
    assert np.array_equal(feats["rgb"].data, feats["tir"].data)
    for l in prompt_outs["rgb"]:
        assert np.array_equal(prompt_outs["rgb"][l].data, prompt_outs["tir"][l].data)


def test_modality_swap_symmetry():
    enc = make_enc()
    pcfg = PromptConfig(count=2, alpha=0.5, prompt_layers=(1, 2))
    pset = init_prompts(pcfg, TOY.dim, TOY.n_layers, substream(2, "init.prompts"))
    rng = np.random.default_rng(11)
    for mod in ("rgb", "tir"):
        pset.cross_w[mod][2].data[...] = rng.normal(size=(16, 16)) * 0.1
    rgb_pair, tir_pair = _dual_inputs(TOY)
    f1, p1, _ = forward_dual(rgb_pair, tir_pair, enc, TOY, pcfg, pset, None)

    # swap the streams and the per-modality parameters everywhere
    for l in pset.tokens["rgb"]:
        a, b = pset.tokens["rgb"][l].data.copy(), pset.tokens["tir"][l].data.copy()
        pset.tokens["rgb"][l].data[...], pset.tokens["tir"][l].data[...] = b, a
    for l in pset.cross_w["rgb"]:
        a, b = pset.cross_w["rgb"][l].data.copy(), pset.cross_w["tir"][l].data.copy()
        pset.cross_w["rgb"][l].data[...], pset.cross_w["tir"][l].data[...] = b, a
        a, b = pset.cross_b["rgb"][l].data.copy(), pset.cross_b["tir"][l].data.copy()
        pset.cross_b["rgb"][l].data[...], pset.cross_b["tir"][l].data[...] = b, a
    f2, p2, _ = forward_dual(tir_pair, rgb_pair, enc, TOY, pcfg, pset, None)
    assert np.array_equal(f1["rgb"].data, f2["tir"].data)
    assert np.array_equal(f1["tir"].data, f2["rgb"].data)


def test_prompt_outputs_exist_per_carried_layer_with_expected_shape():
    enc = make_enc()
    pcfg = PromptConfig(count=3, alpha=0.5, prompt_layers=(1, 2))
    pset = init_prompts(pcfg, TOY.dim, TOY.n_layers, substream(3, "init.prompts"))
    rgb_pair, tir_pair = _dual_inputs(TOY)
    feats, prompt_outs, layout = forward_dual(rgb_pair, tir_pair, enc, TOY, pcfg, pset, None)
    assert layout.total == 3 + layout.n_template + layout.n_search
    for mod in ("rgb", "tir"):
        assert sorted(prompt_outs[mod]) == [1, 2]
        for l, t in prompt_outs[mod].items():
            assert t.shape == (3, 16)


def test_gradient_reaches_prompts_but_encoder_grads_stay_zero():
    enc = make_enc()
    pcfg = PromptConfig(count=3, alpha=0.5, prompt_layers=(1, 2))
    pset = init_prompts(pcfg, TOY.dim, TOY.n_layers, substream(4, "init.prompts"))
    rgb_pair, tir_pair = _dual_inputs(TOY)
    feats, _, _ = forward_dual(rgb_pair, tir_pair, enc, TOY, pcfg, pset, None)
    w = np.random.default_rng(5).normal(size=feats["rgb"].shape)
    loss = ops.sum_all(ops.mul(ops.add(feats["rgb"], feats["tir"]), ops.constant(w)))
    backward(loss)
    assert np.abs(pset.tokens["rgb"][1].grad).max() > 0
    assert np.abs(pset.tokens["tir"][2].grad).max() > 0
    for name, p in enc.named_params().items():
        assert np.abs(p.grad).max() == 0.0, name


def test_first_carried_layer_beyond_one_skips_cross_update():
    """A prompt layer whose predecessor carries no prompts falls back to
    its initial tokens (there is no previous output to transform)."""
    enc = make_enc()
    pcfg = PromptConfig(count=2, alpha=0.0, prompt_layers=(2,))
    pset = init_prompts(pcfg, TOY.dim, TOY.n_layers, substream(6, "init.prompts"))
    pset.cross_w["rgb"][2].data[...] = 123.0  # would blow up if used
    rgb_pair, tir_pair = _dual_inputs(TOY)
    feats, prompt_outs, _ = forward_dual(rgb_pair, tir_pair, enc, TOY, pcfg, pset, None)
    assert sorted(prompt_outs["rgb"]) == [2]
    assert np.all(np.isfinite(feats["rgb"].data))


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(n_layers=2, dim=15, heads=2, patch=8,
                      template_size=16, search_size=32).validate()
    with pytest.raises(ConfigError):
        EncoderConfig(n_layers=2, dim=16, heads=2, patch=8,
                      template_size=20, search_size=32).validate()
