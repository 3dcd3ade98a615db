import numpy as np
import pytest

from vfptrack.encoder import TokenLayout
from vfptrack.errors import ConfigError, DimensionError
from vfptrack.mfpg import (
    bottleneck_width,
    init_mfpg,
    inject_residual,
    layer_param_count,
    mfpg_forward,
)
from vfptrack.rng import substream
from vfptrack.tensor import Tensor

LAYOUT = TokenLayout(n_prompt=0, n_template=4, n_search=16,
                     template_grid=(2, 2), search_grid=(4, 4))


def make_params(dim=8, beta=4, seed=0, **kw):
    return init_mfpg([1], dim, beta, substream(seed, "init.mfpg"), **kw).layers[1]


def test_swap_commutativity_bitwise():
    rng = np.random.default_rng(0)
    p = make_params()
    p.conv_w.data[...] = rng.normal(size=p.conv_w.shape)
    a = Tensor(rng.normal(size=(20, 8)))
    b = Tensor(rng.normal(size=(20, 8)))
    out_ab = mfpg_forward(a, b, p, LAYOUT).data
    out_ba = mfpg_forward(b, a, p, LAYOUT).data
    assert np.array_equal(out_ab, out_ba)


def test_zero_init_block_is_identity_through_residual():
    rng = np.random.default_rng(1)
    p = make_params()
    f_rgb = Tensor(rng.normal(size=(20, 8)))
    f_tir = Tensor(rng.normal(size=(20, 8)))
    fused = mfpg_forward(f_rgb, f_tir, p, LAYOUT)
    assert np.array_equal(fused.data, np.zeros((20, 8)))
    out_r, out_t = inject_residual(f_rgb, f_tir, fused)
    np.testing.assert_array_equal(out_r.data, f_rgb.data)
    np.testing.assert_array_equal(out_t.data, f_tir.data)


def test_matches_straight_line_loops():
    from checks_loops import mfpg_loops  # local copy below

    rng = np.random.default_rng(2)
    p = make_params()
    p.conv_w.data[...] = rng.normal(size=p.conv_w.shape)
    p.conv_b.data[...] = rng.normal(size=p.conv_b.shape)
    p.ln_g.data[...] = rng.normal(size=8)
    p.ln_b.data[...] = rng.normal(size=8)
    f_rgb = rng.normal(size=(20, 8))
    f_tir = rng.normal(size=(20, 8))
    got = mfpg_forward(Tensor(f_rgb), Tensor(f_tir), p, LAYOUT).data
    want = mfpg_loops(f_rgb, f_tir, p, LAYOUT)
    assert np.abs(got - want).max() < 1e-12


def test_inject_residual_examples():
    rng = np.random.default_rng(3)
    f_rgb = Tensor(rng.normal(size=(6, 4)))
    f_tir = Tensor(rng.normal(size=(6, 4)))
    zero = Tensor(np.zeros((6, 4)))
    r, t = inject_residual(f_rgb, f_tir, zero)
    np.testing.assert_array_equal(r.data, f_rgb.data)
    np.testing.assert_array_equal(t.data, f_tir.data)

    p = Tensor(rng.normal(size=(6, 4)))
    r1, t1 = inject_residual(f_rgb, f_tir, p)
    r2, t2 = inject_residual(r1, t1, Tensor(-p.data))
    np.testing.assert_allclose(r2.data, f_rgb.data, atol=1e-15)
    np.testing.assert_allclose(t2.data, f_tir.data, atol=1e-15)

    np.testing.assert_array_equal(r1.data, f_rgb.data + p.data)
    np.testing.assert_array_equal(t1.data, f_tir.data + p.data)


def test_template_and_search_segments_never_mix():
    """Perturbing template tokens leaves the search segment's pre-norm
    convolution output unchanged (separate grids, shared kernel)."""
    rng = np.random.default_rng(4)
    p = make_params()
    p.conv_w.data[...] = rng.normal(size=p.conv_w.shape)
    p.ln_g.data[...] = 1.0
    p.ln_b.data[...] = 0.0
    base_r = rng.normal(size=(20, 8))
    base_t = rng.normal(size=(20, 8))
    out1 = mfpg_forward(Tensor(base_r), Tensor(base_t), p, LAYOUT).data
    bumped = base_r.copy()
    bumped[:4] += rng.normal(size=(4, 8))  # template rows only
    out2 = mfpg_forward(Tensor(bumped), Tensor(base_t), p, LAYOUT).data
    np.testing.assert_array_equal(out1[4:], out2[4:])


def test_param_budget_paper_scale():
    assert layer_param_count(768, 96) == 63752
    layer = init_mfpg([1], 768, 96, substream(0, "init.mfpg")).layers[1]
    total = sum(
        t.data.size for t in (layer.proj_w, layer.proj_b, layer.conv_w, layer.conv_b, layer.ln_g, layer.ln_b)
    )
    assert total == 63752


def test_param_budget_toy_scale_by_enumeration():
    dim, beta = 64, 8
    want = dim * 8 + 8 + dim * 8 * 9 + dim + 2 * dim
    assert layer_param_count(dim, beta) == want
    params = init_mfpg([1, 2], dim, beta, substream(1, "init.mfpg"))
    per_layer = sum(p.data.size for n, p in params.named_params().items() if n.startswith("mfpg.l1."))
    assert per_layer == want


def test_bottleneck_width_matches_paper_ratio():
    assert bottleneck_width(768, 96) == 8
    with pytest.raises(ConfigError):
        bottleneck_width(768, 97)


def test_separate_projection_config():
    rng = np.random.default_rng(5)
    p = make_params(shared_projection=False, seed=6)
    assert p.proj_w_tir is not None
    assert not np.array_equal(p.proj_w.data, p.proj_w_tir.data)
    p.conv_w.data[...] = rng.normal(size=p.conv_w.shape)
    a = Tensor(rng.normal(size=(20, 8)))
    b = Tensor(rng.normal(size=(20, 8)))
    # separate projections break the swap symmetry
    out_ab = mfpg_forward(a, b, p, LAYOUT).data
    out_ba = mfpg_forward(b, a, p, LAYOUT).data
    assert not np.array_equal(out_ab, out_ba)


def test_shape_mismatch_rejected():
    p = make_params()
    with pytest.raises(DimensionError):
        mfpg_forward(Tensor(np.zeros((20, 8))), Tensor(np.zeros((19, 8))), p, LAYOUT)
    with pytest.raises(DimensionError):
        mfpg_forward(Tensor(np.zeros((10, 8))), Tensor(np.zeros((10, 8))), p, LAYOUT)
