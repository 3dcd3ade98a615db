"""Self-contained oracle suites behind `vfptrack check`.

Each suite re-derives expected values through an independent route (naive
DFT, central finite differences, explicit-loop reimplementation, brute
counting) and compares the production path against it. Suites return
(name, passed, detail) rows; the CLI prints one line per row and exits
nonzero if anything failed.
"""

import numpy as np

from . import metrics, ops
from .config import Config
from .data_synth import SyntheticSpec, generate
from .errors import OptimizerError
from .fourier import ComplexTensor, dft_1d_naive, fft_1d, fourier_prompt, fourier_prompt_variant
from .head import BBox
from .loss import total_loss
from .mfpg import layer_param_count
from .model import TrackerModel
from .tensor import Tensor, backward
from .training import frozen_fingerprint, partition_params, train


def fd_grad(fn, arr, h=1e-5):
    """Central finite differences of scalar fn() w.r.t. arr (in place)."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = fn()
        flat[i] = old - h
        fm = fn()
        flat[i] = old
        g.flat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(analytic, numeric):
    scale = max(np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


# ------------------------------------------------------------------ fft suite


def fft_suite(fft_fn=None):
    fft_fn = fft_1d if fft_fn is None else fft_fn
    rng = np.random.default_rng(20240)
    results = []

    worst = 0.0
    for n in range(1, 65):
        x = ComplexTensor(rng.normal(size=(2, n)), rng.normal(size=(2, n)))
        diff = np.abs(fft_fn(x, 1).to_complex() - dft_1d_naive(x, 1).to_complex()).max()
        worst = max(worst, diff)
    results.append(("fft vs naive dft, lengths 1..64", worst < 1e-9, f"max abs diff {worst:.3g}"))

    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(65, 193))
        x = ComplexTensor(rng.normal(size=(1, n)), rng.normal(size=(1, n)))
        diff = np.abs(fft_fn(x, 1).to_complex() - dft_1d_naive(x, 1).to_complex()).max()
        worst = max(worst, diff)
    results.append(("fft vs naive dft, 100 random larger", worst < 1e-9, f"max abs diff {worst:.3g}"))

    a, b = rng.normal(), rng.normal()
    x = ComplexTensor(rng.normal(size=(3, 24)), rng.normal(size=(3, 24)))
    y = ComplexTensor(rng.normal(size=(3, 24)), rng.normal(size=(3, 24)))
    mix = ComplexTensor(a * x.re + b * y.re, a * x.im + b * y.im)
    lhs = fft_fn(mix, 1).to_complex()
    rhs = a * fft_fn(x, 1).to_complex() + b * fft_fn(y, 1).to_complex()
    diff = np.abs(lhs - rhs).max()
    results.append(("fft linearity", diff < 1e-9, f"max abs diff {diff:.3g}"))

    z = fft_fn(ComplexTensor(np.zeros((2, 12))), 1).to_complex()
    results.append(("fft of zeros is zeros", np.abs(z).max() == 0.0, ""))

    t = rng.normal(size=(5, 12))
    got = fourier_prompt(Tensor(t)).data
    step1 = dft_1d_naive(ComplexTensor(t), axis=1)
    step2 = dft_1d_naive(step1, axis=0)
    diff = np.abs(got - step2.re).max()
    results.append(("prompt transform vs composed naive 2D DFT", diff < 1e-9, f"{diff:.3g}"))
    return results


# ----------------------------------------------------------------- grad suite


def _op_cases(rng):
    c = {}
    c["linear"] = {
        "arrs": [rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5,))],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(ops.linear(*ts), wsum)),
        "wshape": (3, 5),
    }
    c["layer_norm"] = {
        "arrs": [rng.normal(size=(4, 6)), rng.normal(size=(6,)), rng.normal(size=(6,))],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(ops.layer_norm(ts[0], ts[1], ts[2], 1e-6), wsum)),
        "wshape": (4, 6),
    }
    c["gelu"] = {
        "arrs": [rng.normal(size=(4, 5))],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(ops.gelu(ts[0]), wsum)),
        "wshape": (4, 5),
    }
    c["softmax"] = {
        "arrs": [rng.normal(size=(4, 5))],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(ops.softmax(ts[0]), wsum)),
        "wshape": (4, 5),
    }
    c["sigmoid"] = {
        "arrs": [rng.normal(size=(4, 5))],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(ops.sigmoid(ts[0]), wsum)),
        "wshape": (4, 5),
    }
    c["relu"] = {
        # keep values away from the kink so finite differences stay clean
        "arrs": [rng.normal(size=(4, 5)) + np.sign(rng.normal(size=(4, 5))) * 0.05],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(ops.relu(ts[0]), wsum)),
        "wshape": (4, 5),
    }
    c["conv2d"] = {
        "arrs": [rng.normal(size=(2, 4, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=(3,))],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(ops.conv2d(*ts), wsum)),
        "wshape": (3, 4, 4),
    }
    c["fourier_prompt"] = {
        "arrs": [rng.normal(size=(4, 6))],
        "fn": lambda ts, wsum: ops.sum_all(ops.mul(fourier_prompt(ts[0]), wsum)),
        "wshape": (4, 6),
    }
    c["fourier_prompt_magnitude"] = {
        "arrs": [rng.normal(size=(4, 6))],
        "fn": lambda ts, wsum: ops.sum_all(
            ops.mul(fourier_prompt_variant(ts[0], "both", "magnitude"), wsum)
        ),
        "wshape": (4, 6),
    }
    return c


def grad_suite(seeds=20, tol=1e-4):
    results = []
    for op_name in _op_cases(np.random.default_rng(0)):
        worst = 0.0
        for seed in range(seeds):
            rng = np.random.default_rng(1000 + seed)
            case = _op_cases(rng)[op_name]
            arrs = case["arrs"]
            wsum = ops.constant(rng.normal(size=case["wshape"]))
            ts = [Tensor(a.copy(), requires_grad=True) for a in arrs]
            backward(case["fn"](ts, wsum))
            for t, a in zip(ts, arrs):
                # fd_grad perturbs `a` in place; the closure rebuilds the graph
                num = fd_grad(lambda: case["fn"]([Tensor(x) for x in arrs], wsum).item(), a)
                worst = max(worst, rel_err(t.grad, num))
        results.append((f"per-op gradient: {op_name}", worst < tol, f"max rel err {worst:.3g}"))
    results.extend(full_model_grad_spotchecks())
    return results


def full_model_grad_spotchecks(per_group=5, tol=1e-3):
    """Central-difference probes of randomly chosen trainable scalars
    against the full forward + objective, on the default toy model."""
    cfg = Config(prompts_adaptive_alpha=True, seed=7)
    model = TrackerModel(cfg)
    rng = np.random.default_rng(99)
    # move the zero-initialized maps off zero so every path carries signal
    named = model.named_params()
    for name, p in named.items():
        if p.trainable and np.all(p.data == 0.0):
            p.data[...] = rng.normal(0.0, 0.05, p.shape)
    tpl = cfg.encoder_template
    srch = cfg.encoder_search
    zr = rng.random((3, tpl, tpl))
    xr = rng.random((3, srch, srch))
    zt = rng.random((3, tpl, tpl))
    xt = rng.random((3, srch, srch))
    gt = BBox(0.55, 0.45, 0.3, 0.35)

    def loss_value():
        out, _, _, _ = model.forward((zr, xr), (zt, xt))
        return total_loss(out, gt, model.loss_weights)

    model.zero_grads()
    loss, _ = loss_value()
    backward(loss)
    groups = {}
    for name, p in named.items():
        if not p.trainable:
            continue
        groups.setdefault(name.split(".")[0], []).append((name, p))

    results = []
    for group, params in sorted(groups.items()):
        worst = 0.0
        for k in range(per_group):
            name, p = params[int(rng.integers(0, len(params)))]
            idx = int(rng.integers(0, p.data.size))
            old = p.data.flat[idx]
            h = 1e-5
            p.data.flat[idx] = old + h
            fp = loss_value()[0].item()
            p.data.flat[idx] = old - h
            fm = loss_value()[0].item()
            p.data.flat[idx] = old
            num = (fp - fm) / (2.0 * h)
            ana = p.grad.flat[idx]
            err = abs(ana - num) / max(abs(num), 1e-8)
            worst = max(worst, err)
        results.append(
            (f"full-model gradient spot checks: {group}", worst < tol, f"max rel err {worst:.3g}")
        )
    return results


# --------------------------------------------------------------- freeze suite


def _tiny_run(steps=30):
    spec = SyntheticSpec(length=8, height=64, width=64, target_w=16, target_h=16,
                         waypoints=((20.0, 20.0), (44.0, 44.0)), distractors=1, seed=3)
    frames = generate(spec)
    cfg = Config(encoder_layers=2, encoder_dim=16, encoder_heads=2, encoder_patch=8,
                 encoder_template=16, encoder_search=32, prompts_count=4, mfpg_beta=4,
                 train_steps=steps, seed=11)
    model = TrackerModel(cfg)
    before = frozen_fingerprint(model)
    _, trainable = partition_params(model)
    t_before = {k: p.data.copy() for k, p in trainable.items()}
    train(cfg, frames, model=model)
    return model, before, t_before


def freeze_suite(steps=30):
    model, before, t_before = _tiny_run(steps)
    after = frozen_fingerprint(model)
    results = [("frozen set hash unchanged after training", before == after, f"{before[:12]}..")]
    _, trainable = partition_params(model)
    moved = any(not np.array_equal(t_before[k], trainable[k].data) for k in trainable)
    results.append(("trainable set changed during training", moved, ""))
    nan_guard = False
    try:
        p = next(iter(trainable.values()))
        p.value.grad[...] = np.nan
        from .training import OptimState, optimizer_step

        optimizer_step(OptimState(lr=1e-3, weight_decay=0.0, total_steps=1), trainable)
    except OptimizerError:
        nan_guard = True
    results.append(("optimizer aborts on non-finite gradients", nan_guard, ""))
    return results


# ----------------------------------------------------------------- mfpg suite


def mfpg_suite():
    from .encoder import TokenLayout
    from .mfpg import init_mfpg, mfpg_forward

    rng = np.random.default_rng(5)
    layout = TokenLayout(n_prompt=0, n_template=4, n_search=16,
                         template_grid=(2, 2), search_grid=(4, 4))
    params = init_mfpg([1], dim=8, beta=4, rng=rng).layers[1]
    f_rgb = Tensor(rng.normal(size=(20, 8)))
    f_tir = Tensor(rng.normal(size=(20, 8)))
    results = []

    out_a = mfpg_forward(f_rgb, f_tir, params, layout).data
    out_b = mfpg_forward(f_tir, f_rgb, params, layout).data
    results.append(("modality swap commutativity", np.array_equal(out_a, out_b), ""))

    results.append(("zero-initialized block emits zero prompt", np.all(out_a == 0.0), ""))

    params.conv_w.data[...] = rng.normal(0.0, 0.3, params.conv_w.shape)
    params.conv_b.data[...] = rng.normal(0.0, 0.1, params.conv_b.shape)
    got = mfpg_forward(f_rgb, f_tir, params, layout).data
    want = _mfpg_loops(f_rgb.data, f_tir.data, params, layout)
    diff = np.abs(got - want).max()
    results.append(("loop-level oracle equivalence", diff < 1e-12, f"max abs diff {diff:.3g}"))

    budget = layer_param_count(768, 96)
    enum = sum(p.data.size for p in _enumerate_layer_params(768, 96))
    results.append(
        ("paper-scale parameter budget 63752", budget == 63752 and enum == 63752,
         f"closed form {budget}, enumerated {enum}"),
    )
    return results


def _enumerate_layer_params(dim, beta):
    from .mfpg import init_mfpg

    layer = init_mfpg([1], dim, beta, np.random.default_rng(0)).layers[1]
    return [layer.proj_w, layer.proj_b, layer.conv_w, layer.conv_b, layer.ln_g, layer.ln_b]


def _mfpg_loops(f_rgb, f_tir, params, layout):
    """Straight-line reimplementation with explicit loops."""
    w, b = params.proj_w.data, params.proj_b.data
    cw, cb = params.conv_w.data, params.conv_b.data
    n, d = f_rgb.shape
    c = w.shape[1]
    s = np.zeros((n, c))
    for i in range(n):
        for j in range(c):
            acc = 2.0 * b[j]
            for k in range(d):
                acc += f_rgb[i, k] * w[k, j] + f_tir[i, k] * w[k, j]
            s[i, j] = acc
    fused = np.zeros((n, d))
    segs = [(0, layout.template_grid), (layout.n_template, layout.search_grid)]
    for off, (gh, gw) in segs:
        grid = np.zeros((c, gh, gw))
        for ch in range(c):
            for i in range(gh):
                for j in range(gw):
                    grid[ch, i, j] = s[off + i * gw + j, ch]
        for o in range(d):
            for i in range(gh):
                for j in range(gw):
                    acc = cb[o]
                    for ch in range(c):
                        for ki in range(3):
                            for kj in range(3):
                                ii, jj = i + ki - 1, j + kj - 1
                                if 0 <= ii < gh and 0 <= jj < gw:
                                    acc += cw[o, ch, ki, kj] * grid[ch, ii, jj]
                    fused[off + i * gw + j, o] = acc
    g, bt = params.ln_g.data, params.ln_b.data
    out = np.zeros_like(fused)
    for i in range(n):
        row = fused[i]
        mu = row.mean()
        var = ((row - mu) ** 2).mean()
        out[i] = (row - mu) / np.sqrt(var + 1e-5) * g + bt
    return out


# -------------------------------------------------------------- metrics suite


def metrics_suite():
    results = []
    gts = np.array([[10.0, 10, 20, 20], [40, 40, 10, 12], [5, 80, 30, 15], [60, 20, 8, 8], [0, 0, 50, 50]])
    rep = metrics.evaluate(gts, gts)
    ok = rep.sr == 1.0 and rep.pr == 1.0 and rep.npr == 1.0
    results.append(("gt as predictions scores 1.0 on all three metrics", ok,
                    f"sr={rep.sr} pr={rep.pr} npr={rep.npr}"))

    preds = np.array([[12.0, 11, 20, 20], [100, 100, 10, 12], [5, 80, 30, 15], [61, 21, 8, 8], [200, 200, 5, 5]])
    rep = metrics.evaluate(preds, gts)
    want_succ = []
    for tau in metrics.SUCCESS_TAUS:
        count = sum(1 for p, g in zip(preds, gts) if metrics.iou(p, g) > tau)
        want_succ.append(count / len(gts))
    ok = np.allclose(rep.success_curve, want_succ) and abs(rep.sr - np.mean(want_succ)) < 1e-15
    results.append(("hand case matches brute-force counting", ok, ""))

    mono = np.all(np.diff(rep.success_curve) <= 1e-15)
    results.append(("success curve is non-increasing", bool(mono), ""))
    return results


SUITES = {
    "fft": fft_suite,
    "grad": grad_suite,
    "freeze": freeze_suite,
    "mfpg": mfpg_suite,
    "metrics": metrics_suite,
}


def run_suites(names):
    all_ok = True
    for suite_name in names:
        for name, ok, detail in SUITES[suite_name]():
            all_ok &= bool(ok)
            status = "PASS" if ok else "FAIL"
            tail = f"  ({detail})" if detail else ""
            print(f"[{status}] {suite_name}: {name}{tail}")
    return all_ok
