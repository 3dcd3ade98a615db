import numpy as np
import pytest

from vfptrack import data_synth
from vfptrack.data_synth import SyntheticSpec, generate, read_pnm, spec_from_text, spec_to_text, write_pnm
from vfptrack.errors import ConfigError, ParseError


def small_spec(**kw):
    base = dict(length=12, height=64, width=64, target_w=16, target_h=16,
                waypoints=((20.0, 20.0), (44.0, 40.0)), distractors=1, seed=4)
    base.update(kw)
    return SyntheticSpec(**base)


def test_generation_is_deterministic():
    a = generate(small_spec())
    b = generate(small_spec())
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.rgb, fb.rgb)
        assert np.array_equal(fa.tir, fb.tir)
        assert np.array_equal(fa.gt, fb.gt)
        assert fa.flags == fb.flags


def test_frames_carry_valid_ranges_and_boxes():
    for fp in generate(small_spec()):
        assert fp.rgb.shape == (3, 64, 64)
        assert fp.tir.shape == (1, 64, 64)
        assert fp.rgb.min() >= 0.0 and fp.rgb.max() <= 1.0
        assert fp.tir.min() >= 0.0 and fp.tir.max() <= 1.0
        assert fp.gt[2] > 0 and fp.gt[3] > 0


def _mask_for(fp, spec):
    cx, cy = fp.gt[0] + fp.gt[2] / 2, fp.gt[1] + fp.gt[3] / 2
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width]
    inner = ((xx - cx) / (spec.target_w / 2)) ** 2 + ((yy - cy) / (spec.target_h / 2)) ** 2 <= 0.64
    ring = ((xx - cx) / (spec.target_w / 2)) ** 2 + ((yy - cy) / (spec.target_h / 2)) ** 2 >= 2.25
    return inner, ring


def _contrast(img, inner, ring):
    per_channel = np.abs(img[:, inner].mean(axis=1) - img[:, ring].mean(axis=1))
    return per_channel.mean()


def test_darkness_crushes_rgb_contrast_only():
    spec = small_spec(darkness=(4, 8), distractors=0)
    frames = generate(spec)
    inner, ring = _mask_for(frames[5], spec)
    rgb_dark = _contrast(frames[5].rgb, inner, ring)
    tir_dark = _contrast(frames[5].tir, inner, ring)
    inner2, ring2 = _mask_for(frames[1], spec)
    rgb_lit = _contrast(frames[1].rgb, inner2, ring2)
    assert rgb_dark < 0.02
    assert rgb_lit > 0.1
    assert tir_dark > 0.3


def test_crossover_hides_target_in_tir_only():
    spec = small_spec(crossover=(4, 8), distractors=0)
    frames = generate(spec)
    inner, ring = _mask_for(frames[5], spec)
    assert _contrast(frames[5].tir, inner, ring) < 0.02
    assert _contrast(frames[5].rgb, inner, ring) > 0.1
    assert frames[5].flags == ("crossover",)


def test_occlusion_covers_target_in_both():
    spec = small_spec(occlusion=(4, 8), distractors=0)
    frames = generate(spec)
    inner, _ = _mask_for(frames[5], spec)
    occ_rgb = frames[5].rgb[:, inner]
    # occluder is flat: near-zero variance inside the target region
    assert occ_rgb.std() < 0.05
    assert frames[5].flags == ("occlusion",)
    assert frames[5].gt[2] == spec.target_w  # annotation persists


def test_trajectory_exact_at_waypoints():
    spec = small_spec(length=11, jitter=2.0)
    centers = data_synth.trajectory(spec)
    np.testing.assert_allclose(centers[0], [20.0, 20.0], atol=1e-12)
    np.testing.assert_allclose(centers[10], [44.0, 40.0], atol=1e-12)
    mid = (np.array([20.0, 20.0]) + np.array([44.0, 40.0])) / 2
    assert np.abs(centers[5] - mid).max() < 8.0  # wobble but bounded


def test_modality_complementarity_during_darkness():
    """Localizability margin: during darkness the first-frame template
    matches the TIR target far better than the RGB one (normalized
    cross-correlation score at the true location)."""
    spec = small_spec(length=10, darkness=(5, 10), distractors=0, jitter=0.0, noise_rgb=0.05)
    frames = generate(spec)

    def ncc_at_gt(img0, img, gt0, gt):
        x, y, w, h = (int(round(v)) for v in gt0)
        tpl = img0[:, y : y + h, x : x + w]
        tpl = tpl - tpl.mean()
        gx, gy = int(round(gt[0])), int(round(gt[1]))
        win = img[:, gy : gy + h, gx : gx + w]
        win = win - win.mean()
        denom = np.sqrt((tpl**2).sum() * (win**2).sum()) + 1e-12
        return float((tpl * win).sum() / denom)

    f0, fd = frames[0], frames[7]
    score_tir = ncc_at_gt(f0.tir, fd.tir, f0.gt, fd.gt)
    score_rgb = ncc_at_gt(f0.rgb, fd.rgb, f0.gt, fd.gt)
    assert score_tir > 0.8
    assert score_tir > score_rgb + 0.3


def test_invalid_specs_rejected():
    with pytest.raises(ConfigError):
        small_spec(darkness=(10, 20)).validate()  # beyond length
    with pytest.raises(ConfigError):
        small_spec(waypoints=((2.0, 2.0), (44.0, 40.0))).validate()  # starts at border
    with pytest.raises(ConfigError):
        small_spec(target_shape="triangle").validate()


# ----------------------------------------------------------------------- i/o


def test_save_load_round_trip(tmp_path):
    spec = small_spec(occlusion=(4, 6))
    frames = generate(spec)
    data_synth.save(frames, str(tmp_path), spec=spec)
    loaded = data_synth.load(str(tmp_path))
    assert len(loaded) == len(frames)
    for orig, back in zip(frames, loaded):
        assert np.abs(orig.rgb - back.rgb).max() <= 1.0 / 255.0
        assert np.abs(orig.tir - back.tir).max() <= 1.0 / 255.0
        np.testing.assert_allclose(orig.gt, back.gt)
        assert orig.flags == back.flags


def test_annotation_line_count_matches_frames(tmp_path):
    frames = generate(small_spec(length=9))
    data_synth.save(frames, str(tmp_path))
    lines = (tmp_path / "gt.txt").read_text().strip().splitlines()
    assert len(lines) == 9
    assert (tmp_path / "rgb" / "000008.ppm").exists()
    assert (tmp_path / "tir" / "000008.pgm").exists()


def test_regeneration_gives_byte_identical_files(tmp_path):
    spec = small_spec()
    a, b = tmp_path / "a", tmp_path / "b"
    data_synth.save(generate(spec), str(a), spec=spec)
    data_synth.save(generate(spec), str(b), spec=spec)
    for rel in ["gt.txt", "spec.txt", "rgb/000003.ppm", "tir/000003.pgm"]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_pnm_round_trip_quantization(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((3, 5, 7))
    path = tmp_path / "x.ppm"
    write_pnm(str(path), img)
    back = read_pnm(str(path))
    assert back.shape == (3, 5, 7)
    assert np.abs(back - img).max() <= 1.0 / 255.0


def test_truncated_ppm_reports_byte_offset(tmp_path):
    img = np.random.default_rng(1).random((3, 4, 4))
    path = tmp_path / "x.ppm"
    write_pnm(str(path), img)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(ParseError, match=r"byte \d+"):
        read_pnm(str(path))


def test_bad_magic_and_header_report_position(tmp_path):
    path = tmp_path / "bad.ppm"
    path.write_bytes(b"P9\n4 4\n255\n" + b"\0" * 48)
    with pytest.raises(ParseError, match="magic"):
        read_pnm(str(path))
    path.write_bytes(b"P6\n4 x\n255\n" + b"\0" * 48)
    with pytest.raises(ParseError, match="token"):
        read_pnm(str(path))


def test_spec_text_round_trip():
    spec = small_spec(darkness=(2, 5), crossover=(6, 9), target_shape="rectangle")
    text = spec_to_text(spec)
    back = spec_from_text(text)
    assert back == spec
    with pytest.raises(ConfigError, match="unknown"):
        spec_from_text("bogus_key = 3\n")
