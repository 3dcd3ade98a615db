"""Operator surface: data generation, training, tracking, evaluation,
oracle suites, and ablation sweeps.

Every command is deterministic given its config and seed; train embeds the
resolved config in the checkpoint, track writes it to a sidecar file next
to the results, eval inlines it in the report.
"""

import argparse
import os
import sys

import numpy as np

from . import checks, config as cfgmod, data_synth, metrics, tracker, training
from .errors import ConfigError, ParseError

SWEEP_AXES = ("alpha", "mfpg-layers", "prompt-layers", "fft-mode")


def _load_cfg(path):
    if path is None:
        return cfgmod.Config()
    return cfgmod.load_config(path)


def _sequence_dirs(data_dir):
    """A data dir is either one sequence or a directory of sequences."""
    if os.path.isfile(os.path.join(data_dir, "gt.txt")):
        return [data_dir]
    subs = sorted(
        os.path.join(data_dir, d)
        for d in os.listdir(data_dir)
        if os.path.isfile(os.path.join(data_dir, d, "gt.txt"))
    )
    if not subs:
        raise ParseError(f"{data_dir}: no gt.txt found in this directory or its children")
    return subs


def cmd_gen_data(args):
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = data_synth.spec_from_text(fh.read())
    seq = data_synth.generate(spec)
    data_synth.save(seq, args.out, spec=spec)
    print(f"wrote {len(seq)} frame pairs to {args.out}")
    return 0


def cmd_train(args):
    cfg = _load_cfg(args.config)
    frames = data_synth.load(_sequence_dirs(args.data)[0])
    result = training.train(cfg, frames, log_every=args.log_every)
    training.save_checkpoint(args.out, result.model, result.opt)
    curve = args.curve or (args.out + ".loss.csv")
    training.write_loss_curve(curve, result.loss_rows)
    print(cfgmod.config_text(cfg), end="")
    print(f"trained {len(result.loss_rows)} steps; checkpoint {args.out}, curve {curve}")
    return 0


def cmd_track(args):
    model, _, _ = training.load_checkpoint(args.ckpt)
    seq_dirs = _sequence_dirs(args.data)
    all_rows = []
    for seq_dir in seq_dirs:
        frames = data_synth.load(seq_dir)
        dump_dir = None
        if args.dump_scores:
            dump_dir = (
                args.dump_scores
                if len(seq_dirs) == 1
                else os.path.join(args.dump_scores, os.path.basename(seq_dir))
            )
            os.makedirs(dump_dir, exist_ok=True)
        boxes = tracker.run_sequence(
            frames,
            model,
            gamma=model.cfg.track_gamma,
            dump_scores_dir=dump_dir,
            zero_modality=args.zero_modality,
        )
        all_rows.append((seq_dir, boxes))
    if len(all_rows) == 1:
        tracker.save_results(args.out, all_rows[0][1])
    else:
        os.makedirs(args.out, exist_ok=True)
        for seq_dir, boxes in all_rows:
            tracker.save_results(os.path.join(args.out, os.path.basename(seq_dir) + ".txt"), boxes)
    with open(args.out + ".resolved.cfg", "w", encoding="utf-8") as fh:
        fh.write(cfgmod.config_text(model.cfg))
    print(f"tracked {len(all_rows)} sequence(s) -> {args.out}")
    return 0


def _eval_runs(results_path, data_dir):
    seq_dirs = _sequence_dirs(data_dir)
    runs = []
    if os.path.isdir(results_path):
        for seq_dir in seq_dirs:
            name = os.path.basename(seq_dir)
            preds = tracker.load_results(os.path.join(results_path, name + ".txt"))
            runs.append((name, preds, data_synth.load_gt_boxes(seq_dir)))
    else:
        preds = tracker.load_results(results_path)
        runs.append((os.path.basename(seq_dirs[0]), preds, data_synth.load_gt_boxes(seq_dirs[0])))
    return runs


def cmd_eval(args):
    rep = metrics.evaluate_many(_eval_runs(args.results, args.data))
    text = metrics.report_text(rep)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
        if args.config:
            for line in cfgmod.config_text(_load_cfg(args.config)).splitlines():
                fh.write(f"config.{line}\n")
    base = os.path.splitext(args.out)[0]
    for suffix, taus, curve in (
        ("success", metrics.SUCCESS_TAUS, rep.success_curve),
        ("precision", metrics.PRECISION_TAUS, rep.precision_curve),
        ("norm_precision", metrics.NORM_PRECISION_TAUS, rep.norm_precision_curve),
    ):
        with open(f"{base}_{suffix}.csv", "w", encoding="utf-8") as fh:
            fh.write(metrics.curve_csv(taus, curve))
    print(text, end="")
    return 0


def cmd_check(args):
    names = list(checks.SUITES) if args.suite == "all" else [args.suite]
    return 0 if checks.run_suites(names) else 1


def _sweep_grid(axis, cfg):
    if axis == "alpha":
        return [("alpha", round(v, 2), {"prompts_alpha": round(v, 2)}) for v in np.arange(0, 1.01, 0.1)]
    if axis == "fft-mode":
        return [("fft-mode", m, {"prompts_fft_mode": m}) for m in ("channel-only", "spatial-only", "both")]
    n = cfg.encoder_layers
    half = max(n // 2, 1)
    spans = [f"1-{half}", f"{min(half + 1, n)}-{n}", f"1-{n}"]
    key = "encoder_mfpg_layers" if axis == "mfpg-layers" else "prompts_layers"
    return [(axis, span, {key: span}) for span in spans]


def cmd_sweep(args):
    base = _load_cfg(args.config)
    frames = data_synth.load(_sequence_dirs(args.data)[0])
    rows = []
    for axis, value, overrides in _sweep_grid(args.axis, base):
        cfg = cfgmod.Config(**{**vars(base), **overrides})
        cfgmod.validate(cfg)
        result = training.train(cfg, frames)
        boxes = tracker.run_sequence(frames, result.model, gamma=cfg.track_gamma)
        gts = np.array([fp.gt for fp in frames])
        rep = metrics.evaluate(boxes, gts)
        rows.append((value, rep.sr, rep.pr, rep.npr))
        print(f"{axis}={value}: SR={rep.sr:.4f} PR={rep.pr:.4f} NPR={rep.npr:.4f}")
    with open(args.out, "w", encoding="utf-8") as fh:
        for line in cfgmod.config_text(base).splitlines():
            fh.write(f"# {line}\n")
        fh.write("value,SR,PR,NPR\n")
        for value, sr, pr, npr in rows:
            fh.write(f"{value},{sr:.17g},{pr:.17g},{npr:.17g}\n")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="vfptrack", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic paired sequence")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the trainable set on a sequence")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("track", help="run the tracker over sequences")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-scores")
    p.add_argument("--zero-modality", choices=("rgb", "tir"))
    p.set_defaults(fn=cmd_track)

    p = sub.add_parser("eval", help="score tracking results against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("check", help="run the oracle suites")
    p.add_argument("--suite", choices=tuple(checks.SUITES) + ("all",), default="all")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("sweep", help="train/evaluate along one ablation axis")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
