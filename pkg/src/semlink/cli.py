"""Command-line front end.

Subcommands mirror the experiment lifecycle: gen-data, train-codec,
train-predictor, gen-priority-dataset, train-students, run-eval,
eval-predictor, channel-stats. Every flag overrides the matching key of the
plain-text config file passed with --config; report-producing commands
render figures next to their CSV/JSON output unless --no-plots is given.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from . import codec as codec_mod
from . import report
from .channel import channel_stats
from .codec import Codec, CodecGeometry, train_codec
from .config import ExperimentConfig
from .datasets import gen_synthetic_dataset, load_cifar10
from .distill import DistillDataset, Student, build_distill_dataset, train_student
from .harness import prepare_dataset, run_eval_sweep
from .predictor import Predictor, make_window_dataset, rolling_eval, train_predictor
from .priority import NoiseBudget


def _add_config_args(p: argparse.ArgumentParser, keys):
    p.add_argument("--config", help="plain-text key = value config file")
    for key in keys:
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=f"cfg_{key}", default=None, metavar="V")


def _build_config(args, extra: dict | None = None) -> ExperimentConfig:
    overrides = {k[4:]: v for k, v in vars(args).items()
                 if k.startswith("cfg_") and v is not None}
    if extra:
        overrides.update({k: v for k, v in extra.items() if v is not None})
    return ExperimentConfig.from_sources(getattr(args, "config", None), overrides)


_COMMON_KEYS = (
    "profile", "dataset", "dataset_count", "cifar_train_path", "cifar_test_path",
    "test_frac", "data_seed", "snr_train_db", "snr_test_db", "codec_epochs",
    "codec_batch", "codec_lr", "equalizer", "channel_paths", "channel_doppler_hz",
    "channel_sample_period_s", "channel_seed", "predictor_t1", "predictor_hidden",
    "predictor_sequences", "predictor_seq_len", "predictor_epochs",
    "predictor_stride", "predictor_lr", "alpha", "beta", "budget_rel_scale",
    "budget_steps", "distill_count", "student_epochs", "student_lr", "schemes",
    "emit_traces",
)


def _load_images(args, config: ExperimentConfig, want: str = "train"):
    if args.data:
        path = Path(args.data)
        if path.suffix == ".npy":
            return np.load(path)
        return load_cifar10(path)
    train, test = prepare_dataset(config)
    return train if want == "train" else test


def cmd_gen_data(args):
    config = _build_config(args)
    images = gen_synthetic_dataset(int(args.count), config.img_hw, seed=int(args.seed))
    np.save(args.out, images)
    print(f"wrote {images.shape[0]} images {images.shape[1:]} -> {args.out}")


def cmd_train_codec(args):
    config = _build_config(args)
    images = _load_images(args, config, "train")
    geom = CodecGeometry(img_h=images.shape[2], img_w=images.shape[3])
    codec, history = train_codec(
        images, config.sos_config(), config.snr_train_db,
        epochs=config.codec_epochs, seed=int(args.seed),
        batch_size=config.codec_batch, lr=config.codec_lr,
        equalizer=config.equalizer, geometry=geom, verbose=not args.quiet)
    codec.save(args.out)
    if args.curve:
        codec_mod.save_history_csv(history, args.curve)
        if not args.no_plots:
            report.plot_training_curve(history, Path(args.curve).with_suffix(".png"))
    print(f"final train loss {history[-1][1]:.6f}; saved codec -> {args.out}")


def cmd_train_predictor(args):
    config = _build_config(args)
    predictor, rep = train_predictor(
        config.sos_config(), t1=config.predictor_t1,
        num_sequences=config.predictor_sequences,
        seq_len=config.predictor_seq_len, epochs=config.predictor_epochs,
        seed=int(args.seed), lr=config.predictor_lr,
        stride=config.predictor_stride, hidden=config.predictor_hidden,
        verbose=not args.quiet)
    predictor.save(args.out)
    print(f"holdout one-step NMSE {rep['holdout_one_step_nmse']:.5f}; "
          f"saved predictor -> {args.out}")


def cmd_gen_priority_dataset(args):
    config = _build_config(args)
    codec = Codec.load(args.codec)
    images = _load_images(args, config, "train")[: config.distill_count]
    budget = NoiseBudget(steps=config.budget_steps, rel_scale=config.budget_rel_scale)
    ds_w, ds_r = build_distill_dataset(codec, images, budget, seed=int(args.seed))
    ds_w.save(args.out_w)
    ds_r.save(args.out_r)
    print(f"wrote {len(ds_w)} records each -> {args.out_w}, {args.out_r}")


def cmd_train_students(args):
    config = _build_config(args)
    reports = {}
    for tag, data_path, out_path in (("wnet", args.data_w, args.out_w),
                                     ("rnet", args.data_r, args.out_r)):
        ds = DistillDataset.load(data_path)
        student, rep = train_student(ds, epochs=config.student_epochs,
                                     seed=int(args.seed), lr=config.student_lr)
        student.save(out_path)
        reports[tag] = rep
        print(f"{tag}: holdout MSE {rep['holdout_mse']:.5f}, "
              f"spearman {rep['holdout_spearman_mean']:.3f} -> {out_path}")
    if args.report:
        report.write_json(args.report, reports)


def cmd_run_eval(args):
    config = _build_config(args, {"seed": args.seed})
    codec = Codec.load(args.codec)
    predictor = Predictor.load(args.predictor) if args.predictor else None
    students = None
    if args.wnet and args.rnet:
        students = (Student.load(args.wnet), Student.load(args.rnet))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, records = run_eval_sweep(config, codec, predictor, students,
                                      seed=int(args.seed))
    report.write_results_csv(out_dir / "results.csv", summary["cells"])
    report.write_json(out_dir / "summary.json", summary)
    if config.emit_traces or args.trace:
        report.write_traces_jsonl(out_dir / "traces.jsonl", records,
                                  include_timings=args.timings)
    if not args.no_plots:
        report.plot_psnr_vs_snr(summary, out_dir / "psnr_vs_snr.png")
    for cell in summary["cells"]:
        print(f"{cell['scheme']:>12s}  {cell['snr_db']:5.1f} dB  "
              f"{cell['mean_psnr_db']:.3f} dB  (n={cell['n']})")
    print(f"results -> {out_dir}")


def cmd_eval_predictor(args):
    config = _build_config(args)
    predictor = Predictor.load(args.predictor)
    windows, futures, _ = make_window_dataset(
        config.sos_config(), predictor.t1, num_sequences=args.sequences,
        seq_len=config.predictor_seq_len, seed=int(args.seed),
        stride=config.predictor_stride, future=args.horizon)
    if len(windows) > args.max_windows:
        idx = np.random.default_rng(int(args.seed)).choice(
            len(windows), size=args.max_windows, replace=False)
        idx.sort()
        windows, futures = windows[idx], futures[idx]
    rolling = rolling_eval(predictor, windows, futures)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "predictor_nmse.csv", "w") as fh:
        fh.write("horizon_step,nmse,nmse_persistence\n")
        for i, (a, b) in enumerate(zip(rolling["horizon_nmse"],
                                       rolling["horizon_nmse_persistence"]), 1):
            fh.write(f"{i},{a:.8f},{b:.8f}\n")
    report.write_json(out_dir / "predictor_eval.json", rolling)
    if not args.no_plots:
        report.plot_predictor_horizon(rolling, out_dir / "nmse_vs_horizon.png")
    print(f"rolling NMSE {rolling['nmse']:.4f} vs persistence "
          f"{rolling['nmse_persistence']:.4f}; win fraction "
          f"{rolling['win_fraction']:.3f} -> {out_dir}")


def cmd_channel_stats(args):
    config = _build_config(args)
    stats = channel_stats(config.sos_config(), seed=int(args.seed),
                          n_samples=args.samples)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_json(out_dir / "channel_stats.json", stats)
    if not args.no_plots:
        report.plot_channel_stats(stats, out_dir / "channel_stats.png")
    print(f"E|h|^2 = {stats['mean_power']:.4f}, E|h| = {stats['envelope_mean']:.4f} "
          f"(theory {stats['envelope_mean_theory']:.4f}), "
          f"phase chi2 p = {stats['phase_hist']['p_value']:.4f} -> {out_dir}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="semlink",
        description="Priority-scheduled semantic transmission link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic image dataset (.npy)")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--count", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-codec", help="train the encoder/decoder pair")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--data", help=".npy images or CIFAR-10 binary batch")
    p.add_argument("--out", required=True)
    p.add_argument("--curve", help="training-curve CSV path")
    p.add_argument("--seed", default=0)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_train_codec)

    p = sub.add_parser("train-predictor", help="train the channel forecaster")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", default=0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("gen-priority-dataset",
                       help="run the teacher scorers and store (A, target) pairs")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--codec", required=True)
    p.add_argument("--data")
    p.add_argument("--out-w", required=True)
    p.add_argument("--out-r", required=True)
    p.add_argument("--seed", default=0)
    p.set_defaults(func=cmd_gen_priority_dataset)

    p = sub.add_parser("train-students", help="fit WNet/RNet on teacher targets")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--data-w", required=True)
    p.add_argument("--data-r", required=True)
    p.add_argument("--out-w", required=True)
    p.add_argument("--out-r", required=True)
    p.add_argument("--report")
    p.add_argument("--seed", default=0)
    p.set_defaults(func=cmd_train_students)

    p = sub.add_parser("run-eval", help="scheme-matrix PSNR sweep")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--codec", required=True)
    p.add_argument("--predictor")
    p.add_argument("--wnet")
    p.add_argument("--rnet")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", required=True)
    p.add_argument("--trace", action="store_true", help="emit per-image JSONL")
    p.add_argument("--timings", action="store_true")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run_eval)

    p = sub.add_parser("eval-predictor", help="NMSE vs forecast horizon")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--predictor", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", default=1)
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--sequences", type=int, default=10)
    p.add_argument("--max-windows", type=int, default=500)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_eval_predictor)

    p = sub.add_parser("channel-stats", help="fading-model validation statistics")
    _add_config_args(p, _COMMON_KEYS)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", default=0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_channel_stats)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
