"""Command-line entry points for the labeling, training and evaluation pipeline.

Layout under ``--out`` (default ``runs``)::

    windows/<DATASET>.txt      cached prediction windows      (ingest)
    labels/<DATASET>.txt       hybrid group labels             (label)
    label_stats.tsv            labeled-share table             (label-stats)
    checkpoints/<TEST>.ckpt    trained parameters              (train)
    checkpoints/<TEST>.loss.tsv per-epoch loss                 (train)
    eval_<TEST>.tsv            ADE/FDE report                  (eval)
    frechet.tsv                group-similarity report         (frechet-report)
    plot_<TEST>.tsv            trajectories behind a figure    (plot-data)

Raw annotation files are read from ``<data_dir>/<dataset lower-case>/*.txt``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .coherence import (
    NOISE,
    GroupLabeling,
    Provenance,
    hybrid_label,
    labeling_stats_by_dataset,
    labels_by_window,
    read_labels,
    write_labels,
)
from .config import DATA_DIR_ENV, RunConfig
from .errors import ConfigError, TrajGroupError
from .evaluation import (
    best_of_n,
    format_eval_table,
    format_frechet_table,
    format_label_rate_table,
    group_similarity_report,
    sample_noise,
)
from .model import make_batch, make_samples, predict
from .params import load_checkpoint, save_checkpoint
from .selftest import run_all
from .synthetic import make_recordings
from .trajdata import (
    Dataset,
    TrajectoryWindow,
    build_windows,
    infer_frame_step,
    leave_one_out_split,
    parse_dataset,
    read_windows,
    write_windows,
)
from .training import train

logger = logging.getLogger("trajgroup")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _out(cfg: RunConfig, *parts: str) -> Path:
    path = Path(cfg.out_dir, *parts)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _window_path(cfg: RunConfig, ds: Dataset) -> Path:
    return Path(cfg.out_dir, "windows", f"{ds.value}.txt")


def _label_path(cfg: RunConfig, ds: Dataset) -> Path:
    return Path(cfg.out_dir, "labels", f"{ds.value}.txt")


def _load_windows(cfg: RunConfig, datasets: Sequence[Dataset]) -> dict[Dataset, list[TrajectoryWindow]]:
    out = {}
    for ds in datasets:
        path = _window_path(cfg, ds)
        if not path.exists():
            raise ConfigError(f"no cached windows for {ds.value} at {path}; run 'ingest' first")
        out[ds] = read_windows(path)
    return out


def _load_labels(cfg: RunConfig, windows: dict[Dataset, list[TrajectoryWindow]]) -> list[GroupLabeling]:
    """Saved labels where present, freshly computed hybrid labels otherwise."""
    labs: list[GroupLabeling] = []
    for ds, ws in windows.items():
        path = _label_path(cfg, ds)
        if path.exists():
            labs.extend(read_labels(path))
        else:
            logger.info("no label file for %s; labeling %d windows", ds.value, len(ws))
            cf, db = cfg.clustering_for(ds)
            labs.extend(hybrid_label(w, cf, db) for w in ws)
    return labs


def cf_only(lab: GroupLabeling) -> GroupLabeling:
    """The coherent-filter stage of a hybrid labeling (DBSCAN clusters become NOISE)."""
    keep = {p: (g if lab.provenance[p] is Provenance.CF else NOISE) for p, g in lab.label.items()}
    prov = {p: (Provenance.CF if g != NOISE else Provenance.NOISE) for p, g in keep.items()}
    return GroupLabeling(lab.window_id, keep, prov, lab.dataset)


def _test_set(name: str) -> Dataset:
    return Dataset.parse(name)


def _split_windows(cfg: RunConfig, test: Dataset):
    """(train windows, test windows, labels) for a held-out set; SYNTH trains and tests on itself."""
    if test is Dataset.SYNTH:
        windows = _load_windows(cfg, [Dataset.SYNTH])
        return windows[Dataset.SYNTH], windows[Dataset.SYNTH], labels_by_window(_load_labels(cfg, windows))
    windows = _load_windows(cfg, cfg.datasets)
    split = leave_one_out_split(windows, test)
    return split.train_windows, split.test_windows, labels_by_window(_load_labels(cfg, windows))


def _checkpoint_path(cfg: RunConfig, test: Dataset, explicit: str | None) -> Path:
    return Path(explicit) if explicit else Path(cfg.out_dir, "checkpoints", f"{test.value}.ckpt")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: RunConfig, args) -> int:
    if args.synthetic:
        windows, _ = make_recordings(args.synthetic, seed=cfg.seed, n_frames=args.frames, stride=cfg.stride)
        write_windows(windows, _out(cfg, "windows", "SYNTH.txt"))
        print(f"SYNTH\t{len(windows)} windows")
        return 0
    for ds in cfg.datasets:
        folder = Path(cfg.data_dir, ds.value.lower())
        files = sorted(folder.glob("*.txt"))
        if not files:
            raise ConfigError(f"no annotation files for {ds.value} in {folder} (set --data-dir or ${DATA_DIR_ENV})")
        windows: list[TrajectoryWindow] = []
        for f in files:
            dets = parse_dataset(f)
            step = infer_frame_step(dets) if cfg.frame_step == "auto" else cfg.frame_step
            windows.extend(build_windows(dets, frame_step=step, stride=cfg.stride, dataset=ds,
                                         first_window_id=len(windows)))
        write_windows(windows, _out(cfg, "windows", f"{ds.value}.txt"))
        print(f"{ds.value}\t{len(windows)} windows from {len(files)} files")
    return 0


def _datasets_arg(cfg: RunConfig, args) -> list[Dataset]:
    return [Dataset.SYNTH] if getattr(args, "synthetic", False) else cfg.datasets


def cmd_label(cfg: RunConfig, args) -> int:
    windows = _load_windows(cfg, _datasets_arg(cfg, args))
    all_labs = []
    for ds, ws in windows.items():
        cf, db = cfg.clustering_for(ds)
        labs = [hybrid_label(w, cf, db) for w in ws]
        write_labels(labs, _out(cfg, "labels", f"{ds.value}.txt"))
        all_labs.extend(labs)
    sys.stdout.write(format_label_rate_table(labeling_stats_by_dataset(all_labs)))
    return 0


def cmd_label_stats(cfg: RunConfig, args) -> int:
    labs = []
    for ds in _datasets_arg(cfg, args):
        path = _label_path(cfg, ds)
        if not path.exists():
            raise ConfigError(f"no labels for {ds.value} at {path}; run 'label' first")
        labs.extend(read_labels(path))
    table = format_label_rate_table(labeling_stats_by_dataset(labs))
    _out(cfg, "label_stats.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    test = _test_set(args.test_set)
    train_windows, _, labels = _split_windows(cfg, test)
    if not train_windows:
        raise ConfigError(f"no training windows for held-out set {test.value}")

    def report(epoch: int, loss: float) -> None:
        logger.info("epoch %d/%d loss %.6f", epoch, cfg.train.epochs, loss)

    result = train(train_windows, labels, cfg.train, on_epoch=report)
    ckpt = _checkpoint_path(cfg, test, args.checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.params, ckpt, {"test_set": test.value, "train": cfg.train.to_dict(),
                                          "n_samples": result.n_samples})
    lines = ["# epoch\tloss\trecon\tkl"] + [
        f"{h['epoch']}\t{h['loss']!r}\t{h['recon']!r}\t{h['kl']!r}" for h in result.history
    ]
    ckpt.with_suffix(".loss.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    final = result.loss_curve[-1] if result.loss_curve else float("nan")
    print(f"trained on {result.n_samples} pairs, final loss {final:.6f}, checkpoint {ckpt}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    test = _test_set(args.test_set)
    _, test_windows, labels = _split_windows(cfg, test)
    params = load_checkpoint(_checkpoint_path(cfg, test, args.checkpoint))
    samples = make_samples(test_windows, labels, cfg.train.inter_self_loop)
    report = best_of_n(params, samples, n=cfg.n_samples, seed=cfg.seed, mean_mode=args.mean_mode,
                       dataset=test.value)
    table = format_eval_table([report])
    _out(cfg, f"eval_{test.value}.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_frechet(cfg: RunConfig, args) -> int:
    windows = _load_windows(cfg, _datasets_arg(cfg, args))
    hybrid = _load_labels(cfg, windows)
    flat = [w for ws in windows.values() for w in ws]
    segment = args.segment
    hyb = group_similarity_report(flat, hybrid, segment)
    cf = group_similarity_report(flat, [cf_only(lab) for lab in hybrid], segment)
    table = format_frechet_table(cf, hyb)
    _out(cfg, "frechet.tsv").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_plot_data(cfg: RunConfig, args) -> int:
    """Observed, ground-truth and predicted tracks of selected test windows, one point per line."""
    test = _test_set(args.test_set)
    _, test_windows, labels = _split_windows(cfg, test)
    params = load_checkpoint(_checkpoint_path(cfg, test, args.checkpoint))
    wanted = set(args.windows) if args.windows else {w.window_id for w in test_windows[: args.limit]}
    chosen = [w for w in test_windows if w.window_id in wanted]
    if not chosen:
        raise ConfigError("none of the requested windows exist in the test set")
    samples = make_samples(chosen, labels, cfg.train.inter_self_loop)
    batch = make_batch(samples)
    _, mean_abs = predict(params, batch)
    _, draws = predict(params, batch, sample_noise(args.draws, batch.size, params.dims.z, cfg.seed))
    lines = ["# window_id\tped_id\tgroup\tkind\tstep\tx\ty"]
    for k, s in enumerate(samples):
        w, pid = s.window, s.window.ped_ids[s.ego]
        lab = labels.get((w.source_dataset, w.window_id))
        group = lab.label[pid] if lab else NOISE
        rows = [("obs", w.obs_abs[s.ego]), ("gt", w.pred_abs[s.ego]), ("mean", mean_abs[k])]
        rows += [(f"sample{d}", draws[d, k]) for d in range(args.draws)]
        for kind, track in rows:
            for t, (x, y) in enumerate(track):
                lines.append(f"{w.window_id}\t{pid}\t{group}\t{kind}\t{t}\t{float(x)!r}\t{float(y)!r}")
    _out(cfg, f"plot_{test.value}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{len(samples)} trajectories from {len(chosen)} windows")
    return 0


def cmd_selftest(cfg: RunConfig, args) -> int:
    results = run_all(quick=not args.full, seed=cfg.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--data-dir", help=f"raw data root (default ${DATA_DIR_ENV} or ./data)")
    common.add_argument("--out", dest="out_dir", help="output directory (default runs)")
    common.add_argument("--seed", type=int)
    common.add_argument("--datasets", help="comma-separated dataset names")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trajgroup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("ingest", parents=[common], help="parse annotation files into cached windows")
    p.add_argument("--frame-step", help="frames between annotated steps, or 'auto'")
    p.add_argument("--stride", type=int)
    p.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic recordings instead")
    p.add_argument("--frames", type=int, default=30, help="frames per synthetic recording")
    p.set_defaults(func=cmd_ingest)

    for name, func, helptext in (
        ("label", cmd_label, "hybrid group labels for cached windows"),
        ("label-stats", cmd_label_stats, "labeled share per dataset"),
        ("frechet-report", cmd_frechet, "Fréchet distance within and across groups"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--synthetic", action="store_true", help="use the SYNTH windows")
        if name == "frechet-report":
            p.add_argument("--segment", choices=["full", "obs", "pred"], default="full")
        p.set_defaults(func=func)

    p = sub.add_parser("train", parents=[common], help="train with one dataset held out")
    p.add_argument("--test-set", required=True, help="held-out dataset (SYNTH trains on itself)")
    p.add_argument("--checkpoint", help="checkpoint path (default under --out)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--variety-k", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="best-of-n ADE/FDE on the held-out set")
    p.add_argument("--test-set", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--mean-mode", action="store_true", help="decode the latent mean once")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot-data", parents=[common], help="trajectory table for plotting")
    p.add_argument("--test-set", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--windows", type=int, nargs="*", help="window ids (default: the first --limit)")
    p.add_argument("--limit", type=int, default=5)
    p.add_argument("--draws", type=int, default=3)
    p.set_defaults(func=cmd_plot_data)

    p = sub.add_parser("selftest", parents=[common], help="gradient and oracle checks")
    p.add_argument("--full", action="store_true", help="run the full-size checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    for key in ("data_dir", "out_dir", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if args.datasets:
        cfg.datasets = [Dataset.parse(d) for d in args.datasets.split(",") if d]
    if getattr(args, "frame_step", None) is not None:
        cfg.frame_step = args.frame_step
    if getattr(args, "stride", None) is not None:
        cfg.stride = args.stride
    if getattr(args, "n_samples", None) is not None:
        cfg.n_samples = args.n_samples
    overrides = {k: getattr(args, a) for k, a in (("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size"),
                                                  ("beta", "beta"), ("variety_k", "variety_k"))
                 if getattr(args, a, None) is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg.train = RunConfig.from_dict({"train": {**cfg.train.to_dict(), **overrides}}).train
    cfg.__post_init__()
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except (TrajGroupError, OSError) as exc:
        print(f"trajgroup {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
