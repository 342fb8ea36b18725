"""Command line entry point: ``layertune {fetch,prepare,sweep,report}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import defaultdict

from .analysis import ShapeThresholds, build_report, summarize_sweep, write_report
from .config import Config, load_config
from .errors import AllRungsFailed, ConfigInvalid, LayertuneError
from .ingest import ClassStats, compute_class_weights
from .store import ResultsStore, environment_fingerprint, utc_now
from .sweep import SweepSchedule, TrainConfig, config_hash, default_schedule, rung_table, run_sweep

log = logging.getLogger("layertune")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2

_GLOBAL_DEFAULTS = {
    "config": "layertune.toml",
    "cache_dir": None,
    "weights_dir": None,
    "no_download": False,
    "seed": None,
    "dry_run": False,
    "resume": False,
    "mock_trainer": False,
    "verbose": False,
}


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS lets the same flags appear before or after the subcommand
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="TOML config file (default: layertune.toml)")
    p.add_argument("--cache-dir", dest="cache_dir", default=S, help="override data.cache_dir")
    p.add_argument("--weights-dir", dest="weights_dir", default=S, help="override weights.dir")
    p.add_argument("--no-download", dest="no_download", action="store_true", default=S,
                   help="fail instead of downloading pretrained weights")
    p.add_argument("--seed", type=int, default=S, help="override train.seed")
    p.add_argument("--dry-run", dest="dry_run", action="store_true", default=S,
                   help="sweep: print the rung table without training")
    p.add_argument("--resume", action="store_true", default=S, help="sweep: continue an interrupted sweep")
    p.add_argument("--mock-trainer", dest="mock_trainer", action="store_true", default=S,
                   help="sweep: replace training with deterministic synthetic curves")
    p.add_argument("-v", "--verbose", action="store_true", default=S)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="layertune", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fetch", parents=[common], help="download SDSS cutouts into the cache")
    sub.add_parser("prepare", parents=[common], help="resize, split and store the image dataset")
    sub.add_parser("sweep", parents=[common], help="run the fine-tuning depth ladder")
    sub.add_parser("report", parents=[common], help="write report tables and plots")
    return parser


def _load(args) -> Config:
    cfg = load_config(args.config)
    if args.cache_dir:
        cfg.data.cache_dir = os.path.abspath(args.cache_dir)
    if args.weights_dir:
        cfg.weights.dir = os.path.abspath(args.weights_dir)
    if args.no_download:
        cfg.weights.download = False
    if args.seed is not None:
        cfg.train.seed = args.seed
    return cfg


def cmd_fetch(cfg: Config, args) -> int:
    from .cutouts import CutoutCache, fetch_all
    from .dataset import cutout_params, load_catalog

    params = cutout_params(cfg)
    entries = load_catalog(cfg)
    cache = CutoutCache(cfg.path(cfg.data.cache_dir))
    summary = fetch_all(entries, params, cache, workers=cfg.data.fetch_workers)
    print(summary)
    return EXIT_OK


def cmd_prepare(cfg: Config, args) -> int:
    from .dataset import prepare_dataset

    meta = prepare_dataset(cfg)
    counts = ", ".join(f"{k} {v}" for k, v in meta["class_counts"].items())
    print(f"prepared {meta['count']} images ({counts}); excluded {len(meta['excluded'])}")
    print(f"train {len(meta['split']['train'])}, val {len(meta['split']['val'])}")
    return EXIT_OK


def _schedules(cfg: Config) -> list[SweepSchedule]:
    if not cfg.sweep.archs:
        raise ConfigInvalid("missing required config key 'sweep.archs'")
    out = []
    for arch in cfg.sweep.archs:
        override = cfg.sweep.schedules.get(arch)
        try:
            out.append(SweepSchedule(arch, tuple(override)) if override else default_schedule(arch))
        except ValueError as exc:
            raise ConfigInvalid(f"sweep.schedules.{arch}: {exc}") from exc
    return out


def _train_config(cfg: Config, meta: dict) -> TrainConfig:
    t = cfg.train
    weights = None
    if cfg.data.class_weights != "none":
        counts = meta["class_counts"]
        total = sum(counts.values())
        stats = ClassStats(counts, {c: n / total for c, n in counts.items()})
        weights = compute_class_weights(stats, cfg.data.class_weights)
    return TrainConfig(
        epochs=t.epochs,
        batch_size=t.batch_size,
        learning_rate=t.learning_rate,
        optimizer_name=t.optimizer,
        seed=t.seed,
        early_stop_patience=t.early_stop_patience,
        class_weights=weights,
    )


def _loader(cfg: Config, seed: int, image_size: int):
    from .registry import load_backbone

    def load(name: str):
        return load_backbone(
            name,
            cfg.weights.mode,
            input_size=image_size,
            weights_dir=cfg.path(cfg.weights.dir),
            allow_download=cfg.weights.download,
            seed=seed,
        )

    return load


def cmd_sweep(cfg: Config, args) -> int:
    from .dataset import load_dataset
    from .registry import load_backbone

    schedules = _schedules(cfg)
    if args.dry_run:
        irs = {s.arch: load_backbone(s.arch, "random", input_size=cfg.data.image_size, seed=cfg.train.seed)[1]
               for s in schedules}
        print(f"{'arch':<16}{'depth':>6}{'trainable params':>18}")
        for row in rung_table(schedules, irs):
            print(f"{row['arch']:<16}{row['depth']:>6}{row['trainable_params']:>18,}")
        return EXIT_OK

    data, meta = load_dataset(cfg.path(cfg.data.dataset_dir))
    train_cfg = _train_config(cfg, meta)
    trainer_kind = "mock" if args.mock_trainer else "keras"
    store = ResultsStore(cfg.path(cfg.sweep.results_dir))
    snapshot = cfg.snapshot()
    manifest_id = config_hash({
        "config": snapshot,
        "dataset": meta["dataset_sha256"],
        "schedules": {s.arch: list(s.depths) for s in schedules},
        "trainer": trainer_kind,
    })
    run_hashes = {
        s.arch: config_hash({
            "arch": s.arch,
            "train": train_cfg.to_dict(),
            "weights": cfg.weights.mode,
            "image_size": meta["image_size"],
            "dataset": meta["dataset_sha256"],
            "trainer": trainer_kind,
        })
        for s in schedules
    }
    existing = any(store.completed(s.arch, run_hashes[s.arch]) for s in schedules)
    if existing and not args.resume:
        print(f"results for this configuration already exist in {store.root}; pass --resume to continue",
              file=sys.stderr)
        return EXIT_ERROR
    store.write_manifest({
        "id": manifest_id,
        "created": utc_now(),
        "config": snapshot,
        "catalog_sha256": meta.get("catalog_sha256"),
        "dataset_sha256": meta["dataset_sha256"],
        "schedules": {s.arch: list(s.depths) for s in schedules},
        "run_hashes": run_hashes,
        "seeds": {"train": train_cfg.seed, "split": cfg.data.split_seed, "subset": cfg.data.subset_seed},
        "train": train_cfg.to_dict(),
        "trainer": trainer_kind,
        "resampling": meta.get("resampling"),
        "frozen_normalization": "inference mode, statistics and affine parameters fixed",
        "environment": environment_fingerprint(),
    })

    if args.mock_trainer:
        from .trainers import MockTrainer

        trainer = MockTrainer()
    else:
        from .keras_trainer import KerasTrainer

        trainer = KerasTrainer()

    def report_rung(r, skipped):
        state = "skipped (stored)" if skipped else r.status
        acc = f"{r.best_val_acc:.4f}" if r.best_val_acc is not None else "-"
        print(f"{r.arch:<16} depth {r.depth:>4}  {state:<17} best val acc {acc}", flush=True)

    failed = 0
    for sched in schedules:
        results = run_sweep(
            sched.arch,
            sched,
            data,
            train_cfg,
            store=store,
            trainer=trainer,
            loader=_loader(cfg, train_cfg.seed, meta["image_size"]),
            run_hash=run_hashes[sched.arch],
            manifest_id=manifest_id,
            on_rung=report_rung,
        )
        failed += sum(not r.ok for r in results)
    print(f"sweep finished: {failed} failed rung(s); results in {store.runs_path}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(cfg: Config, args) -> int:
    from .plots import emit_plots

    store = ResultsStore(cfg.path(cfg.sweep.results_dir), create=False)
    by_arch = defaultdict(dict)
    for r in store.load():  # later records for the same depth win
        by_arch[r.arch][r.depth] = r
    if store.corrupt_lines:
        print(f"warning: skipped {store.corrupt_lines} corrupt line(s) in {store.runs_path}", file=sys.stderr)
    thresholds = ShapeThresholds(cfg.analysis.near_peak_eps, cfg.analysis.dip_delta)
    summaries = []
    results_by_arch = {}
    for arch, rungs in by_arch.items():
        results = sorted(rungs.values(), key=lambda r: r.depth)
        results_by_arch[arch] = results
        try:
            summaries.append(summarize_sweep(results, thresholds))
        except AllRungsFailed:
            print(f"warning: every rung failed for {arch}; omitted from report", file=sys.stderr)
    out_dir = cfg.path(cfg.analysis.out_dir)
    report = build_report(summaries)
    write_report(report, out_dir)
    plots = emit_plots(results_by_arch, out_dir)
    print(report.to_markdown(), end="")
    print(f"wrote report.csv, report.md, report.json and {len(plots)} plot(s) to {out_dir}")
    return EXIT_PARTIAL if store.corrupt_lines else EXIT_OK


COMMANDS = {"fetch": cmd_fetch, "prepare": cmd_prepare, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for key, default in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, default)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except LayertuneError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
