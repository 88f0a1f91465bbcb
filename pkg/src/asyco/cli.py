"""Command-line entry point: dataset generation, training runs, ablation
matrices, selection comparison/benchmarks, and CE-vs-BCE curves.

Configuration is a flat key=value file; --set overrides take precedence.
Exit codes: 0 success, 2 bad config key, 3 NaN abort. Machine-readable
output goes to files in the run directory; stdout carries progress only.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, baselines, metrics
from .baselines import ALL_VARIANTS, ablation_variants
from .data import (
    NoisyDataset,
    inject_instance_dependent_noise,
    inject_symmetric_noise,
    make_blobs,
)
from .trainer import AsyCoConfig, TrainingDivergedError, train_asyco


class BadConfigKeyError(ValueError):
    def __init__(self, keys):
        super().__init__(f"unknown config keys: {sorted(keys)}")
        self.keys = sorted(keys)


def _parse_hidden(text):
    return tuple(int(v) for v in str(text).split(",") if v != "")


def _parse_optional_int(text):
    return None if str(text).lower() in ("none", "") else int(text)


def _parse_optional_str(text):
    return None if str(text).lower() in ("none", "") else str(text)


# flat config keys and their casters
CONFIG_KEYS = {
    "total_epochs": int,
    "warmup_epochs": int,
    "k": int,
    "lambda_u": float,
    "sharpen_t": float,
    "lr": float,
    "momentum": float,
    "weight_decay": float,
    "batch_size": int,
    "seed": int,
    "hidden_dims": _parse_hidden,
    "ablation_variant": _parse_optional_str,
    "consistency_mode": str,
    "jitter_scale": float,
    "lr_decay_epoch": _parse_optional_int,
    "lr_decay_factor": float,
    "data_classes": int,
    "data_per_class": int,
    "data_dim": int,
    "data_separation": float,
    "data_test_fraction": float,
    "data_noise_kind": str,
    "data_noise_rate": float,
    "data_seed": _parse_optional_int,
    "dataset_csv": _parse_optional_str,
}

DATA_DEFAULTS = {
    "data_classes": 4,
    "data_per_class": 1000,
    "data_dim": 8,
    "data_separation": 6.0,
    "data_test_fraction": 0.2,
    "data_noise_kind": "none",
    "data_noise_rate": 0.0,
    "data_seed": None,
    "dataset_csv": None,
}


def parse_config_file(path):
    """key=value lines; '#' starts a comment; blank lines ignored."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def resolve_config(config_path, overrides):
    """Merge file + overrides into a typed dict; unknown keys are fatal."""
    raw = parse_config_file(config_path) if config_path else {}
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise BadConfigKeyError(unknown)
    cfg = dict(DATA_DEFAULTS)
    for key, value in raw.items():
        cfg[key] = CONFIG_KEYS[key](value)
    return cfg


def asyco_config_from(cfg, seed):
    fields = {k: v for k, v in cfg.items() if k in AsyCoConfig.__dataclass_fields__}
    fields["seed"] = seed
    return AsyCoConfig(**fields)


def build_dataset(cfg, seed):
    if cfg.get("dataset_csv"):
        return NoisyDataset.from_csv(cfg["dataset_csv"])
    data_seed = cfg.get("data_seed")
    if data_seed is None:
        data_seed = seed
    ds = make_blobs(
        num_classes=cfg["data_classes"],
        per_class=cfg["data_per_class"],
        dim=cfg["data_dim"],
        class_separation=cfg["data_separation"],
        seed=data_seed,
        test_fraction=cfg["data_test_fraction"],
    )
    kind = cfg["data_noise_kind"]
    rate = cfg["data_noise_rate"]
    if kind == "none" or rate == 0.0:
        return ds
    if kind == "symmetric":
        return inject_symmetric_noise(ds, rate, seed=data_seed + 1)
    if kind == "instance":
        return inject_instance_dependent_noise(ds, rate, seed=data_seed + 1)
    raise ValueError(f"unknown data_noise_kind {kind!r}")


def prepare_run_dir(out_root, run_id, force):
    run_dir = Path(out_root) / run_id
    if run_dir.exists() and any(run_dir.iterdir()) and not force:
        raise FileExistsError(f"run directory {run_dir} exists; use --force to overwrite")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_config_echo(run_dir, command, cfg, seeds):
    lines = [f"command={command}", f"version={__version__}",
             f"seeds={','.join(str(s) for s in seeds)}"]
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    (Path(run_dir) / "config_echo.txt").write_text("\n".join(lines) + "\n")


def _write_error(out_dir, code, message, **extra):
    payload = {"error": message, "exit_code": code, **extra}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _seed_dir(run_dir, seed, seeds):
    if len(seeds) == 1:
        return Path(run_dir)
    sub = Path(run_dir) / f"seed-{seed}"
    sub.mkdir(parents=True, exist_ok=True)
    return sub


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_gen_data(args, cfg, run_dir, seeds):
    for seed in seeds:
        ds = build_dataset(cfg, seed)
        ds.to_csv(_seed_dir(run_dir, seed, seeds) / "dataset.csv")
        print(f"seed {seed}: wrote dataset.csv "
              f"(N={ds.features.shape[0]}, noise={ds.realized_noise_rate():.3f})")
    return 0


def cmd_train_asyco(args, cfg, run_dir, seeds):
    for seed in seeds:
        ds = build_dataset(cfg, seed)
        config = asyco_config_from(cfg, seed)
        _, report = train_asyco(config, ds)
        report.write(_seed_dir(run_dir, seed, seeds))
        print(f"seed {seed}: final test acc "
              f"{report.summary['final_test_acc']:.4f}")
    return 0


def cmd_train_ce(args, cfg, run_dir, seeds):
    for seed in seeds:
        ds = build_dataset(cfg, seed)
        _, accs = baselines.train_plain_ce(
            ds, cfg.get("hidden_dims", (64, 64)), cfg.get("total_epochs", 60),
            lr=cfg.get("lr", 0.02), momentum=cfg.get("momentum", 0.9),
            weight_decay=cfg.get("weight_decay", 5e-4),
            batch_size=cfg.get("batch_size", 128), seed=seed,
        )
        sub = _seed_dir(run_dir, seed, seeds)
        _write_csv(sub / "report.csv", ["epoch", "test_acc"],
                   [(e, repr(a)) for e, a in enumerate(accs)])
        summary = {
            "schema_version": metrics.SCHEMA_VERSION,
            "final_test_acc": accs[-1] if accs else None,
            "best_test_acc": max(accs) if accs else None,
            "realized_noise_rate": ds.realized_noise_rate(),
            "seed": seed,
        }
        (sub / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
        print(f"seed {seed}: final test acc {accs[-1]:.4f}" if accs
              else f"seed {seed}: no epochs")
    return 0


def cmd_ablate(args, cfg, run_dir, seeds):
    if args.variants.strip().lower() == "all":
        variants = list(ALL_VARIANTS)
    else:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    # reject unknown names before any run starts
    for name in variants:
        ablation_variants(name)

    comparison = []
    for name in ["original"] + variants:
        spec_name = ablation_variants(name).name
        for seed in seeds:
            ds = build_dataset(cfg, seed)
            config = asyco_config_from(cfg, seed)
            if spec_name != "original":
                config.ablation_variant = spec_name
            _, report = train_asyco(config, ds)
            sub = Path(run_dir) / spec_name
            sub.mkdir(parents=True, exist_ok=True)
            out = sub if len(seeds) == 1 else sub / f"seed-{seed}"
            report.write(out)
            comparison.append(
                (spec_name, seed, repr(report.summary["final_test_acc"]))
            )
            print(f"{spec_name} seed {seed}: "
                  f"final test acc {report.summary['final_test_acc']:.4f}")
    _write_csv(Path(run_dir) / "comparison.csv",
               ["variant", "seed", "final_test_acc"], comparison)
    return 0


def cmd_compare_selection(args, cfg, run_dir, seeds):
    rows = []
    for seed in seeds:
        ds = build_dataset(cfg, seed)
        config = asyco_config_from(cfg, seed)
        _, report = train_asyco(config, ds)
        report.write(_seed_dir(run_dir, seed, seeds))
        for row in report.rows:
            rows.append((seed, row["epoch"], repr(row["sel_f1"]), repr(row["gmm_f1"])))
        print(f"seed {seed}: final multiview F1 {report.rows[-1]['sel_f1']:.4f}, "
              f"GMM F1 {report.rows[-1]['gmm_f1']:.4f}")
    _write_csv(Path(run_dir) / "selection_compare.csv",
               ["seed", "epoch", "multiview_f1", "gmm_f1"], rows)
    return 0


def cmd_bench_selection(args, cfg, run_dir, seeds):
    n = args.num_samples
    num_classes = cfg["data_classes"]
    rng = np.random.default_rng(seeds[0])
    labels = rng.integers(0, num_classes, size=n)
    n_logits = rng.normal(size=(n, num_classes))
    r_logits = rng.normal(size=(n, num_classes))
    # bimodal losses, the shape GMM selection expects
    losses = np.where(
        rng.random(n) < 0.6,
        rng.normal(0.2, 0.05, size=n),
        rng.normal(2.0, 0.3, size=n),
    ).clip(min=0.0)
    mv_ns = metrics.time_selection(
        "multiview", labels=labels, n_logits=n_logits, r_logits=r_logits,
        k=min(cfg.get("k", 1), num_classes),
    )
    gmm_ns = metrics.time_selection("gmm", losses=losses)
    payload = {
        "num_samples": n,
        "multiview_ns": mv_ns,
        "gmm_ns": gmm_ns,
        "speedup": gmm_ns / mv_ns if mv_ns else None,
    }
    (Path(run_dir) / "bench.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    print(f"multiview {mv_ns / 1e6:.2f} ms vs GMM {gmm_ns / 1e6:.2f} ms "
          f"on N={n}")
    return 0


def cmd_ce_vs_bce(args, cfg, run_dir, seeds):
    for seed in seeds:
        ds = build_dataset(cfg, seed)
        curves = metrics.ce_vs_bce_curves(
            ds, cfg.get("hidden_dims", (64, 64)), cfg.get("total_epochs", 60),
            seed=seed, lr=cfg.get("lr", 0.02), momentum=cfg.get("momentum", 0.9),
            weight_decay=cfg.get("weight_decay", 5e-4),
            batch_size=cfg.get("batch_size", 128),
        )
        rows = [
            (e, repr(ce), repr(bce))
            for e, (ce, bce) in enumerate(zip(curves["ce"], curves["bce"]))
        ]
        _write_csv(_seed_dir(run_dir, seed, seeds) / "curves.csv",
                   ["epoch", "ce_acc", "bce_acc"], rows)
        print(f"seed {seed}: CE final {curves['ce'][-1]:.4f}, "
              f"BCE final {curves['bce'][-1]:.4f}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-asyco": cmd_train_asyco,
    "train-ce": cmd_train_ce,
    "ablate": cmd_ablate,
    "compare-selection": cmd_compare_selection,
    "bench-selection": cmd_bench_selection,
    "ce-vs-bce": cmd_ce_vs_bce,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="asyco")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", default=None,
                       help="output root (default $ASYCO_OUT_ROOT or ./runs)")
        p.add_argument("--run-id", default=None)
        p.add_argument("--seeds", default="0", help="comma-separated seed list")
        p.add_argument("--force", action="store_true",
                       help="overwrite an existing run directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE")
        if name == "ablate":
            p.add_argument("--variants", default="all")
        if name == "bench-selection":
            p.add_argument("--num-samples", type=int, default=50_000)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_root = args.out or os.environ.get("ASYCO_OUT_ROOT", "runs")
    run_id = args.run_id or f"{args.command}-{time.strftime('%Y%m%d-%H%M%S')}"
    try:
        cfg = resolve_config(args.config, args.overrides)
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
        if not seeds:
            raise ValueError("at least one seed required")
        run_dir = prepare_run_dir(out_root, run_id, args.force)
    except BadConfigKeyError as err:
        print(f"error: {err}", file=sys.stderr)
        _write_error(Path(out_root) / run_id, 2, str(err), bad_keys=err.keys)
        return 2
    except (ValueError, FileExistsError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        _write_error(Path(out_root) / run_id, 1, str(err))
        return 1

    write_config_echo(run_dir, args.command, cfg, seeds)
    try:
        return COMMANDS[args.command](args, cfg, run_dir, seeds)
    except TrainingDivergedError as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        _write_error(run_dir, 3, str(err), epoch=err.epoch, batch_index=err.batch_index)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        _write_error(run_dir, 1, str(err))
        return 1


if __name__ == "__main__":
    sys.exit(main())
