"""Command-line front end.

Commands: gen-data, train, attack, sweep, smooth-predict, plot. A single
JSON config file drives each command; a few flags (--seed, --out, --threads,
--fast, --force) override it. Exit codes: 0 success, 2 config error, 3 I/O
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import dataio
from .attacks.pgd import AttackBudget
from .attacks.physical import PatchConfig
from .attacks.roa import RoaConfig
from .config import cfg_get, config_hash, load_config
from .defenses import (SmoothingConfig, TrainConfig, adversarial_train,
                       curriculum_adversarial_train, doa_train,
                       gaussian_noise_train, smoothed_votes, train_clean)
from .errors import (BoundsError, ConfigError, ContractError, DataError,
                     FormatError, NumericError, OccludoxError, ShapeError)
from .harness import AttackSetup, DefenseEntry, run_sweep
from .models import desk_spec
from .svgplot import render_line_chart, report_to_series

VERSION = "0.1.0"
_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
FAST_GRID = [0, 10, 50]

log = logging.getLogger("occludox.cli")


def _setup_logging():
    raw = os.environ.get("OCCLUDOX_LOG", "error").strip().lower()
    if raw not in _LOG_LEVELS:
        raise ConfigError(f"OCCLUDOX_LOG must be one of error/info/debug, got {raw!r}")
    logging.basicConfig(level=_LOG_LEVELS[raw],
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _load_cfg(args) -> dict:
    if args.config is None:
        return {}
    return load_config(args.config)


def _resolve_dataset(cfg: dict, seed_override=None):
    """Full dataset from a directory reference or the synthetic generator."""
    directory = cfg_get(cfg, "dataset.dir", str, default=None)
    if directory is not None:
        labels = cfg_get(cfg, "dataset.labels", str,
                         default=os.path.join(directory, "labels.csv"))
        return dataio.load_image_dir(directory, labels)
    seed = seed_override if seed_override is not None else cfg_get(
        cfg, "dataset.seed", int, default=42)
    classes = cfg_get(cfg, "dataset.classes", int, default=16)
    per_class = cfg_get(cfg, "dataset.per_class", int, default=50)
    side = cfg_get(cfg, "dataset.side", int, default=32)
    return dataio.gen_synthetic_signs(seed, classes, per_class, side)


def _model_spec(dataset):
    classes = len(dataset.class_names)
    side = dataset.images.shape[-1]
    return desk_spec(classes=classes, side=side)


def _roa_from_cfg(cfg: dict, prefix: str) -> RoaConfig:
    inner = AttackBudget.from_255(
        "inf",
        cfg_get(cfg, f"{prefix}.inner_eps", float, default=127.5),
        cfg_get(cfg, f"{prefix}.inner_alpha", float, default=8.0),
        cfg_get(cfg, f"{prefix}.inner_iterations", int, default=30))
    return RoaConfig(
        height=cfg_get(cfg, f"{prefix}.height", int, default=7),
        width=cfg_get(cfg, f"{prefix}.width", int, default=7),
        stride=cfg_get(cfg, f"{prefix}.stride", int, default=2),
        candidates=cfg_get(cfg, f"{prefix}.candidates", int, default=10),
        inner=inner)


def _write_train_log(path, losses):
    lines = ["epoch,mean_loss"]
    lines += [f"{i},{repr(v)}" for i, v in enumerate(losses)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    out_dir = args.out or cfg_get(cfg, "dataset.out", str, default="data")
    if os.path.isdir(out_dir) and os.listdir(out_dir):
        if not args.force:
            raise DataError(f"{out_dir}: directory not empty; pass --force to overwrite")
    os.makedirs(out_dir, exist_ok=True)
    ds = _resolve_dataset(cfg, seed_override=args.seed)
    rows = []
    for i in range(len(ds)):
        name = f"img_{i:05d}.ppm"
        dataio.write_ppm(os.path.join(out_dir, name), ds.images[i])
        rows.append(f"{name},{int(ds.labels[i])}")
    with open(os.path.join(out_dir, "labels.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {len(ds)} images to {out_dir}")
    return 0


_METHODS = ("clean", "at", "cat", "doa-exh", "doa-grad", "rs-noise")


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    method = cfg_get(cfg, "train.method", str, default="clean", choices=_METHODS)
    dataset = _resolve_dataset(cfg)
    train_split, _, _ = dataio.split_dataset(dataset)
    spec = _model_spec(dataset)
    seed = args.seed if args.seed is not None else cfg_get(cfg, "train.seed", int, default=0)
    is_doa = method.startswith("doa")
    epochs = cfg_get(cfg, "train.epochs", int, default=5 if is_doa else 10)
    if args.fast:
        epochs = min(epochs, 2)
    tc = TrainConfig(
        epochs=epochs,
        batch_size=cfg_get(cfg, "train.batch_size", int, default=32),
        optimizer=cfg_get(cfg, "train.optimizer", str, default="adam",
                          choices=("sgd", "sgd-momentum", "adam")),
        lr=cfg_get(cfg, "train.lr", float, default=1e-4 if is_doa else 1e-3),
        momentum=cfg_get(cfg, "train.momentum", float, default=0.9),
        seed=seed)
    init = None
    init_path = cfg_get(cfg, "train.init", str, default=None)
    if init_path is not None:
        init = dataio.load_checkpoint(init_path, spec)
    out = args.out or f"{method}.ckpt"
    losses: list = []
    if method == "clean":
        params = train_clean(spec, train_split, tc, init=init, loss_log=losses)
    elif method == "at":
        eps = cfg_get(cfg, "train.eps", float, default=8.0)
        alpha = cfg_get(cfg, "train.alpha", float, default=eps / 4.0)
        iters = cfg_get(cfg, "train.iterations", int, default=7)
        budget = AttackBudget.from_255("inf", eps, alpha, iters)
        params = adversarial_train(spec, train_split, tc, budget, init=init,
                                   loss_log=losses)
    elif method == "cat":
        start = cfg_get(cfg, "train.start_eps", float, default=4.0)
        target = cfg_get(cfg, "train.target_eps", float, default=32.0)
        iters = cfg_get(cfg, "train.iterations", int, default=7)
        stages = curriculum_adversarial_train(spec, train_split, tc, start,
                                              target, iterations=iters, init=init)
        stem, ext = os.path.splitext(out)
        eps = start
        for stage_params in stages:
            dataio.save_checkpoint(stage_params, f"{stem}-eps{eps:g}{ext}")
            eps *= 2.0
        params = stages[-1]
    elif is_doa:
        roa = _roa_from_cfg(cfg, "train.roa")
        search = "exhaustive" if method == "doa-exh" else "gradient"
        params = doa_train(spec, train_split, tc, roa, search=search,
                           init=init, loss_log=losses)
    else:  # rs-noise
        sigma = cfg_get(cfg, "train.sigma", float, default=0.25)
        params = gaussian_noise_train(spec, train_split, tc, sigma,
                                      init=init, loss_log=losses)
    dataio.save_checkpoint(params, out)
    if losses:
        _write_train_log(out + ".log.csv", losses)
    print(f"wrote checkpoint {out}")
    return 0


def _attack_setup(cfg: dict, args, dataset, train_split) -> AttackSetup:
    kind = cfg_get(cfg, "attack.kind", str, default="roa",
                   choices=("pgd", "pgd-l2", "roa", "roa-grad", "eyeglass",
                            "sticker", "patch"))
    if kind == "patch":
        default_grid = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25]
    else:
        default_grid = [0, 10, 100, 1000]
    grid = cfg_get(cfg, "attack.grid", list, default=default_grid)
    if args.fast and kind != "patch":
        grid = list(FAST_GRID)
    for i, g in enumerate(grid):
        if not isinstance(g, (int, float)) or isinstance(g, bool) or g < 0:
            raise ConfigError(f"attack.grid[{i}]: must be a non-negative number")
    side = dataset.images.shape[-1]
    mask = None
    mask_path = cfg_get(cfg, "attack.mask", str, default=None)
    if mask_path is not None:
        mask = dataio.load_mask_pgm(mask_path, (side, side))
    patch = None
    design = None
    if kind == "patch":
        patch = PatchConfig(
            ratio=0.0,
            target=cfg_get(cfg, "attack.patch.target", int, default=0),
            lr=cfg_get(cfg, "attack.patch.lr", float, default=5.0) / 255.0,
            iterations=cfg_get(cfg, "attack.patch.iterations", int, default=100),
            epochs=cfg_get(cfg, "attack.patch.epochs", int, default=1),
            design_size=cfg_get(cfg, "attack.patch.design_size", int, default=None))
        design = train_split
    seed = args.seed if args.seed is not None else cfg_get(cfg, "attack.seed", int, default=0)
    return AttackSetup(
        kind=kind,
        grid=tuple(grid),
        epsilon=cfg_get(cfg, "attack.eps", float, default=8.0) / 255.0,
        step=cfg_get(cfg, "attack.alpha", float, default=2.0) / 255.0,
        roa=_roa_from_cfg(cfg, "attack.roa"),
        mask=mask,
        patch=patch,
        design_set=design,
        seed=seed)


def _smoothing_from_cfg(cfg: dict, args=None) -> SmoothingConfig:
    seed = None if args is None else args.seed
    return SmoothingConfig(
        sigma=cfg_get(cfg, "smooth.sigma", float, default=0.25),
        samples=cfg_get(cfg, "smooth.samples", int, default=1000),
        seed=seed if seed is not None else cfg_get(cfg, "smooth.seed", int, default=0))


def _report_from_rows(rows, cfg, seed) -> dataio.EvaluationReport:
    report_rows = [dataio.ReportRow(d, a, p, v, acc, dt)
                   for d, a, p, v, acc, dt in rows]
    meta = {"seed": seed, "config_hash": config_hash(cfg), "version": VERSION}
    return dataio.EvaluationReport(report_rows, meta)


def cmd_attack(args) -> int:
    cfg = _load_cfg(args)
    ckpt = cfg_get(cfg, "attack.checkpoint", str)
    dataset = _resolve_dataset(cfg)
    train_split, _, test_split = dataio.split_dataset(dataset)
    spec = _model_spec(dataset)
    params = dataio.load_checkpoint(ckpt, spec)
    smooth = None
    if cfg_get(cfg, "attack.smoothed", bool, default=False):
        smooth = _smoothing_from_cfg(cfg)
    entry = DefenseEntry(cfg_get(cfg, "attack.defense_id", str, default="model"),
                         params, smooth)
    setup = _attack_setup(cfg, args, dataset, train_split)
    rows = run_sweep([entry], test_split, setup, threads=args.threads)
    out = args.out or "report.csv"
    report = _report_from_rows(rows, cfg, setup.seed)
    dataio.write_report_csv(report, out)
    dataio.write_report_meta(report, out + ".meta.json")
    if cfg_get(cfg, "attack.dump", bool, default=False):
        _dump_adversarial(entry, test_split, setup, out, args.threads)
    print(f"wrote report {out}")
    return 0


def _dump_adversarial(entry, test_split, setup, out, threads):
    """PPM per attacked test image at the strongest grid point."""
    from .harness import _attacked_images
    strength = max(setup.grid)
    images = np.asarray(test_split.images, dtype=np.float64)
    labels = np.asarray(test_split.labels, dtype=np.int64)
    if strength == 0:
        adv = images
    elif setup.kind == "patch":
        from dataclasses import replace

        from .attacks.physical import patch_apply_batch, patch_train
        pcfg = replace(setup.patch, ratio=float(strength))
        adv = patch_apply_batch(images, patch_train(entry.params, setup.design_set,
                                                    pcfg, seed=setup.seed),
                                seed=setup.seed)
    else:
        adv = _attacked_images(entry, images, labels, setup, strength, threads)
    dump_dir = os.path.splitext(out)[0] + "_adv"
    os.makedirs(dump_dir, exist_ok=True)
    for i in range(adv.shape[0]):
        dataio.write_ppm(os.path.join(dump_dir, f"adv_{i:05d}.ppm"), adv[i])
    log.info("dumped %d adversarial images to %s", adv.shape[0], dump_dir)


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    defenses = cfg_get(cfg, "sweep.defenses", list)
    if not defenses:
        raise ConfigError("sweep.defenses: must list at least one defense")
    dataset = _resolve_dataset(cfg)
    train_split, _, test_split = dataio.split_dataset(dataset)
    spec = _model_spec(dataset)
    # verify everything exists before any evaluation starts
    for i, d in enumerate(defenses):
        where = f"sweep.defenses[{i}]"
        if not isinstance(d, dict) or not isinstance(d.get("checkpoint"), str):
            raise ConfigError(f"{where}.checkpoint: required value missing")
        if not os.path.exists(d["checkpoint"]):
            raise DataError(f"{d['checkpoint']}: checkpoint missing ({where})")
    entries = []
    for i, d in enumerate(defenses):
        ident = d.get("id", f"defense{i}")
        if not isinstance(ident, str):
            raise ConfigError(f"sweep.defenses[{i}].id: expected a string")
        params = dataio.load_checkpoint(d["checkpoint"], spec)
        smooth = _smoothing_from_cfg(cfg) if d.get("smoothed", False) else None
        entries.append(DefenseEntry(ident, params, smooth))
    setup = _attack_setup(cfg, args, dataset, train_split)
    rows = run_sweep(entries, test_split, setup, threads=args.threads)
    out = args.out or "sweep.csv"
    report = _report_from_rows(rows, cfg, setup.seed)
    dataio.write_report_csv(report, out)
    dataio.write_report_meta(report, out + ".meta.json")
    print(f"wrote report {out}")
    return 0


def cmd_smooth_predict(args) -> int:
    cfg = _load_cfg(args)
    ckpt = cfg_get(cfg, "smooth.checkpoint", str)
    image = dataio.read_ppm(args.image)
    spec = desk_spec(classes=cfg_get(cfg, "dataset.classes", int, default=16),
                     side=image.shape[-1])
    params = dataio.load_checkpoint(ckpt, spec)
    scfg = _smoothing_from_cfg(cfg, args)
    votes = smoothed_votes(params, image, scfg)
    pred = int(np.argmax(votes))
    print(f"class {pred} votes {votes.tolist()}")
    return 0


def cmd_plot(args) -> int:
    report = dataio.read_report_csv(args.report)
    param = report.rows[0].param if report.rows else "strength"
    svg = render_line_chart(report_to_series(report), x_label=param)
    out = args.out or os.path.splitext(args.report)[0] + ".svg"
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(svg)
    print(f"wrote figure {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="JSON configuration file")
    shared.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
    shared.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker cap for per-image evaluation (default 1)")
    shared.add_argument("--fast", action="store_true",
                        help="shrink grids/epochs for a quick run")
    shared.add_argument("--force", action="store_true",
                        help="overwrite non-empty output locations")
    shared.add_argument("--out", metavar="PATH", help="output path")
    parser = argparse.ArgumentParser(
        prog="occludox",
        description="Occlusion-attack and robust-training toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[shared],
                   help="generate the synthetic dataset as PPM files").set_defaults(fn=cmd_gen_data)
    sub.add_parser("train", parents=[shared],
                   help="train a model per the config method").set_defaults(fn=cmd_train)
    sub.add_parser("attack", parents=[shared],
                   help="evaluate one checkpoint over an attack grid").set_defaults(fn=cmd_attack)
    sub.add_parser("sweep", parents=[shared],
                   help="cross defenses with an attack grid").set_defaults(fn=cmd_sweep)
    p = sub.add_parser("smooth-predict", parents=[shared],
                       help="randomized-smoothing prediction for one image")
    p.add_argument("image", help="P6 image to classify")
    p.set_defaults(fn=cmd_smooth_predict)
    p = sub.add_parser("plot", parents=[shared],
                       help="render a report CSV as an SVG line chart")
    p.add_argument("report", help="report CSV produced by attack/sweep")
    p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.fn(args)
    except (ConfigError, ContractError, ShapeError, BoundsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OccludoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
