"""Command-line interface: transcribe, validate, stats, overlay, losscheck, eval.

Exit codes: 0 success, 1 usage/config errors, 2 data or check failures.
Machine-readable output goes to stdout; logs go to stderr only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core_types import ScdConfusion, validate_change_mask
from .dataset_io import (
    EntryFailure,
    Palette,
    apply_overrides,
    build_multimodal_dataset,
    build_record,
    load_manifest,
    read_mask,
)
from .errors import ConfigError, DecodeError, MaskscribeError, MissingFile
from .gradcheck import CHECKED_OPS, run_losscheck
from .metrics import accumulate, binary_metrics, scd_metrics
from .transcriber import region_stats

log = logging.getLogger("maskscribe")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2 for
    # data/check failures and uses 1 for usage problems.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_attrs_flag(value: str) -> list[str]:
    if value == "none":
        return []
    if value == "all":
        return ["quantity", "type", "category", "location"]
    return [part.strip() for part in value.split(",") if part.strip()]


def _build_parser() -> _Parser:
    parser = _Parser(prog="maskscribe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"maskscribe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("transcribe", help="build the multimodal JSONL dataset from a manifest")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    p.add_argument("--attrs", type=str, default=None,
                   help="comma list of quantity,type,category,location (or all/none)")
    p.add_argument("--fail-fast", action="store_true", help="abort on the first entry error")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (output order is unchanged)")
    p.add_argument("--no-figures", action="store_true", help="skip the histogram PNGs")
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("validate", help="check manifest references and mask invariants")
    p.add_argument("config", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="print dataset histograms and region statistics as JSON")
    p.add_argument("config", type=Path)
    p.add_argument("--connectivity", type=int, default=4, choices=(4, 8))
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("overlay", help="render pre/post/mask QA panels")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--ids", type=str, default=None, help="comma list of image ids (default: all)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("losscheck", help="verify loss/fusion gradients against finite differences")
    p.add_argument("--ops", type=str, default=None, help=f"comma list from: {','.join(CHECKED_OPS)}")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5, dest="h")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("eval", help="score prediction masks against ground truth")
    p.add_argument("--pred", type=Path, required=True, help="directory of prediction PNGs")
    p.add_argument("--gt", type=Path, required=True, help="directory of ground-truth PNGs")
    p.add_argument("--classes", type=int, default=1, help="number of semantic classes")
    p.add_argument("--mode", choices=("scd", "bcd"), default="scd")
    p.add_argument("--average", choices=("class", "change_pixel"), default="class")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for mask scoring")
    p.add_argument("--report", type=Path, default=None,
                   help="directory for metrics.json and a confusion heatmap")
    p.set_defaults(func=cmd_eval)

    return parser


def cmd_transcribe(args) -> int:
    manifest = load_manifest(args.config)
    attrs_names = _parse_attrs_flag(args.attrs) if args.attrs is not None else None
    manifest = apply_overrides(manifest, seed=args.seed, attrs_names=attrs_names)
    try:
        result = build_multimodal_dataset(
            manifest, args.out, jobs=args.jobs,
            fail_fast=args.fail_fast, make_figures=not args.no_figures,
        )
    except EntryFailure as exc:
        log.error("aborted: %s", exc)
        return 2
    log.info("wrote %s (%d records, %d errors)", result.jsonl_path,
             result.report["records_written"], len(result.report["errors"]))
    return 0


def cmd_validate(args) -> int:
    manifest = load_manifest(args.config, scan_palette=False)
    clean = True
    for entry in manifest.entries:
        try:
            mask = read_mask(entry.mask, manifest.palette)
        except MaskscribeError as exc:
            print(f"{entry.image_id}: {type(exc).__name__}: {exc}")
            clean = False
            continue
        for finding in validate_change_mask(mask):
            print(f"{entry.image_id}: {finding.code}: {finding.message}")
            clean = False
    if clean:
        log.info("validated %d entries, no findings", len(manifest.entries))
    return 0 if clean else 2


def cmd_stats(args) -> int:
    manifest = load_manifest(args.config)
    directions = {d: 0 for d in ("north", "northeast", "east", "southeast",
                                 "south", "southwest", "west", "northwest", "center")}
    quantities = {q: 0 for q in ("a single", "a few", "several", "multiple")}
    categories: dict[str, int] = {}
    per_class = {
        entry.index: {
            "class_index": entry.index,
            "category": entry.category,
            "change_type": entry.change_type,
            "images_with_class": 0,
            "quadruples": 0,
            "components": 0,
            "area_px": 0,
        }
        for entry in manifest.palette.classes
    }
    for entry in manifest.entries:
        mask = read_mask(entry.mask, manifest.palette)
        record = build_record(entry, mask, manifest.thresholds, manifest.attrs, manifest.seed)
        for quad, index in zip(record.quadruples, record.quadruple_class_indices):
            directions[quad.location.value] += 1
            quantities[quad.quantity.value] += 1
            categories[quad.category] = categories.get(quad.category, 0) + 1
            stats = per_class[index]
            stats["images_with_class"] += 1
            stats["quadruples"] += 1
            stats["area_px"] += quad.pixel_count
            stats["components"] += len(region_stats(mask.class_mask(index), args.connectivity))
    summary = {
        "split": manifest.split,
        "entries": len(manifest.entries),
        "directions": directions,
        "quantities": quantities,
        "categories": categories,
        "per_class": [per_class[entry.index] for entry in manifest.palette.classes],
    }
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    return 0


def cmd_overlay(args) -> int:
    from .figures import render_overlay

    manifest = load_manifest(args.config)
    if args.seed is not None:
        manifest = apply_overrides(manifest, seed=args.seed)
    wanted = set(part.strip() for part in args.ids.split(",")) if args.ids else None
    entries = [e for e in manifest.entries if wanted is None or e.image_id in wanted]
    if wanted is not None:
        missing = wanted - {e.image_id for e in entries}
        if missing:
            log.error("unknown image ids: %s", sorted(missing))
            return 1
    args.out.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        mask = read_mask(entry.mask, manifest.palette)
        record = build_record(entry, mask, manifest.thresholds, manifest.attrs, manifest.seed)
        result = render_overlay(entry.pre_image, entry.post_image, mask,
                                list(record.quadruples), record.description,
                                args.out / f"{entry.image_id}.png")
        log.info("wrote %s", result.path)
    return 0


def cmd_losscheck(args) -> int:
    ops = [part.strip() for part in args.ops.split(",") if part.strip()] if args.ops else None
    try:
        report = run_losscheck(ops=ops, trials=args.trials, h=args.h,
                               tolerance=args.tolerance, seed=args.seed)
    except ValueError as exc:
        log.error("%s", exc)
        return 1
    print(json.dumps(report, indent=2))
    return 0 if report["passed"] else 2


def _read_label_dir(directory: Path) -> dict[str, Path]:
    return {path.name: path for path in sorted(directory.glob("*.png"))}


def cmd_eval(args) -> int:
    for directory in (args.pred, args.gt):
        if not directory.is_dir():
            log.error("not a directory: %s", directory)
            return 1
    pred_files = _read_label_dir(args.pred)
    gt_files = _read_label_dir(args.gt)
    if not pred_files or pred_files.keys() != gt_files.keys():
        log.error("prediction and ground-truth directories must hold the same non-empty set of PNGs")
        return 1
    n_classes = 1 if args.mode == "bcd" else args.classes
    tasks = [(pred_files[name], gt_files[name], args.mode, n_classes) for name in pred_files]
    conf = ScdConfusion.zeros(n_classes)
    if args.jobs > 1 and len(tasks) > 1:
        # Accumulation is associative, so partial confusions merge cell-wise.
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for partial in pool.map(_score_pair, tasks, chunksize=max(1, len(tasks) // (args.jobs * 4))):
                conf = conf.add(ScdConfusion(n_classes=n_classes, cells=partial))
    else:
        for task in tasks:
            conf = conf.add(ScdConfusion(n_classes=n_classes, cells=_score_pair(task)))

    if args.mode == "bcd":
        values = binary_metrics(conf)._asdict()
        header = ("f1", "iou", "oa", "precision", "recall")
    else:
        values = scd_metrics(conf, average=args.average)._asdict()
        header = ("sek", "f_scd", "miou", "precision", "recall", "mf1", "oa")
    payload = {"mode": args.mode, "pixels": conf.total, "classes": n_classes, "metrics": values}
    print(json.dumps(payload, indent=2))
    print(_metric_table(header, values))

    if args.report is not None:
        from .figures import save_confusion_figure

        args.report.mkdir(parents=True, exist_ok=True)
        with open(args.report / "metrics.json", "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
        save_confusion_figure(conf.cells, args.report / "confusion.png")
    return 0


def _score_pair(task) -> np.ndarray:
    pred_path, gt_path, mode, n_classes = task
    pred = _read_raw_labels(pred_path)
    gt = _read_raw_labels(gt_path)
    if mode == "bcd":
        pred = (pred > 0).astype(np.int64)
        gt = (gt > 0).astype(np.int64)
    return np.asarray(accumulate(pred, gt, ScdConfusion.zeros(n_classes)).cells)


def _read_raw_labels(path: Path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "P", "I", "I;16"):
                img = img.convert("L")
            return np.asarray(img).astype(np.int64)
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"cannot decode mask {path}: {exc}") from exc


def _metric_table(header, values: dict) -> str:
    cells = [f"{100.0 * values[name]:.2f}" for name in header]
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
    head = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    row = "  ".join(c.ljust(w) for c, w in zip(cells, widths))
    return f"{head}\n{row}"


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MissingFile) as exc:
        log.error("%s", exc)
        return 1
    except MaskscribeError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
