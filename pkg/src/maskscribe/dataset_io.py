"""Dataset ingestion and multimodal JSONL emission.

A dataset is described by an INI-style manifest (sections [dataset],
[palette], [colors], [thresholds], [templates], [attributes]); the builder
turns every entry into one JSON line plus a summary report, with bar-chart
figures rendered next to the delimited output. Everything is offline: the
builder touches only the files listed in the manifest.
"""

from __future__ import annotations

import configparser
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core_types import ChangeMask, ClassEntry, SemanticQuadruple, TextDescription, validate_change_mask
from .errors import ConfigError, DecodeError, MissingFile, PaletteGap
from .templates import AttributeSelection, Vocabulary, render_description
from .transcriber import QuantityThresholds, class_transcriptions

PALETTE_SCAN_LIMIT = 8  # masks sampled for coverage at manifest load time


@dataclass(frozen=True)
class Palette:
    """Ordered class table plus an optional class-index -> RGB color table."""

    classes: tuple[ClassEntry, ...]
    colors: dict[int, tuple[int, int, int]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        seen = set()
        for entry in self.classes:
            if entry.index < 1:
                raise ConfigError(f"palette index {entry.index} is reserved (0 means no change)")
            if entry.index in seen:
                raise ConfigError(f"palette lists index {entry.index} twice")
            seen.add(entry.index)

    def indices(self) -> set[int]:
        return {entry.index for entry in self.classes}


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    pre_image: Path
    post_image: Path
    mask: Path


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    split: str
    entries: tuple[ManifestEntry, ...]
    palette: Palette
    thresholds: QuantityThresholds
    attrs: AttributeSelection | None
    seed: int
    vocabulary: Vocabulary


def _split_list(value: str) -> list[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def _parse_entries(raw: str, root: Path) -> list[ManifestEntry]:
    entries = []
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = [part.strip() for part in line.split(",")]
        if len(parts) != 4:
            raise ConfigError(f"entry line needs 'id, pre, post, mask', got: {line!r}")
        image_id, pre, post, mask = parts
        entries.append(ManifestEntry(
            image_id=image_id,
            pre_image=root / pre,
            post_image=root / post,
            mask=root / mask,
        ))
    return entries


def _parse_palette(parser: configparser.ConfigParser) -> Palette:
    classes = []
    if parser.has_section("palette"):
        for key, value in parser.items("palette"):
            try:
                index = int(key)
            except ValueError as exc:
                raise ConfigError(f"palette keys must be integer class indices, got {key!r}") from exc
            parts = _split_list(value)
            if len(parts) != 2:
                raise ConfigError(f"palette entry {key} needs 'category, change_type', got {value!r}")
            classes.append(ClassEntry(index=index, category=parts[0], change_type=parts[1]))
    colors = None
    if parser.has_section("colors"):
        colors = {}
        for key, value in parser.items("colors"):
            try:
                index = int(key)
                r, g, b = (int(part) for part in _split_list(value))
            except ValueError as exc:
                raise ConfigError(f"color entry {key!r} = {value!r} must be 'index = r, g, b'") from exc
            colors[index] = (r, g, b)
    return Palette(classes=tuple(classes), colors=colors)


def _parse_attrs(parser: configparser.ConfigParser) -> AttributeSelection | None:
    if not parser.has_section("attributes"):
        return AttributeSelection()
    flags = {}
    for name in ("quantity", "type", "category", "location"):
        try:
            flags[name] = parser.getboolean("attributes", name, fallback=True)
        except ValueError as exc:
            raise ConfigError(f"attribute {name!r} must be a boolean") from exc
    if not any(flags.values()):
        return None  # attribute-free rendering
    return AttributeSelection(
        use_quantity=flags["quantity"],
        use_type=flags["type"],
        use_category=flags["category"],
        use_location=flags["location"],
    )


def load_manifest(config_path, scan_palette: bool = True) -> DatasetManifest:
    """Parse and fully validate a dataset manifest.

    Raises ConfigError for malformed input, MissingFile for broken path
    references, and PaletteGap when a sampled mask contains a value the
    palette does not cover. ``scan_palette=False`` skips the sampled scan
    (the validate command re-reads every mask itself).
    """
    config_path = Path(config_path)
    if not config_path.is_file():
        raise MissingFile(f"config file not found: {config_path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        with open(config_path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {config_path}: {exc}") from exc

    if not parser.has_section("dataset"):
        raise ConfigError("missing required [dataset] section")
    root = Path(parser.get("dataset", "root", fallback=str(config_path.parent)))
    split = parser.get("dataset", "split", fallback="train")
    entries = _parse_entries(parser.get("dataset", "entries", fallback=""), root)

    ids = [entry.image_id for entry in entries]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigError(f"duplicate image ids: {dupes}")
    for entry in entries:
        for path in (entry.pre_image, entry.post_image, entry.mask):
            if not path.is_file():
                raise MissingFile(f"entry {entry.image_id!r} references missing file: {path}")

    palette = _parse_palette(parser)
    try:
        thresholds = QuantityThresholds(
            t1=parser.getint("thresholds", "t1", fallback=800),
            t2=parser.getint("thresholds", "t2", fallback=4000),
            t3=parser.getint("thresholds", "t3", fallback=8000),
        )
    except ValueError as exc:
        raise ConfigError(f"bad thresholds: {exc}") from exc

    seed = parser.getint("templates", "seed", fallback=0)
    categories = _split_list(parser.get("templates", "categories", fallback=""))
    change_types = _split_list(parser.get("templates", "types", fallback=""))
    vocabulary = Vocabulary(
        categories=tuple(categories) or Vocabulary().categories,
        change_types=tuple(change_types) or Vocabulary().change_types,
    )

    manifest = DatasetManifest(
        root=root,
        split=split,
        entries=tuple(entries),
        palette=palette,
        thresholds=thresholds,
        attrs=_parse_attrs(parser),
        seed=seed,
        vocabulary=vocabulary,
    )
    if scan_palette:
        for entry in manifest.entries[:PALETTE_SCAN_LIMIT]:
            read_mask(entry.mask, palette)
    return manifest


def read_mask(path, palette: Palette) -> ChangeMask:
    """Decode a mask PNG into a ChangeMask using the palette's class table.

    8-bit grayscale and indexed images carry class indices directly; RGB
    images need the palette's color table. Any value or color without a
    palette entry raises PaletteGap.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode in ("L", "P"):
                labels = np.asarray(img, dtype=np.uint8)
            elif mode in ("RGB", "RGBA"):
                rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
                labels = _rgb_to_labels(rgb, palette, path)
            else:
                raise DecodeError(f"unsupported mask mode {mode!r} in {path}")
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"cannot decode mask {path}: {exc}") from exc
    if labels.ndim != 2:
        raise DecodeError(f"mask {path} is not single-channel")
    known = palette.indices()
    for value in np.unique(labels):
        if value != 0 and int(value) not in known:
            raise PaletteGap(int(value), path=path)
    return ChangeMask(labels=labels, class_table=palette.classes)


def _rgb_to_labels(rgb: np.ndarray, palette: Palette, path: Path) -> np.ndarray:
    if not palette.colors:
        raise DecodeError(f"mask {path} is RGB but the manifest has no [colors] table")
    packed = (rgb[..., 0].astype(np.uint32) << 16) | (rgb[..., 1].astype(np.uint32) << 8) | rgb[..., 2]
    lookup = {(r << 16) | (g << 8) | b: index for index, (r, g, b) in palette.colors.items()}
    labels = np.zeros(rgb.shape[:2], dtype=np.uint8)
    for value in np.unique(packed):
        if int(value) not in lookup:
            triple = (int(value) >> 16 & 0xFF, int(value) >> 8 & 0xFF, int(value) & 0xFF)
            raise PaletteGap(triple, path=path)
        labels[packed == value] = lookup[int(value)]
    return labels


@dataclass(frozen=True)
class ClassStat:
    class_index: int
    category: str
    change_type: str
    pixel_count: int
    centroid: tuple[float, float] | None


@dataclass(frozen=True)
class MultimodalRecord:
    """One dataset sample: joined description, sentences, quadruples, stats."""

    image_id: str
    width: int
    height: int
    seed: int
    description: str
    sentences: tuple[TextDescription, ...]
    sentence_class_indices: tuple[int | None, ...]
    quadruples: tuple[SemanticQuadruple, ...]
    quadruple_class_indices: tuple[int, ...]
    class_stats: tuple[ClassStat, ...]

    def __post_init__(self):
        if self.quadruples:
            if len(self.sentences) != len(self.quadruples):
                raise ValueError("one sentence per quadruple is required")
        elif len(self.sentences) != 1:
            raise ValueError("a no-change sample carries exactly one fixed sentence")


def build_record(entry: ManifestEntry, mask: ChangeMask, thresholds: QuantityThresholds,
                 attrs: AttributeSelection | None, seed: int) -> MultimodalRecord:
    transcriptions = class_transcriptions(mask, thresholds)
    pairs = [(ct.entry.index, ct.quadruple) for ct in transcriptions if ct.quadruple is not None]
    description, sentences = render_description(pairs, entry.image_id, seed, attrs)
    sentence_indices = tuple(index for index, _ in pairs) if pairs else (None,)
    return MultimodalRecord(
        image_id=entry.image_id,
        width=mask.width,
        height=mask.height,
        seed=seed,
        description=description,
        sentences=tuple(sentences),
        sentence_class_indices=sentence_indices,
        quadruples=tuple(quad for _, quad in pairs),
        quadruple_class_indices=tuple(index for index, _ in pairs),
        class_stats=tuple(
            ClassStat(
                class_index=ct.entry.index,
                category=ct.entry.category,
                change_type=ct.entry.change_type,
                pixel_count=ct.pixel_count,
                centroid=ct.centroid,
            )
            for ct in transcriptions
        ),
    )


def record_to_dict(record: MultimodalRecord) -> dict:
    """Fixed-key-order JSON form of a record (the published schema)."""
    return {
        "image_id": record.image_id,
        "width": record.width,
        "height": record.height,
        "seed": record.seed,
        "description": record.description,
        "sentences": [
            {
                "template_id": text.template_id,
                "text": text.sentence,
                "class_index": class_index,
            }
            for text, class_index in zip(record.sentences, record.sentence_class_indices)
        ],
        "quadruples": [
            {
                "class_index": class_index,
                "location": quad.location.value,
                "quantity": quad.quantity.value,
                "category": quad.category,
                "change_type": quad.change_type,
                "pixel_count": quad.pixel_count,
                "centroid": [quad.centroid[0], quad.centroid[1]],
            }
            for quad, class_index in zip(record.quadruples, record.quadruple_class_indices)
        ],
        "class_stats": [
            {
                "class_index": stat.class_index,
                "category": stat.category,
                "change_type": stat.change_type,
                "pixel_count": stat.pixel_count,
                "centroid": None if stat.centroid is None else [stat.centroid[0], stat.centroid[1]],
            }
            for stat in record.class_stats
        ],
    }


@dataclass
class EntryOutcome:
    image_id: str
    line: str | None
    error: str | None
    directions: dict[str, int]
    quantities: dict[str, int]
    class_counts: dict[int, int]


def _process_entry(task) -> EntryOutcome:
    entry, palette, thresholds, attrs, seed = task
    try:
        mask = read_mask(entry.mask, palette)
        findings = validate_change_mask(mask)
        if findings:
            raise ConfigError("; ".join(f.message for f in findings))
        record = build_record(entry, mask, thresholds, attrs, seed)
    except Exception as exc:  # collected per entry, reported upstream
        return EntryOutcome(entry.image_id, None, f"{type(exc).__name__}: {exc}", {}, {}, {})
    directions: dict[str, int] = {}
    quantities: dict[str, int] = {}
    class_counts: dict[int, int] = {}
    for quad, index in zip(record.quadruples, record.quadruple_class_indices):
        directions[quad.location.value] = directions.get(quad.location.value, 0) + 1
        quantities[quad.quantity.value] = quantities.get(quad.quantity.value, 0) + 1
        class_counts[index] = class_counts.get(index, 0) + 1
    line = json.dumps(record_to_dict(record), ensure_ascii=False, separators=(", ", ": "))
    return EntryOutcome(entry.image_id, line, None, directions, quantities, class_counts)


@dataclass
class BuildResult:
    jsonl_path: Path
    report_path: Path
    figure_paths: list[Path]
    report: dict
    aborted: bool = False


class EntryFailure(Exception):
    def __init__(self, image_id: str, error: str):
        super().__init__(f"{image_id}: {error}")
        self.image_id = image_id
        self.error = error


def build_multimodal_dataset(manifest: DatasetManifest, out_dir, jobs: int = 1,
                             fail_fast: bool = False, make_figures: bool = True) -> BuildResult:
    """Emit <split>.mm.jsonl, <split>.report.json and histogram figures.

    Output bytes are a pure function of the manifest: entries are processed
    in manifest order (also under a worker pool) and the seed is recorded in
    every line. Per-entry failures are collected into the report unless
    fail_fast is set, in which case the first failure raises EntryFailure.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(entry, manifest.palette, manifest.thresholds, manifest.attrs, manifest.seed)
             for entry in manifest.entries]

    if jobs > 1 and len(tasks) > 1:
        chunksize = max(1, len(tasks) // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_process_entry, tasks, chunksize=chunksize))
    else:
        outcomes = [_process_entry(task) for task in tasks]

    lines = []
    errors = []
    directions = {d: 0 for d in ("north", "northeast", "east", "southeast",
                                 "south", "southwest", "west", "northwest", "center")}
    quantities = {q: 0 for q in ("a single", "a few", "several", "multiple")}
    class_counts: dict[int, int] = {entry.index: 0 for entry in manifest.palette.classes}
    for outcome in outcomes:
        if outcome.error is not None:
            if fail_fast:
                raise EntryFailure(outcome.image_id, outcome.error)
            errors.append({"image_id": outcome.image_id, "error": outcome.error})
            continue
        lines.append(outcome.line)
        for key, count in outcome.directions.items():
            directions[key] += count
        for key, count in outcome.quantities.items():
            quantities[key] += count
        for key, count in outcome.class_counts.items():
            class_counts[key] = class_counts.get(key, 0) + count

    jsonl_path = out_dir / f"{manifest.split}.mm.jsonl"
    with open(jsonl_path, "w", encoding="utf-8", newline="\n") as handle:
        for line in lines:
            handle.write(line)
            handle.write("\n")

    report = {
        "split": manifest.split,
        "seed": manifest.seed,
        "attrs": manifest.attrs.names() if manifest.attrs is not None else "none",
        "entries": len(manifest.entries),
        "records_written": len(lines),
        "quadruples": int(sum(quantities.values())),
        "per_class": [
            {
                "class_index": entry.index,
                "category": entry.category,
                "change_type": entry.change_type,
                "quadruples": class_counts.get(entry.index, 0),
            }
            for entry in manifest.palette.classes
        ],
        "directions": directions,
        "quantities": quantities,
        "errors": errors,
    }
    report_path = out_dir / f"{manifest.split}.report.json"
    with open(report_path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(report, handle, ensure_ascii=False, indent=2)
        handle.write("\n")

    figure_paths = []
    if make_figures:
        from .figures import save_count_figure

        for name, counts, title in (
            ("directions", directions, "Quadruple directions"),
            ("quantities", quantities, "Quadruple quantities"),
        ):
            figure_path = out_dir / f"{manifest.split}.{name}.png"
            save_count_figure(counts, title, figure_path)
            figure_paths.append(figure_path)

    return BuildResult(jsonl_path=jsonl_path, report_path=report_path,
                       figure_paths=figure_paths, report=report)


def apply_overrides(manifest: DatasetManifest, seed: int | None = None,
                    attrs_names: list[str] | None = None) -> DatasetManifest:
    """CLI-level overrides: flags beat manifest values when given."""
    updated = manifest
    if seed is not None:
        updated = replace(updated, seed=seed)
    if attrs_names is not None:
        attrs = None if attrs_names == [] else AttributeSelection.from_names(attrs_names)
        updated = replace(updated, attrs=attrs)
    return updated
