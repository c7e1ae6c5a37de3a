"""Annotation parsing and scale-distribution statistics.

Two input formats are supported:

* KITTI object labels: one ``.txt`` per image, each non-empty line carrying
  15+ whitespace-separated fields
  (type, truncated, occluded, alpha, bbox x1/y1/x2/y2, 3 dimensions,
  3 location, rotation_y, optional score).
* VOC annotations: one XML per image with ``size/width``, ``size/height``
  and ``object/name`` + ``object/bndbox`` children. VOC's 1-based inclusive
  corners are normalized into the continuous convention by subtracting 1
  from xmin/ymin, so a bndbox (100,100,200,200) becomes [99,99,200,200].

"DontCare" regions are parsed and kept (flagged through ``class_name``) but
excluded from statistics; evaluation treats them as ignore regions.

Parsers are pure functions on input text, so per-file parsing can run
concurrently and statistics merge associatively.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidBoxError, ParseError
from .geometry import Box

__all__ = [
    "Annotation",
    "ImageAnnotations",
    "Histogram",
    "DatasetStats",
    "Fold",
    "DONTCARE_CLASS",
    "DEFAULT_WIDTH_BIN_EDGES",
    "DEFAULT_ASPECT_BIN_EDGES",
    "KITTI_IMAGE_W",
    "KITTI_IMAGE_H",
    "parse_kitti_label",
    "kitti_label_line",
    "parse_voc_xml",
    "make_histogram",
    "compute_stats",
    "stats_csv_rows",
    "load_kitti_dir",
    "load_voc_dir",
    "load_dataset",
    "split_folds",
]

DONTCARE_CLASS = "DontCare"

# Width bins give the 30-60 px interval its own bin and stay open-ended at
# both extremes; aspect bins bracket the usual h/w range for vehicles.
DEFAULT_WIDTH_BIN_EDGES = (0.0, 30.0, 60.0, 90.0, 120.0, 180.0, 256.0, 384.0, 512.0, math.inf)
DEFAULT_ASPECT_BIN_EDGES = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, math.inf)

# Default camera frame for KITTI label files, which do not carry image size.
KITTI_IMAGE_W = 1392.0
KITTI_IMAGE_H = 512.0


@dataclass(frozen=True)
class Annotation:
    """One labeled object.

    ``truncated`` is a ratio in [0,1] for KITTI and a 0/1 flag for VOC;
    ``occluded`` is KITTI's small-integer level and doubles as VOC's
    ``difficult`` flag. ``extras`` carries KITTI's remaining numeric fields
    (alpha, 3 dimensions, 3 location, rotation_y, optional score) untouched
    so a parsed line can be serialized back verbatim.
    """

    class_name: str
    box: Box
    truncated: float = 0.0
    occluded: int = 0
    source_image: str = ""
    image_w: float | None = None
    image_h: float | None = None
    extras: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.class_name:
            raise ValueError("class_name must be non-empty")

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == DONTCARE_CLASS

    @property
    def width(self) -> float:
        return self.box.width

    @property
    def height(self) -> float:
        return self.box.height


@dataclass(frozen=True)
class ImageAnnotations:
    """All annotations of one image plus the image dimensions."""

    image_id: str
    image_w: float
    image_h: float
    annotations: tuple[Annotation, ...] = ()


def _num(fields: list[str], idx: int, lineno: int) -> float:
    try:
        return float(fields[idx])
    except ValueError:
        raise ParseError(
            f"line {lineno}: field {idx + 1} ({fields[idx]!r}) is not numeric"
        ) from None


def parse_kitti_label(
    text: str,
    image_id: str,
    image_w: float | None = KITTI_IMAGE_W,
    image_h: float | None = KITTI_IMAGE_H,
) -> list[Annotation]:
    """Parse the contents of one KITTI label file.

    Every non-empty line must carry at least 15 whitespace-separated fields;
    "DontCare" lines are kept and flagged via ``class_name``. Raises
    :class:`ParseError` with the offending line number on malformed input,
    including degenerate bounding boxes.
    """
    annotations: list[Annotation] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 15:
            raise ParseError(f"line {lineno}: expected at least 15 fields, got {len(fields)}")
        class_name = fields[0]
        truncated = _num(fields, 1, lineno)
        occluded = int(_num(fields, 2, lineno))
        coords = tuple(_num(fields, i, lineno) for i in (4, 5, 6, 7))
        try:
            box = Box(*coords)
        except InvalidBoxError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        extras = (_num(fields, 3, lineno),) + tuple(
            _num(fields, i, lineno) for i in range(8, len(fields))
        )
        annotations.append(
            Annotation(
                class_name=class_name,
                box=box,
                truncated=truncated,
                occluded=occluded,
                source_image=image_id,
                image_w=image_w,
                image_h=image_h,
                extras=extras,
            )
        )
    return annotations


def kitti_label_line(annotation: Annotation) -> str:
    """Serialize an annotation back to the 15(+)-field label line.

    Floats are written with ``repr`` so reparsing the line reproduces an
    identical Annotation. Requires KITTI-shaped ``extras``.
    """
    if len(annotation.extras) < 8:
        raise ValueError(
            f"annotation lacks the 8 trailing numeric fields needed for a label line "
            f"(got {len(annotation.extras)} extras)"
        )
    b = annotation.box
    fields = [
        annotation.class_name,
        repr(float(annotation.truncated)),
        str(int(annotation.occluded)),
        repr(float(annotation.extras[0])),
        repr(float(b.x1)),
        repr(float(b.y1)),
        repr(float(b.x2)),
        repr(float(b.y2)),
    ]
    fields.extend(repr(float(v)) for v in annotation.extras[1:])
    return " ".join(fields)


def _xml_float(parent: ET.Element, tag: str, context: str) -> float:
    node = parent.find(tag)
    if node is None or node.text is None:
        raise ParseError(f"{context}: missing <{tag}>")
    try:
        return float(node.text)
    except ValueError:
        raise ParseError(f"{context}: <{tag}> value {node.text!r} is not numeric") from None


def parse_voc_xml(text: str, image_id: str | None = None) -> tuple[float, float, list[Annotation]]:
    """Parse one VOC annotation XML.

    Returns ``(image_w, image_h, annotations)``. Corner coordinates are
    normalized from the 1-based inclusive convention (subtract 1 from
    xmin/ymin), so the parsed width equals the pixel count xmax - xmin + 1.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"invalid XML: {exc}") from None
    size = root.find("size")
    if size is None:
        raise ParseError("missing <size> element")
    image_w = _xml_float(size, "width", "size")
    image_h = _xml_float(size, "height", "size")
    if image_id is None:
        fname = root.findtext("filename") or ""
        image_id = Path(fname).stem if fname else ""

    annotations: list[Annotation] = []
    for index, obj in enumerate(root.findall("object")):
        context = f"object {index}"
        name = (obj.findtext("name") or "").strip()
        if not name:
            raise ParseError(f"{context}: missing or empty <name>")
        bndbox = obj.find("bndbox")
        if bndbox is None:
            raise ParseError(f"{context}: missing bndbox")
        xmin = _xml_float(bndbox, "xmin", context)
        ymin = _xml_float(bndbox, "ymin", context)
        xmax = _xml_float(bndbox, "xmax", context)
        ymax = _xml_float(bndbox, "ymax", context)
        try:
            box = Box(xmin - 1.0, ymin - 1.0, xmax, ymax)
        except InvalidBoxError as exc:
            raise ParseError(f"{context}: {exc}") from None
        truncated = float(int(obj.findtext("truncated") or 0))
        difficult = int(obj.findtext("difficult") or 0)
        annotations.append(
            Annotation(
                class_name=name,
                box=box,
                truncated=truncated,
                occluded=difficult,
                source_image=image_id,
                image_w=image_w,
                image_h=image_h,
            )
        )
    return image_w, image_h, annotations


@dataclass(frozen=True)
class Histogram:
    """Binned counts with explicit edges; end bins absorb out-of-range values."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def bin_bounds(self, index: int) -> tuple[float, float]:
        return (self.bin_edges[index], self.bin_edges[index + 1])

    def modal_bin(self) -> tuple[float, float]:
        """Bounds of the most populated bin (first one on ties)."""
        index = max(range(len(self.counts)), key=lambda i: (self.counts[i], -i))
        return self.bin_bounds(index)


def _validate_edges(edges: tuple[float, ...]) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.float64)
    if arr.size < 2:
        raise ConfigError(f"need at least 2 bin edges, got {list(edges)}")
    if not np.all(np.diff(arr) > 0):
        raise ConfigError(f"bin edges must be strictly increasing, got {list(edges)}")
    return arr


def make_histogram(values, bin_edges) -> Histogram:
    """Histogram ``values`` over ``bin_edges``; out-of-range values fall into
    the first/last bin so no mass is ever dropped."""
    edges = _validate_edges(tuple(bin_edges))
    nbins = edges.size - 1
    counts = np.zeros(nbins, dtype=np.int64)
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size:
        idx = np.searchsorted(edges, vals, side="right") - 1
        idx = np.clip(idx, 0, nbins - 1)
        counts = np.bincount(idx, minlength=nbins).astype(np.int64)
    return Histogram(bin_edges=tuple(float(e) for e in edges), counts=tuple(int(c) for c in counts))


@dataclass(frozen=True)
class DatasetStats:
    """Scale/aspect distribution of a set of annotations.

    Histograms cover the annotations that pass the class filter and are not
    DontCare; ``per_class`` counts every input annotation.
    """

    width_histogram: Histogram
    height_histogram: Histogram
    sqrt_area_histogram: Histogram
    aspect_histogram: Histogram
    per_class: dict[str, int] = field(default_factory=dict)
    image_count: int = 0
    annotation_count: int = 0


def compute_stats(
    annotations,
    class_filter: str | None = None,
    bin_edges=DEFAULT_WIDTH_BIN_EDGES,
    aspect_bin_edges=DEFAULT_ASPECT_BIN_EDGES,
    image_count: int | None = None,
) -> DatasetStats:
    """Histogram widths, heights, sqrt-areas, and h/w aspects.

    ``bin_edges`` applies to the three pixel-valued histograms; aspect gets
    its own edges. When ``image_count`` is None it falls back to the number
    of distinct source images among the annotations.
    """
    annotations = list(annotations)
    per_class = Counter(a.class_name for a in annotations)
    kept = [
        a
        for a in annotations
        if not a.is_dontcare and (class_filter is None or a.class_name == class_filter)
    ]
    if image_count is None:
        image_count = len({a.source_image for a in annotations})
    widths = [a.box.width for a in kept]
    heights = [a.box.height for a in kept]
    sqrt_areas = [math.sqrt(a.box.area) for a in kept]
    aspects = [a.box.height / a.box.width for a in kept]
    return DatasetStats(
        width_histogram=make_histogram(widths, bin_edges),
        height_histogram=make_histogram(heights, bin_edges),
        sqrt_area_histogram=make_histogram(sqrt_areas, bin_edges),
        aspect_histogram=make_histogram(aspects, aspect_bin_edges),
        per_class=dict(sorted(per_class.items())),
        image_count=image_count,
        annotation_count=len(kept),
    )


def stats_csv_rows(stats: DatasetStats) -> list[tuple[str, float, float, int]]:
    """Flatten all histograms into (histogram_name, bin_lo, bin_hi, count) rows."""
    rows: list[tuple[str, float, float, int]] = []
    for name, hist in (
        ("width", stats.width_histogram),
        ("height", stats.height_histogram),
        ("sqrt_area", stats.sqrt_area_histogram),
        ("aspect", stats.aspect_histogram),
    ):
        for i, count in enumerate(hist.counts):
            lo, hi = hist.bin_bounds(i)
            rows.append((name, lo, hi, count))
    return rows


def load_kitti_dir(
    path,
    image_w: float = KITTI_IMAGE_W,
    image_h: float = KITTI_IMAGE_H,
    skip_bad: bool = False,
) -> tuple[list[ImageAnnotations], list[str]]:
    """Load every ``.txt`` label file under ``path`` (sorted by name).

    Returns ``(images, skipped)`` where ``skipped`` collects per-file error
    messages when ``skip_bad`` is set; otherwise the first bad file raises.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise ParseError(f"not a directory: {directory}")
    images: list[ImageAnnotations] = []
    skipped: list[str] = []
    for file in sorted(directory.glob("*.txt")):
        image_id = file.stem
        try:
            anns = parse_kitti_label(file.read_text(), image_id, image_w, image_h)
        except ParseError as exc:
            if not skip_bad:
                raise ParseError(f"{file.name}: {exc}") from None
            skipped.append(f"{file.name}: {exc}")
            continue
        images.append(ImageAnnotations(image_id, image_w, image_h, tuple(anns)))
    return images, skipped


def load_voc_dir(path, skip_bad: bool = False) -> tuple[list[ImageAnnotations], list[str]]:
    """Load every ``.xml`` annotation file under ``path`` (sorted by name)."""
    directory = Path(path)
    if not directory.is_dir():
        raise ParseError(f"not a directory: {directory}")
    images: list[ImageAnnotations] = []
    skipped: list[str] = []
    for file in sorted(directory.glob("*.xml")):
        image_id = file.stem
        try:
            w, h, anns = parse_voc_xml(file.read_text(), image_id)
        except ParseError as exc:
            if not skip_bad:
                raise ParseError(f"{file.name}: {exc}") from None
            skipped.append(f"{file.name}: {exc}")
            continue
        images.append(ImageAnnotations(image_id, w, h, tuple(anns)))
    return images, skipped


def load_dataset(
    path,
    fmt: str,
    image_w: float = KITTI_IMAGE_W,
    image_h: float = KITTI_IMAGE_H,
    skip_bad: bool = False,
) -> tuple[list[ImageAnnotations], list[str]]:
    """Dispatch to the KITTI or VOC directory loader by ``fmt``."""
    if fmt == "kitti":
        return load_kitti_dir(path, image_w=image_w, image_h=image_h, skip_bad=skip_bad)
    if fmt == "voc":
        return load_voc_dir(path, skip_bad=skip_bad)
    raise ConfigError(f"unknown dataset format {fmt!r} (expected 'kitti' or 'voc')")


@dataclass(frozen=True)
class Fold:
    """One random train/test division of a list of image ids."""

    fold_id: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def split_folds(image_ids, n_folds: int = 6, test_size: int = 1000, seed: int = 0) -> list[Fold]:
    """Draw ``n_folds`` independent random train/test divisions.

    Each fold samples ``test_size`` test images without replacement and
    trains on the rest, the scheme used for repeated cross-validation over
    a single pool of images.
    """
    ids = [str(i) for i in image_ids]
    if n_folds < 1:
        raise ConfigError(f"n_folds must be >= 1, got {n_folds}")
    if not 0 < test_size < len(ids):
        raise ConfigError(
            f"test_size must be in (0, {len(ids)}), got {test_size}"
        )
    folds = []
    for fold_id in range(n_folds):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), fold_id]))
        order = rng.permutation(len(ids))
        test = tuple(ids[i] for i in sorted(order[:test_size]))
        train = tuple(ids[i] for i in sorted(order[test_size:]))
        folds.append(Fold(fold_id=fold_id, train_ids=train, test_ids=test))
    return folds
