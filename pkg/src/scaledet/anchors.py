"""Anchor families: generation, tiling, ground-truth matching, and coverage.

An anchor family is the cross product of scales and aspect ratios. "Scale"
means the square root of the anchor area (a scale-128 anchor covers 128^2
pixels regardless of ratio) and ratios are h/w values, so the classic
"1:2, 1:1, 2:1" trio is (0.5, 1, 2). Shapes are enumerated scales-major,
ratios-minor.

Anchors tile the image on a regular grid with one family instance centered
at ``((i + 0.5) * stride, (j + 0.5) * stride)`` per cell. Matching and
coverage run on the unclipped geometry by default so border effects do not
silently distort IoU; ``allow_border=False`` instead discards every anchor
whose extent leaves the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .datasets import DEFAULT_WIDTH_BIN_EDGES, ImageAnnotations
from .errors import ConfigError
from .geometry import Box, boxes_to_array, iou_matrix

__all__ = [
    "AnchorConfig",
    "CoverageRow",
    "GtAttribution",
    "CoverageReport",
    "anchor_shapes",
    "tile_anchors",
    "match_gt",
    "coverage",
    "SCALES_BASELINE",
    "SCALES_EXTENDED",
    "RATIOS_DEFAULT",
]

# The widely used three-scale family and its five-scale extension that adds
# 32/64 to reach small objects; ratios follow the h/w convention.
SCALES_BASELINE = (128.0, 256.0, 512.0)
SCALES_EXTENDED = (32.0, 64.0, 128.0, 256.0, 512.0)
RATIOS_DEFAULT = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class AnchorConfig:
    """Defines an anchor family; ``k = len(scales) * len(ratios)``."""

    scales: tuple[float, ...] = SCALES_BASELINE
    ratios: tuple[float, ...] = RATIOS_DEFAULT
    stride: float = 16.0
    allow_border: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ConfigError(f"scales must be non-empty and positive, got {self.scales}")
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ConfigError(f"ratios must be non-empty and positive, got {self.ratios}")
        if self.stride <= 0:
            raise ConfigError(f"stride must be positive, got {self.stride}")

    @property
    def k(self) -> int:
        return len(self.scales) * len(self.ratios)


def anchor_shapes(config: AnchorConfig) -> list[tuple[float, float]]:
    """(w, h) for every (scale, ratio) pair, scales-major.

    w = s / sqrt(r) and h = s * sqrt(r), so the area is exactly s^2 and
    h/w is exactly r.
    """
    shapes = []
    for s in config.scales:
        for r in config.ratios:
            root = math.sqrt(r)
            shapes.append((s / root, s * root))
    return shapes


@lru_cache(maxsize=64)
def _tile_arrays(
    config: AnchorConfig, image_w: float, image_h: float, clip: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Tiled anchors as ((N, 4) boxes, (N,) shape indices).

    Grid cells are row-major (y outer, x inner) with the full family per
    cell. ``clip`` only applies when ``allow_border`` keeps border anchors.
    """
    if image_w <= 0 or image_h <= 0:
        raise ConfigError(f"image dimensions must be positive, got {(image_w, image_h)}")
    stride = config.stride
    nx = max(1, math.ceil(image_w / stride))
    ny = max(1, math.ceil(image_h / stride))
    cx = (np.arange(nx, dtype=np.float64) + 0.5) * stride
    cy = (np.arange(ny, dtype=np.float64) + 0.5) * stride
    shapes = np.asarray(anchor_shapes(config), dtype=np.float64)  # (k, 2)
    half_w = 0.5 * shapes[:, 0]
    half_h = 0.5 * shapes[:, 1]

    gx, gy = np.meshgrid(cx, cy)  # (ny, nx), row-major over y then x
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)  # (cells, 2)
    boxes = np.empty((centers.shape[0], shapes.shape[0], 4), dtype=np.float64)
    boxes[:, :, 0] = centers[:, None, 0] - half_w[None, :]
    boxes[:, :, 1] = centers[:, None, 1] - half_h[None, :]
    boxes[:, :, 2] = centers[:, None, 0] + half_w[None, :]
    boxes[:, :, 3] = centers[:, None, 1] + half_h[None, :]
    boxes = boxes.reshape(-1, 4)
    shape_idx = np.tile(np.arange(shapes.shape[0]), centers.shape[0])

    if not config.allow_border:
        inside = (
            (boxes[:, 0] >= 0.0)
            & (boxes[:, 1] >= 0.0)
            & (boxes[:, 2] <= image_w)
            & (boxes[:, 3] <= image_h)
        )
        boxes = boxes[inside]
        shape_idx = shape_idx[inside]
    elif clip:
        boxes = boxes.copy()
        boxes[:, 0] = np.maximum(boxes[:, 0], 0.0)
        boxes[:, 1] = np.maximum(boxes[:, 1], 0.0)
        boxes[:, 2] = np.minimum(boxes[:, 2], image_w)
        boxes[:, 3] = np.minimum(boxes[:, 3], image_h)
        nonempty = (boxes[:, 2] > boxes[:, 0]) & (boxes[:, 3] > boxes[:, 1])
        boxes = boxes[nonempty]
        shape_idx = shape_idx[nonempty]

    boxes.setflags(write=False)
    shape_idx.setflags(write=False)
    return boxes, shape_idx


def tile_anchors(config: AnchorConfig, image_w: float, image_h: float) -> list[Box]:
    """Tile the anchor family over an image.

    With ``allow_border=True`` out-of-image anchors are clipped to the image
    (and dropped only if clipping empties them); with ``allow_border=False``
    any anchor extending beyond the image is discarded. The kept-all count is
    grid cells x k.
    """
    boxes, _ = _tile_arrays(config, float(image_w), float(image_h), clip=True)
    return [Box(*row) for row in boxes]


def match_gt(anchors: list[Box], gts) -> list[tuple[int, float]]:
    """For each ground-truth box, the argmax-IoU anchor index and its IoU.

    Ties break toward the lowest anchor index; with no anchors every GT gets
    ``(-1, 0.0)``. ``gts`` may hold Annotations or plain Boxes.
    """
    gt_boxes = [g.box if hasattr(g, "box") else g for g in gts]
    if not gt_boxes:
        return []
    if not anchors:
        return [(-1, 0.0) for _ in gt_boxes]
    ious = iou_matrix(boxes_to_array(anchors), boxes_to_array(gt_boxes))  # (A, G)
    best_idx = np.argmax(ious, axis=0)
    best_iou = ious[best_idx, np.arange(len(gt_boxes))]
    return [(int(i), float(v)) for i, v in zip(best_idx, best_iou)]


@dataclass(frozen=True)
class CoverageRow:
    """Recall of one (threshold, bucket) cell; bucket bounds are None for the
    overall row, and recall is None when the denominator is zero."""

    threshold: float
    bucket_lo: float | None
    bucket_hi: float | None
    matched: int
    total: int

    @property
    def recall(self) -> float | None:
        if self.total == 0:
            return None
        return self.matched / self.total


@dataclass(frozen=True)
class GtAttribution:
    """Which anchor shape served one ground-truth box best."""

    image_id: str
    gt_width: float
    best_scale: float
    best_ratio: float
    best_iou: float


@dataclass(frozen=True)
class CoverageReport:
    config: AnchorConfig
    thresholds: tuple[float, ...]
    bucket_edges: tuple[float, ...]
    rows: tuple[CoverageRow, ...]
    attribution: tuple[GtAttribution, ...]
    anchors_per_image: float
    image_count: int
    total_gt: int

    def overall_recall(self, threshold: float) -> float | None:
        for row in self.rows:
            if row.bucket_lo is None and row.threshold == threshold:
                return row.recall
        raise KeyError(f"no overall row for threshold {threshold}")


def coverage(
    config: AnchorConfig,
    dataset: list[ImageAnnotations],
    thresholds=(0.5, 0.7),
    buckets=DEFAULT_WIDTH_BIN_EDGES,
    class_filter: str | None = None,
) -> CoverageReport:
    """Best-anchor recall over a dataset, overall and per width bucket.

    Matching runs against the unclipped anchor tiling (or the border-filtered
    one when the config says so). DontCare regions never count as ground
    truth. Thresholds must lie in (0, 1]; buckets follow the open-ended
    binning used by the dataset statistics.
    """
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds or any(not 0 < t <= 1 for t in thresholds):
        raise ConfigError(f"IoU thresholds must lie in (0, 1], got {thresholds}")
    edges = tuple(float(e) for e in buckets)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError(f"bucket edges must be strictly increasing, got {edges}")

    n_ratios = len(config.ratios)
    best_ious: list[float] = []
    widths: list[float] = []
    attribution: list[GtAttribution] = []
    anchor_counts: list[int] = []

    for image in dataset:
        anchor_boxes, shape_idx = _tile_arrays(
            config, float(image.image_w), float(image.image_h), clip=False
        )
        anchor_counts.append(anchor_boxes.shape[0])
        gts = [
            a
            for a in image.annotations
            if not a.is_dontcare and (class_filter is None or a.class_name == class_filter)
        ]
        if not gts:
            continue
        ious = iou_matrix(anchor_boxes, boxes_to_array([g.box for g in gts]))
        best_anchor = np.argmax(ious, axis=0)
        best_vals = ious[best_anchor, np.arange(len(gts))]
        for g, a_idx, val in zip(gts, best_anchor, best_vals):
            s_idx = int(shape_idx[a_idx])
            best_ious.append(float(val))
            widths.append(g.box.width)
            attribution.append(
                GtAttribution(
                    image_id=image.image_id,
                    gt_width=g.box.width,
                    best_scale=config.scales[s_idx // n_ratios],
                    best_ratio=config.ratios[s_idx % n_ratios],
                    best_iou=float(val),
                )
            )

    iou_arr = np.asarray(best_ious, dtype=np.float64)
    width_arr = np.asarray(widths, dtype=np.float64)
    nbins = len(edges) - 1
    if width_arr.size:
        bucket_idx = np.clip(
            np.searchsorted(np.asarray(edges), width_arr, side="right") - 1, 0, nbins - 1
        )
    else:
        bucket_idx = np.zeros(0, dtype=np.int64)

    rows: list[CoverageRow] = []
    for t in thresholds:
        hit = iou_arr >= t
        rows.append(
            CoverageRow(
                threshold=t,
                bucket_lo=None,
                bucket_hi=None,
                matched=int(hit.sum()),
                total=int(iou_arr.size),
            )
        )
        for b in range(nbins):
            in_bucket = bucket_idx == b
            rows.append(
                CoverageRow(
                    threshold=t,
                    bucket_lo=edges[b],
                    bucket_hi=edges[b + 1],
                    matched=int((hit & in_bucket).sum()),
                    total=int(in_bucket.sum()),
                )
            )

    return CoverageReport(
        config=config,
        thresholds=thresholds,
        bucket_edges=edges,
        rows=tuple(rows),
        attribution=tuple(attribution),
        anchors_per_image=(sum(anchor_counts) / len(anchor_counts)) if anchor_counts else 0.0,
        image_count=len(dataset),
        total_gt=len(best_ious),
    )
