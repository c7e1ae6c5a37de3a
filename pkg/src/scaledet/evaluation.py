"""Detection evaluation: NMS, matching, PR curves, AP, and fold aggregation.

Matching follows the greedy highest-score-first convention: a detection is a
true positive when its best-IoU unmatched ground-truth box clears the IoU
threshold (claiming that box), otherwise a false positive, except that
detections whose only sufficient overlap is with an ignore region (DontCare
ground truth, or out-of-bucket ground truth during scale-bucketed runs) are
dropped from the tally entirely.

Equal-score detections are ordered by content (image id, then coordinates),
never by input position, so shuffling the input cannot change any label.

The default IoU threshold is 0.7 for the "Car" class and 0.5 otherwise;
both AP interpolation schemes ("all-point" area under the enveloped PR
curve and the legacy "11-point" average) are available.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from pathlib import Path

from .datasets import Annotation, ImageAnnotations
from .errors import ConfigError, ParseError
from .geometry import Box, iou

__all__ = [
    "Detection",
    "EvalReport",
    "FoldAggregate",
    "TP",
    "FP",
    "IGNORED",
    "default_iou_threshold",
    "nms",
    "match_detections",
    "tp_fp_sequence",
    "pr_curve",
    "average_precision",
    "scale_bucketed_ap",
    "evaluate_detections",
    "aggregate_folds",
    "read_detections_csv",
    "write_detections_csv",
    "gts_of",
]

TP = "tp"
FP = "fp"
IGNORED = "ignored"

DETECTIONS_CSV_HEADER = ["image_id", "class", "x1", "y1", "x2", "y2", "score"]


@dataclass(frozen=True)
class Detection:
    """One scored detection."""

    image_id: str
    class_name: str
    box: Box
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"detection score must be finite, got {self.score}")

    def sort_key(self):
        """Content-based ordering: score desc, then stable identity."""
        b = self.box
        return (-self.score, self.image_id, b.x1, b.y1, b.x2, b.y2, self.class_name)


def default_iou_threshold(class_name: str) -> float:
    return 0.7 if class_name == "Car" else 0.5


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy non-maximum suppression for one image and one class.

    Repeatedly keeps the highest-scoring remaining detection and discards
    every remaining one with IoU strictly above the threshold against it.
    Ties break by (score desc, input index asc); output is score-sorted.
    """
    if not 0 < iou_threshold < 1:
        raise ConfigError(f"NMS IoU threshold must lie in (0, 1), got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[Detection] = []
    suppressed = [False] * len(dets)
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(dets[i])
        for j in order[pos + 1 :]:
            if not suppressed[j] and iou(dets[i].box, dets[j].box) > iou_threshold:
                suppressed[j] = True
    return kept


def match_detections(
    dets: list[Detection],
    gts: list[Annotation],
    iou_threshold: float,
    ignore_mask: list[bool] | None = None,
) -> list[tuple[Detection, str]]:
    """Label every detection TP, FP, or IGNORED.

    Detections are processed in descending score order (sorted defensively
    by content). ``ignore_mask`` marks ground truth that can absorb
    detections without reward or penalty; it defaults to the DontCare flags.
    Ground truth and detections are paired within the same image only.
    """
    if not 0 < iou_threshold <= 1:
        raise ConfigError(f"matching IoU threshold must lie in (0, 1], got {iou_threshold}")
    if ignore_mask is None:
        ignore_mask = [g.is_dontcare for g in gts]
    if len(ignore_mask) != len(gts):
        raise ValueError("ignore_mask length must equal the number of ground-truth boxes")

    by_image: dict[str, dict[str, list]] = {}
    for g, ign in zip(gts, ignore_mask):
        slot = by_image.setdefault(g.source_image, {"counted": [], "ignored": []})
        (slot["ignored"] if ign else slot["counted"]).append(g.box)
    matched: dict[str, list[bool]] = {
        img: [False] * len(slot["counted"]) for img, slot in by_image.items()
    }

    results: list[tuple[Detection, str]] = []
    for det in sorted(dets, key=Detection.sort_key):
        slot = by_image.get(det.image_id)
        label = FP
        if slot is not None:
            counted = slot["counted"]
            taken = matched[det.image_id]
            best_iou, best_idx = 0.0, -1
            for idx, gt_box in enumerate(counted):
                if taken[idx]:
                    continue
                value = iou(det.box, gt_box)
                if value > best_iou:
                    best_iou, best_idx = value, idx
            if best_idx >= 0 and best_iou >= iou_threshold:
                taken[best_idx] = True
                label = TP
            elif any(iou(det.box, ig) >= iou_threshold for ig in slot["ignored"]):
                label = IGNORED
        results.append((det, label))
    return results


def tp_fp_sequence(matches: list[tuple[Detection, str]]) -> list[bool]:
    """Score-ordered TP flags with ignored detections dropped."""
    return [label == TP for _, label in matches if label != IGNORED]


def pr_curve(tp_flags: list[bool], total_gt: int) -> list[tuple[float, float]]:
    """(recall, precision) after each detection, ordered by ascending recall."""
    points: list[tuple[float, float]] = []
    tp = fp = 0
    for flag in tp_flags:
        if flag:
            tp += 1
        else:
            fp += 1
        recall = tp / total_gt if total_gt > 0 else 0.0
        points.append((recall, tp / (tp + fp)))
    return points


def average_precision(tp_flags: list[bool], total_gt: int, mode: str = "all-point") -> float:
    """AP of a score-ordered TP/FP sequence.

    "all-point" integrates the monotone precision envelope over recall;
    "11-point" averages the interpolated precision at recall 0, 0.1, .., 1.
    With ``total_gt == 0`` the AP is defined as 0 (callers flag the
    degenerate denominator).
    """
    if mode not in ("all-point", "11-point"):
        raise ConfigError(f"unknown AP mode {mode!r}")
    if total_gt < 0:
        raise ValueError(f"total_gt must be >= 0, got {total_gt}")
    points = pr_curve(tp_flags, total_gt)
    if total_gt == 0 or not points:
        return 0.0
    if mode == "11-point":
        total = 0.0
        for t in range(11):
            threshold = t / 10
            best = max((p for r, p in points if r >= threshold), default=0.0)
            total += best
        return total / 11

    recalls = [0.0] + [r for r, _ in points]
    precisions = [0.0] + [p for _, p in points]
    recalls.append(1.0)
    precisions.append(0.0)
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    for i in range(1, len(recalls)):
        if recalls[i] != recalls[i - 1]:
            ap += (recalls[i] - recalls[i - 1]) * precisions[i]
    return ap


@dataclass(frozen=True)
class BucketAP:
    """Per-bucket result; ``ap`` is None when the bucket holds no ground truth."""

    bucket_lo: float
    bucket_hi: float
    ap: float | None
    tp: int
    fp: int
    total_gt: int


@dataclass(frozen=True)
class EvalReport:
    class_name: str
    iou_threshold: float
    mode: str
    pr_points: tuple[tuple[float, float], ...]
    ap: float
    per_bucket: tuple[BucketAP, ...]
    tp: int
    fp: int
    total_gt: int
    zero_gt: bool


def _counts(tp_flags: list[bool]) -> tuple[int, int]:
    tp = sum(tp_flags)
    return tp, len(tp_flags) - tp


def scale_bucketed_ap(
    dets: list[Detection],
    gts: list[Annotation],
    bucket_edges,
    iou_threshold: float,
    mode: str = "all-point",
) -> list[BucketAP]:
    """AP restricted to ground truth whose width falls in each bucket.

    Out-of-bucket ground truth turns into ignore regions so detections on it
    are neither rewarded nor penalized, keeping buckets independent. Buckets
    without ground truth report ``ap=None`` rather than 0.
    """
    edges = tuple(float(e) for e in bucket_edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ConfigError(f"bucket edges must be strictly increasing, got {edges}")
    results: list[BucketAP] = []
    for lo, hi in zip(edges, edges[1:]):
        ignore = [g.is_dontcare or not (lo <= g.box.width < hi) for g in gts]
        total_gt = ignore.count(False)
        if total_gt == 0:
            results.append(BucketAP(lo, hi, None, 0, 0, 0))
            continue
        flags = tp_fp_sequence(match_detections(dets, gts, iou_threshold, ignore_mask=ignore))
        tp, fp = _counts(flags)
        results.append(
            BucketAP(lo, hi, average_precision(flags, total_gt, mode), tp, fp, total_gt)
        )
    return results


def evaluate_detections(
    dets: list[Detection],
    gts: list[Annotation],
    class_name: str = "Car",
    iou_threshold: float | None = None,
    mode: str = "all-point",
    bucket_edges=None,
) -> EvalReport:
    """Full single-class evaluation: PR curve, AP, and optional bucket APs.

    Detections and counted ground truth are restricted to ``class_name``;
    DontCare regions of any class stay in play as ignore regions.
    """
    if iou_threshold is None:
        iou_threshold = default_iou_threshold(class_name)
    class_dets = [d for d in dets if d.class_name == class_name]
    class_gts = [g for g in gts if g.class_name == class_name or g.is_dontcare]
    flags = tp_fp_sequence(match_detections(class_dets, class_gts, iou_threshold))
    total_gt = sum(1 for g in class_gts if not g.is_dontcare)
    tp, fp = _counts(flags)
    per_bucket: tuple[BucketAP, ...] = ()
    if bucket_edges is not None:
        per_bucket = tuple(
            scale_bucketed_ap(class_dets, class_gts, bucket_edges, iou_threshold, mode)
        )
    return EvalReport(
        class_name=class_name,
        iou_threshold=iou_threshold,
        mode=mode,
        pr_points=tuple(pr_curve(flags, total_gt)),
        ap=average_precision(flags, total_gt, mode),
        per_bucket=per_bucket,
        tp=tp,
        fp=fp,
        total_gt=total_gt,
        zero_gt=total_gt == 0,
    )


@dataclass(frozen=True)
class FoldAggregate:
    mean: float
    minimum: float
    maximum: float
    stddev: float
    n_folds: int


def aggregate_folds(per_fold_ap: list[float]) -> FoldAggregate:
    """Arithmetic mean of per-fold APs plus min/max/stddev."""
    values = [float(v) for v in per_fold_ap]
    if not values:
        raise ValueError("need at least one fold AP")
    if any(not 0 <= v <= 1 for v in values):
        raise ValueError(f"fold APs must lie in [0, 1], got {values}")
    return FoldAggregate(
        mean=sum(values) / len(values),
        minimum=min(values),
        maximum=max(values),
        stddev=statistics.stdev(values) if len(values) > 1 else 0.0,
        n_folds=len(values),
    )


def write_detections_csv(path, dets: list[Detection]) -> None:
    """Write detections in canonical order (image asc, score desc, box)."""
    ordered = sorted(dets, key=lambda d: (d.image_id,) + d.sort_key())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETECTIONS_CSV_HEADER)
        for d in ordered:
            b = d.box
            writer.writerow(
                [d.image_id, d.class_name, repr(float(b.x1)), repr(float(b.y1)),
                 repr(float(b.x2)), repr(float(b.y2)), repr(float(d.score))]
            )


def read_detections_csv(path) -> list[Detection]:
    """Read a detections CSV (header image_id,class,x1,y1,x2,y2,score)."""
    path = Path(path)
    dets: list[Detection] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DETECTIONS_CSV_HEADER:
            raise ParseError(
                f"{path.name}: expected header {','.join(DETECTIONS_CSV_HEADER)}, "
                f"got {','.join(header) if header else 'empty file'}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise ParseError(f"{path.name}: line {lineno}: expected 7 columns, got {len(row)}")
            try:
                box = Box(float(row[2]), float(row[3]), float(row[4]), float(row[5]))
                score = float(row[6])
            except ValueError as exc:
                raise ParseError(f"{path.name}: line {lineno}: {exc}") from None
            dets.append(Detection(image_id=row[0], class_name=row[1], box=box, score=score))
    return dets


def gts_of(dataset: list[ImageAnnotations]) -> list[Annotation]:
    """Flatten a loaded dataset into one annotation list."""
    return [a for image in dataset for a in image.annotations]
