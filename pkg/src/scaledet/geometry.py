"""Axis-aligned box geometry.

Boxes live in continuous pixel coordinates with corners ``(x1, y1)`` top-left
and ``(x2, y2)`` bottom-right, requiring ``x2 > x1`` and ``y2 > y1``. Widths
and heights are plain coordinate differences; there is no legacy "+1" pixel
convention anywhere in the toolkit. Parsers normalize other conventions into
this one at the boundary.

All values are immutable and all operations are pure, so everything here is
safe to use concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBoxError

__all__ = [
    "Box",
    "BoxDelta",
    "iou",
    "iou_matrix",
    "encode_delta",
    "decode_delta",
    "clip_box",
    "boxes_to_array",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with strictly positive width and height."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(isinstance(c, (int, float)) and math.isfinite(c) for c in coords):
            raise InvalidBoxError(f"box coordinates must be finite numbers, got {coords}")
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise InvalidBoxError(
                f"degenerate box: need x2 > x1 and y2 > y1, got {coords}"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def cx(self) -> float:
        return self.x1 + 0.5 * self.width

    @property
    def cy(self) -> float:
        return self.y1 + 0.5 * self.height

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "Box":
        return cls(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class BoxDelta:
    """Anchor-relative regression target.

    ``tx``/``ty`` are center offsets in units of the anchor size; ``tw``/``th``
    are natural-log scale factors. All four must be finite because decoding
    exponentiates ``tw``/``th``.
    """

    tx: float
    ty: float
    tw: float
    th: float

    def __post_init__(self) -> None:
        comps = (self.tx, self.ty, self.tw, self.th)
        if not all(isinstance(c, (int, float)) and math.isfinite(c) for c in comps):
            raise InvalidBoxError(f"delta components must be finite numbers, got {comps}")


def iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two boxes; 0.0 when they are disjoint.

    Symmetric, bounded to [0, 1], and equal to 1 exactly when the boxes are
    identical.
    """
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a.area + b.area) - inter
    return inter / union


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two box arrays.

    Args:
        boxes_a: float array shaped (N, 4), rows as (x1, y1, x2, y2).
        boxes_b: float array shaped (M, 4).

    Returns:
        (N, M) float64 array. Arithmetic matches :func:`iou` exactly so that
        vectorized matching agrees bitwise with the scalar reference.
    """
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih
    areas_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    areas_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = (areas_a[:, None] + areas_b[None, :]) - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0.0)
    return out


def encode_delta(anchor: Box, target: Box) -> BoxDelta:
    """Encode ``target`` relative to ``anchor`` in center/log-size form.

    tx = (cx_t - cx_a) / w_a,  tw = ln(w_t / w_a), and likewise for y/h.
    """
    return BoxDelta(
        tx=(target.cx - anchor.cx) / anchor.width,
        ty=(target.cy - anchor.cy) / anchor.height,
        tw=math.log(target.width / anchor.width),
        th=math.log(target.height / anchor.height),
    )


def decode_delta(anchor: Box, delta: BoxDelta) -> Box:
    """Exact inverse of :func:`encode_delta`.

    Raises:
        InvalidBoxError: if the decoded box degenerates, which requires an
            extreme ``tw``/``th`` whose exponential under- or overflows.
    """
    cx = anchor.cx + delta.tx * anchor.width
    cy = anchor.cy + delta.ty * anchor.height
    w = anchor.width * math.exp(delta.tw)
    h = anchor.height * math.exp(delta.th)
    return Box.from_center(cx, cy, w, h)


def clip_box(b: Box, image_w: float, image_h: float) -> Box | None:
    """Intersect ``b`` with the image rectangle [0, image_w] x [0, image_h].

    Returns None when the intersection is empty or degenerate.
    """
    if image_w <= 0 or image_h <= 0:
        raise InvalidBoxError(f"image dimensions must be positive, got {(image_w, image_h)}")
    x1 = max(b.x1, 0.0)
    y1 = max(b.y1, 0.0)
    x2 = min(b.x2, float(image_w))
    y2 = min(b.y2, float(image_h))
    if x2 <= x1 or y2 <= y1:
        return None
    return Box(x1, y1, x2, y2)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack Box objects into an (N, 4) float64 array."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)
