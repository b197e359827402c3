"""Box arithmetic, NMS, detector input scaling, and feature-map resampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import BoxGeom, PersonDetection


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Dense H x W x C activation grid, indexed (y, x, channel)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"feature map must be 3-D (H, W, C), got shape {data.shape}")
        if data.size == 0:
            raise ValueError("feature map must be non-empty")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ScaledDims:
    """Result of detector input scaling: output size and the shared factor."""

    out_width: int
    out_height: int
    scale_factor: float


def iou(a: BoxGeom, b: BoxGeom) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def nms(dets: Sequence[PersonDetection], iou_threshold: float) -> list[PersonDetection]:
    """Greedy non-maximum suppression.

    Keeps the highest-scored box, drops every remaining box overlapping it by
    more than ``iou_threshold``, and repeats.  Score ties keep the earlier
    input box; the result is sorted by descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    for det in dets:
        if det.score is None:
            raise ValueError("nms requires scored detections")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[PersonDetection] = []
    for i in order:
        if all(iou(dets[i].box, k.box) <= iou_threshold for k in kept):
            kept.append(dets[i])
    return kept


def scale_dims(width: int, height: int, min_side: int = 640, max_side: int = 960) -> ScaledDims:
    """Uniform scale factor bringing the shorter side up to ``min_side``,
    capped so the longer side never exceeds ``max_side``.

    Both sides are scaled by the same factor and rounded (half-even); outputs
    are floored at 1 px for degenerate aspect ratios.
    """
    if width <= 0 or height <= 0:
        raise ValueError("input dimensions must be positive")
    if min_side <= 0 or max_side <= 0:
        raise ValueError("side constraints must be positive")
    shorter = min(width, height)
    longer = max(width, height)
    s = min(min_side / shorter, max_side / longer)
    return ScaledDims(
        out_width=max(1, round(width * s)),
        out_height=max(1, round(height * s)),
        scale_factor=s,
    )


def roi_align(src: FeatureMap, roi: BoxGeom, out_h: int, out_w: int) -> FeatureMap:
    """Resample ``roi`` from ``src`` onto a fixed (out_h, out_w) grid.

    One bilinear sample per output bin, taken at the bin center.  Continuous
    coordinates follow the half-pixel convention: pixel i spans [i, i+1) with
    its value at i + 0.5.  Samples whose bilinear neighbors fall outside the
    map read those neighbors as zero.  The roi is expressed in the continuous
    coordinate frame of ``src`` (callers rescale image boxes to feature-map
    stride themselves).
    """
    if out_h <= 0 or out_w <= 0:
        raise ValueError("output dimensions must be positive")
    h, w, _ = src.data.shape
    bin_w = roi.width / out_w
    bin_h = roi.height / out_h
    # bin-center sample coordinates, shifted into pixel-index space
    u = roi.x1 + (np.arange(out_w) + 0.5) * bin_w - 0.5
    v = roi.y1 + (np.arange(out_h) + 0.5) * bin_h - 0.5
    x0 = np.floor(u).astype(int)
    y0 = np.floor(v).astype(int)
    fx = u - x0
    fy = v - y0

    def corner(yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        valid = ((yi >= 0) & (yi < h))[:, None] & ((xi >= 0) & (xi < w))[None, :]
        vals = src.data[np.clip(yi, 0, h - 1)[:, None], np.clip(xi, 0, w - 1)[None, :], :]
        return vals * valid[:, :, None]

    wy0 = (1.0 - fy)[:, None, None]
    wy1 = fy[:, None, None]
    wx0 = (1.0 - fx)[None, :, None]
    wx1 = fx[None, :, None]
    out = (
        wy0 * wx0 * corner(y0, x0)
        + wy0 * wx1 * corner(y0, x0 + 1)
        + wy1 * wx0 * corner(y0 + 1, x0)
        + wy1 * wx1 * corner(y0 + 1, x0 + 1)
    )
    return FeatureMap(out)


def fuse_pixelwise_add(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    """Element-wise sum of two identically shaped feature maps."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    return FeatureMap(a.data + b.data)
