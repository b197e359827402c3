"""Shared helpers and independent reference implementations.

The reference implementations are deliberately written in the most direct
style possible (scalar loops, no helpers shared with the package) so each
comparison pits two separate derivations against each other.  The context
re-ranking reference additionally mirrors the package's accumulation order
exactly, which lets tests demand bitwise-equal scores rather than approximate
ones.
"""

import math

import numpy as np

from ctxsearch.model import (
    BoxGeom,
    EmbeddingVec,
    PersonDetection,
    SceneRecord,
    build_gallery,
    make_query,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def unit_embedding(rng, dim):
    return EmbeddingVec(unit(rng.normal(size=dim)), normalized=True)


def random_box(rng, canvas_w=960, canvas_h=540):
    w = float(rng.uniform(10.0, 60.0))
    h = float(rng.uniform(20.0, 120.0))
    x1 = float(rng.uniform(0.0, canvas_w - w))
    y1 = float(rng.uniform(0.0, canvas_h - h))
    return BoxGeom(x1, y1, x1 + w, y1 + h)


def random_instance(rng, max_scenes=5, max_persons=6, dim=8):
    """A small random gallery plus a query with context persons.

    Half the time the query is taken from a gallery scene, exercising the
    own-scene exclusion; otherwise it comes from a held-out scene.
    """
    n_scenes = int(rng.integers(1, max_scenes + 1))
    scenes = []
    flat = []
    for s in range(n_scenes):
        n = int(rng.integers(1, max_persons + 1))
        dets = tuple(
            PersonDetection(
                random_box(rng),
                person_id=int(rng.integers(0, 10)) if rng.random() < 0.8 else None,
            )
            for _ in range(n)
        )
        scenes.append(SceneRecord(f"s{s}", 960, 540, dets))
        flat.extend(unit_embedding(rng, dim) for _ in range(n))
    gallery = build_gallery(scenes, flat)

    if rng.random() < 0.5:
        qi = 0
        first = scenes[0]
        q_embs = flat[: len(first.detections)]
        query = make_query(first, int(rng.integers(len(first.detections))), q_embs)
    else:
        nq = int(rng.integers(1, 5))
        qdets = tuple(PersonDetection(random_box(rng)) for _ in range(nq))
        qscene = SceneRecord("held_out_query_scene", 960, 540, qdets)
        query = make_query(
            qscene, int(rng.integers(nq)), [unit_embedding(rng, dim) for _ in range(nq)]
        )
    return query, gallery


def oracle_rank_baseline(query, gallery):
    """(index, s_final) rows by descending similarity, ties by index."""
    rows = []
    for idx, entry in enumerate(gallery.entries):
        if entry.scene_id == query.scene_id:
            continue
        rows.append((idx, float(np.dot(query.embedding.values, entry.embedding.values))))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def oracle_rank_with_context(query, gallery, params):
    """Triple-loop reference for context re-ranking.

    Returns (index, s_individual, s_context, s_final) rows in final order.
    Per-candidate arithmetic follows the same operation order as the package
    (per-pair dot products, context persons outermost, scene pool in ascending
    entry order, gated products accumulated left to right), so equal inputs
    give bitwise-equal scores.
    """
    rows = []
    for idx, entry in enumerate(gallery.entries):
        if entry.scene_id == query.scene_id:
            continue
        s_ind = float(np.dot(query.embedding.values, entry.embedding.values))
        pool = [
            gallery.entries[j]
            for j in gallery.scene_map[entry.scene_id]
            if j != idx
        ]
        s_ctx = 0.0
        if pool and query.context:
            for _, ctx_emb in query.context:
                best = -math.inf
                for other in pool:
                    v = float(np.dot(ctx_emb.values, other.embedding.values))
                    if v > best:
                        best = v
                if best >= params.gate_threshold:
                    s_ctx += s_ind * best
                else:
                    s_ctx += 0.0
        s_final = s_ind + params.weight * s_ctx
        rows.append((idx, s_ind, s_ctx, s_final))
    rows.sort(key=lambda r: (-r[3], r[0]))
    return rows


def _iou_ref(a, b):
    """Scalar IoU on (x1, y1, x2, y2) tuples."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def oracle_nms(dets, thresh):
    """Quadratic greedy suppression; returns kept detections, best first."""
    order = sorted(
        range(len(dets)), key=lambda i: (-dets[i].score, i)
    )
    suppressed = [False] * len(dets)
    kept = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        kept.append(dets[i])
        bi = (dets[i].box.x1, dets[i].box.y1, dets[i].box.x2, dets[i].box.y2)
        for j in order[pos + 1 :]:
            if suppressed[j]:
                continue
            bj = (dets[j].box.x1, dets[j].box.y1, dets[j].box.x2, dets[j].box.y2)
            if _iou_ref(bi, bj) > thresh:
                suppressed[j] = True
    return kept


def oracle_roi_align(data, roi, out_h, out_w):
    """Dense scalar bilinear resampling with zero padding outside the map."""
    h, w, c = data.shape
    x1, y1, x2, y2 = roi
    bin_w = (x2 - x1) / out_w
    bin_h = (y2 - y1) / out_h

    def at(yi, xi):
        if 0 <= yi < h and 0 <= xi < w:
            return data[yi, xi, :]
        return np.zeros(c)

    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        for j in range(out_w):
            sy = y1 + (i + 0.5) * bin_h - 0.5
            sx = x1 + (j + 0.5) * bin_w - 0.5
            y0 = math.floor(sy)
            x0 = math.floor(sx)
            fy = sy - y0
            fx = sx - x0
            out[i, j, :] = (
                (1 - fy) * (1 - fx) * at(y0, x0)
                + (1 - fy) * fx * at(y0, x0 + 1)
                + fy * (1 - fx) * at(y0 + 1, x0)
                + fy * fx * at(y0 + 1, x0 + 1)
            )
    return out
