"""Deterministic synthetic co-traveler worlds for exercising the ranking and
evaluation stack at desk scale.

Identities are partitioned into small groups that tend to appear together;
singleton "distractor" identities fill out the scenes, so co-occurrence is an
informative but imperfect signal.  Appearance embeddings are noisy copies of
per-identity prototypes: the noise vector has expected norm ``noise_sigma``
(per-coordinate std sigma/sqrt(d)), and the prototypes themselves share a
common direction so that impostors stay plausible and baseline ranking lands
mid-range rather than saturating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import iou
from .model import (
    BoxGeom,
    EmbeddingVec,
    GalleryIndex,
    PersonDetection,
    QuerySpec,
    SceneRecord,
    build_gallery,
    make_query,
)

CANVAS_WIDTH = 960
CANVAS_HEIGHT = 540

# Weight of the shared prototype component relative to the per-identity part.
# Raising this pulls all identities toward the common direction, which makes
# impostors genuinely confusable for appearance-only ranking while pairwise
# prototype similarity stays below the default co-occurrence gate.
_COMMON_WEIGHT = 4.0

_PLACE_RETRIES = 200


@dataclass(frozen=True)
class SimConfig:
    """Generator knobs; the defaults are the pinned benchmark configuration."""

    seed: int
    n_identities: int = 40
    group_size_range: tuple[int, int] = (3, 4)
    n_scenes: int = 60
    persons_per_scene_range: tuple[int, int] = (3, 5)
    co_travel_prob: float = 0.9
    noise_sigma: float = 1.4
    embed_dim: int = 64
    distractor_rate: float = 0.4

    def __post_init__(self) -> None:
        if self.n_identities < 1 or self.n_scenes < 1 or self.embed_dim < 1:
            raise ValueError("counts and dimensions must be positive")
        for lo, hi in (self.group_size_range, self.persons_per_scene_range):
            if lo < 1 or hi < lo:
                raise ValueError(f"invalid range ({lo}, {hi})")
        if not 0.0 <= self.co_travel_prob <= 1.0:
            raise ValueError("co_travel_prob must lie in [0, 1]")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ValueError("distractor_rate must lie in [0, 1]")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class SimWorld:
    """Scenes plus per-detection embeddings aligned with each scene's
    detections.  Prototypes and group assignments are kept for introspection
    and are None when a world is reloaded from disk."""

    scenes: tuple[SceneRecord, ...]
    embeddings: tuple[tuple[EmbeddingVec, ...], ...]
    prototypes: Optional[np.ndarray] = None
    group_of: Optional[dict[int, int]] = None

    @property
    def n_appearances(self) -> int:
        return sum(len(e) for e in self.embeddings)


def _appearance(rng: np.random.Generator, prototype: np.ndarray, noise_sigma: float) -> EmbeddingVec:
    if noise_sigma == 0.0:
        return EmbeddingVec(prototype.copy(), normalized=True)
    noise = rng.normal(size=prototype.size) * (noise_sigma / math.sqrt(prototype.size))
    v = prototype + noise
    return EmbeddingVec(v / np.linalg.norm(v), normalized=True)


def _place_boxes(
    rng: np.random.Generator, n: int, width: int = CANVAS_WIDTH, height: int = CANVAS_HEIGHT
) -> list[BoxGeom]:
    """Rejection-sample person-shaped boxes with pairwise IoU <= 0.5."""
    placed: list[BoxGeom] = []
    for _ in range(n):
        for _attempt in range(_PLACE_RETRIES):
            w = rng.uniform(24.0, 72.0)
            h = w * rng.uniform(1.8, 3.2)
            x1 = rng.uniform(0.0, width - w)
            y1 = rng.uniform(0.0, height - h)
            box = BoxGeom(x1, y1, x1 + w, y1 + h)
            if all(iou(box, other) <= 0.5 for other in placed):
                placed.append(box)
                break
        else:
            raise RuntimeError(
                f"could not place box {len(placed) + 1} after {_PLACE_RETRIES} attempts"
            )
    return placed


def generate_world(cfg: SimConfig) -> SimWorld:
    """Sample a world: grouped identities, co-traveling scene occupancy,
    non-overlapping ground-truth boxes, and noisy unit embeddings.

    Bit-reproducible from the seed.  Every scene is seeded with one group,
    each member present independently with ``co_travel_prob``; the remaining
    slots (up to the sampled person count) are filled with distractors.
    """
    rng = np.random.default_rng(cfg.seed)
    d = cfg.embed_dim

    common = rng.normal(size=d)
    common /= np.linalg.norm(common)
    raw = _COMMON_WEIGHT * common + rng.normal(size=(cfg.n_identities, d))
    prototypes = raw / np.linalg.norm(raw, axis=1, keepdims=True)

    ids = [int(i) for i in rng.permutation(cfg.n_identities)]
    n_distractors = int(round(cfg.distractor_rate * cfg.n_identities))
    distractors = ids[:n_distractors]
    grouped = ids[n_distractors:]

    lo, hi = cfg.group_size_range
    groups: list[list[int]] = []
    group_of: dict[int, int] = {}
    pos = 0
    while pos < len(grouped):
        size = int(rng.integers(lo, hi + 1))
        members = grouped[pos : pos + size]  # the tail group may fall below lo
        for m in members:
            group_of[m] = len(groups)
        groups.append(members)
        pos += len(members)
    for i in distractors:
        group_of[i] = len(groups)
        groups.append([i])

    seed_pool = [g for g in groups if len(g) >= 2] or groups
    p_lo, p_hi = cfg.persons_per_scene_range
    scenes: list[SceneRecord] = []
    embeddings: list[tuple[EmbeddingVec, ...]] = []
    for s in range(cfg.n_scenes):
        group = seed_pool[int(rng.integers(len(seed_pool)))]
        target = int(rng.integers(p_lo, p_hi + 1))
        present = [m for m in group if rng.random() < cfg.co_travel_prob]
        avail = [i for i in distractors if i not in present]
        n_fill = min(max(0, target - len(present)), len(avail))
        if n_fill:
            picked = rng.choice(len(avail), size=n_fill, replace=False)
            present = present + [avail[int(k)] for k in sorted(picked)]
        boxes = _place_boxes(rng, len(present))
        dets = tuple(
            PersonDetection(box=b, person_id=i) for i, b in zip(present, boxes)
        )
        scenes.append(SceneRecord(f"scene_{s:04d}", CANVAS_WIDTH, CANVAS_HEIGHT, dets))
        embeddings.append(
            tuple(_appearance(rng, prototypes[i], cfg.noise_sigma) for i in present)
        )
    return SimWorld(tuple(scenes), tuple(embeddings), prototypes, group_of)


def split_queries(
    world: SimWorld, n_queries: int, seed: int
) -> tuple[list[QuerySpec], GalleryIndex]:
    """Pick query appearances and build the gallery from all remaining scenes.

    Eligible appearances are labeled and have another appearance of the same
    identity in a different scene.  Selection is greedy under the constraint
    that every chosen query keeps at least one positive outside the query
    scenes, so the resulting split is always evaluable.  Context persons are
    the query scene's other occupants; all appearances in non-query scenes
    form the gallery.
    """
    if n_queries < 1:
        raise ValueError("n_queries must be >= 1")
    scenes_of: dict[int, set[int]] = {}
    for si, scene in enumerate(world.scenes):
        for det in scene.detections:
            if det.person_id is not None:
                scenes_of.setdefault(det.person_id, set()).add(si)
    eligible = [
        (si, di, det.person_id)
        for si, scene in enumerate(world.scenes)
        for di, det in enumerate(scene.detections)
        if det.person_id is not None and len(scenes_of[det.person_id]) >= 2
    ]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(eligible))
    selected: list[tuple[int, int, int]] = []
    query_scenes: set[int] = set()
    for k in order:
        si, di, pid = eligible[int(k)]
        trial_scenes = query_scenes | {si}
        ok = all(
            any(s not in trial_scenes for s in scenes_of[q_pid])
            for _, _, q_pid in selected + [(si, di, pid)]
        )
        if ok:
            selected.append((si, di, pid))
            query_scenes.add(si)
            if len(selected) == n_queries:
                break
    if len(selected) < n_queries:
        raise ValueError(
            f"only {len(selected)} of {n_queries} requested queries are satisfiable"
        )
    queries = [
        make_query(world.scenes[si], di, list(world.embeddings[si]))
        for si, di, _ in selected
    ]
    gallery_scenes = [s for i, s in enumerate(world.scenes) if i not in query_scenes]
    flat = [
        emb
        for i, scene_embs in enumerate(world.embeddings)
        if i not in query_scenes
        for emb in scene_embs
    ]
    return queries, build_gallery(gallery_scenes, flat)


def world_from_records(
    scenes: Sequence[SceneRecord], embeddings: Sequence[Sequence[EmbeddingVec]]
) -> SimWorld:
    """Wrap scenes and aligned embeddings (e.g. loaded from disk) as a world."""
    if len(scenes) != len(embeddings):
        raise ValueError("one embedding list per scene required")
    for scene, embs in zip(scenes, embeddings):
        if len(scene.detections) != len(embs):
            raise ValueError(
                f"scene {scene.scene_id!r}: {len(scene.detections)} detections "
                f"but {len(embs)} embeddings"
            )
    return SimWorld(tuple(scenes), tuple(tuple(e) for e in embeddings))
