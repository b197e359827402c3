import numpy as np
import pytest

from ctxsearch.evaluation import evaluate, gallery_positives
from ctxsearch.geometry import iou
from ctxsearch.model import EmbeddingVec, SceneRecord
from ctxsearch.simulator import (
    CANVAS_HEIGHT,
    CANVAS_WIDTH,
    SimConfig,
    SimWorld,
    generate_world,
    split_queries,
    world_from_records,
)


def small_cfg(seed, **kw):
    defaults = dict(n_identities=12, n_scenes=12, embed_dim=8)
    defaults.update(kw)
    return SimConfig(seed=seed, **defaults)


class TestSimConfig:
    def test_defaults_valid(self):
        SimConfig(seed=0)

    @pytest.mark.parametrize(
        "kw",
        [
            {"n_identities": 0},
            {"n_scenes": 0},
            {"embed_dim": 0},
            {"group_size_range": (0, 3)},
            {"group_size_range": (3, 2)},
            {"persons_per_scene_range": (2, 1)},
            {"co_travel_prob": 1.5},
            {"co_travel_prob": -0.1},
            {"distractor_rate": 2.0},
            {"noise_sigma": -1.0},
        ],
    )
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            SimConfig(seed=0, **kw)


class TestGenerateWorld:
    def test_deterministic(self):
        a = generate_world(small_cfg(9))
        b = generate_world(small_cfg(9))
        assert [s.scene_id for s in a.scenes] == [s.scene_id for s in b.scenes]
        for sa, sb in zip(a.scenes, b.scenes):
            assert sa == sb
        for ea, eb in zip(a.embeddings, b.embeddings):
            for va, vb in zip(ea, eb):
                np.testing.assert_array_equal(va.values, vb.values)
        np.testing.assert_array_equal(a.prototypes, b.prototypes)

    def test_shapes_and_alignment(self):
        cfg = small_cfg(3)
        world = generate_world(cfg)
        assert len(world.scenes) == cfg.n_scenes
        assert len(world.embeddings) == cfg.n_scenes
        for scene, embs in zip(world.scenes, world.embeddings):
            assert len(scene.detections) == len(embs)
            assert scene.width == CANVAS_WIDTH
            assert scene.height == CANVAS_HEIGHT
            for e in embs:
                assert e.normalized
                assert e.dim == cfg.embed_dim
        assert world.n_appearances == sum(len(e) for e in world.embeddings)
        assert world.prototypes.shape == (cfg.n_identities, cfg.embed_dim)
        np.testing.assert_allclose(
            np.linalg.norm(world.prototypes, axis=1), 1.0, atol=1e-12
        )

    def test_scene_occupants_unique_and_boxes_separated(self):
        world = generate_world(small_cfg(4))
        for scene in world.scenes:
            ids = [d.person_id for d in scene.detections]
            assert len(ids) == len(set(ids))
            boxes = [d.box for d in scene.detections]
            for i in range(len(boxes)):
                for j in range(i + 1, len(boxes)):
                    assert iou(boxes[i], boxes[j]) <= 0.5

    def test_groups_partition_identities(self):
        cfg = small_cfg(5)
        world = generate_world(cfg)
        assert sorted(world.group_of) == list(range(cfg.n_identities))

    def test_perfect_co_travel_scenes_are_whole_groups(self):
        cfg = small_cfg(6, co_travel_prob=1.0, distractor_rate=0.0)
        world = generate_world(cfg)
        for scene in world.scenes:
            group_ids = {world.group_of[d.person_id] for d in scene.detections}
            assert len(group_ids) == 1

    def test_zero_noise_copies_prototypes_exactly(self):
        world = generate_world(small_cfg(8, noise_sigma=0.0))
        for scene, embs in zip(world.scenes, world.embeddings):
            for d, e in zip(scene.detections, embs):
                np.testing.assert_array_equal(e.values, world.prototypes[d.person_id])

    def test_zero_noise_retrieval_is_perfect(self):
        world = generate_world(small_cfg(10, noise_sigma=0.0))
        queries, gallery = split_queries(world, 4, seed=1)
        result = evaluate(queries, gallery, ranker="baseline")
        assert result.mean_ap == 1.0
        assert result.cmc[0] == 1.0


class TestSplitQueries:
    def test_split_properties(self):
        world = generate_world(small_cfg(11))
        queries, gallery = split_queries(world, 5, seed=2)
        assert len(queries) == 5
        query_scene_ids = {q.scene_id for q in queries}
        assert query_scene_ids.isdisjoint(gallery.scene_map)
        for q in queries:
            assert q.detection.person_id is not None
            positives = gallery_positives(
                gallery, q.detection.person_id, exclude_scene=q.scene_id
            )
            assert positives
        # galleries carry every appearance of the non-query scenes
        kept = [s for s in world.scenes if s.scene_id not in query_scene_ids]
        assert len(gallery.entries) == sum(len(s.detections) for s in kept)

    def test_deterministic(self):
        world = generate_world(small_cfg(12))
        qa, _ = split_queries(world, 4, seed=3)
        qb, _ = split_queries(world, 4, seed=3)
        assert [(q.scene_id, q.detection.person_id) for q in qa] == [
            (q.scene_id, q.detection.person_id) for q in qb
        ]

    def test_unsatisfiable_count_reported(self):
        world = generate_world(small_cfg(13))
        with pytest.raises(ValueError, match="satisfiable"):
            split_queries(world, 10_000, seed=0)

    def test_bad_count(self):
        world = generate_world(small_cfg(14))
        with pytest.raises(ValueError):
            split_queries(world, 0, seed=0)


class TestWorldFromRecords:
    def test_wraps_and_validates(self):
        world = generate_world(small_cfg(15))
        rebuilt = world_from_records(world.scenes, world.embeddings)
        assert isinstance(rebuilt, SimWorld)
        assert rebuilt.prototypes is None
        assert rebuilt.n_appearances == world.n_appearances

    def test_count_mismatch(self):
        world = generate_world(small_cfg(16))
        with pytest.raises(ValueError):
            world_from_records(world.scenes[:-1], world.embeddings)

    def test_per_scene_mismatch(self):
        scene = SceneRecord("s", 10, 10, ())
        emb = EmbeddingVec(np.array([1.0, 0.0]), normalized=True)
        with pytest.raises(ValueError, match="detections"):
            world_from_records([scene], [[emb]])
