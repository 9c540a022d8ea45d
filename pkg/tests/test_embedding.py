import math

import numpy as np
import pytest

from trajmode.embedding import (
    CombineRule,
    EmbeddingIntegrityError,
    Modality,
    ModalityEmbedding,
    combine,
    embed_image_offline,
    embed_remote,
    embed_text_offline,
    hash_accumulate,
    image_token_bag,
    read_records,
    record_to_modality,
    record_to_scene,
    scene_to_record,
    text_tokens,
    write_records,
)
from trajmode.kinematics import analyze
from trajmode.narrative import render_narrative
from trajmode.render import SceneLayers, render_scene, scene_bbox
from trajmode.trajectory import Mode

from conftest import segment_from_offsets

EMPTY_LAYERS = SceneLayers(roads=(), subway_lines=(), bus_stations=())


def make_modality(segment_id, modality, values) -> ModalityEmbedding:
    return ModalityEmbedding(
        segment_id=segment_id,
        modality=modality,
        vector=np.asarray(values, dtype=np.float64),
        embedder_id="test",
    )


class TestHashAccumulate:
    def test_unit_norm(self):
        v = hash_accumulate(["alpha", "beta", "gamma"], dim=16, seed=3)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)

    def test_empty_bag_zero_guard(self):
        v = hash_accumulate([], dim=16, seed=3)
        assert v[0] == 1.0
        assert np.count_nonzero(v) == 1

    def test_deterministic(self):
        a = hash_accumulate(["x", "y"], dim=32, seed=7)
        b = hash_accumulate(["x", "y"], dim=32, seed=7)
        assert np.array_equal(a, b)

    def test_seed_changes_layout(self):
        a = hash_accumulate(["x", "y", "z"], dim=32, seed=7)
        b = hash_accumulate(["x", "y", "z"], dim=32, seed=8)
        assert not np.array_equal(a, b)

    def test_minimum_dimension(self):
        with pytest.raises(ValueError, match="at least 8"):
            hash_accumulate(["x"], dim=4, seed=0)


class TestEmbedTextOffline:
    def test_same_text_same_vector(self, appendix_like_segment):
        text = render_narrative(analyze(appendix_like_segment))
        a = embed_text_offline(text, dim=64, seed=1, segment_id="s")
        b = embed_text_offline(text, dim=64, seed=1, segment_id="s")
        assert np.array_equal(a.vector, b.vector)
        assert a.modality is Modality.TEXT

    def test_one_extra_token_changes_one_coordinate(self):
        base = "the bus moved north"
        extended = base + " quickly"
        d = 64
        va = hash_accumulate(text_tokens(base), d, 5) * math.sqrt(len(text_tokens(base)))
        # Compare unnormalized accumulations: re-derive by scaling is fragile,
        # so recompute the raw sums directly instead.
        import trajmode.embedding as emb

        def raw(tokens):
            v = np.zeros(d)
            for t in tokens:
                h = emb._token_hash(t, 5)
                v[h % d] += 1.0 if (h >> 63) & 1 else -1.0
            return v

        diff = raw(text_tokens(extended)) - raw(text_tokens(base))
        assert np.count_nonzero(diff) <= 1

    def test_empty_text_unit_e1(self):
        e = embed_text_offline("", dim=32, seed=0)
        assert e.vector[0] == 1.0
        assert np.count_nonzero(e.vector) == 1

    def test_numeric_bins_injected(self, appendix_like_segment):
        text = render_narrative(analyze(appendix_like_segment))
        tokens = text_tokens(text.full_text)
        # avg 3.1 m/s -> bin 6 at 0.5 m/s resolution; detour 2.9 -> bin 12.
        assert "avg_speed_bin_6" in tokens
        assert "detour_bin_12" in tokens

    def test_detour_none_sentinel(self):
        seg = segment_from_offsets([(0, 0, 0.0), (200, 0, 20.0), (0, 0, 40.0)])
        text = render_narrative(analyze(seg))
        assert "detour_bin_none" in text_tokens(text.full_text)


def scene_for(seg, layers=EMPTY_LAYERS):
    return render_scene(seg, layers, scene_bbox(seg))


class TestEmbedImageOffline:
    def test_no_subway_sentinel(self):
        seg = segment_from_offsets([(0, 0, 0.0), (400, 0, 60.0)])
        bag = image_token_bag(scene_for(seg), EMPTY_LAYERS)
        assert "subway_dist_none" in bag
        assert "bus_dist_none" in bag

    def test_identical_scene_identical_vectors(self):
        seg = segment_from_offsets([(0, 0, 0.0), (400, 120, 60.0)])
        scene = scene_for(seg)
        a = embed_image_offline(scene, EMPTY_LAYERS, dim=64, seed=2)
        b = embed_image_offline(scene, EMPTY_LAYERS, dim=64, seed=2)
        assert np.array_equal(a.vector, b.vector)
        assert a.segment_id == seg.segment_id

    def test_trajectory_on_subway_bin_zero(self):
        seg = segment_from_offsets([(0, 0, 0.0), (400, 0, 60.0)])
        bbox = scene_bbox(seg)
        # Subway polyline exactly under the trajectory.
        layers = SceneLayers(
            roads=(),
            subway_lines=((
                (seg.points[0].lat, seg.points[0].lon),
                (seg.points[-1].lat, seg.points[-1].lon),
            ),),
            bus_stations=(),
        )
        scene = render_scene(seg, layers, bbox)
        bag = image_token_bag(scene, layers)
        # Point-to-segment oracle: min distance 0 -> bin 0. SVG pixel
        # quantization adds at most ~1 m here, bins 0-1 both mean "on it".
        assert any(t in bag for t in ("subway_dist_0", "subway_dist_1"))

    def test_counts_reflected(self):
        seg = segment_from_offsets([(0, 0, 0.0), (400, 0, 60.0)])
        layers = SceneLayers(
            roads=(((0.0, 0.0), (0.001, 0.001)),),
            subway_lines=(),
            bus_stations=((0.0005, 0.0005), (0.0006, 0.0006)),
        )
        bag = image_token_bag(scene_for(seg, layers), layers)
        assert "roads_1" in bag
        assert "bus_stations_2" in bag  # two stations -> bit_length 2
        assert "subways_0" in bag


class FakeEmbedProvider:
    def __init__(self, vector, dim=None, failures=0):
        self.vector = vector
        self.dim = dim if dim is not None else len(vector)
        self.model_id = "fake-embedder"
        self.failures = failures
        self.calls = 0

    def embed(self, modality, payload):
        self.calls += 1
        if self.calls <= self.failures:
            raise ConnectionError("flaky")
        return list(self.vector)


class TestEmbedRemote:
    def test_provider_vector_normalized(self):
        client = FakeEmbedProvider([2.0, 0.0, 0.0, 0.0])
        emb = embed_remote("hello", client, Modality.TEXT, segment_id="s")
        assert np.allclose(emb.vector, [1.0, 0.0, 0.0, 0.0])
        assert emb.embedder_id == "fake-embedder:d4"

    def test_dimension_mismatch(self):
        client = FakeEmbedProvider([1.0, 0.0, 0.0], dim=4)
        with pytest.raises(EmbeddingIntegrityError, match="dimension"):
            embed_remote("hello", client, Modality.TEXT)

    def test_zero_vector_rejected(self):
        client = FakeEmbedProvider([0.0, 0.0, 0.0, 0.0])
        with pytest.raises(EmbeddingIntegrityError, match="zero"):
            embed_remote("hello", client, Modality.TEXT)


class TestCombine:
    def test_concatenation_order_and_values(self):
        image = make_modality("s", Modality.IMAGE, [1.0, 0.0])
        text = make_modality("s", Modality.TEXT, [0.0, 1.0])
        out = combine(image, text, CombineRule.CONCATENATION)
        assert np.array_equal(out.combined, [1.0, 0.0, 0.0, 1.0])

    def test_concatenation_slices_recover_sources(self):
        rng = np.random.default_rng(0)
        iv = rng.normal(size=8)
        iv /= np.linalg.norm(iv)
        tv = rng.normal(size=8)
        tv /= np.linalg.norm(tv)
        image = make_modality("s", Modality.IMAGE, iv)
        text = make_modality("s", Modality.TEXT, tv)
        out = combine(image, text, CombineRule.CONCATENATION)
        assert np.array_equal(out.combined[:8], iv)
        assert np.array_equal(out.combined[8:], tv)
        assert np.linalg.norm(out.combined) == pytest.approx(math.sqrt(2.0), abs=1e-6)

    def test_fusion_hand_computed(self):
        image = make_modality("s", Modality.IMAGE, [1.0, 0.0])
        text = make_modality("s", Modality.TEXT, [0.0, 1.0])
        out = combine(image, text, CombineRule.FUSION)
        assert out.combined == pytest.approx([0.7071067811865475, 0.7071067811865475])
        assert np.linalg.norm(out.combined) == pytest.approx(1.0, abs=1e-9)

    def test_fusion_dimension_mismatch(self):
        image = make_modality("s", Modality.IMAGE, [1.0, 0.0])
        text = make_modality("s", Modality.TEXT, [0.0, 1.0, 0.0])
        with pytest.raises(ValueError, match="equal"):
            combine(image, text, CombineRule.FUSION)

    def test_single_modality_passthrough(self):
        text = make_modality("s", Modality.TEXT, [0.0, 1.0])
        out = combine(None, text, CombineRule.TEXT_ONLY)
        assert np.array_equal(out.combined, text.vector)
        image = make_modality("s", Modality.IMAGE, [1.0, 0.0])
        out = combine(image, None, CombineRule.IMAGE_ONLY)
        assert np.array_equal(out.combined, image.vector)

    def test_segment_mismatch_rejected(self):
        image = make_modality("a", Modality.IMAGE, [1.0, 0.0])
        text = make_modality("b", Modality.TEXT, [0.0, 1.0])
        with pytest.raises(ValueError, match="mismatch"):
            combine(image, text, CombineRule.CONCATENATION)

    def test_missing_modality_rejected(self):
        text = make_modality("s", Modality.TEXT, [0.0, 1.0])
        with pytest.raises(ValueError, match="both"):
            combine(None, text, CombineRule.CONCATENATION)
        with pytest.raises(ValueError, match="image_only"):
            combine(None, text, CombineRule.IMAGE_ONLY)

    def test_swapped_modalities_rejected(self):
        image = make_modality("s", Modality.IMAGE, [1.0, 0.0])
        text = make_modality("s", Modality.TEXT, [0.0, 1.0])
        with pytest.raises(ValueError):
            combine(text, image, CombineRule.CONCATENATION)

    def test_mode_label_carried(self):
        image = make_modality("s", Modality.IMAGE, [1.0, 0.0])
        text = make_modality("s", Modality.TEXT, [0.0, 1.0])
        out = combine(image, text, CombineRule.CONCATENATION, mode_label=Mode.BUS)
        assert out.mode_label is Mode.BUS


class TestStoreRecords:
    def test_round_trip(self, tmp_path):
        image = make_modality("s", Modality.IMAGE, [1.0, 0.0])
        text = make_modality("s", Modality.TEXT, [0.0, 1.0])
        scene = combine(image, text, CombineRule.CONCATENATION, mode_label=Mode.WALK)
        path = tmp_path / "embeddings.jsonl"
        write_records(path, [scene_to_record(scene)])
        rec = read_records(path)[0]
        restored = record_to_scene(rec)
        assert restored.segment_id == "s"
        assert restored.combine_rule is CombineRule.CONCATENATION
        assert restored.mode_label is Mode.WALK
        assert np.array_equal(restored.combined, scene.combined)

    def test_modality_record_round_trip(self, tmp_path):
        from trajmode.embedding import modality_to_record

        image = make_modality("s", Modality.IMAGE, [0.6, 0.8])
        path = tmp_path / "m.jsonl"
        write_records(path, [modality_to_record(image)])
        restored = record_to_modality(read_records(path)[0])
        assert restored.modality is Modality.IMAGE
        assert np.array_equal(restored.vector, image.vector)
