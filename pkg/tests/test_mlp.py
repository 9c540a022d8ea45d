import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajmode.embedding import CombineRule, SceneEmbedding
from trajmode.mlp import (
    MlpModel,
    TrainConfig,
    forward,
    gradient_check,
    init_model,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
    stratified_split,
    train,
)
from trajmode.trajectory import MODES, Mode


def make_dataset(n_per_class, dim, modes, seed=0, rule=CombineRule.CONCATENATION, margin=4.0):
    """Gaussian clusters, one per mode, separated well beyond their noise."""
    rng = np.random.default_rng(seed)
    dataset = []
    for ci, mode in enumerate(modes):
        center = np.zeros(dim)
        center[ci % dim] = margin
        for j in range(n_per_class):
            vec = center + rng.normal(0.0, 0.5, size=dim)
            emb = SceneEmbedding(
                segment_id=f"{mode.value}_{j:04d}",
                combined=vec,
                combine_rule=rule,
                embedder_id="synthetic",
                mode_label=mode,
            )
            dataset.append((emb, mode))
    return dataset


class TestForward:
    def test_zero_model_uniform(self):
        model = MlpModel(
            layer_dims=(4, 5),
            weights=[np.zeros((4, 5))],
            biases=[np.zeros(5)],
            rng_seed=0,
        )
        probs = forward(model, [1.0, 2.0, 3.0, 4.0])
        assert probs == pytest.approx([0.2] * 5, abs=1e-12)

    def test_identity_logits_argmax(self):
        # Weights map a 5-dim one-hot input to logits favoring its index.
        model = MlpModel(
            layer_dims=(5, 5),
            weights=[np.eye(5) * 3.0],
            biases=[np.zeros(5)],
            rng_seed=0,
        )
        for hot in range(5):
            x = np.zeros(5)
            x[hot] = 1.0
            probs = forward(model, x)
            assert int(np.argmax(probs)) == hot
            # Hand-computed softmax of (3, 0, 0, 0, 0):
            expected_top = np.exp(3.0) / (np.exp(3.0) + 4.0)
            assert probs[hot] == pytest.approx(expected_top, rel=1e-12)

    @settings(max_examples=30)
    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=8, max_size=8))
    def test_probabilities_sum_to_one(self, values):
        model = init_model(8, (6,), seed=1)
        probs = forward(model, values)
        assert float(np.sum(probs)) == pytest.approx(1.0, abs=1e-9)
        assert np.all(probs >= 0.0)

    def test_bias_shift_invariance(self):
        model = init_model(8, (6,), seed=2)
        x = np.linspace(-1, 1, 8)
        before = forward(model, x)
        model.biases[-1] += 3.7
        after = forward(model, x)
        assert after == pytest.approx(before, abs=1e-9)
        assert int(np.argmax(after)) == int(np.argmax(before))

    def test_dimension_mismatch(self):
        model = init_model(8, (6,), seed=3)
        with pytest.raises(ValueError, match="width 8"):
            forward(model, [1.0, 2.0])

    def test_shape_chain_validated(self):
        with pytest.raises(ValueError, match="chain"):
            MlpModel(
                layer_dims=(4, 3, 5),
                weights=[np.zeros((4, 3)), np.zeros((4, 5))],
                biases=[np.zeros(3), np.zeros(5)],
                rng_seed=0,
            )

    def test_output_dim_must_be_five(self):
        with pytest.raises(ValueError, match="output"):
            MlpModel(layer_dims=(4, 3), weights=[np.zeros((4, 3))], biases=[np.zeros(3)], rng_seed=0)


def random_model(input_dim, hidden_dims, seed):
    """Model with random weights AND biases.

    Zero biases leave second-layer pre-activations exactly on the ReLU kink
    whenever a sample's whole first layer is dead, where finite differences
    and the subgradient legitimately disagree; random biases make the loss
    differentiable at the checked point.
    """
    model = init_model(input_dim, hidden_dims, seed)
    rng = np.random.default_rng(seed + 1000)
    for b in model.biases:
        b += rng.normal(0.0, 0.1, size=b.shape)
    return model


class TestGradientCheck:
    def test_random_small_models(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            model = random_model(6, (4,), seed=trial)
            x = rng.normal(size=(5, 6))
            y = rng.integers(0, 5, size=5)
            err = gradient_check(model, x, y, l2_penalty=1e-3)
            assert err < 1e-4, f"trial {trial}: {err}"

    def test_two_hidden_layers(self):
        rng = np.random.default_rng(7)
        model = random_model(5, (4, 3), seed=9)
        x = rng.normal(size=(4, 5))
        y = rng.integers(0, 5, size=4)
        assert gradient_check(model, x, y, l2_penalty=1e-4) < 1e-4

    def test_zero_input_batch_zero_input_grads(self):
        model = init_model(6, (4,), seed=1)
        x = np.zeros((3, 6))
        y = np.array([0, 1, 2])
        _, grads_w, _ = loss_and_grads(model, x, y, l2_penalty=0.0)
        assert np.all(grads_w[0] == 0.0)

    def test_duplicated_batch_equals_single(self):
        model = init_model(6, (4,), seed=2)
        rng = np.random.default_rng(3)
        x1 = rng.normal(size=(1, 6))
        y1 = np.array([3])
        _, gw1, gb1 = loss_and_grads(model, x1, y1)
        x4 = np.repeat(x1, 4, axis=0)
        y4 = np.repeat(y1, 4)
        _, gw4, gb4 = loss_and_grads(model, x4, y4)
        for a, b in zip(gw1, gw4):
            assert a == pytest.approx(b, abs=1e-12)
        for a, b in zip(gb1, gb4):
            assert a == pytest.approx(b, abs=1e-12)


class TestTrain:
    def test_separable_two_class(self):
        dataset = make_dataset(40, 16, [Mode.WALK, Mode.CAR], seed=5)
        cfg = TrainConfig(hidden_dims=(16,), learning_rate=0.5, epochs=50, split_seed=11)
        model, log = train(dataset, cfg)
        assert log.final_train_accuracy >= 0.99

    def test_deterministic_training(self):
        dataset = make_dataset(20, 8, [Mode.WALK, Mode.BUS], seed=6)
        cfg = TrainConfig(hidden_dims=(8,), learning_rate=0.3, epochs=10, split_seed=1)
        model_a, _ = train(dataset, cfg)
        model_b, _ = train(dataset, cfg)
        for wa, wb in zip(model_a.weights, model_b.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(model_a.biases, model_b.biases):
            assert np.array_equal(ba, bb)

    def test_single_class_rejected(self):
        dataset = make_dataset(20, 8, [Mode.WALK])
        with pytest.raises(ValueError, match="2 classes"):
            train(dataset)

    def test_mixed_lengths_rejected(self):
        dataset = make_dataset(5, 8, [Mode.WALK, Mode.BUS])
        dataset += make_dataset(5, 16, [Mode.CAR])
        with pytest.raises(ValueError, match="lengths"):
            train(dataset)

    def test_mixed_rules_rejected(self):
        dataset = make_dataset(5, 8, [Mode.WALK, Mode.BUS])
        dataset += make_dataset(5, 8, [Mode.CAR], rule=CombineRule.FUSION)
        with pytest.raises(ValueError, match="rules"):
            train(dataset)

    def test_dataset_order_does_not_matter(self):
        dataset = make_dataset(20, 8, [Mode.WALK, Mode.BUS], seed=8)
        cfg = TrainConfig(hidden_dims=(8,), learning_rate=0.3, epochs=5, split_seed=2)
        model_a, log_a = train(dataset, cfg)
        model_b, log_b = train(list(reversed(dataset)), cfg)
        assert log_a.test_ids == log_b.test_ids
        for wa, wb in zip(model_a.weights, model_b.weights):
            assert np.array_equal(wa, wb)


class TestStratifiedSplit:
    def test_fractions_per_class(self):
        dataset = make_dataset(100, 8, list(MODES), seed=9)
        cfg = TrainConfig(split_seed=3)
        tr, va, te = stratified_split(dataset, cfg)
        assert len(tr) == 350 and len(va) == 50 and len(te) == 100
        for mode in MODES:
            assert sum(1 for _, m in te if m is mode) == 20

    def test_disjoint_and_complete(self):
        dataset = make_dataset(30, 8, [Mode.WALK, Mode.BIKE, Mode.BUS], seed=10)
        tr, va, te = stratified_split(dataset, TrainConfig(split_seed=4))
        ids = [emb.segment_id for part in (tr, va, te) for emb, _ in part]
        assert len(ids) == len(set(ids)) == len(dataset)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = init_model(8, (6,), seed=13)
        path = tmp_path / "model.json"
        save_checkpoint(model, path, meta={"dim": 4, "combine_rule": "concatenation"})
        loaded, meta = load_checkpoint(path)
        assert loaded.layer_dims == model.layer_dims
        assert meta["combine_rule"] == "concatenation"
        for wa, wb in zip(loaded.weights, model.weights):
            assert np.array_equal(wa, wb)

    def test_header_validated(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else", "version": 1}')
        with pytest.raises(ValueError, match="checkpoint"):
            load_checkpoint(path)

    def test_byte_identical_saves(self, tmp_path):
        model = init_model(8, (6,), seed=13)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(model, a)
        save_checkpoint(model, b)
        assert a.read_bytes() == b.read_bytes()
