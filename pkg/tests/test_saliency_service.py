"""Saliency 계산/집계/적대적 섭동 테스트"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saliency_fs.core.errors import ContractError, ShapeError
from saliency_fs.models.gain import GainKind, GainSpec
from saliency_fs.models.network import ModelKind, ModelSpec, TrainConfig
from saliency_fs.models.saliency import AdversarialConfig, PerturbationMode
from saliency_fs.services.gain_functions import gain_value
from saliency_fs.services.network_service import (
    TrainedModel,
    init_model,
    predict,
    train,
)
from saliency_fs.services.saliency_service import (
    adversarial_perturb,
    adversarial_sweep,
    aggregate_classification,
    aggregate_regression,
    batch_saliency,
    classic_class_saliency,
    compute_saliency_map,
    sample_saliency,
)

CE = GainSpec(kind=GainKind.CROSS_ENTROPY_COMPLEMENT)
HINGE = GainSpec(kind=GainKind.HINGE_LOG)
MSE = GainSpec(kind=GainKind.MSE_INVERSE)
FD_STEP = 1e-6


def _model(kind: ModelKind, input_dim: int, output_dim: int, values) -> TrainedModel:
    spec = ModelSpec(kind=kind, input_dim=input_dim, output_dim=output_dim, hidden_layers=[])
    return TrainedModel(spec=spec, parameters=tuple(np.asarray(v, dtype=np.float64) for v in values))


def _finite_difference(func, x: np.ndarray) -> np.ndarray:
    grad = np.zeros(x.shape[1])
    for j in range(x.shape[1]):
        plus, minus = x.copy(), x.copy()
        plus[0, j] += FD_STEP
        minus[0, j] -= FD_STEP
        grad[j] = (func(plus) - func(minus)) / (2 * FD_STEP)
    return grad


def _one_hot(label: int, classes: int) -> np.ndarray:
    row = np.zeros((1, classes))
    row[0, label] = 1.0
    return row


@pytest.fixture
def blob_model(blob_dataset, softmax_spec) -> TrainedModel:
    cfg = TrainConfig(epochs=100, learning_rate=0.01, seed=0)
    return train(init_model(softmax_spec, seed=0), blob_dataset.X, blob_dataset.targets_matrix(), cfg)


class TestSampleSaliency:
    """샘플 saliency 테스트"""

    def test_disconnected_feature_has_zero_saliency(self, rng):
        weights = rng.normal(size=(3, 2))
        weights[1] = 0.0
        model = _model(ModelKind.SOFTMAX_LINEAR, 3, 2, [weights, np.zeros(2)])
        saliency = sample_saliency(model, CE, rng.normal(size=(1, 3)), [[1.0, 0.0]])
        assert saliency[1] == 0.0
        assert saliency[0] > 0.0

    def test_known_value_at_decision_boundary(self):
        # p0 = 0.5 에서 d/dx[-log(1 - p0)] = p0 * (w0 - w1) = 5
        model = _model(ModelKind.SOFTMAX_LINEAR, 1, 2, [[[5.0, -5.0]], [0.0, 0.0]])
        assert sample_saliency(model, CE, [[0.0]], [[1.0, 0.0]])[0] == pytest.approx(5.0)

    def test_total_misclassification_is_silent(self):
        model = _model(ModelKind.SOFTMAX_LINEAR, 1, 2, [[[5.0, -5.0]], [0.0, 0.0]])
        saliency = sample_saliency(model, CE, [[-3.0]], [[1.0, 0.0]])
        assert np.max(saliency) < 1e-4

    def test_softmax_matches_finite_differences(self, rng):
        model = init_model(ModelSpec(kind=ModelKind.SOFTMAX_LINEAR, input_dim=5, output_dim=3), seed=11)
        for _ in range(20):
            x = rng.normal(size=(1, 5))
            y = _one_hot(int(rng.integers(3)), 3)
            expected = np.abs(_finite_difference(lambda z: gain_value(CE, predict(model, z), y), x))
            np.testing.assert_allclose(sample_saliency(model, CE, x, y), expected, rtol=1e-4, atol=1e-8)

    def test_svm_matches_finite_differences(self, rng):
        model = init_model(ModelSpec(kind=ModelKind.LINEAR_SVM, input_dim=4, output_dim=3), seed=12)
        for _ in range(20):
            # 마진이 (-1, 1) 안에 머물도록 작은 입력
            x = rng.normal(scale=0.1, size=(1, 4))
            y = _one_hot(int(rng.integers(3)), 3)
            expected = np.abs(_finite_difference(lambda z: gain_value(HINGE, predict(model, z), y), x))
            np.testing.assert_allclose(sample_saliency(model, HINGE, x, y), expected, rtol=1e-4, atol=1e-8)

    def test_regressor_matches_finite_differences(self, rng):
        spec = ModelSpec(kind=ModelKind.MLP_REGRESSOR, input_dim=4, output_dim=1, hidden_layers=[])
        model = init_model(spec, seed=13)
        for _ in range(20):
            x = rng.normal(size=(1, 4))
            y = rng.normal(size=(1, 1))
            expected = np.abs(_finite_difference(lambda z: gain_value(MSE, predict(model, z), y), x))
            np.testing.assert_allclose(sample_saliency(model, MSE, x, y), expected, rtol=1e-4, atol=1e-6)

    def test_entries_are_nonnegative(self, mlp_spec, rng):
        model = init_model(mlp_spec, seed=1)
        saliency = batch_saliency(model, CE, rng.normal(size=(30, 6)), np.eye(2)[rng.integers(2, size=30)])
        assert np.all(saliency >= 0.0)

    def test_incompatible_gain_is_rejected(self, mlp_spec):
        model = init_model(mlp_spec, seed=1)
        with pytest.raises(ContractError):
            sample_saliency(model, MSE, np.zeros((1, 6)), [[1.0, 0.0]])
        with pytest.raises(ContractError):
            sample_saliency(model, HINGE, np.zeros((1, 6)), [[1.0, 0.0]])

    def test_requires_single_row(self, mlp_spec):
        with pytest.raises(ShapeError):
            sample_saliency(init_model(mlp_spec, 0), CE, np.zeros((2, 6)), np.zeros((2, 2)))


class TestBatchSaliency:
    """배치 saliency 테스트"""

    def test_rows_equal_single_sample_saliency(self, mlp_spec, rng):
        model = init_model(mlp_spec, seed=4)
        X = rng.normal(size=(12, 6))
        Y = np.eye(2)[rng.integers(2, size=12)]
        batched = batch_saliency(model, CE, X, Y)
        for row in range(12):
            single = sample_saliency(model, CE, X[row : row + 1], Y[row : row + 1])
            np.testing.assert_allclose(batched[row], single, rtol=1e-12, atol=1e-15)

    def test_empty_batch(self, mlp_spec):
        with pytest.raises(ContractError):
            batch_saliency(init_model(mlp_spec, 0), CE, np.zeros((0, 6)), np.zeros((0, 2)))

    def test_saliency_map_uses_classification_aggregation(self, mlp_spec, rng):
        model = init_model(mlp_spec, seed=4)
        X = rng.normal(size=(20, 6))
        labels = rng.integers(2, size=20)
        result = compute_saliency_map(model, CE, X, np.eye(2)[labels])
        np.testing.assert_array_equal(result.aggregated, aggregate_classification(result.per_sample, labels))
        assert result.model_kind == "mlp_classifier"

    def test_saliency_map_uses_regression_aggregation(self, small_regression):
        spec = ModelSpec(kind=ModelKind.MLP_REGRESSOR, input_dim=5, output_dim=1, hidden_layers=[4])
        model = init_model(spec, seed=2)
        result = compute_saliency_map(model, MSE, small_regression.X, small_regression.targets_matrix())
        np.testing.assert_array_equal(result.aggregated, aggregate_regression(result.per_sample))


class TestClassicSaliency:
    """클래스 출력 기반 고전 saliency 테스트"""

    def test_zero_parameters_give_zero_gradient(self, rng):
        model = _model(ModelKind.SOFTMAX_LINEAR, 3, 2, [np.zeros((3, 2)), np.zeros(2)])
        np.testing.assert_array_equal(classic_class_saliency(model, rng.normal(size=(1, 3)), 0), np.zeros(3))

    def test_matches_finite_differences(self, rng):
        model = init_model(ModelSpec(kind=ModelKind.SOFTMAX_LINEAR, input_dim=4, output_dim=3), seed=5)
        x = rng.normal(size=(1, 4))
        expected = np.abs(_finite_difference(lambda z: float(predict(model, z)[0, 2]), x))
        result = classic_class_saliency(model, x, 2)
        np.testing.assert_allclose(result, expected, rtol=1e-4, atol=1e-10)
        assert np.all(result >= 0.0)

    def test_regressor_is_rejected(self):
        spec = ModelSpec(kind=ModelKind.MLP_REGRESSOR, input_dim=2, output_dim=1)
        with pytest.raises(ContractError):
            classic_class_saliency(init_model(spec, 0), np.zeros((1, 2)), 0)

    def test_class_index_range(self, softmax_spec):
        with pytest.raises(ContractError):
            classic_class_saliency(init_model(softmax_spec, 0), np.zeros((1, 2)), 2)


class TestAggregation:
    """분류/회귀 집계 테스트"""

    def test_classification_example(self):
        per_sample = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 4.0]])
        result = aggregate_classification(per_sample, [0, 0, 1])
        np.testing.assert_allclose(result, [0.5, 1.5])

    def test_single_class_sums_to_one(self, rng):
        result = aggregate_classification(rng.uniform(size=(7, 4)), np.zeros(7))
        assert result.sum() == pytest.approx(1.0)

    def test_zero_norm_class_contributes_nothing(self):
        per_sample = np.array([[0.0, 0.0], [3.0, 1.0]])
        np.testing.assert_allclose(aggregate_classification(per_sample, [0, 1]), [0.75, 0.25])

    def test_classification_empty(self):
        with pytest.raises(ContractError):
            aggregate_classification(np.zeros((0, 3)), [])

    def test_label_count_mismatch(self):
        with pytest.raises(ShapeError):
            aggregate_classification(np.ones((3, 2)), [0, 1])

    @settings(max_examples=50, deadline=None)
    @given(
        per_sample=arrays(
            np.float64,
            st.tuples(st.integers(2, 8), st.integers(1, 5)),
            elements=st.floats(min_value=0.0, max_value=100.0),
        ),
        copies=st.sampled_from([2, 4]),
    )
    def test_class_replication_is_exact(self, per_sample, copies):
        labels = np.arange(per_sample.shape[0]) % 2
        base = aggregate_classification(per_sample, labels)
        extra = np.repeat(per_sample[labels == 0], copies - 1, axis=0)
        replicated = aggregate_classification(
            np.vstack([per_sample, extra]), np.concatenate([labels, np.zeros(len(extra), dtype=int)])
        )
        np.testing.assert_array_equal(base, replicated)

    @settings(max_examples=30, deadline=None)
    @given(copies=st.integers(2, 5), seed=st.integers(0, 2**16))
    def test_class_replication_any_factor(self, copies, seed):
        generator = np.random.default_rng(seed)
        per_sample = generator.uniform(size=(6, 3))
        labels = np.array([0, 0, 0, 1, 1, 1])
        replicated = np.vstack([per_sample] + [per_sample[:3]] * (copies - 1))
        replicated_labels = np.concatenate([labels] + [labels[:3]] * (copies - 1))
        np.testing.assert_allclose(
            aggregate_classification(replicated, replicated_labels),
            aggregate_classification(per_sample, labels),
            rtol=1e-12,
        )

    def test_regression_single_row(self):
        np.testing.assert_array_equal(aggregate_regression([[0.3, 0.7]]), [0.3, 0.7])

    def test_regression_sum(self):
        np.testing.assert_array_equal(aggregate_regression([[1.0, 0.0], [0.0, 2.0]]), [1.0, 2.0])

    def test_regression_permutation_invariance(self, rng):
        per_sample = rng.uniform(size=(50, 4)) * 10.0 ** rng.integers(-8, 8, size=(50, 1))
        shuffled = per_sample[rng.permutation(50)]
        np.testing.assert_allclose(aggregate_regression(shuffled), aggregate_regression(per_sample), rtol=1e-9)

    def test_regression_empty(self):
        with pytest.raises(ContractError):
            aggregate_regression(np.zeros((0, 2)))


class TestAdversarialPerturb:
    """적대적 섭동 테스트"""

    def test_already_confident_sample_is_unchanged(self, blob_model):
        x = np.array([[2.0, 2.0]])
        result = adversarial_perturb(blob_model, x, AdversarialConfig(target_class=1))
        assert result.iters_used == 0
        assert result.converged
        np.testing.assert_array_equal(result.x_adv, x)

    def test_raw_gradient_reaches_threshold(self, blob_model, blob_dataset):
        for x in blob_dataset.X[:10]:
            result = adversarial_perturb(blob_model, x.reshape(1, -1), AdversarialConfig(target_class=1))
            assert result.converged
            assert result.iters_used <= 500
            assert result.final_confidence >= 0.95
            assert predict(blob_model, result.x_adv)[0, 1] >= 0.95

    def test_sign_gradient_reaches_threshold(self, blob_model):
        cfg = AdversarialConfig(target_class=0, perturbation_mode=PerturbationMode.SIGN_GRADIENT)
        result = adversarial_perturb(blob_model, np.array([[2.0, 2.0]]), cfg)
        assert result.converged
        assert result.perturbation_linf > 0.0

    def test_zero_step_returns_original_after_max_iters(self, blob_model):
        x = np.array([[-2.0, -2.0]])
        cfg = AdversarialConfig(target_class=1, step_size=0.0, max_iters=5)
        result = adversarial_perturb(blob_model, x, cfg)
        assert not result.converged
        assert result.iters_used == 5
        np.testing.assert_array_equal(result.x_adv, x)
        assert result.perturbation_l2 == 0.0

    def test_clamp_box_limits_perturbation(self, blob_model):
        cfg = AdversarialConfig(target_class=1, max_iters=200, clamp_box=[(-2.5, -1.5), (-2.5, -1.5)])
        result = adversarial_perturb(blob_model, np.array([[-2.0, -2.0]]), cfg)
        assert not result.converged
        assert np.all(result.x_adv >= -2.5)
        assert np.all(result.x_adv <= -1.5)

    def test_sweep_covers_every_class(self, blob_model):
        results = adversarial_sweep(blob_model, np.array([[-2.0, -2.0]]), AdversarialConfig(target_class=0))
        assert [r.target_class for r in results] == [0, 1]
        assert results[0].iters_used == 0
        assert results[1].perturbation_l2 > 0.0

    def test_target_out_of_range(self, blob_model):
        with pytest.raises(ContractError):
            adversarial_perturb(blob_model, np.zeros((1, 2)), AdversarialConfig(target_class=2))

    def test_margin_model_is_rejected(self):
        model = _model(ModelKind.LINEAR_SVM, 2, 2, [np.eye(2), np.zeros(2)])
        with pytest.raises(ContractError):
            adversarial_perturb(model, np.zeros((1, 2)), AdversarialConfig(target_class=1))
