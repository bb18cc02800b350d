"""이득 함수 테스트"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from saliency_fs.core.errors import ContractError, ShapeError
from saliency_fs.models.gain import GainKind, GainSpec
from saliency_fs.models.network import LossKind
from saliency_fs.services.diffcore import ComputeGraph, input_gradient
from saliency_fs.services.gain_functions import (
    build_gain,
    gain_kind_for,
    gain_mse,
    gain_value,
)

MSE = GainSpec(kind=GainKind.MSE_INVERSE)
CE = GainSpec(kind=GainKind.CROSS_ENTROPY_COMPLEMENT)
HINGE = GainSpec(kind=GainKind.HINGE_LOG)


class TestGainSpec:
    """이득 함수 명세 검증"""

    def test_defaults(self):
        assert MSE.alpha == 1.0
        assert MSE.epsilon == 1e-3

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.1])
    def test_epsilon_range(self, epsilon):
        with pytest.raises(ValidationError):
            GainSpec(kind=GainKind.MSE_INVERSE, epsilon=epsilon)

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValidationError):
            GainSpec(kind=GainKind.HINGE_LOG, alpha=0.0)

    def test_loss_pairing(self):
        assert gain_kind_for(LossKind.CATEGORICAL_CROSS_ENTROPY) == GainKind.CROSS_ENTROPY_COMPLEMENT
        assert gain_kind_for(LossKind.HINGE) == GainKind.HINGE_LOG
        assert gain_kind_for(LossKind.MSE) == GainKind.MSE_INVERSE


class TestMseInverse:
    """회귀 이득 테스트"""

    def test_perfect_prediction(self):
        assert gain_value(MSE, [[1.0, -2.0], [0.5, 3.0]], [[1.0, -2.0], [0.5, 3.0]]) == pytest.approx(1000.0)

    def test_unit_error(self):
        assert gain_value(MSE, [[1.0]], [[0.0]]) == pytest.approx(0.999001, abs=1e-6)

    def test_mean_over_all_entries(self):
        # 오차 제곱 (4, 0) 의 평균 2
        assert gain_value(MSE, [[2.0, 0.0]], [[0.0, 0.0]]) == pytest.approx(1.0 / 2.001)

    def test_alpha_scales_linearly(self):
        scaled = GainSpec(kind=GainKind.MSE_INVERSE, alpha=3.0)
        base = gain_value(MSE, [[0.3]], [[0.1]])
        assert gain_value(scaled, [[0.3]], [[0.1]]) == pytest.approx(3.0 * base)

    @settings(max_examples=50, deadline=None)
    @given(
        small=st.floats(min_value=0.0, max_value=10.0),
        extra=st.floats(min_value=1e-3, max_value=10.0),
    )
    def test_decreases_with_error(self, small, extra):
        assert gain_value(MSE, [[small]], [[0.0]]) > gain_value(MSE, [[small + extra]], [[0.0]])

    def test_wrong_kind_is_rejected(self):
        graph = ComputeGraph()
        pred = graph.placeholder("p", (None, 1))
        target = graph.placeholder("t", (None, 1))
        with pytest.raises(ContractError):
            gain_mse(graph, pred, target, CE)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            gain_value(MSE, [[1.0, 2.0]], [[1.0]])


class TestCrossEntropyComplement:
    """교차 엔트로피 보완 이득 테스트"""

    def test_uniform_prediction(self):
        assert gain_value(CE, [[0.5, 0.5]], [[1.0, 0.0]]) == pytest.approx(0.693147, abs=1e-6)

    def test_confident_prediction_is_clipped(self):
        assert gain_value(CE, [[1.0, 0.0]], [[1.0, 0.0]]) == pytest.approx(6.907755, abs=1e-6)

    def test_complete_miss_is_zero(self):
        assert gain_value(CE, [[0.0, 1.0]], [[1.0, 0.0]]) == pytest.approx(0.0, abs=1e-15)

    def test_mean_over_samples(self):
        both = gain_value(CE, [[0.5, 0.5], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0]])
        assert both == pytest.approx(0.693147 / 2, abs=1e-6)

    def test_rows_must_be_probabilities(self):
        with pytest.raises(ContractError):
            gain_value(CE, [[0.7, 0.7]], [[1.0, 0.0]])

    @settings(max_examples=50, deadline=None)
    @given(
        low=st.floats(min_value=0.0, max_value=0.99),
        step=st.floats(min_value=1e-4, max_value=0.01),
    )
    def test_non_decreasing_in_true_class_probability(self, low, step):
        high = min(1.0, low + step)
        lower = gain_value(CE, [[low, 1.0 - low]], [[1.0, 0.0]])
        higher = gain_value(CE, [[high, 1.0 - high]], [[1.0, 0.0]])
        assert higher >= lower


class TestHingeLog:
    """로그 힌지 이득 테스트"""

    def test_unit_margin(self):
        assert gain_value(HINGE, [[1.0, -1.0]], [[1.0, 0.0]]) == pytest.approx(6.907755, abs=1e-6)

    def test_large_margins_saturate(self):
        at_two = gain_value(HINGE, [[2.0, 0.0]], [[1.0, 0.0]])
        at_two_thousand = gain_value(HINGE, [[2000.0, 0.0]], [[1.0, 0.0]])
        assert at_two == at_two_thousand

    def test_negative_unit_margin_is_zero(self):
        assert gain_value(HINGE, [[-1.0, 1.0]], [[1.0, 0.0]]) == pytest.approx(0.0, abs=1e-15)

    def test_only_true_class_contributes(self):
        first = gain_value(HINGE, [[0.2, -0.7]], [[1.0, 0.0]])
        second = gain_value(HINGE, [[0.2, 0.9]], [[1.0, 0.0]])
        assert first == second


class TestPerSample:
    """샘플별 합산 모드 테스트"""

    def test_rows_do_not_mix(self):
        graph = ComputeGraph()
        pred = graph.placeholder("x", (None, 1))
        target = graph.placeholder("y", (None, 1))
        graph.set_output(build_gain(graph, MSE, pred, target, per_sample=True))
        X = np.array([[0.5], [2.0]])
        Y = np.array([[0.0], [0.0]])
        batched = input_gradient(graph, {"x": X, "y": Y}).wrt_input
        for row in range(2):
            single = input_gradient(graph, {"x": X[row : row + 1], "y": Y[row : row + 1]}).wrt_input
            np.testing.assert_allclose(batched[row], single[0], rtol=1e-12)

    def test_sum_of_per_sample_gains(self):
        graph = ComputeGraph()
        pred = graph.placeholder("x", (None, 2))
        target = graph.placeholder("y", (None, 2))
        graph.set_output(build_gain(graph, CE, pred, target, per_sample=True))
        result = input_gradient(
            graph,
            {"x": np.array([[0.5, 0.5], [0.5, 0.5]]), "y": np.array([[1.0, 0.0], [0.0, 1.0]])},
        )
        assert result.value == pytest.approx(2 * 0.693147, abs=1e-6)
