"""이득(gain) 함수

설명: 손실과 반대로 동작하는 스칼라 목적 함수. 예측이 좋을수록 크고, 완전한 오분류에서는
0에 가깝습니다. 이 함수의 입력 기울기가 saliency가 됩니다.

- MSE_INVERSE:              alpha / (MSE + eps)
- CROSS_ENTROPY_COMPLEMENT: -(alpha/N) sum y * log(1 - min(1-eps, y~))
- HINGE_LOG:                -(alpha/N) sum y * log(1 - min(1-eps, (clip(y~, -1, 1) + 1) / 2))

clip은 모두 straight-through(역전파 기울기 1)입니다.
per_sample=True이면 샘플별 이득의 합을 돌려주므로, 입력 행 i의 기울기는 샘플 i 단독
이득의 기울기와 같습니다.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np
import numpy.typing as npt

from saliency_fs.core.errors import ContractError, ShapeError
from saliency_fs.models.gain import GainKind, GainSpec
from saliency_fs.models.network import LossKind
from saliency_fs.services.diffcore import ComputeGraph, Node, evaluate

PROBABILITY_ROW_TOLERANCE = 1e-6

# 모델 손실과 짝이 맞는 이득 함수
COMPATIBLE_GAIN: Dict[LossKind, GainKind] = {
    LossKind.CATEGORICAL_CROSS_ENTROPY: GainKind.CROSS_ENTROPY_COMPLEMENT,
    LossKind.HINGE: GainKind.HINGE_LOG,
    LossKind.MSE: GainKind.MSE_INVERSE,
}


def gain_kind_for(loss_kind: LossKind) -> GainKind:
    return COMPATIBLE_GAIN[loss_kind]


def _require_kind(spec: GainSpec, expected: GainKind) -> None:
    if spec.kind != expected:
        raise ContractError(
            f"이득 함수 종류 불일치: 기대={expected.value}, 실제={spec.kind.value}"
        )


def _reduce(graph: ComputeGraph, per_row: Node, per_sample: bool) -> Node:
    return graph.sum(per_row) if per_sample else graph.mean(per_row)


def _log_complement(
    graph: ComputeGraph, clipped: Node, target: Node, spec: GainSpec, per_sample: bool
) -> Node:
    complement_log = graph.log(graph.affine(clipped, -1.0, 1.0))
    per_row = graph.sum_rows(graph.mul(target, complement_log))
    return graph.affine(_reduce(graph, per_row, per_sample), -spec.alpha)


def gain_mse(
    graph: ComputeGraph,
    pred: Node,
    target: Node,
    spec: GainSpec,
    *,
    per_sample: bool = False,
) -> Node:
    """회귀 이득: alpha / (MSE + eps), MSE는 N*D 항 전체 평균"""
    _require_kind(spec, GainKind.MSE_INVERSE)
    squared = graph.square(graph.sub(pred, target))
    if per_sample:
        shifted = graph.affine(graph.mean_rows(squared), 1.0, spec.epsilon)
        return graph.sum(graph.affine(graph.reciprocal(shifted), spec.alpha))
    shifted = graph.affine(graph.mean(squared), 1.0, spec.epsilon)
    return graph.affine(graph.reciprocal(shifted), spec.alpha)


def gain_cross_entropy(
    graph: ComputeGraph,
    pred: Node,
    target: Node,
    spec: GainSpec,
    *,
    per_sample: bool = False,
) -> Node:
    """교차 엔트로피 보완 이득 (pred는 확률 행)"""
    _require_kind(spec, GainKind.CROSS_ENTROPY_COMPLEMENT)
    clipped = graph.clip_upper_straight_through(pred, 1.0 - spec.epsilon)
    return _log_complement(graph, clipped, target, spec, per_sample)


def gain_hinge(
    graph: ComputeGraph,
    pred: Node,
    target: Node,
    spec: GainSpec,
    *,
    per_sample: bool = False,
) -> Node:
    """로그 힌지 이득 (pred는 SVM 마진)"""
    _require_kind(spec, GainKind.HINGE_LOG)
    bounded = graph.clip_interval_straight_through(pred, -1.0, 1.0)
    rescaled = graph.affine(bounded, 0.5, 0.5)
    clipped = graph.clip_upper_straight_through(rescaled, 1.0 - spec.epsilon)
    return _log_complement(graph, clipped, target, spec, per_sample)


_BUILDERS: Dict[GainKind, Callable[..., Node]] = {
    GainKind.MSE_INVERSE: gain_mse,
    GainKind.CROSS_ENTROPY_COMPLEMENT: gain_cross_entropy,
    GainKind.HINGE_LOG: gain_hinge,
}


def build_gain(
    graph: ComputeGraph,
    spec: GainSpec,
    pred: Node,
    target: Node,
    *,
    per_sample: bool = False,
) -> Node:
    return _BUILDERS[spec.kind](graph, pred, target, spec, per_sample=per_sample)


def check_probability_rows(y_pred: npt.NDArray[np.float64]) -> None:
    """각 행이 확률 벡터(합 1)인지 확인합니다."""
    row_sums = y_pred.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > PROBABILITY_ROW_TOLERANCE):
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        raise ContractError(
            f"예측 행의 합이 1이 아닙니다: row={worst}, sum={row_sums[worst]:.9f}"
        )


def gain_value(
    spec: GainSpec, y_pred: npt.ArrayLike, y_true: npt.ArrayLike
) -> float:
    """배열 입력에 대한 이득 값을 계산합니다."""
    pred = np.atleast_2d(np.asarray(y_pred, dtype=np.float64))
    true = np.atleast_2d(np.asarray(y_true, dtype=np.float64))
    if pred.shape != true.shape:
        raise ShapeError(f"예측/정답 형상 불일치: {pred.shape} vs {true.shape}")
    if spec.kind == GainKind.CROSS_ENTROPY_COMPLEMENT:
        check_probability_rows(pred)

    graph = ComputeGraph()
    pred_node = graph.placeholder("y_pred", (None, pred.shape[1]))
    true_node = graph.placeholder("y_true", (None, true.shape[1]))
    graph.set_output(build_gain(graph, spec, pred_node, true_node))
    return float(evaluate(graph, {"y_pred": pred, "y_true": true}))
