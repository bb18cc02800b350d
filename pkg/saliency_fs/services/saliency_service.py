"""Saliency 계산 서비스

설명: 이득 함수의 입력 기울기 절댓값으로 샘플별 saliency를 구하고, 분류(클래스별 L1 정규화
합)와 회귀(단순 합) 방식으로 전역 saliency를 집계합니다. 같은 기울기를 이용해 분류기를
목표 클래스로 유도하는 적대적 섭동 탐침도 제공합니다.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional

import numpy as np
import numpy.typing as npt

from saliency_fs.core.errors import ContractError, ShapeError
from saliency_fs.core.logging_config import get_logger
from saliency_fs.models.gain import GainKind, GainSpec
from saliency_fs.models.network import LossKind, ModelSpec
from saliency_fs.models.saliency import AdversarialConfig, PerturbationMode
from saliency_fs.services.diffcore import (
    ComputeGraph,
    Node,
    Tensor,
    input_gradient,
)
from saliency_fs.services.gain_functions import (
    build_gain,
    check_probability_rows,
    gain_kind_for,
)
from saliency_fs.services.network_service import (
    TrainedModel,
    build_network,
    predict,
)

logger = get_logger(__name__)

# 한 번의 배치 그래프에 넣을 최대 샘플 수
SALIENCY_CHUNK_SIZE = 512


@dataclass(eq=False)
class SaliencyMap:
    """샘플별 saliency (N×R, 음수 없음)와 집계 saliency (R)"""

    per_sample: Tensor
    aggregated: Tensor
    gain: GainSpec
    model_kind: str


@dataclass(eq=False)
class AdversarialResult:
    x_adv: Tensor
    iters_used: int
    final_confidence: float
    initial_confidence: float
    converged: bool
    target_class: int
    delta: Tensor

    @property
    def perturbation_l2(self) -> float:
        return float(np.linalg.norm(self.delta))

    @property
    def perturbation_linf(self) -> float:
        return float(np.max(np.abs(self.delta))) if self.delta.size else 0.0


def check_compatible(model: TrainedModel, gain: GainSpec) -> None:
    """이득 함수와 모델 손실의 짝을 확인합니다 (CE↔소프트맥스, Hinge↔마진, MSE↔회귀)."""
    expected = gain_kind_for(model.loss_kind)
    if gain.kind != expected:
        raise ContractError(
            f"이득 함수 {gain.kind.value}는 {model.spec.kind.value} 모델과 함께 쓸 수 없습니다 "
            f"(기대: {expected.value})"
        )


@dataclass(frozen=True)
class _GainProgram:
    graph: ComputeGraph
    output: Node


@lru_cache(maxsize=64)
def _gain_program(spec_json: str, gain_json: str, per_sample: bool) -> _GainProgram:
    spec = ModelSpec.model_validate_json(spec_json)
    gain = GainSpec.model_validate_json(gain_json)
    graph = ComputeGraph()
    x = graph.placeholder("x", (None, spec.input_dim))
    y = graph.placeholder("y", (None, spec.output_dim))
    nodes = build_network(graph, spec, x)
    graph.set_output(build_gain(graph, gain, nodes.output, y, per_sample=per_sample))
    return _GainProgram(graph=graph, output=nodes.output)


@lru_cache(maxsize=64)
def _class_output_program(spec_json: str) -> ComputeGraph:
    spec = ModelSpec.model_validate_json(spec_json)
    graph = ComputeGraph()
    x = graph.placeholder("x", (None, spec.input_dim))
    selector = graph.placeholder("selector", (None, spec.output_dim))
    nodes = build_network(graph, spec, x)
    graph.set_output(graph.sum(graph.mul(nodes.output, selector)))
    return graph


def _as_rows(values: npt.ArrayLike, columns: int, what: str) -> Tensor:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim <= 1:
        array = array.reshape(1, -1) if array.size == columns else array.reshape(-1, 1)
    if array.ndim != 2 or array.shape[1] != columns:
        raise ShapeError(f"{what} 형상은 (N, {columns})이어야 합니다 (실제 {array.shape})")
    return array


def gain_input_gradient(
    model: TrainedModel, gain: GainSpec, X: npt.ArrayLike, Y: npt.ArrayLike
) -> Tensor:
    """샘플별 이득의 부호 있는 입력 기울기 (N×R)"""
    check_compatible(model, gain)
    spec = model.spec
    features = _as_rows(X, spec.input_dim, "x")
    targets = _as_rows(Y, spec.output_dim, "y")
    if features.shape[0] != targets.shape[0]:
        raise ShapeError(
            f"x와 y의 샘플 수가 다릅니다: {features.shape[0]} vs {targets.shape[0]}"
        )
    if features.shape[0] == 0:
        raise ContractError("saliency를 계산할 샘플이 없습니다.")
    if gain.kind == GainKind.CROSS_ENTROPY_COMPLEMENT:
        check_probability_rows(predict(model, features))

    program = _gain_program(spec.model_dump_json(), gain.model_dump_json(), True)
    params = model.bindings()
    rows: List[Tensor] = []
    for start in range(0, features.shape[0], SALIENCY_CHUNK_SIZE):
        stop = start + SALIENCY_CHUNK_SIZE
        result = input_gradient(
            program.graph,
            {"x": features[start:stop], "y": targets[start:stop], **params},
        )
        rows.append(result.wrt_input)
    return np.vstack(rows)


def sample_saliency(
    model: TrainedModel, gain: GainSpec, x: npt.ArrayLike, y: npt.ArrayLike
) -> Tensor:
    """단일 샘플 saliency |dg/dx| (길이 R)"""
    features = _as_rows(x, model.spec.input_dim, "x")
    if features.shape[0] != 1:
        raise ShapeError(f"단일 샘플(1×R)이 필요합니다 (실제 {features.shape})")
    return np.abs(gain_input_gradient(model, gain, features, y)[0])


def batch_saliency(
    model: TrainedModel, gain: GainSpec, X: npt.ArrayLike, Y: npt.ArrayLike
) -> Tensor:
    """모든 샘플의 saliency (N×R); 행 i는 sample_saliency(x_i, y_i)와 같음"""
    return np.abs(gain_input_gradient(model, gain, X, Y))


def classic_class_saliency(model: TrainedModel, x: npt.ArrayLike, c: int) -> Tensor:
    """클래스 출력 y_c의 입력 기울기 절댓값 (비교용 고전 saliency)"""
    spec = model.spec
    if not spec.is_classifier:
        raise ContractError("고전 saliency는 분류기에서만 계산할 수 있습니다.")
    if not 0 <= c < spec.output_dim:
        raise ContractError(f"클래스 인덱스 범위 초과: {c} (C={spec.output_dim})")
    features = _as_rows(x, spec.input_dim, "x")
    if features.shape[0] != 1:
        raise ShapeError(f"단일 샘플(1×R)이 필요합니다 (실제 {features.shape})")
    selector = np.zeros((1, spec.output_dim))
    selector[0, c] = 1.0
    graph = _class_output_program(spec.model_dump_json())
    result = input_gradient(
        graph, {"x": features, "selector": selector, **model.bindings()}
    )
    return np.abs(result.wrt_input[0])


def _column_fsum(block: Tensor) -> Tensor:
    # 정확히 반올림된 합: 샘플 순서/복제에 대해 결과가 흔들리지 않음
    return np.array([math.fsum(column) for column in block.T], dtype=np.float64)


def aggregate_classification(
    per_sample: npt.ArrayLike, labels: npt.ArrayLike
) -> Tensor:
    """클래스별 합을 L1 정규화해 더합니다. L1 노름이 0인 클래스는 0 벡터로 기여합니다."""
    saliency = np.asarray(per_sample, dtype=np.float64)
    classes = np.asarray(labels).astype(np.int64).reshape(-1)
    if saliency.ndim != 2 or saliency.shape[0] == 0:
        raise ContractError("집계할 샘플이 없습니다.")
    if classes.shape[0] != saliency.shape[0]:
        raise ShapeError(
            f"레이블 수와 샘플 수가 다릅니다: {classes.shape[0]} vs {saliency.shape[0]}"
        )

    total = np.zeros(saliency.shape[1], dtype=np.float64)
    for label in np.unique(classes):
        class_sum = _column_fsum(saliency[classes == label])
        norm = math.fsum(np.abs(class_sum))
        if norm == 0.0:
            continue
        total = total + class_sum / norm
    return total


def aggregate_regression(per_sample: npt.ArrayLike) -> Tensor:
    """샘플별 saliency의 열 합"""
    saliency = np.asarray(per_sample, dtype=np.float64)
    if saliency.ndim != 2 or saliency.shape[0] == 0:
        raise ContractError("집계할 샘플이 없습니다.")
    return _column_fsum(saliency)


def compute_saliency_map(
    model: TrainedModel,
    gain: GainSpec,
    X: npt.ArrayLike,
    Y: npt.ArrayLike,
) -> SaliencyMap:
    """샘플별 saliency와 작업 종류(분류/회귀)에 맞는 집계 결과"""
    per_sample = batch_saliency(model, gain, X, Y)
    if model.spec.is_classifier:
        labels = np.argmax(_as_rows(Y, model.spec.output_dim, "y"), axis=1)
        aggregated = aggregate_classification(per_sample, labels)
    else:
        aggregated = aggregate_regression(per_sample)
    return SaliencyMap(
        per_sample=per_sample,
        aggregated=aggregated,
        gain=gain,
        model_kind=model.spec.kind.value,
    )


def _target_confidence(model: TrainedModel, x: Tensor, target: int) -> float:
    return float(predict(model, x)[0, target])


def _clamp(x: Tensor, cfg: AdversarialConfig) -> Tensor:
    if cfg.clamp_box is None:
        return x
    bounds = np.asarray(cfg.clamp_box, dtype=np.float64)
    if bounds.shape != (x.shape[1], 2):
        raise ShapeError(
            f"clamp_box는 특징마다 [lo, hi]가 필요합니다 (R={x.shape[1]}, 실제 {bounds.shape})"
        )
    return np.clip(x, bounds[:, 0], bounds[:, 1])


def adversarial_perturb(
    model: TrainedModel,
    x: npt.ArrayLike,
    cfg: AdversarialConfig,
    gain: Optional[GainSpec] = None,
) -> AdversarialResult:
    """목표 클래스의 CE 이득을 입력에 대해 상승시켜 분류 결과를 바꿉니다.

    목표 확률이 confidence_threshold 이상이 되거나 max_iters에 도달하면 멈춥니다.
    수렴하지 못하면 목표 확률이 가장 높았던 반복값을 converged=False로 반환합니다.
    """
    spec = model.spec
    if spec.loss_kind != LossKind.CATEGORICAL_CROSS_ENTROPY:
        raise ContractError("적대적 섭동은 확률 출력을 내는 분류기에서만 지원합니다.")
    if cfg.target_class >= spec.output_dim:
        raise ContractError(
            f"목표 클래스 범위 초과: {cfg.target_class} (C={spec.output_dim})"
        )
    gain = gain or GainSpec(kind=GainKind.CROSS_ENTROPY_COMPLEMENT)

    original = _as_rows(x, spec.input_dim, "x")
    if original.shape[0] != 1:
        raise ShapeError(f"단일 샘플(1×R)이 필요합니다 (실제 {original.shape})")
    target = np.zeros((1, spec.output_dim))
    target[0, cfg.target_class] = 1.0

    current = original.copy()
    initial = _target_confidence(model, current, cfg.target_class)
    best_x, best_conf, best_iter = current, initial, 0
    if initial >= cfg.confidence_threshold:
        return AdversarialResult(
            x_adv=current,
            iters_used=0,
            final_confidence=initial,
            initial_confidence=initial,
            converged=True,
            target_class=cfg.target_class,
            delta=np.zeros_like(current),
        )

    for iteration in range(1, cfg.max_iters + 1):
        grad = gain_input_gradient(model, gain, current, target)
        if cfg.perturbation_mode == PerturbationMode.SIGN_GRADIENT:
            step = cfg.step_size * np.sign(grad)
        else:
            norm = float(np.linalg.norm(grad))
            step = cfg.step_size * grad / norm if norm > 0.0 else np.zeros_like(grad)
        current = _clamp(current + step, cfg)
        confidence = _target_confidence(model, current, cfg.target_class)
        if confidence > best_conf:
            best_x, best_conf, best_iter = current, confidence, iteration
        if confidence >= cfg.confidence_threshold:
            logger.debug(
                "적대적 섭동 수렴",
                target=cfg.target_class,
                iterations=iteration,
                confidence=confidence,
            )
            return AdversarialResult(
                x_adv=current,
                iters_used=iteration,
                final_confidence=confidence,
                initial_confidence=initial,
                converged=True,
                target_class=cfg.target_class,
                delta=current - original,
            )

    logger.info(
        "적대적 섭동 미수렴",
        target=cfg.target_class,
        max_iters=cfg.max_iters,
        best_confidence=best_conf,
        best_iteration=best_iter,
    )
    return AdversarialResult(
        x_adv=best_x,
        iters_used=cfg.max_iters,
        final_confidence=best_conf,
        initial_confidence=initial,
        converged=False,
        target_class=cfg.target_class,
        delta=best_x - original,
    )


def adversarial_sweep(
    model: TrainedModel, x: npt.ArrayLike, cfg: AdversarialConfig
) -> List[AdversarialResult]:
    """모든 클래스를 차례로 목표로 삼아 필요한 섭동 크기를 비교합니다."""
    return [
        adversarial_perturb(model, x, cfg.model_copy(update={"target_class": target}))
        for target in range(model.spec.output_dim)
    ]
