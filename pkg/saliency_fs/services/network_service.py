"""미분 가능한 예측 모델과 학습기

설명: 소프트맥스 선형 분류기, MLP 분류기/회귀기, 힌지 손실 선형 다중 클래스 SVM을
diffcore 그래프로 구성하고, 미니배치 경사 하강(Adam/SGD)으로 학습합니다.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from saliency_fs.core.errors import NumericError, ShapeError
from saliency_fs.core.logging_config import get_logger
from saliency_fs.models.network import (
    LossKind,
    ModelSpec,
    OptimizerKind,
    TrainConfig,
)
from saliency_fs.services.diffcore import (
    ComputeGraph,
    Node,
    Tensor,
    backward_from_values,
    forward_values,
)

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """모델 명세 + 파라미터 (train 반환 후 불변)"""

    spec: ModelSpec
    parameters: Tuple[Tensor, ...]
    seed: int = 0

    @property
    def loss_kind(self) -> LossKind:
        return self.spec.loss_kind

    @property
    def parameter_names(self) -> List[str]:
        return [name for name, _ in parameter_shapes(self.spec)]

    def bindings(self) -> Dict[str, Tensor]:
        return dict(zip(self.parameter_names, self.parameters))

    def parameter_norm(self) -> float:
        """모든 파라미터의 L2 노름"""
        return float(np.sqrt(sum(float(np.sum(p * p)) for p in self.parameters)))


def parameter_shapes(spec: ModelSpec) -> List[Tuple[str, Tuple[int, ...]]]:
    """선언 순서대로 (이름, 형상) 목록: W0, b0, W1, b1, ..."""
    dims = spec.layer_dims
    shapes: List[Tuple[str, Tuple[int, ...]]] = []
    for layer, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        shapes.append((f"W{layer}", (fan_in, fan_out)))
        shapes.append((f"b{layer}", (fan_out,)))
    return shapes


def _freeze(array: Tensor) -> Tensor:
    array.setflags(write=False)
    return array


def init_model(spec: ModelSpec, seed: int) -> TrainedModel:
    """스케일 균등 분포로 가중치를, 0으로 바이어스를 초기화합니다."""
    rng = np.random.default_rng(seed)
    params: List[Tensor] = []
    for name, shape in parameter_shapes(spec):
        if name.startswith("W"):
            fan_in, fan_out = shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params.append(_freeze(rng.uniform(-bound, bound, size=shape)))
        else:
            params.append(_freeze(np.zeros(shape, dtype=np.float64)))
    return TrainedModel(spec=spec, parameters=tuple(params), seed=seed)


@dataclass(frozen=True)
class NetworkNodes:
    params: List[Node]
    logits: Node
    output: Node


def build_network(graph: ComputeGraph, spec: ModelSpec, x: Node) -> NetworkNodes:
    """x 노드 위에 모델 순전파를 구성합니다.

    출력: 소프트맥스 분류기는 확률, SVM은 마진, 회귀기는 예측값.
    """
    params = [graph.parameter(name, shape) for name, shape in parameter_shapes(spec)]
    hidden = x
    n_layers = len(params) // 2
    for layer in range(n_layers):
        weight, bias = params[2 * layer], params[2 * layer + 1]
        hidden = graph.bias_add(graph.matmul(hidden, weight), bias)
        if layer < n_layers - 1:
            hidden = graph.relu(hidden)
    logits = hidden
    if spec.loss_kind == LossKind.CATEGORICAL_CROSS_ENTROPY:
        output = graph.softmax_rows(logits)
    else:
        output = logits
    return NetworkNodes(params=params, logits=logits, output=output)


def build_loss(graph: ComputeGraph, spec: ModelSpec, nodes: NetworkNodes, y: Node) -> Node:
    """데이터 손실 + L2 가중치 감쇠 목적 함수 노드"""
    classes = float(spec.output_dim)
    if spec.loss_kind == LossKind.CATEGORICAL_CROSS_ENTROPY:
        log_probs = graph.log_softmax_rows(nodes.logits)
        # mean은 N*C 항 평균이므로 C를 곱해 샘플 평균으로 맞춤
        data_loss = graph.affine(graph.mean(graph.mul(y, log_probs)), -classes)
    elif spec.loss_kind == LossKind.MSE:
        data_loss = graph.mean(graph.square(graph.sub(nodes.logits, y)))
    else:
        true_part = graph.mul(y, graph.relu(graph.affine(nodes.logits, -1.0, 1.0)))
        other_part = graph.mul(
            graph.affine(y, -1.0, 1.0), graph.relu(graph.affine(nodes.logits, 1.0, 1.0))
        )
        data_loss = graph.affine(graph.mean(graph.add(true_part, other_part)), classes)

    if spec.l2_weight_decay <= 0.0:
        return data_loss
    penalty: Optional[Node] = None
    for param in nodes.params:
        if not param.name.startswith("W"):
            continue
        term = graph.sum(graph.square(param))
        penalty = term if penalty is None else graph.add(penalty, term)
    assert penalty is not None
    return graph.add(data_loss, graph.affine(penalty, spec.l2_weight_decay))


@dataclass(frozen=True)
class _Program:
    graph: ComputeGraph
    nodes: NetworkNodes


@lru_cache(maxsize=64)
def _forward_program(spec_json: str) -> _Program:
    spec = ModelSpec.model_validate_json(spec_json)
    graph = ComputeGraph()
    x = graph.placeholder("x", (None, spec.input_dim))
    nodes = build_network(graph, spec, x)
    graph.set_output(nodes.output)
    return _Program(graph=graph, nodes=nodes)


@lru_cache(maxsize=64)
def _loss_program(spec_json: str) -> _Program:
    spec = ModelSpec.model_validate_json(spec_json)
    graph = ComputeGraph()
    x = graph.placeholder("x", (None, spec.input_dim))
    y = graph.placeholder("y", (None, spec.output_dim))
    nodes = build_network(graph, spec, x)
    graph.set_output(build_loss(graph, spec, nodes, y))
    return _Program(graph=graph, nodes=nodes)


def _as_matrix(values: npt.ArrayLike, columns: int, what: str) -> Tensor:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1 and columns == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2 or array.shape[1] != columns:
        raise ShapeError(f"{what} 형상은 (N, {columns})이어야 합니다 (실제 {array.shape})")
    return array


def predict(model: TrainedModel, X: npt.ArrayLike) -> Tensor:
    """모델 출력 (분류기는 확률, SVM은 마진, 회귀기는 N×1 예측값)"""
    features = _as_matrix(X, model.spec.input_dim, "X")
    program = _forward_program(model.spec.model_dump_json())
    bindings = {"x": features, **model.bindings()}
    return forward_values(program.graph, bindings)[program.nodes.output.index]


def predict_labels(model: TrainedModel, X: npt.ArrayLike) -> npt.NDArray[np.int64]:
    return np.argmax(predict(model, X), axis=1).astype(np.int64)


def training_loss(model: TrainedModel, X: npt.ArrayLike, Y: npt.ArrayLike) -> float:
    """전체 데이터에 대한 목적 함수 값 (L2 항 포함)"""
    features = _as_matrix(X, model.spec.input_dim, "X")
    targets = _as_matrix(Y, model.spec.output_dim, "Y")
    program = _loss_program(model.spec.model_dump_json())
    bindings = {"x": features, "y": targets, **model.bindings()}
    values = forward_values(program.graph, bindings)
    return float(values[program.graph.output.index])


class _Adam:
    def __init__(self, params: List[Tensor], cfg: TrainConfig) -> None:
        self.cfg = cfg
        self.step_count = 0
        self.first = [np.zeros_like(p) for p in params]
        self.second = [np.zeros_like(p) for p in params]

    def step(self, params: List[Tensor], grads: List[Tensor]) -> None:
        cfg = self.cfg
        self.step_count += 1
        correction1 = 1.0 - cfg.adam_beta1**self.step_count
        correction2 = 1.0 - cfg.adam_beta2**self.step_count
        for param, grad, m, v in zip(params, grads, self.first, self.second):
            m *= cfg.adam_beta1
            m += (1.0 - cfg.adam_beta1) * grad
            v *= cfg.adam_beta2
            v += (1.0 - cfg.adam_beta2) * grad * grad
            param -= cfg.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + cfg.adam_eps
            )


class _Sgd:
    def __init__(self, params: List[Tensor], cfg: TrainConfig) -> None:
        self.cfg = cfg

    def step(self, params: List[Tensor], grads: List[Tensor]) -> None:
        for param, grad in zip(params, grads):
            param -= self.cfg.learning_rate * grad


def train(
    model: TrainedModel, X: npt.ArrayLike, Y: npt.ArrayLike, cfg: TrainConfig
) -> TrainedModel:
    """미니배치 경사 하강으로 학습한 새 모델을 반환합니다 (입력 모델은 변경하지 않음).

    Args:
        model: 초기화된 모델
        X: N×R 입력
        Y: 분류기는 N×C one-hot, 회귀기는 N×1 목표값
        cfg: 학습 설정 (셔플/입력 잡음은 cfg.seed로만 결정)
    """
    spec = model.spec
    features = _as_matrix(X, spec.input_dim, "X")
    targets = _as_matrix(Y, spec.output_dim, "Y")
    n_samples = features.shape[0]
    if targets.shape[0] != n_samples:
        raise ShapeError(f"X와 Y의 샘플 수가 다릅니다: {n_samples} vs {targets.shape[0]}")
    if n_samples == 0:
        raise ShapeError("학습 데이터가 비어 있습니다.")
    if cfg.epochs == 0:
        return model

    program = _loss_program(spec.model_dump_json())
    graph = program.graph
    names = model.parameter_names
    param_nodes = program.nodes.params
    params = [np.array(p, dtype=np.float64, copy=True) for p in model.parameters]
    optimizer = _Adam(params, cfg) if cfg.optimizer == OptimizerKind.ADAM else _Sgd(params, cfg)
    rng = np.random.default_rng(cfg.seed)

    epoch_loss = float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            batch_x = features[batch]
            if cfg.input_noise_std > 0.0:
                batch_x = batch_x + rng.normal(0.0, cfg.input_noise_std, size=batch_x.shape)
            bindings = {"x": batch_x, "y": targets[batch], **dict(zip(names, params))}
            try:
                values = forward_values(graph, bindings)
                grads = backward_from_values(graph, values)
            except NumericError as exc:
                raise NumericError(
                    f"학습 발산: {exc.detail}", node=exc.node, epoch=epoch
                ) from exc
            loss = float(values[graph.output.index])
            if not math.isfinite(loss):
                raise NumericError("학습 손실이 유한하지 않습니다.", epoch=epoch)
            total += loss * len(batch)
            param_grads = [
                grads[node.index] if grads[node.index] is not None else np.zeros_like(p)
                for node, p in zip(param_nodes, params)
            ]
            optimizer.step(params, param_grads)  # type: ignore[arg-type]
        epoch_loss = total / n_samples

    for index, param in enumerate(params):
        if not np.all(np.isfinite(param)):
            raise NumericError(
                "학습 후 파라미터가 유한하지 않습니다.", node=names[index], epoch=cfg.epochs - 1
            )

    logger.debug(
        "모델 학습 완료",
        kind=spec.kind.value,
        epochs=cfg.epochs,
        samples=n_samples,
        final_epoch_loss=epoch_loss,
    )
    return TrainedModel(
        spec=spec, parameters=tuple(_freeze(p) for p in params), seed=model.seed
    )
