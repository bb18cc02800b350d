"""역방향 자동 미분 코어

설명: 조밀한 float64 텐서(numpy 배열) 위에서 동작하는 최소한의 역방향 자동 미분 엔진.
모델 파라미터뿐 아니라 입력 샘플에 대한 기울기를 돌려주는 것이 목적입니다.

그래프는 Wengert 리스트 형태로 구성 순서가 곧 위상 순서이며, 한 번 만든 그래프를
서로 다른 바인딩으로 여러 번 평가할 수 있습니다. 배치 차원은 ``None``으로 선언합니다.

규칙:
- 모든 연산 결과는 유한해야 하며, 아니면 노드 이름을 포함한 NumericError
- relu의 0에서의 기울기는 0
- clip 계열 노드는 역전파에서 기울기를 그대로(1배) 통과
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from saliency_fs.core.errors import (
    ContractError,
    NumericError,
    ParameterError,
    ShapeError,
)

Tensor = npt.NDArray[np.float64]
Shape = Tuple[Optional[int], ...]


class OpKind(str, Enum):
    """그래프 노드 연산 종류"""

    PLACEHOLDER = "placeholder"
    PARAMETER = "parameter"
    CONSTANT = "constant"
    MATMUL = "matmul"
    BIAS_ADD = "bias_add"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    SQUARE = "square"
    RELU = "relu"
    SOFTMAX_ROWS = "softmax_rows"
    LOG_SOFTMAX_ROWS = "log_softmax_rows"
    LOG = "log"
    SUM = "sum"
    SUM_ROWS = "sum_rows"
    MEAN = "mean"
    MEAN_ROWS = "mean_rows"
    AFFINE = "affine"
    RECIPROCAL = "reciprocal"
    CLIP_UPPER_ST = "clip_upper_straight_through"
    CLIP_INTERVAL_ST = "clip_interval_straight_through"


_LEAF_OPS = {OpKind.PLACEHOLDER, OpKind.PARAMETER, OpKind.CONSTANT}


@dataclass(frozen=True, eq=False)
class Node:
    index: int
    op: OpKind
    inputs: Tuple[int, ...] = ()
    name: str = ""
    shape: Optional[Shape] = None
    attrs: Mapping[str, float] = field(default_factory=dict)
    value: Optional[Tensor] = field(default=None, repr=False)

    @property
    def label(self) -> str:
        return self.name or f"{self.op.value}#{self.index}"


@dataclass
class GradientResult:
    """스칼라 출력의 기울기

    wrt_input: 지정한 입력 플레이스홀더에 대한 기울기 (입력과 같은 형상)
    wrt_params: 파라미터 이름별 기울기 (선언 순서)
    """

    value: float
    wrt_input: Tensor
    wrt_params: Dict[str, Tensor] = field(default_factory=dict)


def clip_interval_straight_through(x: Tensor, lo: float, hi: float) -> Tensor:
    """[lo, hi] 구간으로 자르는 값 (역전파에서는 항등)"""
    if not lo < hi:
        raise ParameterError(f"clip 구간은 lo < hi 여야 합니다: lo={lo}, hi={hi}")
    return np.clip(np.asarray(x, dtype=np.float64), lo, hi)


class ComputeGraph:
    """연산 노드를 구성 순서대로 기록하는 계산 그래프"""

    def __init__(self) -> None:
        self._nodes: List[Node] = []
        self._leaf_names: Dict[str, int] = {}
        self._output: Optional[int] = None

    @property
    def nodes(self) -> Tuple[Node, ...]:
        return tuple(self._nodes)

    @property
    def output(self) -> Node:
        if self._output is None:
            raise ContractError("출력 노드가 지정되지 않았습니다.")
        return self._nodes[self._output]

    @property
    def placeholders(self) -> List[Node]:
        return [node for node in self._nodes if node.op == OpKind.PLACEHOLDER]

    @property
    def parameters(self) -> List[Node]:
        return [node for node in self._nodes if node.op == OpKind.PARAMETER]

    def set_output(self, node: Node) -> Node:
        self._check_owned(node)
        self._output = node.index
        return node

    # leaf nodes

    def placeholder(self, name: str, shape: Sequence[Optional[int]]) -> Node:
        return self._add_leaf(OpKind.PLACEHOLDER, name, shape)

    def parameter(self, name: str, shape: Sequence[Optional[int]]) -> Node:
        return self._add_leaf(OpKind.PARAMETER, name, shape)

    def constant(self, value: npt.ArrayLike, name: str = "") -> Node:
        array = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NumericError("상수 노드에 비정상 수치가 있습니다.", node=name or None)
        return self._add(OpKind.CONSTANT, (), name=name, value=array)

    # primitive ops

    def matmul(self, a: Node, b: Node) -> Node:
        return self._add(OpKind.MATMUL, (a, b))

    def bias_add(self, x: Node, bias: Node) -> Node:
        return self._add(OpKind.BIAS_ADD, (x, bias))

    def add(self, a: Node, b: Node) -> Node:
        return self._add(OpKind.ADD, (a, b))

    def sub(self, a: Node, b: Node) -> Node:
        return self._add(OpKind.SUB, (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        return self._add(OpKind.MUL, (a, b))

    def square(self, x: Node) -> Node:
        return self._add(OpKind.SQUARE, (x,))

    def relu(self, x: Node) -> Node:
        return self._add(OpKind.RELU, (x,))

    def softmax_rows(self, x: Node) -> Node:
        return self._add(OpKind.SOFTMAX_ROWS, (x,))

    def log_softmax_rows(self, x: Node) -> Node:
        return self._add(OpKind.LOG_SOFTMAX_ROWS, (x,))

    def log(self, x: Node) -> Node:
        return self._add(OpKind.LOG, (x,))

    def sum(self, x: Node) -> Node:
        return self._add(OpKind.SUM, (x,))

    def sum_rows(self, x: Node) -> Node:
        return self._add(OpKind.SUM_ROWS, (x,))

    def mean(self, x: Node) -> Node:
        return self._add(OpKind.MEAN, (x,))

    def mean_rows(self, x: Node) -> Node:
        return self._add(OpKind.MEAN_ROWS, (x,))

    def affine(self, x: Node, scale: float, shift: float = 0.0) -> Node:
        return self._add(
            OpKind.AFFINE, (x,), attrs={"scale": float(scale), "shift": float(shift)}
        )

    def reciprocal(self, x: Node) -> Node:
        return self._add(OpKind.RECIPROCAL, (x,))

    def clip_upper_straight_through(self, x: Node, hi: float) -> Node:
        return self._add(OpKind.CLIP_UPPER_ST, (x,), attrs={"hi": float(hi)})

    def clip_interval_straight_through(self, x: Node, lo: float, hi: float) -> Node:
        if not lo < hi:
            raise ParameterError(f"clip 구간은 lo < hi 여야 합니다: lo={lo}, hi={hi}")
        return self._add(
            OpKind.CLIP_INTERVAL_ST, (x,), attrs={"lo": float(lo), "hi": float(hi)}
        )

    # internals

    def _add_leaf(self, op: OpKind, name: str, shape: Sequence[Optional[int]]) -> Node:
        if not name:
            raise ContractError("플레이스홀더/파라미터에는 이름이 필요합니다.")
        if name in self._leaf_names:
            raise ContractError(f"중복된 노드 이름: {name}")
        node = self._add(op, (), name=name, shape=tuple(shape))
        self._leaf_names[name] = node.index
        return node

    def _add(
        self,
        op: OpKind,
        inputs: Tuple[Node, ...],
        *,
        name: str = "",
        shape: Optional[Shape] = None,
        attrs: Optional[Mapping[str, float]] = None,
        value: Optional[Tensor] = None,
    ) -> Node:
        for parent in inputs:
            self._check_owned(parent)
        node = Node(
            index=len(self._nodes),
            op=op,
            inputs=tuple(parent.index for parent in inputs),
            name=name,
            shape=shape,
            attrs=dict(attrs or {}),
            value=value,
        )
        self._nodes.append(node)
        return node

    def _check_owned(self, node: Node) -> None:
        if node.index >= len(self._nodes) or self._nodes[node.index] is not node:
            raise ContractError("다른 그래프의 노드는 사용할 수 없습니다.")


Bindings = Mapping[str, npt.ArrayLike]


def _bind(node: Node, bindings: Bindings) -> Tensor:
    if node.name not in bindings:
        raise ShapeError(f"바인딩 누락: {node.name}")
    array = np.asarray(bindings[node.name], dtype=np.float64)
    expected = node.shape or ()
    if array.ndim != len(expected) or any(
        dim is not None and dim != actual for dim, actual in zip(expected, array.shape)
    ):
        raise ShapeError(
            f"바인딩 형상 불일치: {node.name} 기대={expected}, 실제={array.shape}"
        )
    return array


def _require_same_shape(node: Node, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{node.label}: 형상 불일치 {a.shape} vs {b.shape}")


def _require_matrix(node: Node, a: Tensor) -> None:
    if a.ndim != 2:
        raise ShapeError(f"{node.label}: 2차원 입력이 필요합니다 (실제 {a.shape})")


def _softmax(a: Tensor) -> Tensor:
    shifted = a - a.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def _fw_matmul(node: Node, a: Tensor, b: Tensor) -> Tensor:
    _require_matrix(node, a)
    _require_matrix(node, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"{node.label}: 행렬곱 형상 불일치 {a.shape} @ {b.shape}")
    return a @ b


def _fw_bias_add(node: Node, x: Tensor, bias: Tensor) -> Tensor:
    _require_matrix(node, x)
    if bias.shape != (x.shape[1],):
        raise ShapeError(f"{node.label}: 바이어스 형상 불일치 {x.shape} + {bias.shape}")
    return x + bias


def _fw_elementwise(fn: Callable[[Tensor, Tensor], Tensor]) -> Callable[..., Tensor]:
    def forward(node: Node, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape(node, a, b)
        return fn(a, b)

    return forward


def _fw_softmax_rows(node: Node, a: Tensor) -> Tensor:
    _require_matrix(node, a)
    return _softmax(a)


def _fw_log_softmax_rows(node: Node, a: Tensor) -> Tensor:
    _require_matrix(node, a)
    shifted = a - a.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _fw_rows(fn: Callable[[Tensor], Tensor]) -> Callable[..., Tensor]:
    def forward(node: Node, a: Tensor) -> Tensor:
        _require_matrix(node, a)
        return fn(a)

    return forward


_FORWARD: Dict[OpKind, Callable[..., Tensor]] = {
    OpKind.MATMUL: _fw_matmul,
    OpKind.BIAS_ADD: _fw_bias_add,
    OpKind.ADD: _fw_elementwise(np.add),
    OpKind.SUB: _fw_elementwise(np.subtract),
    OpKind.MUL: _fw_elementwise(np.multiply),
    OpKind.SQUARE: lambda node, a: a * a,
    OpKind.RELU: lambda node, a: np.where(a > 0.0, a, 0.0),
    OpKind.SOFTMAX_ROWS: _fw_softmax_rows,
    OpKind.LOG_SOFTMAX_ROWS: _fw_log_softmax_rows,
    OpKind.LOG: lambda node, a: np.log(a),
    OpKind.SUM: lambda node, a: np.asarray(a.sum()),
    OpKind.SUM_ROWS: _fw_rows(lambda a: a.sum(axis=1)),
    OpKind.MEAN: lambda node, a: np.asarray(a.mean()),
    OpKind.MEAN_ROWS: _fw_rows(lambda a: a.mean(axis=1)),
    OpKind.AFFINE: lambda node, a: node.attrs["scale"] * a + node.attrs["shift"],
    OpKind.RECIPROCAL: lambda node, a: 1.0 / a,
    OpKind.CLIP_UPPER_ST: lambda node, a: np.minimum(a, node.attrs["hi"]),
    OpKind.CLIP_INTERVAL_ST: lambda node, a: np.clip(
        a, node.attrs["lo"], node.attrs["hi"]
    ),
}


def _bw_softmax_rows(g: Tensor, a: Tensor, out: Tensor) -> Tensor:
    return out * (g - (g * out).sum(axis=1, keepdims=True))


def _bw_log_softmax_rows(g: Tensor, a: Tensor, out: Tensor) -> Tensor:
    return g - np.exp(out) * g.sum(axis=1, keepdims=True)


# 각 연산의 입력별 기울기: (node, 상류 기울기, 입력 값들, 출력 값) -> 입력별 기울기
_BACKWARD: Dict[OpKind, Callable[..., Tuple[Tensor, ...]]] = {
    OpKind.MATMUL: lambda node, g, ins, out: (g @ ins[1].T, ins[0].T @ g),
    OpKind.BIAS_ADD: lambda node, g, ins, out: (g, g.sum(axis=0)),
    OpKind.ADD: lambda node, g, ins, out: (g, g),
    OpKind.SUB: lambda node, g, ins, out: (g, -g),
    OpKind.MUL: lambda node, g, ins, out: (g * ins[1], g * ins[0]),
    OpKind.SQUARE: lambda node, g, ins, out: (2.0 * ins[0] * g,),
    OpKind.RELU: lambda node, g, ins, out: (np.where(ins[0] > 0.0, g, 0.0),),
    OpKind.SOFTMAX_ROWS: lambda node, g, ins, out: (
        _bw_softmax_rows(g, ins[0], out),
    ),
    OpKind.LOG_SOFTMAX_ROWS: lambda node, g, ins, out: (
        _bw_log_softmax_rows(g, ins[0], out),
    ),
    OpKind.LOG: lambda node, g, ins, out: (g / ins[0],),
    OpKind.SUM: lambda node, g, ins, out: (np.full_like(ins[0], g),),
    OpKind.SUM_ROWS: lambda node, g, ins, out: (
        np.broadcast_to(g[:, None], ins[0].shape).copy(),
    ),
    OpKind.MEAN: lambda node, g, ins, out: (np.full_like(ins[0], g / ins[0].size),),
    OpKind.MEAN_ROWS: lambda node, g, ins, out: (
        np.broadcast_to(g[:, None] / ins[0].shape[1], ins[0].shape).copy(),
    ),
    OpKind.AFFINE: lambda node, g, ins, out: (node.attrs["scale"] * g,),
    OpKind.RECIPROCAL: lambda node, g, ins, out: (-g * out * out,),
    OpKind.CLIP_UPPER_ST: lambda node, g, ins, out: (g,),
    OpKind.CLIP_INTERVAL_ST: lambda node, g, ins, out: (g,),
}


def forward_values(graph: ComputeGraph, bindings: Bindings) -> List[Tensor]:
    """모든 노드 값을 구성 순서대로 계산합니다."""
    values: List[Tensor] = []
    with np.errstate(all="ignore"):
        for node in graph.nodes:
            if node.op in (OpKind.PLACEHOLDER, OpKind.PARAMETER):
                value = _bind(node, bindings)
            elif node.op == OpKind.CONSTANT:
                assert node.value is not None
                value = node.value
            else:
                value = _FORWARD[node.op](node, *(values[i] for i in node.inputs))
            if not np.all(np.isfinite(value)):
                raise NumericError("순전파 중 비정상 수치 발생", node=node.label)
            values.append(value)
    return values


def evaluate(graph: ComputeGraph, bindings: Bindings) -> Tensor:
    """지정된 출력 노드의 값을 반환합니다."""
    output = graph.output
    return forward_values(graph, bindings)[output.index]


def backward_from_values(
    graph: ComputeGraph, values: Sequence[Tensor]
) -> List[Optional[Tensor]]:
    """순전파 값으로부터 모든 노드에 대한 스칼라 출력의 기울기를 계산합니다."""
    output = graph.output
    if values[output.index].size != 1:
        raise ContractError(
            f"기울기는 스칼라 출력에서만 계산할 수 있습니다 (형상 {values[output.index].shape})"
        )

    grads: List[Optional[Tensor]] = [None] * len(values)
    grads[output.index] = np.ones_like(values[output.index])
    nodes = graph.nodes
    with np.errstate(all="ignore"):
        for node in reversed(nodes[: output.index + 1]):
            upstream = grads[node.index]
            if upstream is None or node.op in _LEAF_OPS:
                continue
            inputs = [values[i] for i in node.inputs]
            local = _BACKWARD[node.op](node, upstream, inputs, values[node.index])
            for parent, grad in zip(node.inputs, local):
                current = grads[parent]
                grads[parent] = grad if current is None else current + grad
            if any(
                grads[parent] is not None and not np.all(np.isfinite(grads[parent]))
                for parent in node.inputs
            ):
                raise NumericError("역전파 중 비정상 수치 발생", node=node.label)
    return grads


def input_gradient(
    graph: ComputeGraph, bindings: Bindings, input_name: str = "x"
) -> GradientResult:
    """스칼라 출력의 입력 샘플 및 모든 파라미터에 대한 기울기를 계산합니다."""
    values = forward_values(graph, bindings)
    grads = backward_from_values(graph, values)

    target = next(
        (node for node in graph.placeholders if node.name == input_name), None
    )
    if target is None:
        raise ContractError(f"입력 플레이스홀더가 없습니다: {input_name}")

    def _grad_or_zeros(node: Node) -> Tensor:
        grad = grads[node.index]
        return np.zeros_like(values[node.index]) if grad is None else grad

    return GradientResult(
        value=float(values[graph.output.index].reshape(-1)[0]),
        wrt_input=_grad_or_zeros(target),
        wrt_params={node.name: _grad_or_zeros(node) for node in graph.parameters},
    )
