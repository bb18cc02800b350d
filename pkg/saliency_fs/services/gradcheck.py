"""유한 차분 기울기 검사

설명: 역방향 자동 미분으로 구한 기울기를 중심 차분 (f(x+h) - f(x-h)) / 2h 와 비교합니다.
relu 입력의 부호가 두 평가점 사이에서 바뀌거나 straight-through clip이 실제로 값을 자르는
좌표는 유한 차분이 정의상 다르므로 건너뛰고, 검사할 좌표가 하나도 없는 사례는 다음
시드로 다시 뽑습니다.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from saliency_fs.core.errors import ContractError
from saliency_fs.core.logging_config import get_logger
from saliency_fs.models.gain import GainKind, GainSpec
from saliency_fs.models.network import LossKind, ModelKind, ModelSpec
from saliency_fs.services.diffcore import (
    ComputeGraph,
    Node,
    OpKind,
    Tensor,
    forward_values,
    input_gradient,
)
from saliency_fs.services.gain_functions import build_gain, gain_kind_for
from saliency_fs.services.network_service import build_loss, build_network, init_model

logger = get_logger(__name__)

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-4
# 0으로 나누기만 막는 분모 하한
RELATIVE_FLOOR = 1e-8
# 이 값 이하의 절대 차이는 중심 차분 잡음으로 보고 일치로 처리
ABSOLUTE_TOLERANCE = 1e-8
MAX_RESAMPLES = 10

Bindings = Dict[str, Tensor]


@dataclass
class GradCase:
    name: str
    graph: ComputeGraph
    bindings: Bindings
    wrt: List[str] = field(default_factory=lambda: ["x"])


@dataclass
class CaseResult:
    name: str
    max_relative_error: float
    checked: int
    skipped: int
    seed: int


@dataclass
class GradCheckReport:
    cases: List[CaseResult]
    tolerance: float

    @property
    def max_relative_error(self) -> float:
        return max((case.max_relative_error for case in self.cases), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance

    @property
    def worst_case(self) -> Optional[CaseResult]:
        return max(self.cases, key=lambda case: case.max_relative_error, default=None)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_FLOOR)


def coordinate_error(analytic: float, numeric: float) -> float:
    """좌표 하나의 오차. 절대 차이가 ABSOLUTE_TOLERANCE 이하이면 0입니다."""
    if abs(analytic - numeric) <= ABSOLUTE_TOLERANCE:
        return 0.0
    return relative_error(analytic, numeric)


def _kink_crossed(graph: ComputeGraph, plus: List[Tensor], minus: List[Tensor]) -> bool:
    for node in graph.nodes:
        if node.op == OpKind.RELU:
            a, b = plus[node.inputs[0]], minus[node.inputs[0]]
            if np.any(np.sign(a) != np.sign(b)) or np.any(a == 0.0) or np.any(b == 0.0):
                return True
        elif node.op in (OpKind.CLIP_UPPER_ST, OpKind.CLIP_INTERVAL_ST):
            lo = node.attrs.get("lo", -np.inf)
            hi = node.attrs["hi"]
            for values in (plus, minus):
                inputs = values[node.inputs[0]]
                if np.any(inputs > hi) or np.any(inputs < lo):
                    return True
    return False


def check_case(
    case: GradCase,
    step: float = DEFAULT_STEP,
    max_coordinates: int = 24,
    seed: int = 0,
) -> CaseResult:
    """한 사례의 지정된 바인딩 좌표를 유한 차분으로 검사합니다."""
    first_input = case.wrt[0]
    analytic = input_gradient(case.graph, case.bindings, input_name=first_input)
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = skipped = 0

    for name in case.wrt:
        base = case.bindings[name]
        grad = analytic.wrt_input if name == first_input else analytic.wrt_params.get(name)
        if grad is None:
            grad = input_gradient(case.graph, case.bindings, input_name=name).wrt_input
        coordinates = np.arange(base.size)
        if base.size > max_coordinates:
            coordinates = np.sort(rng.choice(base.size, size=max_coordinates, replace=False))
        for flat in coordinates:
            plus_value = base.copy()
            minus_value = base.copy()
            plus_value.reshape(-1)[flat] += step
            minus_value.reshape(-1)[flat] -= step
            plus = forward_values(case.graph, {**case.bindings, name: plus_value})
            minus = forward_values(case.graph, {**case.bindings, name: minus_value})
            if _kink_crossed(case.graph, plus, minus):
                skipped += 1
                continue
            out = case.graph.output.index
            numeric = (float(plus[out].reshape(-1)[0]) - float(minus[out].reshape(-1)[0])) / (
                2.0 * step
            )
            worst = max(worst, coordinate_error(float(grad.reshape(-1)[flat]), numeric))
            checked += 1
    return CaseResult(
        name=case.name, max_relative_error=worst, checked=checked, skipped=skipped, seed=seed
    )


def _scalarize(graph: ComputeGraph, node: Node, bindings: Bindings, rng: np.random.Generator) -> None:
    values = forward_values(graph, bindings)
    weights = graph.constant(rng.uniform(0.5, 1.5, size=values[node.index].shape))
    graph.set_output(graph.sum(graph.mul(node, weights)))


def _op_case(op: OpKind, rng: np.random.Generator) -> GradCase:
    rows, cols = 3, 4
    graph = ComputeGraph()
    x = graph.placeholder("x", (None, cols))
    bindings: Bindings = {"x": rng.standard_normal((rows, cols))}
    other = rng.standard_normal((rows, cols))

    if op == OpKind.MATMUL:
        weight = graph.parameter("W", (cols, 5))
        bindings["W"] = rng.standard_normal((cols, 5))
        node = graph.matmul(x, weight)
    elif op == OpKind.BIAS_ADD:
        bias = graph.parameter("b", (cols,))
        bindings["b"] = rng.standard_normal(cols)
        node = graph.bias_add(x, bias)
    elif op in (OpKind.ADD, OpKind.SUB, OpKind.MUL):
        z = graph.placeholder("z", (None, cols))
        bindings["z"] = other
        method = {OpKind.ADD: graph.add, OpKind.SUB: graph.sub, OpKind.MUL: graph.mul}[op]
        node = method(x, z)
    elif op in (OpKind.LOG, OpKind.RECIPROCAL):
        bindings["x"] = rng.uniform(0.5, 2.0, size=(rows, cols))
        node = graph.log(x) if op == OpKind.LOG else graph.reciprocal(x)
    elif op == OpKind.AFFINE:
        node = graph.affine(x, float(rng.uniform(-2.0, 2.0)), float(rng.uniform(-1.0, 1.0)))
    elif op == OpKind.CLIP_UPPER_ST:
        node = graph.clip_upper_straight_through(graph.square(x), 4.0)
    elif op == OpKind.CLIP_INTERVAL_ST:
        node = graph.clip_interval_straight_through(x, -2.5, 2.5)
    else:
        unary = {
            OpKind.SQUARE: graph.square,
            OpKind.RELU: graph.relu,
            OpKind.SOFTMAX_ROWS: graph.softmax_rows,
            OpKind.LOG_SOFTMAX_ROWS: graph.log_softmax_rows,
            OpKind.SUM: graph.sum,
            OpKind.SUM_ROWS: graph.sum_rows,
            OpKind.MEAN: graph.mean,
            OpKind.MEAN_ROWS: graph.mean_rows,
        }
        node = unary[op](x)
    _scalarize(graph, node, bindings, rng)
    wrt = ["x"] + [name for name in ("W", "b") if name in bindings]
    return GradCase(name=f"op:{op.value}", graph=graph, bindings=bindings, wrt=wrt)


CHECKED_OPS: Tuple[OpKind, ...] = tuple(
    op for op in OpKind if op not in (OpKind.PLACEHOLDER, OpKind.PARAMETER, OpKind.CONSTANT)
)


def _small_spec(kind: ModelKind) -> ModelSpec:
    hidden = [6, 4] if kind in (ModelKind.MLP_CLASSIFIER, ModelKind.MLP_REGRESSOR) else []
    output_dim = 1 if kind == ModelKind.MLP_REGRESSOR else 3
    return ModelSpec(kind=kind, input_dim=5, output_dim=output_dim, hidden_layers=hidden)


def _targets(spec: ModelSpec, rows: int, rng: np.random.Generator) -> Tensor:
    if not spec.is_classifier:
        return rng.standard_normal((rows, 1))
    targets = np.zeros((rows, spec.output_dim))
    targets[np.arange(rows), rng.integers(0, spec.output_dim, size=rows)] = 1.0
    return targets


def _model_case(kind: ModelKind, objective: str, rng: np.random.Generator) -> GradCase:
    spec = _small_spec(kind)
    model = init_model(spec, int(rng.integers(0, 2**31)))
    rows = 4
    # 마진이 clip 구간 [-1, 1] 안에 머물도록 입력 크기를 줄임
    input_scale = 0.2 if spec.loss_kind == LossKind.HINGE else 1.0
    graph = ComputeGraph()
    x = graph.placeholder("x", (None, spec.input_dim))
    y = graph.placeholder("y", (None, spec.output_dim))
    nodes = build_network(graph, spec, x)
    if objective == "loss":
        graph.set_output(build_loss(graph, spec, nodes, y))
        wrt = ["x", *model.parameter_names]
    else:
        gain = GainSpec(kind=gain_kind_for(spec.loss_kind))
        graph.set_output(build_gain(graph, gain, nodes.output, y, per_sample=True))
        wrt = ["x"]
    bindings: Bindings = {
        "x": input_scale * rng.standard_normal((rows, spec.input_dim)),
        "y": _targets(spec, rows, rng),
        **{name: np.array(p) for name, p in model.bindings().items()},
    }
    return GradCase(name=f"model:{kind.value}:{objective}", graph=graph, bindings=bindings, wrt=wrt)


def _gain_case(kind: GainKind, rng: np.random.Generator) -> GradCase:
    rows, cols = 4, 3
    graph = ComputeGraph()
    pred = graph.placeholder("x", (None, cols if kind != GainKind.MSE_INVERSE else 1))
    target = graph.placeholder("y", (None, cols if kind != GainKind.MSE_INVERSE else 1))
    spec = GainSpec(kind=kind, alpha=float(rng.uniform(0.5, 2.0)))
    graph.set_output(build_gain(graph, spec, pred, target))
    if kind == GainKind.MSE_INVERSE:
        bindings: Bindings = {"x": rng.standard_normal((rows, 1)), "y": rng.standard_normal((rows, 1))}
    else:
        labels = np.zeros((rows, cols))
        labels[np.arange(rows), rng.integers(0, cols, size=rows)] = 1.0
        if kind == GainKind.CROSS_ENTROPY_COMPLEMENT:
            logits = rng.standard_normal((rows, cols))
            probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
            bindings = {"x": probs, "y": labels}
        else:
            bindings = {"x": rng.uniform(-0.9, 0.9, size=(rows, cols)), "y": labels}
    return GradCase(name=f"gain:{kind.value}", graph=graph, bindings=bindings)


CaseFactory = Callable[[np.random.Generator], GradCase]


def case_factories() -> List[CaseFactory]:
    factories: List[CaseFactory] = [
        (lambda rng, op=op: _op_case(op, rng)) for op in CHECKED_OPS
    ]
    for kind in ModelKind:
        for objective in ("loss", "gain"):
            factories.append(lambda rng, kind=kind, objective=objective: _model_case(kind, objective, rng))
    for gain_kind in GainKind:
        factories.append(lambda rng, gain_kind=gain_kind: _gain_case(gain_kind, rng))
    return factories


def run_gradcheck(
    seed: int = 0,
    rounds: int = 4,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    factories: Optional[Sequence[CaseFactory]] = None,
) -> GradCheckReport:
    """모든 연산, 모델 종류, 이득 함수에 대해 무작위 사례를 검사합니다."""
    if rounds < 1:
        raise ContractError("rounds는 1 이상이어야 합니다.")
    results: List[CaseResult] = []
    for round_index in range(rounds):
        for factory_index, factory in enumerate(factories or case_factories()):
            result: Optional[CaseResult] = None
            for attempt in range(MAX_RESAMPLES):
                case_seed = int(
                    np.random.SeedSequence(
                        int(seed) % 2**63, spawn_key=(round_index, factory_index, attempt)
                    ).generate_state(1)[0]
                )
                rng = np.random.default_rng(case_seed)
                result = check_case(factory(rng), step=step, seed=case_seed)
                if result.checked > 0:
                    break
            assert result is not None
            if result.checked == 0:
                raise ContractError(f"검사 가능한 좌표가 없습니다: {result.name}")
            results.append(result)

    report = GradCheckReport(cases=results, tolerance=tolerance)
    logger.info(
        "기울기 검사 완료",
        cases=len(results),
        max_relative_error=report.max_relative_error,
        passed=report.passed,
    )
    return report
