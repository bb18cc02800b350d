from enum import Enum
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ModelKind(str, Enum):
    """예측 모델 종류"""

    SOFTMAX_LINEAR = "softmax_linear"  # 소프트맥스 선형 분류기
    MLP_CLASSIFIER = "mlp_classifier"  # 다층 퍼셉트론 분류기
    MLP_REGRESSOR = "mlp_regressor"  # 다층 퍼셉트론 회귀기
    LINEAR_SVM = "linear_svm"  # 힌지 손실 선형 다중 클래스 SVM


class LossKind(str, Enum):
    """학습 손실 종류"""

    CATEGORICAL_CROSS_ENTROPY = "categorical_cross_entropy"
    MSE = "mse"
    HINGE = "hinge"


class OptimizerKind(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


_LINEAR_KINDS = {ModelKind.SOFTMAX_LINEAR, ModelKind.LINEAR_SVM}
_CLASSIFIER_KINDS = {
    ModelKind.SOFTMAX_LINEAR,
    ModelKind.MLP_CLASSIFIER,
    ModelKind.LINEAR_SVM,
}

DEFAULT_HIDDEN_LAYERS = [150, 100, 50]


class ModelSpec(BaseModel):
    """모델 구조 명세"""

    kind: ModelKind = Field(..., description="모델 종류")
    input_dim: int = Field(..., ge=1, description="입력 특징 수 R")
    output_dim: int = Field(..., ge=1, description="출력 차원 C (회귀는 1)")
    hidden_layers: List[int] = Field(
        default_factory=list, description="은닉층 폭 목록 (선형 모델은 빈 목록)"
    )
    l2_weight_decay: float = Field(0.001, ge=0.0, description="L2 가중치 감쇠 계수")
    activation: Literal["relu"] = Field("relu", description="은닉층 활성화 함수")

    model_config = ConfigDict(frozen=True)

    @field_validator("hidden_layers")
    @classmethod
    def _positive_widths(cls, widths: List[int]) -> List[int]:
        if any(width <= 0 for width in widths):
            raise ValueError("은닉층 폭은 양수여야 합니다.")
        return widths

    @model_validator(mode="after")
    def _check_kind(self) -> "ModelSpec":
        if self.kind in _LINEAR_KINDS and self.hidden_layers:
            raise ValueError(f"{self.kind.value} 모델은 은닉층을 가질 수 없습니다.")
        if self.kind in _CLASSIFIER_KINDS and self.output_dim < 2:
            raise ValueError("분류기는 최소 2개 클래스가 필요합니다.")
        if self.kind == ModelKind.MLP_REGRESSOR and self.output_dim != 1:
            raise ValueError("회귀기의 출력 차원은 1이어야 합니다.")
        return self

    @property
    def is_classifier(self) -> bool:
        return self.kind in _CLASSIFIER_KINDS

    @property
    def loss_kind(self) -> LossKind:
        if self.kind == ModelKind.LINEAR_SVM:
            return LossKind.HINGE
        if self.kind == ModelKind.MLP_REGRESSOR:
            return LossKind.MSE
        return LossKind.CATEGORICAL_CROSS_ENTROPY

    @property
    def layer_dims(self) -> List[int]:
        """입력부터 출력까지의 층 폭"""
        return [self.input_dim, *self.hidden_layers, self.output_dim]

    def with_input_dim(self, input_dim: int) -> "ModelSpec":
        return self.model_copy(update={"input_dim": input_dim})


def default_model_spec(kind: ModelKind, input_dim: int, output_dim: int) -> ModelSpec:
    """기본 모델 명세 (MLP 계열은 150/100/50 은닉층)"""
    hidden = (
        list(DEFAULT_HIDDEN_LAYERS)
        if kind in {ModelKind.MLP_CLASSIFIER, ModelKind.MLP_REGRESSOR}
        else []
    )
    return ModelSpec(
        kind=kind, input_dim=input_dim, output_dim=output_dim, hidden_layers=hidden
    )


class TrainConfig(BaseModel):
    """학습 설정"""

    epochs: int = Field(100, ge=0, description="에폭 수")
    batch_size: int = Field(32, ge=1, description="미니배치 크기")
    optimizer: OptimizerKind = Field(OptimizerKind.ADAM, description="옵티마이저")
    learning_rate: float = Field(1e-3, gt=0.0, description="학습률")
    adam_beta1: float = Field(0.9, gt=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, gt=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    input_noise_std: float = Field(
        0.0, ge=0.0, description="학습 중 입력에 더하는 가우시안 잡음 표준편차"
    )
    seed: int = Field(0, description="미니배치 셔플/잡음 시드")

    model_config = ConfigDict(frozen=True)
