from enum import Enum

from pydantic import BaseModel, ConfigDict, Field


class GainKind(str, Enum):
    """이득 함수 종류"""

    MSE_INVERSE = "mse_inverse"  # 회귀: alpha / (MSE + eps)
    CROSS_ENTROPY_COMPLEMENT = "cross_entropy_complement"  # 소프트맥스 분류기
    HINGE_LOG = "hinge_log"  # 선형 SVM 마진


class GainSpec(BaseModel):
    """이득 함수 명세"""

    kind: GainKind = Field(..., description="이득 함수 종류")
    alpha: float = Field(1.0, gt=0.0, description="곱셈 계수")
    epsilon: float = Field(1e-3, gt=0.0, lt=1.0, description="0 나눗셈/로그 방지 계수")

    model_config = ConfigDict(frozen=True)
