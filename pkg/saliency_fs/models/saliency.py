from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class PerturbationMode(str, Enum):
    """적대적 섭동 스텝 방식"""

    RAW_GRADIENT = "raw_gradient"  # L2 정규화된 기울기 방향
    SIGN_GRADIENT = "sign_gradient"  # 기울기 부호 (FGSM 계열)


class AdversarialConfig(BaseModel):
    """적대적 섭동 설정"""

    target_class: int = Field(..., ge=0, description="목표 클래스")
    confidence_threshold: float = Field(
        0.95, gt=0.0, lt=1.0, description="목표 클래스 확률 도달 기준"
    )
    step_size: float = Field(0.05, ge=0.0, description="스텝 크기")
    max_iters: int = Field(500, ge=1, description="최대 반복 횟수")
    perturbation_mode: PerturbationMode = Field(PerturbationMode.RAW_GRADIENT)
    clamp_box: Optional[List[Tuple[float, float]]] = Field(
        None, description="특징별 [lo, hi] 범위"
    )

    model_config = ConfigDict(frozen=True)

    @field_validator("clamp_box")
    @classmethod
    def _valid_box(
        cls, box: Optional[List[Tuple[float, float]]]
    ) -> Optional[List[Tuple[float, float]]]:
        if box is not None and any(lo > hi for lo, hi in box):
            raise ValueError("clamp_box 구간은 lo <= hi 여야 합니다.")
        return box
