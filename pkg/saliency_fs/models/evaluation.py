from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class Metric(str, Enum):
    ACCURACY = "accuracy"
    MAE = "mae"


class FeatureCurve(BaseModel):
    """사용 특징 수(k)별 점수 곡선"""

    ks: List[int] = Field(..., description="유지한 특징 수 목록")
    scores: List[float] = Field(..., description="k별 점수")
    metric: Metric = Field(..., description="점수 지표")
    ranker_desc: str = Field("", description="랭커 설명")
    classifier_desc: str = Field("", description="평가 모델 설명")

    @model_validator(mode="after")
    def _check_curve(self) -> "FeatureCurve":
        if len(self.ks) != len(self.scores):
            raise ValueError("ks와 scores 길이가 다릅니다.")
        if any(later <= earlier for earlier, later in zip(self.ks, self.ks[1:])):
            raise ValueError("ks는 엄격하게 증가해야 합니다.")
        if self.metric == Metric.ACCURACY and any(
            not 0.0 <= value <= 1.0 for value in self.scores
        ):
            raise ValueError("정확도는 [0, 1] 범위여야 합니다.")
        if self.metric == Metric.MAE and any(value < 0.0 for value in self.scores):
            raise ValueError("MAE는 음수일 수 없습니다.")
        return self


class RegularizationPoint(BaseModel):
    """랭커 L2 강도별 상위 k 특징 점수"""

    l2_weight_decay: float = Field(..., ge=0.0, description="랭커 모델의 L2 가중치 감쇠")
    k: int = Field(..., ge=1, description="사용한 상위 특징 수")
    score: float = Field(..., description="평가 점수")
    metric: Metric = Field(..., description="점수 지표")
    precision_at_k: Optional[float] = Field(None, description="관련 특징 정밀도 (정답 마스크가 있을 때)")
