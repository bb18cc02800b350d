from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from saliency_fs.models.gain import GainSpec
from saliency_fs.models.network import ModelSpec, TrainConfig


class SfsConfig(BaseModel):
    """SFS 랭커 설정"""

    gamma: float = Field(0.0, ge=0.0, lt=1.0, description="반복마다 유지할 살아있는 특징 비율")
    epsilon_stop: float = Field(1.0, ge=1.0, description="정지 기준 (살아있는 특징 수 하한)")
    reps: int = Field(3, ge=1, description="반복당 모델 학습 횟수")
    gain: GainSpec = Field(..., description="이득 함수 명세")
    model_spec: ModelSpec = Field(..., description="랭커 모델 명세")
    train_config: TrainConfig = Field(default_factory=TrainConfig, description="학습 설정")
    seed: int = Field(0, description="전체 실행 시드")

    model_config = ConfigDict(frozen=True)


class RankingIteration(BaseModel):
    """SFS 외부 반복 1회의 기록"""

    alive: int = Field(..., ge=1, description="살아있는 특징 수")
    features: List[int] = Field(..., description="정렬 전 살아있는 특징 인덱스")
    saliency: List[float] = Field(..., description="features 순서에 맞춘 누적 saliency")


class FeatureRanking(BaseModel):
    """특징 랭킹 결과 (가장 중요한 특징이 먼저)"""

    order: List[int] = Field(..., description="특징 인덱스 순열")
    history: List[RankingIteration] = Field(default_factory=list)
    n_trainings: int = Field(0, ge=0, description="수행한 모델 학습 횟수")
    feature_names: Optional[List[str]] = Field(None, description="특징 이름")

    @model_validator(mode="after")
    def _check_invariants(self) -> "FeatureRanking":
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError("order는 0..R-1의 순열이어야 합니다.")
        alive = [item.alive for item in self.history]
        if any(later >= earlier for earlier, later in zip(alive, alive[1:])):
            raise ValueError("살아있는 특징 수는 엄격하게 감소해야 합니다.")
        if self.feature_names is not None and len(self.feature_names) != len(
            self.order
        ):
            raise ValueError("feature_names 길이가 특징 수와 다릅니다.")
        return self

    @property
    def n_features(self) -> int:
        return len(self.order)

    def top_k(self, k: int) -> List[int]:
        return self.order[:k]
