from typing import Any, ClassVar, Dict, List

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """실행 매니페스트 (결과 파일의 출처 정보)"""

    command: str = Field(..., description="실행한 하위 명령")
    config: Dict[str, Any] = Field(default_factory=dict, description="해석된 설정 스냅샷")
    seeds: Dict[str, int] = Field(default_factory=dict, description="사용한 시드")
    input_digests: Dict[str, str] = Field(
        default_factory=dict, description="입력 파일 SHA-256"
    )
    tool_version: str = Field(..., description="툴 버전")
    outputs: List[str] = Field(default_factory=list, description="생성한 결과 파일")
    started_at: str = Field(..., description="시작 시각 (UTC, ISO 8601)")
    duration_seconds: float = Field(0.0, ge=0.0, description="소요 시간 (초)")

    # 결정성 비교에서 제외되는 필드
    WALL_CLOCK_FIELDS: ClassVar[tuple[str, ...]] = ("started_at", "duration_seconds")

    def deterministic_dump(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json")
        for field in self.WALL_CLOCK_FIELDS:
            data.pop(field, None)
        return data
