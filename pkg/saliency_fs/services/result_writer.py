"""결과 파일 저장

설명: 모든 결과 파일은 같은 디렉터리의 임시 파일에 쓴 뒤 os.replace로 교체합니다.
실패한 명령은 부분 결과 파일을 남기지 않습니다. JSON 결과에는 "manifest" 키, CSV 결과에는
``# manifest=<이름>`` 첫 줄로 매니페스트를 참조합니다.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd

from saliency_fs.core.logging_config import get_logger
from saliency_fs.models.evaluation import FeatureCurve
from saliency_fs.models.run import RunManifest
from saliency_fs.models.selection import FeatureRanking

logger = get_logger(__name__)

PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def with_manifest_header(csv_body: str, manifest_name: Optional[str]) -> str:
    if not manifest_name:
        return csv_body
    return f"# manifest={manifest_name}\n{csv_body}"


def write_json(path: PathLike, payload: Mapping[str, Any], manifest_name: Optional[str] = None) -> Path:
    data: Dict[str, Any] = dict(payload)
    if manifest_name:
        data = {"manifest": manifest_name, **data}
    text = json.dumps(data, indent=2, sort_keys=False, ensure_ascii=False) + "\n"
    return atomic_write_text(path, text)


def write_csv(path: PathLike, frame: pd.DataFrame, manifest_name: Optional[str] = None) -> Path:
    body = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    return atomic_write_text(path, with_manifest_header(body, manifest_name))


def file_digest(path: PathLike) -> str:
    """SHA-256 16진 문자열"""
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def ranking_payload(ranking: FeatureRanking, config: Mapping[str, Any]) -> Dict[str, Any]:
    return {
        "order": ranking.order,
        "feature_names": ranking.feature_names,
        "n_trainings": ranking.n_trainings,
        "history": [item.model_dump(mode="json") for item in ranking.history],
        "config": dict(config),
    }


def ranking_frame(ranking: FeatureRanking) -> pd.DataFrame:
    names = ranking.feature_names or [f"f{index}" for index in range(ranking.n_features)]
    return pd.DataFrame(
        {
            "rank": list(range(1, ranking.n_features + 1)),
            "feature_index": ranking.order,
            "feature_name": [names[index] for index in ranking.order],
        }
    )


def load_ranking(path: PathLike) -> FeatureRanking:
    """ranking_payload 형식으로 저장한 랭킹 JSON을 다시 읽습니다."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return FeatureRanking.model_validate(
        {
            key: payload[key]
            for key in ("order", "history", "n_trainings", "feature_names")
            if key in payload
        }
    )


def curve_frame(curves: Sequence[FeatureCurve]) -> pd.DataFrame:
    rows: List[Dict[str, Any]] = []
    for curve in curves:
        for k, score in zip(curve.ks, curve.scores):
            rows.append(
                {
                    "ranker": curve.ranker_desc,
                    "k": k,
                    "score": score,
                    "metric": curve.metric.value,
                }
            )
    return pd.DataFrame(rows, columns=["ranker", "k", "score", "metric"])


def saliency_frame(per_sample: Any, feature_names: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(per_sample, columns=list(feature_names))


class RunRecorder:
    """한 번의 CLI 실행에서 만든 결과 파일과 매니페스트를 관리합니다.

    with 블록 안에서 예외가 나면 이번 실행에서 쓴 파일을 모두 지웁니다.
    """

    def __init__(
        self,
        command: str,
        output_dir: PathLike,
        tool_version: str,
        manifest_name: Optional[str] = None,
    ) -> None:
        self.command = command
        self.output_dir = Path(output_dir)
        self.tool_version = tool_version
        self.manifest_name = manifest_name or f"{command}_manifest.json"
        self.started_at = utc_now_iso()
        self._started = datetime.now(timezone.utc)
        self.outputs: List[str] = []
        self.input_digests: Dict[str, str] = {}
        self._written: List[Path] = []

    def __enter__(self) -> "RunRecorder":
        return self

    def __exit__(self, exc_type: Any, exc: Any, tb: Any) -> None:
        if exc_type is not None:
            self.discard()

    def discard(self) -> None:
        for path in reversed(self._written):
            path.unlink(missing_ok=True)
        if self._written:
            logger.warning(
                "실패한 실행의 결과 파일 삭제",
                command=self.command,
                files=[path.name for path in self._written],
            )
        self._written.clear()
        self.outputs.clear()

    def _track(self, path: Path) -> Path:
        self._written.append(path)
        self.outputs.append(path.name)
        return path

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def record_input(self, path: PathLike) -> None:
        self.input_digests[str(path)] = file_digest(path)

    def json(self, name: str, payload: Mapping[str, Any]) -> Path:
        return self._track(write_json(self.path(name), payload, self.manifest_name))

    def csv(self, name: str, frame: pd.DataFrame) -> Path:
        return self._track(write_csv(self.path(name), frame, self.manifest_name))

    def add_output(self, path: PathLike) -> None:
        self._track(Path(path))

    def finish(self, config: Mapping[str, Any], seeds: Mapping[str, int]) -> Path:
        duration = (datetime.now(timezone.utc) - self._started).total_seconds()
        manifest = RunManifest(
            command=self.command,
            config=dict(config),
            seeds=dict(seeds),
            input_digests=dict(self.input_digests),
            tool_version=self.tool_version,
            outputs=list(self.outputs),
            started_at=self.started_at,
            duration_seconds=max(duration, 0.0),
        )
        written = write_json(self.path(self.manifest_name), manifest.model_dump(mode="json"))
        self._written.append(written)
        logger.info(
            "실행 결과 저장 완료",
            command=self.command,
            outputs=len(self.outputs),
            manifest=str(written),
        )
        return written
