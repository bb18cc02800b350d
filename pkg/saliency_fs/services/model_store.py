"""학습된 모델 저장/불러오기

파일 구조: 매직 ``SFSM`` (4바이트), 헤더 길이 (uint32 little-endian), UTF-8 JSON 헤더,
그 뒤로 헤더의 parameters 순서대로 little-endian float64 C-order 블록이 이어집니다.
헤더의 선택 키 standardization에는 학습 시점의 표준화 통계(mean, std, constant)가 들어갑니다.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from saliency_fs.core.errors import ContractError
from saliency_fs.models.network import ModelSpec
from saliency_fs.services.dataset_service import StandardizeStats
from saliency_fs.services.network_service import TrainedModel, parameter_shapes
from saliency_fs.services.result_writer import atomic_write_bytes

MAGIC = b"SFSM"
FORMAT_VERSION = 1
_HEADER_LENGTH = struct.Struct("<I")


@dataclass(frozen=True)
class StoredModel:
    """모델과 학습 시점의 표준화 통계"""

    model: TrainedModel
    standardization: Optional[StandardizeStats] = None


def encode_model(model: TrainedModel, standardization: Optional[StandardizeStats] = None) -> bytes:
    header: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "spec": model.spec.model_dump(mode="json"),
        "seed": model.seed,
        "parameters": [
            {"name": name, "shape": list(param.shape)}
            for name, param in zip(model.parameter_names, model.parameters)
        ],
    }
    if standardization is not None:
        _check_standardization(standardization, model.spec)
        header["standardization"] = standardization.to_dict()
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blocks = [np.ascontiguousarray(param, dtype="<f8").tobytes() for param in model.parameters]
    return MAGIC + _HEADER_LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(blocks)


def _check_standardization(stats: StandardizeStats, spec: ModelSpec) -> None:
    if stats.mean.shape[0] != spec.input_dim:
        raise ContractError(
            f"표준화 통계 길이({stats.mean.shape[0]})가 모델 입력 차원({spec.input_dim})과 다릅니다."
        )


def decode_stored(data: bytes) -> StoredModel:
    if data[:4] != MAGIC:
        raise ContractError("모델 파일 매직이 올바르지 않습니다.")
    offset = 4 + _HEADER_LENGTH.size
    if len(data) < offset:
        raise ContractError("모델 파일 헤더가 잘렸습니다.")
    (header_length,) = _HEADER_LENGTH.unpack_from(data, 4)
    try:
        header = json.loads(data[offset : offset + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContractError(f"모델 파일 헤더를 해석할 수 없습니다: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ContractError(f"지원하지 않는 모델 파일 버전: {header.get('format_version')}")

    spec = ModelSpec.model_validate(header["spec"])
    expected = parameter_shapes(spec)
    declared = [(item["name"], tuple(item["shape"])) for item in header["parameters"]]
    if declared != expected:
        raise ContractError("모델 파일의 파라미터 목록이 모델 명세와 다릅니다.")

    offset += header_length
    params: List[np.ndarray] = []
    for _, shape in expected:
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(data):
            raise ContractError("모델 파일 파라미터 블록이 잘렸습니다.")
        block = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        block.setflags(write=False)
        params.append(block)
        offset = end
    if offset != len(data):
        raise ContractError("모델 파일 끝에 알 수 없는 데이터가 있습니다.")
    model = TrainedModel(spec=spec, parameters=tuple(params), seed=int(header.get("seed", 0)))

    standardization = None
    if "standardization" in header:
        standardization = StandardizeStats.from_dict(header["standardization"])
        _check_standardization(standardization, spec)
    return StoredModel(model=model, standardization=standardization)


def decode_model(data: bytes) -> TrainedModel:
    return decode_stored(data).model


def save_model(
    model: TrainedModel,
    path: Union[str, Path],
    standardization: Optional[StandardizeStats] = None,
) -> Path:
    return atomic_write_bytes(path, encode_model(model, standardization))


def load_model(path: Union[str, Path]) -> TrainedModel:
    return decode_model(Path(path).read_bytes())


def load_stored_model(path: Union[str, Path]) -> StoredModel:
    return decode_stored(Path(path).read_bytes())
