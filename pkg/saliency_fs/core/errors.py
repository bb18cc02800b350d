"""공통 예외 정의

서비스 계층 전반에서 사용하는 예외 계층입니다. CLI는 예외 타입에 따라 종료 코드를
결정합니다 (검증 오류 1, 수치 오류 2).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


class SaliencyFSError(RuntimeError):
    """툴킷 기본 예외"""

    default_message = "특징 선택 작업 중 오류가 발생했습니다."

    def __init__(self, message: str | None = None) -> None:
        super().__init__(message or self.default_message)


class ContractError(SaliencyFSError):
    """연산의 사전 조건이 만족되지 않았을 때 발생하는 예외"""

    default_message = "연산의 사전 조건을 만족하지 않습니다."


class ShapeError(ContractError):
    """텐서 바인딩/형상 불일치"""

    default_message = "텐서 형상이 일치하지 않습니다."


class ParameterError(ContractError):
    """잘못된 파라미터 값"""

    default_message = "파라미터 값이 올바르지 않습니다."


class ConfigurationError(ContractError):
    """설정 값 검증 실패"""

    default_message = "설정 값이 올바르지 않습니다."


class NumericError(SaliencyFSError):
    """NaN/Inf 등 비정상 수치 발생"""

    default_message = "비정상 수치(NaN/Inf)가 발생했습니다."

    def __init__(
        self,
        message: str | None = None,
        *,
        node: Optional[str] = None,
        epoch: Optional[int] = None,
        iteration: Optional[int] = None,
    ) -> None:
        self.node = node
        self.epoch = epoch
        self.iteration = iteration
        context = []
        if node is not None:
            context.append(f"node={node}")
        if epoch is not None:
            context.append(f"epoch={epoch}")
        if iteration is not None:
            context.append(f"iteration={iteration}")
        base = message or self.default_message
        self.detail = base
        super().__init__(f"{base} ({', '.join(context)})" if context else base)


class DatasetParseError(ContractError):
    """데이터 파일 파싱 실패 (파일 경로와 1부터 시작하는 줄 번호 포함)"""

    default_message = "데이터 파일을 해석할 수 없습니다."

    def __init__(
        self,
        message: str | None = None,
        *,
        path: Union[str, Path, None] = None,
        line: Optional[int] = None,
    ) -> None:
        self.path = str(path) if path is not None else None
        self.line = line
        base = message or self.default_message
        location = ""
        if self.path is not None:
            location = self.path if line is None else f"{self.path}:{line}"
        elif line is not None:
            location = f"line {line}"
        super().__init__(f"{location}: {base}" if location else base)
