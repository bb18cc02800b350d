"""로깅 설정 모듈"""

import logging
import sys
from typing import Any, Optional

import structlog

from saliency_fs.core.config import Settings


class _StderrHandler(logging.StreamHandler):  # type: ignore[type-arg]
    """기록 시점의 sys.stderr로 출력합니다."""

    def __init__(self) -> None:
        super().__init__(sys.stderr)

    def emit(self, record: logging.LogRecord) -> None:
        self.stream = sys.stderr
        super().emit(record)


def _stderr_logger(*args: Any) -> structlog.PrintLogger:
    # sys.stderr는 설정 이후 교체될 수 있으므로 로거를 만들 때마다 다시 읽음
    return structlog.PrintLogger(file=sys.stderr)


def setup_logging(
    settings: Optional[Settings] = None,
    log_level: Optional[str] = None,
    json_logs: Optional[bool] = None,
) -> None:
    """구조화 로깅을 초기화합니다.

    로그는 항상 stderr로 출력되므로 결과 파일/표준 출력과 섞이지 않습니다.

    Args:
        settings: 애플리케이션 설정 (log_level, json_logs 기본값 제공)
        log_level: 로그 레벨 (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        json_logs: JSON 형식의 로그를 사용할지 여부
    """
    level_name = log_level or (settings.log_level if settings else "INFO")
    use_json = json_logs if json_logs is not None else bool(
        settings and settings.json_logs
    )
    level = getattr(logging, level_name.upper(), logging.INFO)

    # 외부 라이브러리의 표준 logging 출력도 같은 스트림으로 보냄
    handler = _StderrHandler()
    handler.setFormatter(logging.Formatter("%(message)s"))
    logging.basicConfig(handlers=[handler], level=level, force=True)

    renderer: Any
    if use_json:
        renderer = structlog.processors.JSONRenderer(sort_keys=True)
    else:
        renderer = structlog.dev.ConsoleRenderer(colors=False)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=_stderr_logger,
        cache_logger_on_first_use=False,
    )


def get_logger(name: str) -> Any:
    """구조화된 로거를 반환합니다.

    사용법: ``logger.info("메시지", key=value)``

    Args:
        name: 로거 이름
    """
    return structlog.get_logger(logger_name=name)
