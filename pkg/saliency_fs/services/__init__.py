"""Saliency 기반 특징 선택 서비스 패키지"""

__all__: list[str] = []
