"""Saliency 기반 특징 선택(SFS) 툴킷"""

__version__ = "1.0.0"
