"""테스트 설정 파일"""

import os
from typing import Iterator

import numpy as np
import pytest
import structlog

from saliency_fs.core.config import reset_settings_cache
from saliency_fs.models.network import ModelKind, ModelSpec, TrainConfig
from saliency_fs.services.dataset_service import Dataset, TaskKind, generate_synthetic


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """SFS_* 환경 변수, 설정 캐시, 로깅 설정을 격리"""
    for name in list(os.environ):
        if name.startswith("SFS_"):
            monkeypatch.delenv(name, raising=False)
    reset_settings_cache()
    yield
    reset_settings_cache()
    structlog.reset_defaults()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def fast_train_config() -> TrainConfig:
    """작은 데이터용 빠른 학습 설정"""
    return TrainConfig(epochs=30, batch_size=32, learning_rate=0.01, seed=0)


@pytest.fixture
def blob_dataset() -> Dataset:
    """마진이 큰 2-특징 2-클래스 분리 가능 데이터 (200 샘플)"""
    generator = np.random.default_rng(7)
    negatives = generator.normal(loc=(-2.0, -2.0), scale=0.5, size=(100, 2))
    positives = generator.normal(loc=(2.0, 2.0), scale=0.5, size=(100, 2))
    return Dataset(
        X=np.vstack([negatives, positives]),
        target=np.repeat(np.array([0, 1], dtype=np.int64), 100),
        feature_names=["f0", "f1"],
        task=TaskKind.CLASSIFICATION,
        class_names=["0", "1"],
    )


@pytest.fixture
def small_classification() -> Dataset:
    """관련 특징 2개, 잡음 특징 4개인 합성 분류 데이터"""
    return generate_synthetic(n=200, r=6, k=2, task=TaskKind.CLASSIFICATION, noise=0.0, seed=3)


@pytest.fixture
def small_regression() -> Dataset:
    return generate_synthetic(n=200, r=5, k=2, task=TaskKind.REGRESSION, noise=0.05, seed=4)


@pytest.fixture
def softmax_spec() -> ModelSpec:
    return ModelSpec(kind=ModelKind.SOFTMAX_LINEAR, input_dim=2, output_dim=2, hidden_layers=[])


@pytest.fixture
def mlp_spec() -> ModelSpec:
    return ModelSpec(kind=ModelKind.MLP_CLASSIFIER, input_dim=6, output_dim=2, hidden_layers=[8, 4])
