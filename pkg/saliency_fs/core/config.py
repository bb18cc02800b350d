import json
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from saliency_fs.core.errors import ConfigurationError
from saliency_fs.models.gain import GainKind, GainSpec
from saliency_fs.models.network import (
    DEFAULT_HIDDEN_LAYERS,
    ModelKind,
    ModelSpec,
    OptimizerKind,
    TrainConfig,
)
from saliency_fs.models.saliency import AdversarialConfig, PerturbationMode


class TrainSettings(BaseSettings):
    """모델 학습 설정"""

    epochs: int = 100
    batch_size: int = 32
    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    input_noise_std: float = 0.0
    l2_weight_decay: float = 0.001
    hidden_layers: List[int] = list(DEFAULT_HIDDEN_LAYERS)

    model_config = SettingsConfigDict(env_prefix="SFS_TRAIN_")


class RankingSettings(BaseSettings):
    """SFS 랭커 설정"""

    gamma: float = 0.0
    epsilon_stop: float = 1.0
    reps: int = 3
    model_kind: ModelKind = ModelKind.MLP_CLASSIFIER

    model_config = SettingsConfigDict(
        env_prefix="SFS_RANK_",
        protected_namespaces=(),
    )


class GainSettings(BaseSettings):
    """이득 함수 설정 (종류는 모델 종류에서 결정)"""

    alpha: float = 1.0
    epsilon: float = 1e-3

    model_config = SettingsConfigDict(env_prefix="SFS_GAIN_")


class AdversarialSettings(BaseSettings):
    """적대적 섭동 설정"""

    confidence_threshold: float = 0.95
    step_size: float = 0.05
    max_iters: int = 500
    perturbation_mode: PerturbationMode = PerturbationMode.RAW_GRADIENT

    model_config = SettingsConfigDict(env_prefix="SFS_ADV_")


class Settings(BaseSettings):
    """애플리케이션 설정"""

    app_name: str = "saliency-fs"
    version: str = "1.0.0"

    # 실행 설정
    seed: int = 0
    threads: int = 1
    output_dir: str = "./results"

    # 로깅 설정
    log_level: str = "INFO"
    json_logs: bool = False

    # 중첩된 설정
    train: TrainSettings = TrainSettings()
    ranking: RankingSettings = RankingSettings()
    gain: GainSettings = GainSettings()
    adversarial: AdversarialSettings = AdversarialSettings()

    model_config = SettingsConfigDict(
        env_prefix="SFS_",
        extra="ignore",
    )

    def to_train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.train.epochs,
            batch_size=self.train.batch_size,
            optimizer=self.train.optimizer,
            learning_rate=self.train.learning_rate,
            adam_beta1=self.train.adam_beta1,
            adam_beta2=self.train.adam_beta2,
            adam_eps=self.train.adam_eps,
            input_noise_std=self.train.input_noise_std,
            seed=self.seed if seed is None else seed,
        )

    def to_model_spec(
        self,
        input_dim: int,
        output_dim: int,
        kind: Optional[ModelKind] = None,
    ) -> ModelSpec:
        kind = kind or self.ranking.model_kind
        linear = kind in {ModelKind.SOFTMAX_LINEAR, ModelKind.LINEAR_SVM}
        return ModelSpec(
            kind=kind,
            input_dim=input_dim,
            output_dim=1 if kind == ModelKind.MLP_REGRESSOR else output_dim,
            hidden_layers=[] if linear else list(self.train.hidden_layers),
            l2_weight_decay=self.train.l2_weight_decay,
        )

    def to_gain_spec(self, kind: GainKind) -> GainSpec:
        return GainSpec(kind=kind, alpha=self.gain.alpha, epsilon=self.gain.epsilon)

    def to_adversarial_config(self, target_class: int) -> AdversarialConfig:
        return AdversarialConfig(
            target_class=target_class,
            confidence_threshold=self.adversarial.confidence_threshold,
            step_size=self.adversarial.step_size,
            max_iters=self.adversarial.max_iters,
            perturbation_mode=self.adversarial.perturbation_mode,
        )


def _read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigurationError(f"설정 파일이 없습니다: {config_path}")
    try:
        data = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"설정 파일 JSON 해석 실패: {config_path}:{exc.lineno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"설정 파일 최상위는 객체여야 합니다: {config_path}")
    return data


def _merge(base: Dict[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            current = merged.get(key)
            merged[key] = _merge(dict(current) if isinstance(current, Mapping) else {}, value)
        else:
            merged[key] = value
    return merged


def describe_validation_error(exc: ValidationError) -> str:
    """pydantic 검증 오류를 한 줄 요약으로 바꿉니다."""
    parts = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error.get("loc", ()))
        message = " ".join(str(error.get("msg", "")).split())
        parts.append(f"{location}: {message}" if location else message)
    return "; ".join(parts)


def load_settings(
    config_path: Union[str, Path, None] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Settings:
    """설정을 로드합니다.

    우선순위: overrides(CLI 플래그) > 설정 파일 > 환경 변수 > 기본값.
    중첩 설정은 환경 변수를 먼저 반영한 뒤 파일/플래그 값을 덮어씁니다.
    """
    values: Dict[str, Any] = {}
    if config_path is not None:
        values = _read_config_file(config_path)
    values = _merge(values, overrides or {})

    nested = {
        "train": TrainSettings,
        "ranking": RankingSettings,
        "gain": GainSettings,
        "adversarial": AdversarialSettings,
    }
    try:
        for key, settings_cls in nested.items():
            section = values.get(key)
            if section is not None and not isinstance(section, Mapping):
                raise ConfigurationError(f"'{key}' 설정은 객체여야 합니다.")
            values[key] = settings_cls(**dict(section or {}))
        settings = Settings(**values)
    except ValidationError as exc:
        raise ConfigurationError(f"설정 값 오류: {describe_validation_error(exc)}") from exc

    _validate(settings)
    return settings


def _validate(settings: Settings) -> None:
    if not 0.0 <= settings.ranking.gamma < 1.0:
        raise ConfigurationError("gamma는 [0, 1) 범위여야 합니다.")
    if settings.ranking.epsilon_stop < 1.0:
        raise ConfigurationError("epsilon_stop은 1 이상이어야 합니다.")
    if settings.ranking.reps < 1:
        raise ConfigurationError("reps는 1 이상이어야 합니다.")
    if settings.train.epochs < 0 or settings.train.batch_size < 1:
        raise ConfigurationError("epochs는 0 이상, batch_size는 1 이상이어야 합니다.")
    if settings.threads < 1:
        raise ConfigurationError("threads는 1 이상이어야 합니다.")


# 환경에 따른 설정 캐시
_settings_cache: Optional[Settings] = None


def get_settings() -> Settings:
    """프로세스 전역 설정을 반환합니다 (SFS_CONFIG 환경 변수로 설정 파일 지정 가능)."""
    global _settings_cache

    if _settings_cache is None:
        _settings_cache = load_settings(os.getenv("SFS_CONFIG") or None)
    return _settings_cache


def reset_settings_cache() -> None:
    global _settings_cache
    _settings_cache = None
