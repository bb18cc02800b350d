"""SFS(Saliency 기반 특징 선택) 랭커

설명: 살아있는 특징만 남긴 입력으로 모델을 reps번 학습하고, 집계 saliency를 누적해
살아있는 특징을 정렬합니다. gamma 비율만큼만 남기고 나머지는 0으로 지운 뒤 반복합니다.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from saliency_fs.core.config import Settings, get_settings
from saliency_fs.core.errors import ContractError, NumericError, ShapeError
from saliency_fs.core.logging_config import get_logger
from saliency_fs.models.selection import FeatureRanking, RankingIteration, SfsConfig
from saliency_fs.services.dataset_service import (
    Dataset,
    StandardizeStats,
    apply_standardization,
    standardize,
)
from saliency_fs.services.diffcore import Tensor
from saliency_fs.services.network_service import TrainedModel, init_model, train
from saliency_fs.services.saliency_service import (
    aggregate_classification,
    aggregate_regression,
    batch_saliency,
    check_compatible,
)

logger = get_logger(__name__)

_SEED_MODULUS = 2**63


def alive_schedule(n_features: int, gamma: float, epsilon_stop: float = 1.0) -> List[int]:
    """반복마다 살아있는 특징 수

    첫 값은 R이고 이후 floor(이전 값 × gamma)입니다. max(epsilon_stop, 1) 이하가 되는
    값은 포함하지 않습니다. 단, 첫 값 R은 항상 포함됩니다.
    """
    if n_features < 1:
        raise ContractError("특징 수는 1 이상이어야 합니다.")
    if not 0.0 <= gamma < 1.0:
        raise ContractError(f"gamma는 [0, 1) 범위여야 합니다: {gamma}")
    if epsilon_stop < 1.0:
        raise ContractError(f"epsilon_stop은 1 이상이어야 합니다: {epsilon_stop}")

    floor_value = max(epsilon_stop, 1.0)
    schedule = [n_features]
    alive = n_features
    while True:
        alive = int(alive * gamma)
        if alive <= floor_value:
            return schedule
        schedule.append(alive)


def derive_seed(base_seed: int, iteration: int, rep: int) -> int:
    """(실행 시드, 반복, rep) 조합에서 재현 가능한 학습 시드를 유도합니다."""
    sequence = np.random.SeedSequence(
        entropy=int(base_seed) % _SEED_MODULUS, spawn_key=(iteration, rep)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0]) % _SEED_MODULUS


def _as_targets(values: npt.ArrayLike, columns: int) -> Tensor:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 1 and columns == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2 or array.shape[1] != columns:
        raise ShapeError(f"Y 형상은 (N, {columns})이어야 합니다 (실제 {array.shape})")
    return array


def _masked(X: Tensor, dead: npt.NDArray[np.int64]) -> Tensor:
    masked = X.copy()
    masked[:, dead] = 0.0
    return masked


class SaliencyFeatureSelector:
    """SFS 랭커"""

    def __init__(self, settings: Optional[Settings] = None, threads: Optional[int] = None):
        self.settings = settings or get_settings()
        self.threads = threads or self.settings.threads
        self.last_model: Optional[TrainedModel] = None
        self.last_standardization: Optional[StandardizeStats] = None

    def rank(
        self,
        X: npt.ArrayLike,
        Y: npt.ArrayLike,
        cfg: SfsConfig,
        eval_X: Optional[npt.ArrayLike] = None,
        eval_Y: Optional[npt.ArrayLike] = None,
        feature_names: Optional[List[str]] = None,
    ) -> FeatureRanking:
        """특징 랭킹을 계산합니다.

        Args:
            X: 표준화된 N×R 학습 입력
            Y: 분류는 N×C one-hot, 회귀는 N×1 목표값
            cfg: SFS 설정
            eval_X, eval_Y: saliency를 계산할 데이터 (생략하면 학습 데이터)
            feature_names: 결과에 기록할 특징 이름
        """
        spec = cfg.model_spec
        features = np.asarray(X, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] == 0 or features.shape[1] == 0:
            raise ContractError(f"X는 비어 있지 않은 N×R 행렬이어야 합니다 (실제 {features.shape})")
        n_samples, n_features = features.shape
        if spec.input_dim != n_features:
            raise ShapeError(
                f"모델 입력 차원({spec.input_dim})과 특징 수({n_features})가 다릅니다."
            )
        targets = _as_targets(Y, spec.output_dim)
        if targets.shape[0] != n_samples:
            raise ShapeError(f"X와 Y의 샘플 수가 다릅니다: {n_samples} vs {targets.shape[0]}")

        if (eval_X is None) != (eval_Y is None):
            raise ContractError("eval_X와 eval_Y는 함께 지정해야 합니다.")
        if eval_X is not None:
            saliency_X = np.asarray(eval_X, dtype=np.float64)
            saliency_Y = _as_targets(eval_Y, spec.output_dim)
            if saliency_X.ndim != 2 or saliency_X.shape[1] != n_features:
                raise ShapeError(f"평가 입력 형상이 올바르지 않습니다: {saliency_X.shape}")
        else:
            saliency_X, saliency_Y = features, targets
        if spec.is_classifier:
            labels: Optional[npt.NDArray[np.int64]] = np.argmax(saliency_Y, axis=1)
        else:
            labels = None

        schedule = alive_schedule(n_features, cfg.gamma, cfg.epsilon_stop)
        order = np.arange(n_features, dtype=np.int64)
        history: List[RankingIteration] = []
        n_trainings = 0

        for iteration, n_alive in enumerate(schedule):
            started = time.perf_counter()
            alive = np.sort(order[:n_alive])
            dead = order[n_alive:]
            train_X = _masked(features, dead)
            sal_X = train_X if saliency_X is features else _masked(saliency_X, dead)

            def one_rep(rep: int) -> Tuple[Tensor, TrainedModel]:
                return self._rep_saliency(
                    cfg, iteration, rep, train_X, targets, sal_X, saliency_Y, alive, labels
                )

            if self.threads > 1 and cfg.reps > 1:
                with ThreadPoolExecutor(max_workers=min(self.threads, cfg.reps)) as pool:
                    results = list(pool.map(one_rep, range(cfg.reps)))
            else:
                results = [one_rep(rep) for rep in range(cfg.reps)]

            # rep 순서대로 누적해야 스레드 수와 무관하게 결과가 같음
            accumulated = np.zeros(n_alive, dtype=np.float64)
            for aggregated, _ in results:
                accumulated = accumulated + aggregated
            n_trainings += cfg.reps
            self.last_model = results[-1][1]

            ranked = alive[np.lexsort((alive, -accumulated))]
            order = np.concatenate([ranked, dead])
            history.append(
                RankingIteration(
                    alive=n_alive,
                    features=alive.tolist(),
                    saliency=accumulated.tolist(),
                )
            )
            logger.info(
                "SFS 반복 완료",
                iteration=iteration,
                alive=n_alive,
                reps=cfg.reps,
                elapsed_seconds=round(time.perf_counter() - started, 3),
            )

        return FeatureRanking(
            order=order.tolist(),
            history=history,
            n_trainings=n_trainings,
            feature_names=feature_names,
        )

    def rank_dataset(
        self,
        ds: Dataset,
        cfg: SfsConfig,
        eval_ds: Optional[Dataset] = None,
    ) -> FeatureRanking:
        """학습 데이터 통계로 표준화한 뒤 랭킹을 계산합니다."""
        train_std, stats = standardize(ds)
        self.last_standardization = stats
        eval_X: Optional[Tensor] = None
        eval_Y: Optional[Tensor] = None
        if eval_ds is not None:
            eval_std = apply_standardization(eval_ds, stats)
            eval_X, eval_Y = eval_std.X, eval_std.targets_matrix()
        return self.rank(
            train_std.X,
            train_std.targets_matrix(),
            cfg,
            eval_X,
            eval_Y,
            feature_names=ds.feature_names,
        )

    def _rep_saliency(
        self,
        cfg: SfsConfig,
        iteration: int,
        rep: int,
        train_X: Tensor,
        train_Y: Tensor,
        saliency_X: Tensor,
        saliency_Y: Tensor,
        alive: npt.NDArray[np.int64],
        labels: Optional[npt.NDArray[np.int64]],
    ) -> Tuple[Tensor, TrainedModel]:
        seed = derive_seed(cfg.seed, iteration, rep)
        model = init_model(cfg.model_spec, seed)
        check_compatible(model, cfg.gain)
        train_cfg = cfg.train_config.model_copy(update={"seed": seed})
        try:
            model = train(model, train_X, train_Y, train_cfg)
            per_sample = batch_saliency(model, cfg.gain, saliency_X, saliency_Y)[:, alive]
        except NumericError as exc:
            raise NumericError(
                f"SFS 반복 중 수치 오류 (rep={rep}): {exc.detail}",
                node=exc.node,
                epoch=exc.epoch,
                iteration=iteration,
            ) from exc
        if labels is not None:
            return aggregate_classification(per_sample, labels), model
        return aggregate_regression(per_sample), model


def create_feature_selector(
    settings: Optional[Settings] = None, threads: Optional[int] = None
) -> SaliencyFeatureSelector:
    return SaliencyFeatureSelector(settings, threads)


def rank(
    X: npt.ArrayLike,
    Y: npt.ArrayLike,
    cfg: SfsConfig,
    eval_X: Optional[npt.ArrayLike] = None,
    eval_Y: Optional[npt.ArrayLike] = None,
    threads: int = 1,
) -> FeatureRanking:
    """기본 설정으로 SFS 랭킹을 계산합니다."""
    selector = SaliencyFeatureSelector(Settings(), threads=threads)
    return selector.rank(X, Y, cfg, eval_X, eval_Y)
