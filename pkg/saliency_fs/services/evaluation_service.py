"""평가 서비스

설명: 랭킹 상위 k개 특징만 남기고(나머지는 표준화 후 0) 모델을 다시 학습해 평가 데이터의
정확도 또는 MAE를 측정합니다. 랭커와 평가 모델은 서로 다른 명세를 써도 됩니다.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence

import numpy as np
import numpy.typing as npt

from saliency_fs.core.errors import ContractError, ParameterError, ShapeError
from saliency_fs.core.logging_config import get_logger
from saliency_fs.models.evaluation import FeatureCurve, Metric, RegularizationPoint
from saliency_fs.models.network import ModelSpec, TrainConfig
from saliency_fs.models.selection import FeatureRanking, SfsConfig
from saliency_fs.services.dataset_service import (
    Dataset,
    apply_standardization,
    kfold_indices,
    standardize,
    zero_features,
)
from saliency_fs.services.network_service import (
    TrainedModel,
    init_model,
    predict,
    predict_labels,
    train,
)
from saliency_fs.services.sfs_ranker import SaliencyFeatureSelector

logger = get_logger(__name__)

RankingFn = Callable[[Dataset], FeatureRanking]


def metric_for(ds: Dataset) -> Metric:
    return Metric.ACCURACY if ds.is_classification else Metric.MAE


def score(model: TrainedModel, test: Dataset) -> float:
    """분류는 argmax 정확도, 회귀는 평균 절대 오차"""
    if model.spec.is_classifier != test.is_classification:
        raise ContractError("모델과 데이터셋의 작업 종류가 다릅니다.")
    if model.spec.input_dim != test.n_features:
        raise ShapeError(
            f"모델 입력 차원({model.spec.input_dim})과 특징 수({test.n_features})가 다릅니다."
        )
    if test.is_classification:
        return float(np.mean(predict_labels(model, test.X) == test.target))
    predictions = predict(model, test.X)[:, 0]
    return float(np.mean(np.abs(predictions - np.asarray(test.target, dtype=np.float64))))


def _check_pair(train_ds: Dataset, test_ds: Dataset) -> None:
    if train_ds.n_features != test_ds.n_features:
        raise ShapeError("학습/평가 데이터의 특징 수가 다릅니다.")
    if train_ds.task != test_ds.task:
        raise ContractError("학습/평가 데이터의 작업 종류가 다릅니다.")


def _classifier_for(spec: ModelSpec, train_ds: Dataset) -> ModelSpec:
    spec = spec.with_input_dim(train_ds.n_features)
    if spec.is_classifier != train_ds.is_classification:
        raise ContractError("평가 모델과 데이터셋의 작업 종류가 다릅니다.")
    if spec.is_classifier and spec.output_dim != train_ds.n_classes:
        raise ContractError(
            f"평가 모델 출력 수({spec.output_dim})와 클래스 수({train_ds.n_classes})가 다릅니다."
        )
    return spec


def _fit_and_score(
    train_ds: Dataset,
    test_ds: Dataset,
    spec: ModelSpec,
    cfg: TrainConfig,
    keep: Optional[npt.NDArray[np.int64]],
) -> float:
    train_X, test_X = train_ds.X, test_ds.X
    if keep is not None:
        train_X = zero_features(train_X, keep)
        test_X = zero_features(test_X, keep)
    model = train(init_model(spec, cfg.seed), train_X, train_ds.targets_matrix(), cfg)
    return score(model, test_ds.with_features(test_X))


def baseline_score(
    train_ds: Dataset, test_ds: Dataset, spec: ModelSpec, cfg: TrainConfig
) -> float:
    """특징 선택 없이 모든 특징으로 학습한 점수"""
    _check_pair(train_ds, test_ds)
    spec = _classifier_for(spec, train_ds)
    train_std, stats = standardize(train_ds)
    return _fit_and_score(train_std, apply_standardization(test_ds, stats), spec, cfg, None)


def feature_curve(
    ranking: FeatureRanking,
    train_ds: Dataset,
    test_ds: Dataset,
    classifier_spec: ModelSpec,
    train_cfg: TrainConfig,
    ks: Sequence[int],
    ranker_desc: str = "sfs",
    threads: int = 1,
) -> FeatureCurve:
    """k마다 상위 k개 특징으로 평가 모델을 다시 학습한 점수 곡선"""
    _check_pair(train_ds, test_ds)
    if ranking.n_features != train_ds.n_features:
        raise ShapeError(
            f"랭킹 길이({ranking.n_features})와 특징 수({train_ds.n_features})가 다릅니다."
        )
    requested = list(ks)
    if not requested:
        raise ParameterError("k 목록이 비어 있습니다.")
    for k in requested:
        if not 1 <= k <= train_ds.n_features:
            raise ParameterError(f"k는 1..{train_ds.n_features} 범위여야 합니다: {k}")
    spec = _classifier_for(classifier_spec, train_ds)
    train_std, stats = standardize(train_ds)
    test_std = apply_standardization(test_ds, stats)
    order = np.asarray(ranking.order, dtype=np.int64)

    def point(k: int) -> float:
        keep = order[:k]
        return _fit_and_score(train_std, test_std, spec, train_cfg, keep)

    if threads > 1 and len(requested) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(requested))) as pool:
            scores = list(pool.map(point, requested))
    else:
        scores = [point(k) for k in requested]

    curve = FeatureCurve(
        ks=requested,
        scores=scores,
        metric=metric_for(train_ds),
        ranker_desc=ranker_desc,
        classifier_desc=spec.kind.value,
    )
    logger.info(
        "특징 곡선 계산 완료",
        ranker=ranker_desc,
        classifier=spec.kind.value,
        points=len(requested),
    )
    return curve


def precision_at_k(
    ranking: FeatureRanking,
    relevant_mask: Optional[npt.ArrayLike],
    k: int,
) -> float:
    """상위 k개 중 실제 관련 특징의 비율"""
    if relevant_mask is None:
        raise ContractError("관련 특징 마스크가 없습니다.")
    mask = np.asarray(relevant_mask, dtype=bool)
    if mask.shape != (ranking.n_features,):
        raise ShapeError("관련 특징 마스크 길이가 랭킹 길이와 다릅니다.")
    if not 1 <= k <= ranking.n_features:
        raise ParameterError(f"k는 1..{ranking.n_features} 범위여야 합니다: {k}")
    return float(np.count_nonzero(mask[ranking.order[:k]])) / k


def random_ranking(n_features: int, seed: int = 0) -> FeatureRanking:
    """비교용 무작위 랭킹"""
    if n_features < 1:
        raise ContractError("특징 수는 1 이상이어야 합니다.")
    order = np.random.default_rng(seed).permutation(n_features)
    return FeatureRanking(order=order.tolist())


def cross_validated_curve(
    ranking_fn: RankingFn,
    ds: Dataset,
    classifier_spec: ModelSpec,
    train_cfg: TrainConfig,
    ks: Sequence[int],
    folds: int = 5,
    seed: int = 0,
    ranker_desc: str = "sfs",
) -> FeatureCurve:
    """fold마다 학습 부분으로 랭킹을 만들고 평가 부분으로 곡선을 구해 평균합니다."""
    fold_scores: List[List[float]] = []
    for fold, (train_idx, test_idx) in enumerate(kfold_indices(ds.n_samples, folds, seed)):
        train_ds, test_ds = ds.subset(train_idx), ds.subset(test_idx)
        ranking = ranking_fn(train_ds)
        curve = feature_curve(
            ranking, train_ds, test_ds, classifier_spec, train_cfg, ks, ranker_desc
        )
        fold_scores.append(curve.scores)
        logger.debug("교차 검증 fold 완료", fold=fold, scores=curve.scores)
    mean_scores = np.mean(np.asarray(fold_scores, dtype=np.float64), axis=0)
    return FeatureCurve(
        ks=list(ks),
        scores=[float(value) for value in mean_scores],
        metric=metric_for(ds),
        ranker_desc=f"{ranker_desc} ({folds}-fold)",
        classifier_desc=classifier_spec.kind.value,
    )


def regularization_sweep(
    train_ds: Dataset,
    test_ds: Dataset,
    base_cfg: SfsConfig,
    l2_values: Sequence[float],
    classifier_spec: ModelSpec,
    train_cfg: TrainConfig,
    k: int,
    selector: Optional[SaliencyFeatureSelector] = None,
) -> List[RegularizationPoint]:
    """랭커 모델의 L2 강도를 바꿔가며 같은 평가 모델로 상위 k 특징을 평가합니다."""
    if not l2_values:
        raise ParameterError("L2 값 목록이 비어 있습니다.")
    selector = selector or SaliencyFeatureSelector()
    points: List[RegularizationPoint] = []
    for l2 in l2_values:
        if l2 < 0.0:
            raise ParameterError(f"L2 가중치 감쇠는 음수일 수 없습니다: {l2}")
        ranker_spec = ModelSpec.model_validate(
            {**base_cfg.model_spec.model_dump(), "l2_weight_decay": l2}
        )
        cfg = base_cfg.model_copy(update={"model_spec": ranker_spec})
        ranking = selector.rank_dataset(train_ds, cfg)
        curve = feature_curve(
            ranking, train_ds, test_ds, classifier_spec, train_cfg, [k], f"sfs l2={l2:g}"
        )
        precision = (
            precision_at_k(ranking, train_ds.relevant_mask, k)
            if train_ds.relevant_mask is not None
            else None
        )
        points.append(
            RegularizationPoint(
                l2_weight_decay=l2,
                k=k,
                score=curve.scores[0],
                metric=curve.metric,
                precision_at_k=precision,
            )
        )
    return points
