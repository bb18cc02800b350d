"""데이터셋 서비스

설명: 밀집 CSV와 NIPS 2003 특징 선택 챌린지 형식을 읽고, 관련 특징이 알려진 합성
데이터를 생성합니다. 표준화, one-hot 인코딩, 복제 기반 클래스 균형, 학습/평가 분할을
제공합니다.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from saliency_fs.core.errors import ContractError, DatasetParseError, ParameterError
from saliency_fs.core.logging_config import get_logger
from saliency_fs.services.diffcore import Tensor
from saliency_fs.services.result_writer import atomic_write_text, with_manifest_header

logger = get_logger(__name__)

STD_FLOOR = 1e-8
TARGET_COLUMN = "target"

PathLike = Union[str, Path]


class TaskKind(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class NipsMode(str, Enum):
    BINARY = "binary"  # 활성 특징 인덱스 목록 (Dorothea)
    SPARSE = "sparse"  # index:value 토큰 (Dexter)
    DENSE = "dense"  # 값 행 (Arcene, Gisette, Madelon)


@dataclass(eq=False)
class Dataset:
    """특징 행렬과 목표값

    분류 목표값은 0..C-1 클래스 인덱스, 회귀 목표값은 실수 벡터입니다.
    """

    X: Tensor
    target: npt.NDArray[np.generic]
    feature_names: List[str]
    task: TaskKind
    relevant_mask: Optional[npt.NDArray[np.bool_]] = None
    class_names: Optional[List[str]] = field(default=None)

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.X.shape[0] < 1 or self.X.shape[1] < 1:
            raise ContractError(f"데이터셋은 N≥1, R≥1 이어야 합니다 (실제 {self.X.shape})")
        if self.target.shape != (self.X.shape[0],):
            raise ContractError(
                f"목표값 길이가 샘플 수와 다릅니다: {self.target.shape} vs N={self.X.shape[0]}"
            )
        if len(self.feature_names) != self.X.shape[1]:
            raise ContractError("feature_names 길이가 특징 수와 다릅니다.")
        if self.task == TaskKind.CLASSIFICATION:
            if self.target.min() < 0:
                raise ContractError("클래스 인덱스는 0 이상이어야 합니다.")
            if self.class_names is not None and self.target.max() >= len(self.class_names):
                raise ContractError("클래스 인덱스가 클래스 수를 넘습니다.")
        if self.relevant_mask is not None:
            if self.relevant_mask.shape != (self.X.shape[1],):
                raise ContractError("relevant_mask 길이가 특징 수와 다릅니다.")
            if not self.relevant_mask.any():
                raise ContractError("relevant_mask에는 최소 하나의 관련 특징이 필요합니다.")

    @property
    def n_samples(self) -> int:
        return int(self.X.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.X.shape[1])

    @property
    def is_classification(self) -> bool:
        return self.task == TaskKind.CLASSIFICATION

    @property
    def n_classes(self) -> int:
        if not self.is_classification:
            return 1
        if self.class_names is not None:
            return len(self.class_names)
        return int(self.target.max()) + 1

    def targets_matrix(self) -> Tensor:
        """분류는 N×C one-hot, 회귀는 N×1 행렬"""
        if self.is_classification:
            return one_hot(self.target, self.n_classes)
        return np.asarray(self.target, dtype=np.float64).reshape(-1, 1)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        rows = np.asarray(indices, dtype=np.int64)
        return replace(self, X=self.X[rows], target=self.target[rows])

    def with_features(self, X: Tensor) -> "Dataset":
        return replace(self, X=X)


@dataclass(frozen=True, eq=False)
class StandardizeStats:
    """열별 평균과 표준편차

    분산이 0인 열은 std=1.0으로 저장하고 constant로 표시합니다. 이 열은 표준화 후 0이 됩니다.
    """

    mean: Tensor
    std: Tensor
    constant: npt.NDArray[np.bool_]

    def __post_init__(self) -> None:
        if not (self.mean.shape == self.std.shape == self.constant.shape) or self.mean.ndim != 1:
            raise ContractError("표준화 통계의 mean, std, constant 길이가 다릅니다.")
        if not np.all(np.isfinite(self.mean)) or not np.all(self.std > 0.0):
            raise ContractError("표준화 통계는 유한한 평균과 양수 표준편차여야 합니다.")

    def to_dict(self) -> Dict[str, List[Any]]:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": [bool(flag) for flag in self.constant],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StandardizeStats":
        try:
            return cls(
                mean=np.asarray(data["mean"], dtype=np.float64),
                std=np.asarray(data["std"], dtype=np.float64),
                constant=np.asarray(data["constant"], dtype=bool),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"표준화 통계 형식이 올바르지 않습니다: {exc}") from exc


def default_feature_names(n_features: int) -> List[str]:
    return [f"f{index}" for index in range(n_features)]


def _leading_comment_lines(path: Path) -> int:
    count = 0
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            count += 1
    return count


def load_dense_csv(
    path: PathLike,
    target_column: str = TARGET_COLUMN,
    kind: TaskKind = TaskKind.CLASSIFICATION,
    mask_path: Optional[PathLike] = None,
) -> Dataset:
    """헤더가 있는 쉼표 구분 CSV를 읽습니다.

    목표 열을 제외한 나머지 열이 순서대로 특징이 됩니다. 분류 목표값은 처음 등장한
    순서대로 0, 1, ... 인덱스로 매핑됩니다. 파일 앞쪽의 ``#`` 주석 줄은 건너뜁니다.
    """
    csv_path = Path(path)
    if not csv_path.exists():
        raise DatasetParseError("파일이 없습니다.", path=csv_path)
    skipped = _leading_comment_lines(csv_path)
    header_line = skipped + 1

    try:
        frame = pd.read_csv(
            csv_path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skiprows=skipped,
        )
    except pd.errors.EmptyDataError as exc:
        raise DatasetParseError("헤더가 없습니다.", path=csv_path, line=header_line) from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = int(match.group(1)) + skipped if match else None
        raise DatasetParseError(
            "행의 열 개수가 헤더와 다릅니다.", path=csv_path, line=line
        ) from exc

    if target_column not in frame.columns:
        raise DatasetParseError(
            f"목표 열이 없습니다: {target_column}", path=csv_path, line=header_line
        )
    if frame.empty:
        raise DatasetParseError("no data rows", path=csv_path, line=header_line)

    # 누락된 칸은 NaN (빈 문자열 칸은 keep_default_na=False 로 "" 유지)
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        row = int(np.argmax(missing))
        raise DatasetParseError(
            "행의 열 개수가 헤더와 다릅니다.", path=csv_path, line=header_line + 1 + row
        )

    feature_columns = [name for name in frame.columns if name != target_column]
    if not feature_columns:
        raise DatasetParseError("특징 열이 없습니다.", path=csv_path, line=header_line)
    numeric = frame[feature_columns].apply(pd.to_numeric, errors="coerce")
    values = numeric.to_numpy(dtype=np.float64)
    invalid = ~np.isfinite(values)
    if invalid.any():
        row, column = (int(v) for v in np.argwhere(invalid)[0])
        raise DatasetParseError(
            f"숫자가 아닌 특징 값: {feature_columns[column]}={frame.iloc[row][feature_columns[column]]!r}",
            path=csv_path,
            line=header_line + 1 + row,
        )

    raw_target = frame[target_column]
    class_names: Optional[List[str]] = None
    if kind == TaskKind.CLASSIFICATION:
        codes, uniques = pd.factorize(raw_target, sort=False)
        target: npt.NDArray[np.generic] = codes.astype(np.int64)
        class_names = [str(name) for name in uniques]
    else:
        parsed = pd.to_numeric(raw_target, errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.argmax(bad))
            raise DatasetParseError(
                f"숫자가 아닌 목표값: {raw_target.iloc[row]!r}",
                path=csv_path,
                line=header_line + 1 + row,
            )
        target = parsed

    mask = load_relevance_mask(mask_path, len(feature_columns)) if mask_path else None
    dataset = Dataset(
        X=values,
        target=target,
        feature_names=[str(name) for name in feature_columns],
        task=kind,
        relevant_mask=mask,
        class_names=class_names,
    )
    logger.info(
        "CSV 데이터셋 로드",
        path=str(csv_path),
        samples=dataset.n_samples,
        features=dataset.n_features,
        task=kind.value,
    )
    return dataset


def mask_sidecar_path(csv_path: PathLike) -> Path:
    path = Path(csv_path)
    return path.with_name(f"{path.stem}.mask.json")


def write_dense_csv(
    ds: Dataset, path: PathLike, manifest_name: Optional[str] = None
) -> List[Path]:
    """데이터셋을 CSV로 저장하고, relevant_mask가 있으면 마스크 사이드카도 저장합니다."""
    csv_path = Path(path)
    frame = pd.DataFrame(ds.X, columns=ds.feature_names)
    if ds.is_classification and ds.class_names is not None:
        frame[TARGET_COLUMN] = [ds.class_names[int(code)] for code in ds.target]
    else:
        frame[TARGET_COLUMN] = ds.target
    body = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
    atomic_write_text(csv_path, with_manifest_header(body, manifest_name))
    written = [csv_path]

    if ds.relevant_mask is not None:
        sidecar = mask_sidecar_path(csv_path)
        payload = {
            "feature_names": ds.feature_names,
            "relevant_mask": [bool(flag) for flag in ds.relevant_mask],
        }
        if manifest_name:
            payload = {"manifest": manifest_name, **payload}
        atomic_write_text(sidecar, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")
        written.append(sidecar)
    return written


def load_relevance_mask(path: PathLike, n_features: int) -> npt.NDArray[np.bool_]:
    mask_path = Path(path)
    try:
        payload = json.loads(mask_path.read_text(encoding="utf-8"))
        flags = payload["relevant_mask"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetParseError(f"마스크 파일을 읽을 수 없습니다: {exc}", path=mask_path) from exc
    mask = np.asarray(flags, dtype=bool)
    if mask.shape != (n_features,):
        raise DatasetParseError(
            f"마스크 길이({mask.size})가 특징 수({n_features})와 다릅니다.", path=mask_path
        )
    return mask


def _parse_nips_row(
    tokens: List[str], mode: NipsMode, n_features: int, path: Path, line: int
) -> Tensor:
    row = np.zeros(n_features, dtype=np.float64)
    if mode == NipsMode.DENSE:
        if len(tokens) != n_features:
            raise DatasetParseError(
                f"값 개수({len(tokens)})가 특징 수({n_features})와 다릅니다.",
                path=path,
                line=line,
            )
        try:
            return np.array([float(token) for token in tokens], dtype=np.float64)
        except ValueError as exc:
            raise DatasetParseError(f"숫자가 아닌 값: {exc}", path=path, line=line) from exc

    for token in tokens:
        try:
            if mode == NipsMode.SPARSE:
                index_text, value_text = token.split(":", 1)
                index, value = int(index_text), float(value_text)
            else:
                index, value = int(token), 1.0
        except ValueError as exc:
            raise DatasetParseError(f"잘못된 토큰: {token!r}", path=path, line=line) from exc
        if not 1 <= index <= n_features:
            raise DatasetParseError(
                f"특징 인덱스 범위 초과: {index} (1..{n_features})", path=path, line=line
            )
        row[index - 1] = value
    return row


def load_nips_sparse(
    data_path: PathLike,
    labels_path: PathLike,
    n_features: int,
    mode: NipsMode = NipsMode.BINARY,
) -> Dataset:
    """NIPS 2003 챌린지 형식을 읽어 밀집 데이터셋으로 만듭니다.

    특징 인덱스는 1부터 시작합니다. 레이블 -1은 클래스 0, +1은 클래스 1이 됩니다.
    빈 데이터 줄은 모든 값이 0인 행입니다.
    """
    if n_features < 1:
        raise ParameterError("n_features는 1 이상이어야 합니다.")
    data_file, labels_file = Path(data_path), Path(labels_path)
    for required in (data_file, labels_file):
        if not required.exists():
            raise DatasetParseError("파일이 없습니다.", path=required)

    data_lines = data_file.read_text(encoding="utf-8").splitlines()
    label_lines = labels_file.read_text(encoding="utf-8").splitlines()
    if len(data_lines) != len(label_lines):
        shorter = min(len(data_lines), len(label_lines))
        longer_path = data_file if len(data_lines) > len(label_lines) else labels_file
        raise DatasetParseError(
            f"데이터({len(data_lines)}줄)와 레이블({len(label_lines)}줄)의 줄 수가 다릅니다.",
            path=longer_path,
            line=shorter + 1,
        )
    if not data_lines:
        raise DatasetParseError("no data rows", path=data_file, line=1)

    rows = [
        _parse_nips_row(line.split(), mode, n_features, data_file, number)
        for number, line in enumerate(data_lines, start=1)
    ]
    labels = np.empty(len(label_lines), dtype=np.int64)
    for number, text in enumerate(label_lines, start=1):
        token = text.strip()
        if token in ("1", "+1"):
            labels[number - 1] = 1
        elif token == "-1":
            labels[number - 1] = 0
        else:
            raise DatasetParseError(
                f"레이블은 -1 또는 +1 이어야 합니다: {token!r}", path=labels_file, line=number
            )

    dataset = Dataset(
        X=np.vstack(rows),
        target=labels,
        feature_names=default_feature_names(n_features),
        task=TaskKind.CLASSIFICATION,
        class_names=["-1", "+1"],
    )
    logger.info(
        "NIPS 데이터셋 로드",
        path=str(data_file),
        mode=mode.value,
        samples=dataset.n_samples,
        features=n_features,
    )
    return dataset


def generate_synthetic(
    n: int,
    r: int,
    k: int,
    task: TaskKind = TaskKind.CLASSIFICATION,
    noise: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """관련 특징 k개가 알려진 합성 데이터셋

    특징은 표준 정규 분포를 따릅니다. 무작위 위치의 k개 특징에 대한 고정 선형식
    (가중치 부호 ±1, 크기 U(0.5, 1.5))에 가우시안 잡음을 더한 값이 회귀 목표이며,
    분류 레이블은 그 값의 부호(양수면 1)입니다.
    """
    if n < 1 or r < 1:
        raise ParameterError(f"n과 r은 1 이상이어야 합니다: n={n}, r={r}")
    if not 1 <= k <= r:
        raise ParameterError(f"관련 특징 수는 1..r 범위여야 합니다: k={k}, r={r}")
    if noise < 0.0:
        raise ParameterError(f"noise는 음수일 수 없습니다: {noise}")

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, r))
    relevant = np.sort(rng.choice(r, size=k, replace=False))
    weights = rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 1.5, size=k)
    signal = X[:, relevant] @ weights + noise * rng.standard_normal(n)

    mask = np.zeros(r, dtype=bool)
    mask[relevant] = True
    if task == TaskKind.CLASSIFICATION:
        return Dataset(
            X=X,
            target=(signal > 0.0).astype(np.int64),
            feature_names=default_feature_names(r),
            task=task,
            relevant_mask=mask,
            class_names=["0", "1"],
        )
    return Dataset(
        X=X,
        target=signal,
        feature_names=default_feature_names(r),
        task=task,
        relevant_mask=mask,
    )


def apply_standardization(ds: Dataset, stats: StandardizeStats) -> Dataset:
    """주어진 통계로 표준화합니다. 상수 열은 0이 됩니다."""
    if stats.mean.shape != (ds.n_features,):
        raise ContractError("표준화 통계의 특징 수가 데이터셋과 다릅니다.")
    X = (ds.X - stats.mean) / stats.std
    X[:, stats.constant] = 0.0
    return ds.with_features(X)


def standardize(ds: Dataset) -> Tuple[Dataset, StandardizeStats]:
    """열마다 평균 0, 모집단 표준편차 1로 변환합니다 (표준편차 1e-8 이하 열은 상수로 취급)."""
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    constant = std <= STD_FLOOR
    stats = StandardizeStats(mean=mean, std=np.where(constant, 1.0, std), constant=constant)
    return apply_standardization(ds, stats), stats


def balance_by_replication(ds: Dataset, seed: int = 0) -> Dataset:
    """소수 클래스 샘플을 섞은 순서로 순환 복제해 모든 클래스 수를 최대 클래스에 맞춥니다."""
    if not ds.is_classification:
        raise ContractError("클래스 균형은 분류 데이터셋에서만 가능합니다.")
    classes, counts = np.unique(ds.target, return_counts=True)
    largest = int(counts.max())
    if np.all(counts == largest):
        return ds

    rng = np.random.default_rng(seed)
    extra: List[npt.NDArray[np.int64]] = []
    for label, count in zip(classes, counts):
        if count == largest:
            continue
        members = rng.permutation(np.flatnonzero(ds.target == label))
        extra.append(np.resize(members, largest - int(count)))
    indices = np.concatenate([np.arange(ds.n_samples), *extra])
    return ds.subset(indices)


def one_hot(labels: npt.ArrayLike, n_classes: int) -> Tensor:
    codes = np.asarray(labels, dtype=np.int64).reshape(-1)
    if n_classes < 1:
        raise ParameterError("클래스 수는 1 이상이어야 합니다.")
    if codes.size and (codes.min() < 0 or codes.max() >= n_classes):
        raise ParameterError(f"클래스 인덱스가 0..{n_classes - 1} 범위를 벗어났습니다.")
    encoded = np.zeros((codes.size, n_classes), dtype=np.float64)
    encoded[np.arange(codes.size), codes] = 1.0
    return encoded


def zero_features(X: npt.ArrayLike, keep: Sequence[int]) -> Tensor:
    """keep에 없는 열을 0으로 만든 사본"""
    features = np.array(X, dtype=np.float64, copy=True)
    kept = np.asarray(keep, dtype=np.int64)
    if kept.size and (kept.min() < 0 or kept.max() >= features.shape[1]):
        raise ParameterError("유지할 특징 인덱스가 범위를 벗어났습니다.")
    mask = np.ones(features.shape[1], dtype=bool)
    mask[kept] = False
    features[:, mask] = 0.0
    return features


def train_test_split(
    ds: Dataset, test_fraction: float = 0.25, seed: int = 0
) -> Tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError(f"test_fraction은 (0, 1) 범위여야 합니다: {test_fraction}")
    if ds.n_samples < 2:
        raise ContractError("분할하려면 샘플이 2개 이상 필요합니다.")
    order = np.random.default_rng(seed).permutation(ds.n_samples)
    n_test = min(max(1, int(round(ds.n_samples * test_fraction))), ds.n_samples - 1)
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


def kfold_indices(
    n: int, folds: int = 5, seed: int = 0
) -> List[Tuple[npt.NDArray[np.int64], npt.NDArray[np.int64]]]:
    """(학습 인덱스, 평가 인덱스) 쌍 목록"""
    if folds < 2 or folds > n:
        raise ParameterError(f"fold 수는 2..N 범위여야 합니다: folds={folds}, N={n}")
    order = np.random.default_rng(seed).permutation(n)
    splits = np.array_split(order, folds)
    result = []
    for index, held_out in enumerate(splits):
        train_part = np.concatenate([part for other, part in enumerate(splits) if other != index])
        result.append((np.sort(train_part), np.sort(held_out)))
    return result
