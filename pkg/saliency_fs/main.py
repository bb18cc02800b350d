"""명령줄 진입점

설명: gen | rank | eval | adv | gradcheck 하위 명령으로 데이터 생성, SFS 랭킹, 특징 곡선
평가, 적대적 섭동, 기울기 검사를 실행합니다. 결과는 JSON/CSV로만 저장하며 로그는 stderr로
출력합니다.

종료 코드: 0 성공, 1 입력/설정 검증 오류, 2 수치 오류
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from saliency_fs import __version__
from saliency_fs.core.config import Settings, describe_validation_error, load_settings
from saliency_fs.core.errors import ConfigurationError, ContractError, NumericError
from saliency_fs.core.logging_config import get_logger, setup_logging
from saliency_fs.models.network import ModelKind, OptimizerKind
from saliency_fs.models.saliency import PerturbationMode
from saliency_fs.models.selection import SfsConfig
from saliency_fs.services.dataset_service import (
    Dataset,
    TaskKind,
    apply_standardization,
    generate_synthetic,
    load_dense_csv,
    mask_sidecar_path,
    train_test_split,
    write_dense_csv,
)
from saliency_fs.services.evaluation_service import (
    baseline_score,
    feature_curve,
    precision_at_k,
    random_ranking,
)
from saliency_fs.services.gain_functions import gain_kind_for
from saliency_fs.services.gradcheck import run_gradcheck
from saliency_fs.services.model_store import StoredModel, load_stored_model, save_model
from saliency_fs.services.network_service import predict
from saliency_fs.services.result_writer import (
    RunRecorder,
    curve_frame,
    load_ranking,
    ranking_frame,
    ranking_payload,
)
from saliency_fs.services.saliency_service import (
    AdversarialResult,
    adversarial_perturb,
    adversarial_sweep,
)
from saliency_fs.services.sfs_ranker import create_feature_selector

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2


class _ArgumentParser(argparse.ArgumentParser):
    """인자 오류를 종료 코드 1로 처리하기 위해 예외로 바꿉니다."""

    def error(self, message: str) -> NoReturn:
        raise ConfigurationError(f"잘못된 인자: {message}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"정수 목록이 아닙니다: {text}") from exc


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON 설정 파일")
    parser.add_argument("--log-level", help="로그 레벨 (DEBUG, INFO, ...)")
    parser.add_argument("--json-logs", action="store_true", default=None, help="JSON 로그 출력")
    parser.add_argument("--threads", type=int, help="내부 병렬 스레드 수 (기본 1)")
    parser.add_argument("--seed", type=int, help="실행 시드 (기본: SFS_SEED 또는 0)")
    parser.add_argument("--out-dir", type=Path, help="결과 디렉터리")


def _add_training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--learning-rate", type=float)
    parser.add_argument("--optimizer", choices=[kind.value for kind in OptimizerKind])
    parser.add_argument("--hidden", type=_int_list, help="은닉층 폭 (예: 32,16)")
    parser.add_argument("--l2", type=float, help="L2 가중치 감쇠")
    parser.add_argument("--input-noise", type=float, help="학습 입력 가우시안 잡음 표준편차")


def _add_dataset(parser: argparse.ArgumentParser, flag: str = "--data") -> None:
    parser.add_argument(flag, type=Path, required=True, help="밀집 CSV 데이터 파일")
    parser.add_argument("--target-column", default="target")
    parser.add_argument(
        "--task",
        choices=[kind.value for kind in TaskKind],
        default=TaskKind.CLASSIFICATION.value,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="saliency_fs", description="Saliency 기반 특징 선택 툴킷")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    gen = commands.add_parser("gen", help="관련 특징이 알려진 합성 데이터셋 생성")
    _add_common(gen)
    gen.add_argument("--out", type=Path, required=True, help="저장할 CSV 경로")
    gen.add_argument("--n", type=int, default=1000, help="샘플 수")
    gen.add_argument("--r", type=int, default=100, help="특징 수")
    gen.add_argument("--k", type=int, default=10, help="관련 특징 수")
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument(
        "--task",
        choices=[kind.value for kind in TaskKind],
        default=TaskKind.CLASSIFICATION.value,
    )

    rank = commands.add_parser("rank", help="SFS 특징 랭킹 계산")
    _add_common(rank)
    _add_training(rank)
    _add_dataset(rank)
    rank.add_argument("--saliency-data", type=Path, help="saliency 계산용 별도 CSV")
    rank.add_argument("--gamma", type=float)
    rank.add_argument("--reps", type=int)
    rank.add_argument("--epsilon-stop", type=float)
    rank.add_argument("--model-kind", choices=[kind.value for kind in ModelKind])
    rank.add_argument("--model-out", type=Path, help="마지막으로 학습한 모델 저장 경로")

    evaluate = commands.add_parser("eval", help="랭킹의 특징 수별 점수 곡선 평가")
    _add_common(evaluate)
    _add_training(evaluate)
    _add_dataset(evaluate, "--train")
    evaluate.add_argument("--test", type=Path, help="평가 CSV (생략하면 학습 데이터에서 분할)")
    evaluate.add_argument("--test-fraction", type=float, default=0.25)
    evaluate.add_argument("--ranking", type=Path, required=True, help="rank가 만든 ranking.json")
    evaluate.add_argument("--ks", type=_int_list, required=True, help="예: 5,10,20")
    evaluate.add_argument("--classifier-kind", choices=[kind.value for kind in ModelKind])
    evaluate.add_argument("--mask", type=Path, help="관련 특징 마스크 JSON")
    evaluate.add_argument("--random-baseline", action="store_true", help="무작위 랭킹 곡선도 출력")

    adv = commands.add_parser("adv", help="분류기를 목표 클래스로 유도하는 적대적 섭동")
    _add_common(adv)
    adv.add_argument("--model", type=Path, required=True, help="rank --model-out으로 저장한 모델")
    _add_dataset(adv)
    adv.add_argument("--rows", type=_int_list, help="섭동할 행 번호 (기본: 전체)")
    target_group = adv.add_mutually_exclusive_group(required=True)
    target_group.add_argument("--target", type=int, help="목표 클래스")
    target_group.add_argument("--sweep", action="store_true", help="모든 클래스를 목표로 시도")
    adv.add_argument("--threshold", type=float, help="목표 확률 임계값 (기본 0.95)")
    adv.add_argument("--step-size", type=float)
    adv.add_argument("--max-iters", type=int)
    adv.add_argument("--mode", choices=[mode.value for mode in PerturbationMode])

    gradcheck = commands.add_parser("gradcheck", help="유한 차분 기울기 검사")
    _add_common(gradcheck)
    gradcheck.add_argument("--rounds", type=int, default=4)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    def pick(name: str) -> Any:
        return getattr(args, name, None)

    return {
        "seed": pick("seed"),
        "threads": pick("threads"),
        "log_level": pick("log_level"),
        "json_logs": pick("json_logs"),
        "output_dir": str(args.out_dir) if pick("out_dir") else None,
        "train": {
            "epochs": pick("epochs"),
            "batch_size": pick("batch_size"),
            "learning_rate": pick("learning_rate"),
            "optimizer": pick("optimizer"),
            "hidden_layers": pick("hidden"),
            "l2_weight_decay": pick("l2"),
            "input_noise_std": pick("input_noise"),
        },
        "ranking": {
            "gamma": pick("gamma"),
            "reps": pick("reps"),
            "epsilon_stop": pick("epsilon_stop"),
            "model_kind": pick("model_kind"),
        },
        "adversarial": {
            "confidence_threshold": pick("threshold"),
            "step_size": pick("step_size"),
            "max_iters": pick("max_iters"),
            "perturbation_mode": pick("mode"),
        },
    }


def _model_kind_for(settings: Settings, ds: Dataset, explicit: Optional[str]) -> ModelKind:
    if explicit:
        return ModelKind(explicit)
    kind = settings.ranking.model_kind
    if not ds.is_classification and kind != ModelKind.MLP_REGRESSOR:
        return ModelKind.MLP_REGRESSOR
    return kind


def _recorder(command: str, settings: Settings) -> RunRecorder:
    return RunRecorder(command, settings.output_dir, __version__)


def _config_snapshot(settings: Settings, **extra: Any) -> Dict[str, Any]:
    """결과 파일에 넣는 설정. 경로는 매니페스트에만 기록합니다."""
    snapshot = settings.model_dump(mode="json", exclude={"output_dir"})
    snapshot.update({key: value for key, value in extra.items() if value is not None})
    return snapshot


def _manifest_config(config: Dict[str, Any], output_dir: Any, **paths: Optional[Path]) -> Dict[str, Any]:
    manifest_config = {**config, "output_dir": str(output_dir)}
    manifest_config.update({key: str(value) for key, value in paths.items() if value is not None})
    return manifest_config


def cmd_gen(args: argparse.Namespace, settings: Settings) -> int:
    task = TaskKind(args.task)
    ds = generate_synthetic(args.n, args.r, args.k, task, args.noise, settings.seed)
    out_dir = args.out_dir or args.out.parent
    with RunRecorder("gen", out_dir, __version__) as recorder:
        for path in write_dense_csv(ds, args.out, recorder.manifest_name):
            recorder.add_output(path)
        config = _config_snapshot(
            settings, n=args.n, r=args.r, k=args.k, noise=args.noise, task=task.value
        )
        recorder.finish(_manifest_config(config, out_dir, out=args.out), {"seed": settings.seed})
    print(f"{args.out} ({ds.n_samples}x{ds.n_features}, relevant={args.k})")
    return EXIT_OK


def _load(path: Path, args: argparse.Namespace, recorder: RunRecorder, mask: Optional[Path] = None) -> Dataset:
    recorder.record_input(path)
    return load_dense_csv(path, args.target_column, TaskKind(args.task), mask_path=mask)


def cmd_rank(args: argparse.Namespace, settings: Settings) -> int:
    with _recorder("rank", settings) as recorder:
        ds = _load(args.data, args, recorder)
        eval_ds = _load(args.saliency_data, args, recorder) if args.saliency_data else None

        kind = _model_kind_for(settings, ds, args.model_kind)
        model_spec = settings.to_model_spec(ds.n_features, ds.n_classes, kind)
        cfg = SfsConfig(
            gamma=settings.ranking.gamma,
            epsilon_stop=settings.ranking.epsilon_stop,
            reps=settings.ranking.reps,
            gain=settings.to_gain_spec(gain_kind_for(model_spec.loss_kind)),
            model_spec=model_spec,
            train_config=settings.to_train_config(),
            seed=settings.seed,
        )
        selector = create_feature_selector(settings)
        ranking = selector.rank_dataset(ds, cfg, eval_ds)

        # 모델 경로 오류는 결과 파일을 쓰기 전에 드러나야 함
        if args.model_out and selector.last_model is not None:
            save_model(selector.last_model, args.model_out, selector.last_standardization)
            recorder.add_output(args.model_out)
        config = _config_snapshot(settings, sfs=cfg.model_dump(mode="json"))
        recorder.json("ranking.json", ranking_payload(ranking, config))
        recorder.csv("ranking.csv", ranking_frame(ranking))
        recorder.finish(
            _manifest_config(config, settings.output_dir, model_out=args.model_out),
            {"seed": settings.seed},
        )
    print(f"ranking: {ranking.n_features} features, {ranking.n_trainings} trainings")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    with _recorder("eval", settings) as recorder:
        mask = args.mask
        if mask is None and mask_sidecar_path(args.train).exists():
            mask = mask_sidecar_path(args.train)
        full = _load(args.train, args, recorder, mask)
        if args.test:
            train_ds, test_ds = full, _load(args.test, args, recorder)
        else:
            train_ds, test_ds = train_test_split(full, args.test_fraction, settings.seed)
        recorder.record_input(args.ranking)
        ranking = load_ranking(args.ranking)

        kind = _model_kind_for(settings, train_ds, args.classifier_kind)
        spec = settings.to_model_spec(train_ds.n_features, train_ds.n_classes, kind)
        train_cfg = settings.to_train_config()
        curves = [
            feature_curve(
                ranking, train_ds, test_ds, spec, train_cfg, args.ks, "sfs", settings.threads
            )
        ]
        if args.random_baseline:
            baseline_ranking = random_ranking(train_ds.n_features, settings.seed)
            curves.append(
                feature_curve(
                    baseline_ranking,
                    train_ds,
                    test_ds,
                    spec,
                    train_cfg,
                    args.ks,
                    "random",
                    settings.threads,
                )
            )

        payload: Dict[str, Any] = {
            "curves": [curve.model_dump(mode="json") for curve in curves],
            "baseline_score": baseline_score(train_ds, test_ds, spec, train_cfg),
            "config": _config_snapshot(settings, ks=args.ks),
        }
        if full.relevant_mask is not None:
            payload["precision_at_k"] = {
                str(k): precision_at_k(ranking, full.relevant_mask, k) for k in args.ks
            }
        recorder.json("curve.json", payload)
        recorder.csv("curve.csv", curve_frame(curves))
        recorder.finish(
            _manifest_config(payload["config"], settings.output_dir), {"seed": settings.seed}
        )
    for curve in curves:
        summary = ", ".join(f"k={k}: {s:.4f}" for k, s in zip(curve.ks, curve.scores))
        print(f"{curve.ranker_desc} [{curve.metric.value}] {summary}")
    return EXIT_OK


def _adversarial_record(row: int, x: np.ndarray, result: AdversarialResult, before: np.ndarray) -> Dict[str, Any]:
    return {
        "row": row,
        "target_class": result.target_class,
        "converged": result.converged,
        "iters_used": result.iters_used,
        "initial_confidence": result.initial_confidence,
        "final_confidence": result.final_confidence,
        "perturbation_l2": result.perturbation_l2,
        "perturbation_linf": result.perturbation_linf,
        "probabilities_before": before.tolist(),
        "x_before": x.tolist(),
        "x_after": result.x_adv.reshape(-1).tolist(),
    }


def _model_inputs(stored: StoredModel, ds: Dataset, model_path: Path) -> Dataset:
    """학습 시점의 표준화 통계로 데이터를 변환합니다."""
    if stored.model.spec.input_dim != ds.n_features:
        raise ContractError(
            f"모델 입력 차원({stored.model.spec.input_dim})과 데이터 특징 수({ds.n_features})가 다릅니다."
        )
    if stored.standardization is None:
        logger.warning("모델 파일에 표준화 통계가 없어 입력을 그대로 사용", model=str(model_path))
        return ds
    return apply_standardization(ds, stored.standardization)


def cmd_adv(args: argparse.Namespace, settings: Settings) -> int:
    with _recorder("adv", settings) as recorder:
        recorder.record_input(args.model)
        stored = load_stored_model(args.model)
        model = stored.model
        ds = _load(args.data, args, recorder)
        inputs = _model_inputs(stored, ds, args.model)
        rows = args.rows if args.rows is not None else list(range(ds.n_samples))
        for row in rows:
            if not 0 <= row < ds.n_samples:
                raise ContractError(f"행 번호 범위 초과: {row}")

        cfg = settings.to_adversarial_config(args.target if args.target is not None else 0)
        records: List[Dict[str, Any]] = []
        for row in rows:
            x = inputs.X[row]
            before = predict(model, x.reshape(1, -1))[0]
            results = (
                adversarial_sweep(model, x, cfg) if args.sweep else [adversarial_perturb(model, x, cfg)]
            )
            records.extend(_adversarial_record(row, x, result, before) for result in results)

        converged = sum(1 for record in records if record["converged"])
        config = _config_snapshot(settings, target=args.target, sweep=args.sweep, rows=rows)
        recorder.json(
            "adversarial.json",
            {"results": records, "converged": converged, "attempts": len(records), "config": config},
        )
        recorder.finish(
            _manifest_config(config, settings.output_dir, model=args.model), {"seed": settings.seed}
        )
    print(f"adversarial: {converged}/{len(records)} reached the target confidence")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, settings: Settings) -> int:
    report = run_gradcheck(seed=settings.seed, rounds=args.rounds)
    worst = report.worst_case
    print(
        f"max relative error: {report.max_relative_error:.3e} "
        f"({len(report.cases)} cases, worst={worst.name if worst else '-'})"
    )
    if not report.passed:
        raise NumericError(
            f"기울기 검사 실패: 최대 상대 오차 {report.max_relative_error:.3e} >= {report.tolerance:g}"
        )
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "rank": cmd_rank,
    "eval": cmd_eval,
    "adv": cmd_adv,
    "gradcheck": cmd_gradcheck,
}


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


def run(argv: Optional[Sequence[str]] = None) -> int:
    """CLI를 실행하고 종료 코드를 반환합니다."""
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
        settings = load_settings(args.config, _overrides(args))
        setup_logging(settings)
        return _COMMANDS[args.command](args, settings)
    except NumericError as exc:
        print(f"saliency_fs: 수치 오류: {_one_line(exc)}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print(f"saliency_fs: 오류: 값 검증 실패: {describe_validation_error(exc)}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ContractError, OSError, ValueError) as exc:
        print(f"saliency_fs: 오류: {_one_line(exc)}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
