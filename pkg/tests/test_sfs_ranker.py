"""SFS 랭커 테스트"""

import numpy as np
import pytest
from pydantic import ValidationError

from saliency_fs.core.config import Settings
from saliency_fs.core.errors import ContractError, NumericError, ShapeError
from saliency_fs.models.gain import GainKind, GainSpec
from saliency_fs.models.network import ModelKind, ModelSpec, OptimizerKind, TrainConfig
from saliency_fs.models.selection import FeatureRanking, RankingIteration, SfsConfig
from saliency_fs.services.network_service import init_model, train
from saliency_fs.services.saliency_service import aggregate_classification, batch_saliency
from saliency_fs.services.sfs_ranker import (
    SaliencyFeatureSelector,
    alive_schedule,
    create_feature_selector,
    derive_seed,
    rank,
)

CE = GainSpec(kind=GainKind.CROSS_ENTROPY_COMPLEMENT)


def _sum_labelled_data(n: int = 400, seed: int = 0):
    """특징 0, 1만 정보가 있는 4-특징 데이터 (레이블 = sign(x0 + x1))"""
    generator = np.random.default_rng(seed)
    X = generator.normal(size=(n, 4))
    labels = (X[:, 0] + X[:, 1] > 0).astype(int)
    return X, np.eye(2)[labels]


def _softmax_config(n_features: int, **overrides) -> SfsConfig:
    values = dict(
        gamma=0.0,
        reps=3,
        gain=CE,
        model_spec=ModelSpec(kind=ModelKind.SOFTMAX_LINEAR, input_dim=n_features, output_dim=2),
        train_config=TrainConfig(epochs=30, learning_rate=0.01),
        seed=7,
    )
    values.update(overrides)
    return SfsConfig(**values)


@pytest.fixture
def selector() -> SaliencyFeatureSelector:
    return SaliencyFeatureSelector(Settings(), threads=1)


class TestAliveSchedule:
    """살아있는 특징 수 스케줄 테스트"""

    def test_halving(self):
        assert alive_schedule(8, 0.5, 1.0) == [8, 4, 2]

    def test_single_pass(self):
        assert alive_schedule(500, 0.0) == [500]

    def test_slow_decay(self):
        assert alive_schedule(10, 0.975) == [10, 9, 8, 7, 6, 5, 4, 3, 2]

    def test_epsilon_stop_cuts_early(self):
        assert alive_schedule(100, 0.5, epsilon_stop=10.0) == [100, 50, 25, 12]

    def test_single_feature(self):
        assert alive_schedule(1, 0.5) == [1]

    @pytest.mark.parametrize(
        "n_features, gamma, epsilon_stop",
        [(0, 0.5, 1.0), (5, 1.0, 1.0), (5, -0.1, 1.0), (5, 0.5, 0.5)],
    )
    def test_invalid_arguments(self, n_features, gamma, epsilon_stop):
        with pytest.raises(ContractError):
            alive_schedule(n_features, gamma, epsilon_stop)


class TestDeriveSeed:
    """반복별 시드 유도 테스트"""

    def test_reproducible(self):
        assert derive_seed(3, 1, 2) == derive_seed(3, 1, 2)

    def test_varies_with_every_component(self):
        seeds = {derive_seed(3, 0, 0), derive_seed(3, 0, 1), derive_seed(3, 1, 0), derive_seed(4, 0, 0)}
        assert len(seeds) == 4

    def test_negative_base_seed(self):
        assert 0 <= derive_seed(-1, 0, 0) < 2**63


class TestSfsConfig:
    """SFS 설정 검증"""

    def test_gamma_range(self):
        with pytest.raises(ValidationError):
            _softmax_config(4, gamma=1.0)

    def test_reps_positive(self):
        with pytest.raises(ValidationError):
            _softmax_config(4, reps=0)

    def test_ranking_must_be_permutation(self):
        with pytest.raises(ValidationError):
            FeatureRanking(order=[0, 0, 1])

    def test_alive_counts_strictly_decrease(self):
        history = [
            RankingIteration(alive=4, features=[0, 1, 2, 3], saliency=[1.0] * 4),
            RankingIteration(alive=4, features=[0, 1, 2, 3], saliency=[1.0] * 4),
        ]
        with pytest.raises(ValidationError):
            FeatureRanking(order=[0, 1, 2, 3], history=history)


class TestRank:
    """랭킹 계산 테스트"""

    def test_informative_features_rank_first(self, selector):
        X, Y = _sum_labelled_data()
        ranking = selector.rank(X, Y, _softmax_config(4))
        assert set(ranking.order[:2]) == {0, 1}
        assert sorted(ranking.order) == [0, 1, 2, 3]

    def test_single_feature(self, selector):
        X, Y = _sum_labelled_data()
        ranking = selector.rank(X[:, :1], Y, _softmax_config(1, reps=1))
        assert ranking.order == [0]
        assert len(ranking.history) == 1

    def test_single_pass_matches_direct_saliency_sort(self, selector):
        X, Y = _sum_labelled_data(200, seed=1)
        cfg = _softmax_config(4, reps=1)
        ranking = selector.rank(X, Y, cfg)

        seed = derive_seed(cfg.seed, 0, 0)
        model = train(init_model(cfg.model_spec, seed), X, Y, cfg.train_config.model_copy(update={"seed": seed}))
        aggregated = aggregate_classification(batch_saliency(model, CE, X, Y), np.argmax(Y, axis=1))
        expected = np.lexsort((np.arange(4), -aggregated)).tolist()
        assert ranking.order == expected
        np.testing.assert_array_equal(ranking.history[0].saliency, aggregated)

    def test_training_count_follows_schedule(self, selector):
        X, Y = _sum_labelled_data(120)
        single = selector.rank(X, Y, _softmax_config(4, reps=2, train_config=TrainConfig(epochs=2)))
        assert single.n_trainings == 2
        iterative = selector.rank(
            X, Y, _softmax_config(4, gamma=0.5, reps=2, train_config=TrainConfig(epochs=2))
        )
        assert [item.alive for item in iterative.history] == [4, 2]
        assert iterative.n_trainings == 4

    def test_features_never_resurrect(self, selector, small_classification):
        cfg = SfsConfig(
            gamma=0.5,
            reps=2,
            gain=CE,
            model_spec=ModelSpec(kind=ModelKind.MLP_CLASSIFIER, input_dim=6, output_dim=2, hidden_layers=[8]),
            train_config=TrainConfig(epochs=5, learning_rate=0.01),
            seed=1,
        )
        ranking = selector.rank_dataset(small_classification, cfg)
        for item in ranking.history:
            assert set(ranking.order[: item.alive]) == set(item.features)
        assert ranking.feature_names == small_classification.feature_names

    def test_deterministic(self, selector):
        X, Y = _sum_labelled_data(150)
        cfg = _softmax_config(4, gamma=0.5, reps=2, train_config=TrainConfig(epochs=5))
        first = selector.rank(X, Y, cfg)
        second = selector.rank(X, Y, cfg)
        assert first.model_dump() == second.model_dump()

    def test_thread_count_does_not_change_result(self):
        X, Y = _sum_labelled_data(150)
        cfg = _softmax_config(4, reps=4, train_config=TrainConfig(epochs=5))
        serial = SaliencyFeatureSelector(Settings(), threads=1).rank(X, Y, cfg)
        parallel = create_feature_selector(Settings(), threads=3).rank(X, Y, cfg)
        assert serial.model_dump() == parallel.model_dump()

    def test_module_level_rank(self):
        X, Y = _sum_labelled_data(100)
        ranking = rank(X, Y, _softmax_config(4, reps=1, train_config=TrainConfig(epochs=2)))
        assert sorted(ranking.order) == [0, 1, 2, 3]

    def test_regression_ranking(self, selector, small_regression):
        cfg = SfsConfig(
            reps=2,
            gain=GainSpec(kind=GainKind.MSE_INVERSE),
            model_spec=ModelSpec(kind=ModelKind.MLP_REGRESSOR, input_dim=5, output_dim=1, hidden_layers=[]),
            train_config=TrainConfig(epochs=50, learning_rate=0.01),
            seed=0,
        )
        ranking = selector.rank_dataset(small_regression, cfg)
        relevant = set(np.flatnonzero(small_regression.relevant_mask).tolist())
        assert set(ranking.order[:2]) == relevant

    def test_separate_saliency_set(self, selector):
        X, Y = _sum_labelled_data(300)
        cfg = _softmax_config(4)
        ranking = selector.rank(X[:200], Y[:200], cfg, eval_X=X[200:], eval_Y=Y[200:])
        assert set(ranking.order[:2]) == {0, 1}

    def test_saliency_set_needs_both_parts(self, selector):
        X, Y = _sum_labelled_data(50)
        with pytest.raises(ContractError):
            selector.rank(X, Y, _softmax_config(4), eval_X=X)

    def test_empty_input(self, selector):
        with pytest.raises(ContractError):
            selector.rank(np.zeros((0, 4)), np.zeros((0, 2)), _softmax_config(4))

    def test_input_dimension_mismatch(self, selector):
        X, Y = _sum_labelled_data(50)
        with pytest.raises(ShapeError):
            selector.rank(X[:, :3], Y, _softmax_config(4))

    def test_incompatible_gain(self, selector):
        X, Y = _sum_labelled_data(50)
        with pytest.raises(ContractError):
            selector.rank(X, Y, _softmax_config(4, gain=GainSpec(kind=GainKind.HINGE_LOG)))

    def test_divergence_carries_iteration(self, selector, rng):
        X = rng.normal(size=(200, 3))
        Y = rng.normal(size=(200, 1))
        cfg = SfsConfig(
            reps=1,
            gain=GainSpec(kind=GainKind.MSE_INVERSE),
            model_spec=ModelSpec(kind=ModelKind.MLP_REGRESSOR, input_dim=3, output_dim=1, hidden_layers=[]),
            train_config=TrainConfig(epochs=200, optimizer=OptimizerKind.SGD, learning_rate=1e3),
        )
        with pytest.raises(NumericError) as exc_info:
            selector.rank(X, Y, cfg)
        assert exc_info.value.iteration == 0
        assert "iteration=0" in str(exc_info.value)
