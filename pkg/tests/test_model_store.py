"""모델 저장/불러오기 테스트"""

import json
import struct

import numpy as np
import pytest

from saliency_fs.core.errors import ContractError
from saliency_fs.services.dataset_service import StandardizeStats, standardize
from saliency_fs.services.model_store import (
    MAGIC,
    decode_model,
    decode_stored,
    encode_model,
    load_model,
    load_stored_model,
    save_model,
)
from saliency_fs.services.network_service import init_model, predict


class TestModelStore:
    """모델 파일 형식 테스트"""

    def test_save_and_load_preserves_predictions(self, tmp_path, mlp_spec, rng):
        model = init_model(mlp_spec, seed=21)
        path = save_model(model, tmp_path / "model.sfsm")
        loaded = load_model(path)
        assert loaded.spec == model.spec
        assert loaded.seed == 21
        X = rng.normal(size=(5, 6))
        np.testing.assert_array_equal(predict(loaded, X), predict(model, X))

    def test_header_layout(self, softmax_spec):
        data = encode_model(init_model(softmax_spec, seed=0))
        assert data[:4] == MAGIC
        (length,) = struct.unpack_from("<I", data, 4)
        header = json.loads(data[8 : 8 + length])
        assert header["format_version"] == 1
        assert header["parameters"] == [{"name": "W0", "shape": [2, 2]}, {"name": "b0", "shape": [2]}]
        assert len(data) == 8 + length + 6 * 8

    def test_loaded_parameters_are_read_only(self, softmax_spec):
        loaded = decode_model(encode_model(init_model(softmax_spec, seed=0)))
        with pytest.raises(ValueError):
            loaded.parameters[0][0, 0] = 1.0

    def test_bad_magic(self, softmax_spec):
        data = encode_model(init_model(softmax_spec, seed=0))
        with pytest.raises(ContractError):
            decode_model(b"XXXX" + data[4:])

    def test_truncated_parameters(self, softmax_spec):
        data = encode_model(init_model(softmax_spec, seed=0))
        with pytest.raises(ContractError):
            decode_model(data[:-8])

    def test_trailing_bytes(self, softmax_spec):
        data = encode_model(init_model(softmax_spec, seed=0))
        with pytest.raises(ContractError):
            decode_model(data + b"\x00")

    def test_unsupported_version(self, softmax_spec):
        data = encode_model(init_model(softmax_spec, seed=0))
        (length,) = struct.unpack_from("<I", data, 4)
        header = json.loads(data[8 : 8 + length])
        header["format_version"] = 99
        raw = json.dumps(header).encode("utf-8")
        with pytest.raises(ContractError):
            decode_model(MAGIC + struct.pack("<I", len(raw)) + raw + data[8 + length :])

    def test_no_temporary_files_left(self, tmp_path, softmax_spec):
        save_model(init_model(softmax_spec, seed=0), tmp_path / "m.sfsm")
        assert [p.name for p in tmp_path.iterdir()] == ["m.sfsm"]


class TestStoredStandardization:
    """표준화 통계 저장 테스트"""

    def test_round_trip(self, tmp_path, small_classification, mlp_spec):
        _, stats = standardize(small_classification)
        path = save_model(init_model(mlp_spec, seed=0), tmp_path / "m.sfsm", standardization=stats)
        stored = load_stored_model(path)
        np.testing.assert_array_equal(stored.standardization.mean, stats.mean)
        np.testing.assert_array_equal(stored.standardization.std, stats.std)
        np.testing.assert_array_equal(stored.standardization.constant, stats.constant)
        assert load_model(path).spec == mlp_spec

    def test_absent_without_stats(self, softmax_spec):
        assert decode_stored(encode_model(init_model(softmax_spec, seed=0))).standardization is None

    def test_length_mismatch_rejected(self, softmax_spec):
        stats = StandardizeStats(
            mean=np.zeros(3), std=np.ones(3), constant=np.zeros(3, dtype=bool)
        )
        with pytest.raises(ContractError):
            encode_model(init_model(softmax_spec, seed=0), standardization=stats)

    def test_corrupt_stats_rejected(self, softmax_spec):
        data = encode_model(init_model(softmax_spec, seed=0))
        (length,) = struct.unpack_from("<I", data, 4)
        header = json.loads(data[8 : 8 + length])
        header["standardization"] = {"mean": [0.0, 0.0], "std": [1.0, -1.0], "constant": [False, False]}
        raw = json.dumps(header).encode("utf-8")
        with pytest.raises(ContractError):
            decode_stored(MAGIC + struct.pack("<I", len(raw)) + raw + data[8 + length :])
