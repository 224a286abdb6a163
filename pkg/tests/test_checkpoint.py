"""Checkpoint binary format: round trips and corruption detection."""

import struct
import zlib
from pathlib import Path

import numpy as np
import pytest

from idcloop.classifier import (
    Checkpoint,
    ModelConfig,
    build_model,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from idcloop.errors import (
    CheckpointConfigHashError,
    CheckpointCRCError,
    CheckpointError,
    CheckpointMagicError,
    CheckpointTensorCountError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)

SMALL_CFG = ModelConfig(conv_channels=(4, 6), input_size=12, dense_units=8)


def make_checkpoint(cfg: ModelConfig = SMALL_CFG, seed: int = 0) -> Checkpoint:
    model = build_model(cfg, seed=seed)
    return Checkpoint(
        model_config=cfg,
        tensors=model.snapshot(),
        training_config={"epochs": 3, "seed": seed},
        metrics={"epoch": 1, "test_accuracy": 0.75},
        created_at=None,
    )


def recrc(data: bytearray) -> bytes:
    """Recompute the trailing CRC over the body after structural edits."""
    crc = zlib.crc32(bytes(data[4:-4])) & 0xFFFFFFFF
    return bytes(data[:-4]) + struct.pack("<I", crc)


class TestRoundTrip:
    def test_bitwise_round_trip(self, tmp_path):
        ckpt = make_checkpoint()
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert set(loaded.tensors) == set(ckpt.tensors)
        for name in ckpt.tensors:
            np.testing.assert_array_equal(loaded.tensors[name], ckpt.tensors[name])
            assert loaded.tensors[name].dtype == np.float32
        assert loaded.model_config == ckpt.model_config
        assert loaded.training_config == ckpt.training_config
        assert loaded.metrics == ckpt.metrics
        assert loaded.created_at is None
        assert loaded.version == 1

    def test_model_round_trip(self, tmp_path):
        ckpt = make_checkpoint(seed=9)
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        model = model_from_checkpoint(load_checkpoint(path))
        for name, arr in model.tensors().items():
            np.testing.assert_array_equal(arr, ckpt.tensors[name])

    def test_serialization_is_deterministic(self, tmp_path):
        ckpt = make_checkpoint()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(ckpt, a)
        save_checkpoint(ckpt, b)
        assert a.read_bytes() == b.read_bytes()

    def test_timestamp_survives(self, tmp_path):
        ckpt = make_checkpoint()
        ckpt.created_at = "2024-05-01T12:00:00Z"
        path = tmp_path / "model.ckpt"
        save_checkpoint(ckpt, path)
        assert load_checkpoint(path).created_at == "2024-05-01T12:00:00Z"

    def test_expected_config_accepted(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(make_checkpoint(), path)
        load_checkpoint(path, expected_config=SMALL_CFG)


class TestCorruption:
    @pytest.fixture()
    def saved(self, tmp_path) -> Path:
        path = tmp_path / "model.ckpt"
        save_checkpoint(make_checkpoint(), path)
        return path

    def test_bad_magic(self, saved):
        data = bytearray(saved.read_bytes())
        data[0] ^= 0xFF
        saved.write_bytes(bytes(data))
        with pytest.raises(CheckpointMagicError):
            load_checkpoint(saved)

    def test_not_a_checkpoint_at_all(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"PK")
        with pytest.raises(CheckpointMagicError):
            load_checkpoint(path)

    def test_version_mismatch(self, saved):
        data = bytearray(saved.read_bytes())
        data[4] += 1  # version field follows the magic
        saved.write_bytes(recrc(data))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(saved)

    def test_truncated_payload(self, saved):
        data = saved.read_bytes()
        saved.write_bytes(data[: len(data) - 10])
        with pytest.raises(CheckpointTruncatedError):
            load_checkpoint(saved)

    def test_header_only_file(self, saved):
        saved.write_bytes(saved.read_bytes()[:20])
        with pytest.raises(CheckpointTruncatedError):
            load_checkpoint(saved)

    def test_tensor_count_mismatch(self, saved):
        data = bytearray(saved.read_bytes())
        # count is the u64 after version (4) and config hash (32)
        (count,) = struct.unpack_from("<Q", data, 40)
        struct.pack_into("<Q", data, 40, count - 1)
        saved.write_bytes(recrc(data))
        with pytest.raises(CheckpointTensorCountError):
            load_checkpoint(saved)

    def test_crc_detects_payload_flip(self, saved):
        data = bytearray(saved.read_bytes())
        data[-12] ^= 0x01  # inside the final tensor's payload
        saved.write_bytes(bytes(data))
        with pytest.raises(CheckpointCRCError):
            load_checkpoint(saved)

    def test_config_hash_mismatch(self, saved):
        other = ModelConfig(conv_channels=(4, 6), input_size=12, dense_units=16)
        with pytest.raises(CheckpointConfigHashError):
            load_checkpoint(saved, expected_config=other)

    def test_reserved_tensor_name_rejected(self, tmp_path):
        ckpt = make_checkpoint()
        ckpt.tensors["__meta__"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(CheckpointError):
            save_checkpoint(ckpt, tmp_path / "bad.ckpt")
