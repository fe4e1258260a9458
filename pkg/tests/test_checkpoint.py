import numpy as np
import pytest

from densityrank.data import synth_complexity_graded
from densityrank.models import (
    ARModel,
    CheckpointError,
    Encoder,
    TrainConfig,
    checkpoint_load,
    checkpoint_save,
    train_flow,
)

from test_models import randomized_flow, state_bytes


class TestRoundtrip:
    def test_flow(self, tmp_path):
        flow = randomized_flow()
        path = tmp_path / "f.ck"
        checkpoint_save(flow, path)
        loaded = checkpoint_load(path)
        assert state_bytes(loaded) == state_bytes(flow)
        assert loaded.config_dict() == flow.config_dict()

    def test_ar(self, tmp_path):
        model = ARModel(5, alphabet=8, hidden=12, n_hidden=3, seed=2)
        path = tmp_path / "a.ck"
        checkpoint_save(model, path)
        loaded = checkpoint_load(path)
        assert state_bytes(loaded) == state_bytes(model)
        assert loaded.alphabet == 8 and loaded.n_hidden == 3

    def test_encoder(self, tmp_path):
        enc = Encoder(6, 2, arch="mlp", hidden=9, seed=3)
        path = tmp_path / "e.ck"
        checkpoint_save(enc, path)
        loaded = checkpoint_load(path)
        assert state_bytes(loaded) == state_bytes(enc)

    def test_training_metadata_preserved(self, tmp_path):
        ds = synth_complexity_graded(0, 12, 4, 2)
        cfg = TrainConfig(epochs=2, batch_size=4, seed=1)
        model = train_flow(ds, cfg, n_layers=2, hidden=8)
        path = tmp_path / "m.ck"
        checkpoint_save(model, path)
        loaded = checkpoint_load(path)
        assert loaded.train_curve == model.train_curve
        assert loaded.train_config_echo == cfg.asdict()

    def test_save_is_byte_deterministic(self, tmp_path):
        flow = randomized_flow()
        p1, p2 = tmp_path / "1.ck", tmp_path / "2.ck"
        checkpoint_save(flow, p1)
        checkpoint_save(flow, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestCorruption:
    def saved(self, tmp_path):
        path = tmp_path / "m.ck"
        checkpoint_save(randomized_flow(dim=4, n_layers=2), path)
        return path

    def test_bad_magic(self, tmp_path):
        path = self.saved(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            checkpoint_load(path)

    def test_flipped_payload_byte(self, tmp_path):
        path = self.saved(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="checksum"):
            checkpoint_load(path)

    def test_truncation(self, tmp_path):
        path = self.saved(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 10])
        with pytest.raises(CheckpointError):
            checkpoint_load(path)

    def test_unsupported_version(self, tmp_path):
        import hashlib
        import struct

        path = self.saved(tmp_path)
        body = bytearray(path.read_bytes()[:-32])
        body[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(body) + hashlib.sha256(bytes(body)).digest())
        with pytest.raises(CheckpointError, match="version"):
            checkpoint_load(path)

    def test_not_a_file(self, tmp_path):
        path = tmp_path / "tiny"
        path.write_bytes(b"hi")
        with pytest.raises(CheckpointError):
            checkpoint_load(path)
