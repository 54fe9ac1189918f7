import numpy as np
import pytest

from almeta.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, save_checkpoint
from almeta.errors import ConfigurationError
from almeta.model import ModelConfig, init_params
from almeta.optim import AdamState, adam_step


def make_store(seed=0):
    cfg = ModelConfig(
        task="classification", n_classes=3, encoder="mlp", input_dim=4,
        embed_dim=4, hidden_dim=4, match_hidden=4,
    ).validate()
    return cfg, init_params(cfg, np.random.default_rng(seed))


class TestRoundTrip:
    def test_params_config_and_adam_survive(self, tmp_path):
        cfg, store = make_store()
        adam = AdamState(lr=0.01, t=0)
        grads = {k: np.ones_like(v) * 0.1 for k, v in store.params.items()}
        adam_step(store.params, grads, adam)
        path = tmp_path / "m.ckpt"
        save_checkpoint(str(path), store, cfg, adam)
        store2, cfg2, adam2, header = load_checkpoint(str(path))
        assert cfg2.to_dict() == cfg.to_dict()
        assert header["config_hash"] == cfg.hash()
        assert sorted(store2.params) == sorted(store.params)
        for k in store.params:
            assert np.array_equal(store.params[k], store2.params[k])
            assert np.array_equal(adam.m[k], adam2.m[k])
            assert np.array_equal(adam.v[k], adam2.v[k])
        assert adam2.t == adam.t and adam2.lr == adam.lr

    def test_without_adam(self, tmp_path):
        cfg, store = make_store()
        path = tmp_path / "m.ckpt"
        save_checkpoint(str(path), store, cfg)
        _, _, adam, header = load_checkpoint(str(path))
        assert adam is None and header["adam"] is None

    def test_save_load_save_is_byte_identical(self, tmp_path):
        cfg, store = make_store()
        adam = AdamState(lr=0.01)
        adam_step(store.params, {k: np.full_like(v, 0.2) for k, v in store.params.items()}, adam)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(str(p1), store, cfg, adam)
        store2, cfg2, adam2, _ = load_checkpoint(str(p1))
        save_checkpoint(str(p2), store2, cfg2, adam2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_repeated_saves_identical(self, tmp_path):
        cfg, store = make_store()
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(str(p1), store, cfg)
        save_checkpoint(str(p2), store, cfg)
        assert p1.read_bytes() == p2.read_bytes()


class TestBadFiles:
    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ConfigurationError, match="not a checkpoint"):
            load_checkpoint(str(path))

    def test_unsupported_version(self, tmp_path):
        import struct

        path = tmp_path / "future.ckpt"
        path.write_bytes(MAGIC + struct.pack("<II", FORMAT_VERSION + 1, 2) + b"{}")
        with pytest.raises(ConfigurationError, match="version"):
            load_checkpoint(str(path))
