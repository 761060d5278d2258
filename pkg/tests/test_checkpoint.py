"""Checkpoint container: bit-exact round trips and corruption handling."""

import struct

import numpy as np
import pytest

from rirforge.errors import CorruptCheckpoint, VersionMismatch
from rirforge.nn.checkpoint import load_checkpoint, save_checkpoint
from rirforge.nn.unet import UNetConfig, init_params


CFG = UNetConfig(input_length=128, base_channels=2,
                 channel_multipliers=(1, 1, 1, 2, 2, 2, 4), norm_groups=2)


@pytest.fixture
def params():
    return init_params(CFG, np.random.default_rng(5))


def test_round_trip_bitwise(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, CFG)
    loaded, config, opt, extra = load_checkpoint(path)
    assert config == CFG
    assert opt is None
    assert extra == {}
    assert loaded.keys() == params.keys()
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])
        assert loaded[k].dtype == params[k].dtype


def test_optimizer_state_and_extra_round_trip(tmp_path, params):
    path = tmp_path / "model.ckpt"
    opt = {"adam.m.stem.w": np.full((2, 2, 3), 0.25), "adam.v.stem.w": np.ones((2, 2, 3))}
    save_checkpoint(path, params, CFG, optimizer_state=opt,
                    extra={"adam_step": 17, "seed": 3})
    _, _, opt_loaded, extra = load_checkpoint(path)
    assert extra == {"adam_step": 17, "seed": 3}
    assert opt_loaded.keys() == opt.keys()
    for k in opt:
        np.testing.assert_array_equal(opt_loaded[k], opt[k])


def test_truncated_file_raises(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, CFG)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_garbage_header_raises(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(struct.pack("<IQ", 1, 10) + b"not json!!" )
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_too_short_raises(tmp_path):
    path = tmp_path / "tiny.ckpt"
    path.write_bytes(b"\x01\x00")
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_unknown_version_raises(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, CFG)
    raw = bytearray(path.read_bytes())
    raw[0:4] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)


def test_config_hash_mismatch_raises(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, CFG)
    other = UNetConfig(input_length=256, base_channels=2,
                       channel_multipliers=(1, 1, 1, 2, 2, 2, 4), norm_groups=2)
    with pytest.raises(VersionMismatch):
        load_checkpoint(path, expected_config=other)
    # matching expectation passes
    load_checkpoint(path, expected_config=CFG)


def test_float32_params_round_trip_exact(tmp_path):
    cfg32 = UNetConfig(input_length=128, base_channels=2,
                       channel_multipliers=(1, 1, 1, 2, 2, 2, 4),
                       norm_groups=2, dtype="float32")
    params = init_params(cfg32, np.random.default_rng(1))
    path = tmp_path / "m32.ckpt"
    save_checkpoint(path, params, cfg32)
    loaded, _, _, _ = load_checkpoint(path)
    for k in params:
        assert loaded[k].dtype == np.float32
        np.testing.assert_array_equal(loaded[k], params[k])
