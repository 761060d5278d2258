"""Architecture contracts: shapes, init determinism, parameter-count oracle,
time embedding, and the non-degeneracy of the conditioning and time paths."""

import numpy as np
import pytest

from rirforge.errors import InvalidConfig, LengthNotDivisible, ShapeMismatch
from rirforge.nn.unet import (
    UNetConfig,
    desk_config,
    init_params,
    layer_shapes,
    make_denoiser,
    parameter_count,
    time_embedding,
    unet_apply,
    unet_forward,
)


def tiny_config(k=128):
    return UNetConfig(input_length=k, base_channels=2,
                      channel_multipliers=(1, 1, 1, 2, 2, 2, 4), norm_groups=2)


class TestConfig:
    def test_channels_capped(self):
        cfg = UNetConfig(input_length=128, base_channels=64, channel_cap=256)
        assert cfg.channels == (64, 64, 128, 128, 256, 256, 256)

    def test_bottleneck_length(self):
        assert UNetConfig(input_length=32768, base_channels=8).bottleneck_length == 256
        assert UNetConfig(input_length=2048, base_channels=8).bottleneck_length == 16

    def test_invalid_length(self):
        with pytest.raises(InvalidConfig):
            UNetConfig(input_length=1000, base_channels=8)

    def test_invalid_channels(self):
        with pytest.raises(InvalidConfig):
            UNetConfig(input_length=128, base_channels=0)

    def test_wrong_multiplier_count(self):
        with pytest.raises(InvalidConfig):
            UNetConfig(input_length=128, base_channels=8, channel_multipliers=(1, 2))

    def test_dilations_are_fixed(self):
        with pytest.raises(InvalidConfig):
            UNetConfig(input_length=128, base_channels=8,
                       bottleneck_dilations=(1, 2, 4))

    def test_groups_must_divide_channels(self):
        with pytest.raises(InvalidConfig):
            UNetConfig(input_length=128, base_channels=4, norm_groups=8)


class TestInitParams:
    def test_deterministic_under_seed(self):
        cfg = tiny_config()
        a = init_params(cfg, np.random.default_rng(3))
        b = init_params(cfg, np.random.default_rng(3))
        assert a.keys() == b.keys()
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_zero_biases_unit_gains(self):
        params = init_params(tiny_config(), np.random.default_rng(0))
        for name, arr in params.items():
            kind = name.rsplit(".", 1)[-1]
            if kind == "b":
                assert np.all(arr == 0.0), name
            elif kind == "g":
                assert np.all(arr == 1.0), name

    def test_parameter_count_matches_shape_arithmetic(self):
        # independent oracle: walk the architecture by hand for the tiny net
        cfg = tiny_config()
        chs = [2, 2, 2, 4, 4, 4, 8]
        d = 8  # 4 * base

        def res(c_in, c_out):
            n = 2 * c_in            # norm1 g+b
            n += c_out * c_in * 3 + c_out   # conv1
            n += d * c_out + c_out          # time projection
            n += 2 * c_out                  # norm2
            n += c_out * c_out * 3 + c_out  # conv2
            if c_in != c_out:
                n += c_out * c_in + c_out   # 1x1 skip
            return n

        total = 2 * (d * d + d)             # time MLP
        total += chs[0] * 2 * 3 + chs[0]    # stem
        prev = chs[0]
        for c in chs:
            total += res(prev, c)
            total += c * c * 3 + c          # downsample conv
            prev = c
        total += 6 * (2 * chs[-1] + chs[-1] * chs[-1] * 3 + chs[-1])  # bottleneck
        for i in range(6, -1, -1):
            c_up_in = chs[i + 1] if i < 6 else chs[6]
            total += chs[i] * c_up_in * 3 + chs[i]   # upsample conv
            total += res(2 * chs[i], chs[i])
        total += 2 * chs[0] + 1 * chs[0] * 3 + 1     # head
        assert parameter_count(cfg) == total

    def test_shapes_consistent_with_init(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(1))
        shapes = layer_shapes(cfg)
        assert params.keys() == shapes.keys()
        for name, arr in params.items():
            assert arr.shape == shapes[name]


class TestTimeEmbedding:
    def test_t_zero_alternates_zero_one(self):
        emb = time_embedding(0, 16)
        np.testing.assert_array_equal(emb[0::2], np.zeros(8))
        np.testing.assert_array_equal(emb[1::2], np.ones(8))

    def test_dim_two_is_sin_cos(self):
        emb = time_embedding(5, 2)
        assert emb[0] == pytest.approx(np.sin(5.0))
        assert emb[1] == pytest.approx(np.cos(5.0))

    def test_no_collisions_below_10000(self):
        t = np.arange(10000)
        emb = time_embedding(t, 32)
        assert np.unique(emb, axis=0).shape[0] == 10000

    def test_batched_shape(self):
        assert time_embedding(np.arange(7), 16).shape == (7, 16)

    def test_rejects_odd_dim(self):
        with pytest.raises(ValueError):
            time_embedding(3, 5)


class TestForwardShapes:
    @pytest.mark.parametrize("k", [128, 256, 1024])
    def test_output_matches_input(self, k):
        cfg = tiny_config(k)
        params = init_params(cfg, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 1, k))
        c = rng.standard_normal((2, 1, k))
        out = unet_forward(params, x, c, np.array([1, 7]), cfg)
        assert out.shape == (2, 1, k)
        assert np.all(np.isfinite(out))

    def test_bottleneck_length_is_k_over_128(self):
        cfg = tiny_config(1024)
        params = init_params(cfg, np.random.default_rng(0))
        trace = {}
        unet_apply(params, np.zeros((1, 1, 1024)), np.zeros((1, 1, 1024)),
                   5, cfg, trace=trace)
        assert trace["bottleneck"][-1] == 8  # 1024 / 2^7
        assert trace["dec0"][-1] == 1024

    def test_length_not_divisible(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(0))
        with pytest.raises(LengthNotDivisible):
            unet_forward(params, np.zeros((1, 1, 120)), np.zeros((1, 1, 120)), 1, cfg)

    def test_shape_mismatch(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(0))
        with pytest.raises(ShapeMismatch):
            unet_forward(params, np.zeros((1, 1, 128)), np.zeros((1, 1, 256)), 1, cfg)
        with pytest.raises(ShapeMismatch):
            unet_forward(params, np.zeros((1, 2, 128)), np.zeros((1, 2, 128)), 1, cfg)

    def test_deterministic(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(0))
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 1, 128))
        c = rng.standard_normal((1, 1, 128))
        a = unet_forward(params, x, c, 9, cfg)
        b = unet_forward(params, x, c, 9, cfg)
        np.testing.assert_array_equal(a, b)


class TestNonDegeneracy:
    def setup_method(self):
        self.cfg = tiny_config()
        self.params = init_params(self.cfg, np.random.default_rng(11))
        rng = np.random.default_rng(12)
        self.x = rng.standard_normal((1, 1, 128))
        self.c = rng.standard_normal((1, 1, 128))

    def test_conditioning_path_active(self):
        base = unet_forward(self.params, self.x, self.c, 5, self.cfg)
        other = unet_forward(self.params, self.x, -self.c, 5, self.cfg)
        assert np.max(np.abs(base - other)) > 1e-12

    def test_time_path_active(self):
        a = unet_forward(self.params, self.x, self.c, 1, self.cfg)
        b = unet_forward(self.params, self.x, self.c, 90, self.cfg)
        assert np.max(np.abs(a - b)) > 1e-12


class TestMakeDenoiser:
    def test_single_and_batched(self):
        cfg = tiny_config()
        params = init_params(cfg, np.random.default_rng(0))
        denoise = make_denoiser(params, cfg)
        rng = np.random.default_rng(1)
        x = rng.standard_normal(128)
        c = rng.standard_normal(128)
        single = denoise(x, c, 3)
        assert single.shape == (128,)
        batched = denoise(np.stack([x, x]), np.stack([c, c]), 3)
        assert batched.shape == (2, 128)
        np.testing.assert_allclose(batched[0], single, rtol=1e-12, atol=1e-15)


def test_float32_mode():
    cfg = UNetConfig(input_length=128, base_channels=2,
                     channel_multipliers=(1, 1, 1, 2, 2, 2, 4),
                     norm_groups=2, dtype="float32")
    params = init_params(cfg, np.random.default_rng(0))
    assert all(p.dtype == np.float32 for p in params.values())
    out = unet_forward(params, np.zeros((1, 1, 128), dtype=np.float32),
                       np.zeros((1, 1, 128), dtype=np.float32), 1, cfg)
    assert out.dtype == np.float32
