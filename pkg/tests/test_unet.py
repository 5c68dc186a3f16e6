import math

import numpy as np
import pytest

from cmpnet import unet
from cmpnet.preprocess import NormStats, denormalize
from cmpnet.unet import ModelState, UNetConfig


class TestConfig:
    def test_defaults(self):
        cfg = UNetConfig()
        assert (cfg.depth, cfg.base_channels, cfg.kernel, cfg.frame_size) \
            == (3, 16, 3, 128)

    @pytest.mark.parametrize("kwargs", [
        {"depth": 0},
        {"base_channels": 0},
        {"kernel": 2},
        {"kernel": 0},
        {"frame_size": 100},  # not divisible by 8
        {"frame_size": 0},
    ])
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(ValueError):
            UNetConfig(**kwargs)

    def test_deep_config_needs_divisible_frame(self):
        UNetConfig(depth=4, frame_size=16)
        with pytest.raises(ValueError):
            UNetConfig(depth=5, frame_size=16)


class TestParameterMap:
    def test_shapes_of_boundary_layers(self):
        shapes = unet.param_shapes(UNetConfig())
        assert shapes["enc0_conv1_w"] == (16, 1, 3, 3)
        assert shapes["enc2_conv2_w"] == (64, 64, 3, 3)
        assert shapes["mid_conv1_w"] == (128, 64, 3, 3)
        assert shapes["dec2_up_w"] == (64, 128, 3, 3)
        assert shapes["dec0_conv1_w"] == (16, 32, 3, 3)
        assert shapes["head_w"] == (1, 16, 1, 1)
        assert shapes["head_b"] == (1,)

    def test_default_parameter_count_pinned(self):
        assert unet.parameter_count(UNetConfig()) == 535505

    def test_count_matches_shape_map(self):
        cfg = UNetConfig(depth=2, base_channels=4, frame_size=32)
        total = sum(math.prod(s) for s in unet.param_shapes(cfg).values())
        assert unet.parameter_count(cfg) == total

    def test_decoder_listed_deepest_first(self):
        names = list(unet.param_shapes(UNetConfig()))
        assert names.index("dec2_up_w") < names.index("dec1_up_w") \
            < names.index("dec0_up_w")


class TestInit:
    def test_deterministic_per_seed(self):
        a = unet.init(UNetConfig(), seed=7)
        b = unet.init(UNetConfig(), seed=7)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])
        c = unet.init(UNetConfig(), seed=8)
        assert any(not np.array_equal(a.params[n], c.params[n])
                   for n in a.params)

    def test_biases_zero_weights_float32(self):
        state = unet.init(UNetConfig(depth=2, base_channels=4,
                                     frame_size=16), seed=0)
        for name, value in state.params.items():
            assert value.dtype == np.float32
            if name.endswith("_b"):
                assert not value.any()

    def test_weight_spread_matches_uniform_bound(self):
        # uniform [-b, b] has stddev b / sqrt(3)
        state = unet.init(UNetConfig(), seed=3)
        w = state.params["enc1_conv1_w"]  # fan_in = 16 * 3 * 3 = 144
        bound = math.sqrt(6.0 / 144.0)
        assert abs(w.std() - bound / math.sqrt(3.0)) < 0.1 * bound / math.sqrt(3.0)
        assert np.abs(w).max() <= bound

    def test_default_norm_is_identity(self):
        state = unet.init(UNetConfig(), seed=0)
        values = np.linspace(-1, 1, 5)
        np.testing.assert_allclose(denormalize(values, state.norm), values)
        assert state.adam is None
        assert state.epoch == 0


SMALL = UNetConfig(depth=3, base_channels=2, kernel=3, frame_size=16)


class TestForward:
    @pytest.mark.parametrize("size", [16, 64, 128])
    def test_output_shape_matches_input(self, size):
        state = unet.init(SMALL, seed=0)
        out = unet.forward(state, np.zeros((2, 1, size, size), np.float32))
        assert out.shape == (2, 1, size, size)

    def test_rectangular_input_supported(self):
        state = unet.init(SMALL, seed=0)
        out = unet.forward(state, np.zeros((1, 1, 16, 32), np.float32))
        assert out.shape == (1, 1, 16, 32)

    def test_outputs_inside_tanh_range(self, rng):
        state = unet.init(SMALL, seed=1)
        out = unet.forward(
            state, rng.uniform(size=(2, 1, 16, 16)).astype(np.float32))
        assert np.all(out > -1.0) and np.all(out < 1.0)

    def test_zero_weights_give_zero_output(self, rng):
        state = unet.init(SMALL, seed=0)
        for value in state.params.values():
            value[:] = 0
        out = unet.forward(
            state, rng.normal(size=(1, 1, 16, 16)).astype(np.float32))
        np.testing.assert_array_equal(out, np.zeros_like(out))

    def test_rejects_indivisible_size(self):
        state = unet.init(SMALL, seed=0)
        with pytest.raises(ValueError, match="divisible"):
            unet.forward(state, np.zeros((1, 1, 20, 20), np.float32))

    def test_rejects_wrong_channel_count(self):
        state = unet.init(SMALL, seed=0)
        with pytest.raises(ValueError, match="batch, 1, height"):
            unet.forward(state, np.zeros((1, 2, 16, 16), np.float32))

    def test_deterministic(self, rng):
        state = unet.init(SMALL, seed=2)
        x = rng.normal(size=(1, 1, 16, 16)).astype(np.float32)
        np.testing.assert_array_equal(unet.forward(state, x),
                                      unet.forward(state, x))


class TestFullyConvolutional:
    def test_constant_input_center_agrees_across_sizes(self):
        # receptive field of the default depth-3 net is about 110 pixels,
        # so the center of a 128 frame never sees the border
        state = unet.init(UNetConfig(), seed=5)
        small = unet.forward(state, np.full((1, 1, 128, 128), 0.5,
                                            np.float32))
        large = unet.forward(state, np.full((1, 1, 256, 256), 0.5,
                                            np.float32))
        assert abs(float(small[0, 0, 64, 64]) -
                   float(large[0, 0, 128, 128])) < 1e-5

    def test_interior_patch_agrees_on_shifted_constant(self):
        state = unet.init(UNetConfig(depth=2, base_channels=4,
                                     frame_size=32), seed=6)
        small = unet.forward(state, np.ones((1, 1, 64, 64), np.float32))
        large = unet.forward(state, np.ones((1, 1, 128, 128), np.float32))
        np.testing.assert_allclose(small[0, 0, 30:34, 30:34],
                                   large[0, 0, 62:66, 62:66], atol=1e-5)


def _symmetrize(state):
    for name, value in state.params.items():
        if name.endswith("_w"):
            state.params[name] = ((value + value[:, :, ::-1, ::-1]) / 2.0)
    return state


class TestEquivariance:
    def test_half_turn_equivariance_with_symmetric_kernels(self, rng):
        # for kernels equal to their own 180-degree rotation the whole
        # stack commutes with a half-turn of the input on even sizes
        state = _symmetrize(unet.init(SMALL, seed=9))
        x = rng.normal(size=(1, 1, 16, 16)).astype(np.float32)
        rotated = x[:, :, ::-1, ::-1].copy()
        out = unet.forward(state, x)
        out_rot = unet.forward(state, rotated)
        np.testing.assert_allclose(out[:, :, ::-1, ::-1], out_rot,
                                   atol=1e-4)


class TestStatePlumbing:
    def test_model_state_carries_norm(self):
        state = ModelState(config=SMALL, params={},
                           norm=NormStats(-40.0, 0.0))
        assert state.norm.min == -40.0

    def test_wrap_params_shares_storage(self):
        state = unet.init(SMALL, seed=0)
        tensors = unet.wrap_params(state.params)
        name = next(iter(tensors))
        assert tensors[name].data is state.params[name]
