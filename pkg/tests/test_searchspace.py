"""Superkernel masking, indicator, decode, dropout, and equivalence checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nanonas.autodiff as ad
from nanonas.autodiff import Graph, Tensor
from nanonas.errors import ConfigError
from nanonas.fixednet import FixedMBConv, FixedNet, block_params_from_superkernel, \
    fixed_net_from_supernet
from nanonas.searchspace import (ALL_TYPES, NON_SKIP_TYPES, SKIP, DropoutSchedule,
                                 LayerSpec, MBConvType, SearchSpaceConfig, Supernet,
                                 SuperkernelLayer, architecture_from_json,
                                 architecture_to_json, decode_architecture,
                                 decode_from_norms, default_config, draw_dropout_masks,
                                 enumerable_config, indicator)

from oracles import finite_diff, rel_err


def tiny_config(n_layers=2, channels=4, stride2=False):
    layers = [LayerSpec(channels, channels, 1) for _ in range(n_layers)]
    if stride2:
        layers[-1] = LayerSpec(channels, 2 * channels, 2)
    return SearchSpaceConfig(image_size=8, classes=3, stem_channels=channels,
                             head_channels=8, layers=layers)


class TestIndicator:
    def test_hard_strict_inequality(self):
        assert indicator(0.0, 0.0, "hard") == 0.0
        assert indicator(1e-9, 0.0, "hard") == 1.0

    def test_sigmoid_at_threshold(self):
        assert indicator(0.7, 0.7, "sigmoid", beta=5.0) == 0.5
        assert indicator(0.7, 0.7, "sigmoid", beta=123.0) == 0.5

    def test_ste_definition(self):
        n = Tensor(2.0, requires_grad=True)
        t = Tensor(1.0, requires_grad=True)
        with Graph() as g:
            out = indicator(n, t, "ste")
            g.backward(out)
        assert out.item() == 1.0
        assert n.grad == 1.0 and t.grad == -1.0

    def test_bad_arguments(self):
        with pytest.raises(ConfigError):
            indicator(1.0, 0.0, "sigmoid", beta=0.0)
        with pytest.raises(ConfigError):
            indicator(1.0, 0.0, "nonsense")

    def test_tensor_and_float_agree(self):
        for mode in ("hard", "sigmoid"):
            f = indicator(0.9, 0.4, mode, beta=5.0)
            t = indicator(Tensor(0.9), Tensor(0.4), mode, beta=5.0)
            assert abs(f - t.item()) < 1e-15


class TestEffectiveKernels:
    def _layer(self, seed=0, spec=None):
        return SuperkernelLayer(spec or LayerSpec(4, 4, 1), np.random.default_rng(seed))

    def test_zero_shell_collapses_to_inner(self):
        layer = self._layer()
        layer.dw.data = layer.dw.data * layer.mask_inner3  # zero the outer ring
        layer.thresholds["k5"].data = np.asarray(0.0)
        layer.force_type(MBConvType(3, 6, 0.0))
        layer.thresholds["k5"].data = np.asarray(0.0)  # restore the case under test
        w, inds, _ = layer.effective_depthwise("hard", 5.0)
        assert inds["k5"].item() == 0.0
        np.testing.assert_array_equal(w.data * layer.mask_outer, 0.0)
        # convolving the ring-padded kernel equals a plain 3x3 depthwise conv
        x = Tensor(np.random.default_rng(1).normal(size=(2, layer.c_max, 6, 6)))
        got = ad.depthwise_conv2d(x, w, stride=1, padding="same")
        small = Tensor(layer.dw.data[:, :, 1:4, 1:4])
        want = ad.depthwise_conv2d(x, small, stride=1, padding="same")
        assert np.max(np.abs(got.data - want.data)) < 1e-12

    def test_huge_e3_threshold_zeroes_kernel(self):
        layer = self._layer()
        layer.force_type(MBConvType(5, 6, 0.5))
        layer.thresholds["e3"].data = np.asarray(1e9)
        w, inds, _ = layer.effective_depthwise("hard", 5.0)
        np.testing.assert_array_equal(w.data, 0.0)
        assert inds["e3"].item() == 0.0

    @pytest.mark.parametrize("stride", [1, 2])
    def test_forced_max_equals_plain_depthwise(self, stride):
        spec = LayerSpec(4, 4 if stride == 1 else 8, stride)
        layer = self._layer(seed=0, spec=spec)
        layer.force_type(MBConvType(5, 6, 0.0))
        w, _, _ = layer.effective_depthwise("hard", 5.0)
        x = Tensor(np.random.default_rng(0).normal(size=(2, layer.c_max, 7, 7)))
        got = ad.depthwise_conv2d(x, w, stride=stride, padding="same")
        want = ad.depthwise_conv2d(x, layer.dw, stride=stride, padding="same")
        assert np.max(np.abs(got.data - want.data)) < 1e-12

    def test_se_shell_zero_behaves_as_quarter_ratio(self):
        layer = self._layer(seed=1)
        layer.se_squeeze.data = layer.se_squeeze.data * layer.mask_se25  # zero 0.5 shell
        layer.force_type(MBConvType(3, 6, 0.5))
        layer.thresholds["se50"].data = np.asarray(0.0)  # norm 0 -> strict off
        w_a, inds, _ = layer.effective_se("hard", 5.0)
        assert inds["se50"].item() == 0.0
        layer.force_type(MBConvType(3, 6, 0.25))
        w_b, _, _ = layer.effective_se("hard", 5.0)
        np.testing.assert_array_equal(w_a.data, w_b.data)


class TestMBConvForward:
    def test_skip_is_identity(self):
        layer = SuperkernelLayer(LayerSpec(4, 4, 1), np.random.default_rng(0))
        layer.force_type(SKIP)
        x = Tensor(np.random.default_rng(2).normal(size=(2, 4, 8, 8)))
        out, _, _ = layer.forward(x, "hard", 5.0, training=True)
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_input_passes_through(self):
        layer = SuperkernelLayer(LayerSpec(4, 4, 1), np.random.default_rng(0))
        x = Tensor(np.zeros((2, 4, 8, 8)))
        for mode in ("hard", "sigmoid"):
            out, _, _ = layer.forward(x, mode, 5.0, training=True)
            np.testing.assert_array_equal(out.data, x.data)

    def test_forced_type_matches_fixed_block(self):
        layer = SuperkernelLayer(LayerSpec(4, 4, 1), np.random.default_rng(3))
        t = MBConvType(3, 6, 0.0)
        layer.force_type(t)
        block = FixedMBConv(layer.spec, t, params=block_params_from_superkernel(layer, t))
        x = Tensor(np.random.default_rng(4).normal(size=(2, 4, 8, 8)))
        got, _, _ = layer.forward(x, "hard", 5.0, training=True)
        want = block.forward(x, training=True)
        assert np.max(np.abs(got.data - want.data)) < 1e-12


@pytest.mark.parametrize("mbtype", ALL_TYPES, ids=str)
@pytest.mark.parametrize("spec", [LayerSpec(4, 4, 1), LayerSpec(4, 8, 2)],
                         ids=["s1", "s2"])
def test_subset_equivalence(mbtype, spec):
    """Forcing any of the 13 types reproduces the standalone block exactly."""
    if mbtype.skip and not spec.skippable:
        pytest.skip("skip undefined for stride-2 layer")
    layer = SuperkernelLayer(spec, np.random.default_rng(11))
    layer.force_type(mbtype)
    x = Tensor(np.random.default_rng(12).normal(size=(2, spec.in_channels, 8, 8)))
    got, _, _ = layer.forward(x, "hard", 5.0, training=True)
    if mbtype.skip:
        want_data = x.data
    else:
        block = FixedMBConv(spec, mbtype, params=block_params_from_superkernel(layer, mbtype))
        want_data = block.forward(x, training=True).data
    assert np.max(np.abs(got.data - want_data)) < 1e-12


def test_sigmoid_mode_forced_also_matches():
    """Saturating thresholds pin sigmoid indicators to exactly 0/1 too."""
    spec = LayerSpec(4, 4, 1)
    layer = SuperkernelLayer(spec, np.random.default_rng(5))
    t = MBConvType(5, 3, 0.25)
    layer.force_type(t)
    x = Tensor(np.random.default_rng(6).normal(size=(1, 4, 8, 8)))
    got, _, _ = layer.forward(x, "sigmoid", 5.0, training=True)
    block = FixedMBConv(spec, t, params=block_params_from_superkernel(layer, t))
    want = block.forward(x, training=True)
    assert np.max(np.abs(got.data - want.data)) < 1e-12


def test_nesting_outer_shell_is_inert_when_3x3_active():
    layer = SuperkernelLayer(LayerSpec(4, 4, 1), np.random.default_rng(7))
    layer.force_type(MBConvType(3, 6, 0.25))
    x = Tensor(np.random.default_rng(8).normal(size=(2, 4, 8, 8)))
    before, _, _ = layer.forward(x, "hard", 5.0, training=True)
    layer.dw.data = layer.dw.data + 7.0 * layer.mask_outer  # only shell weights move
    after, _, _ = layer.forward(x, "hard", 5.0, training=True)
    np.testing.assert_array_equal(before.data, after.data)
    assert layer.decode() == MBConvType(3, 6, 0.25)


class TestDecode:
    def test_direct_rule_example(self):
        norms = {"k5": 0.9, "e3": 1.2, "e6": 0.1, "se25": 0.0, "se50": 0.0}
        ths = {"k5": 0.5, "e3": 0.5, "e6": 0.5, "se25": 0.5, "se50": 0.5}
        assert decode_from_norms(norms, ths, skippable=True) == MBConvType(5, 3, 0.0)

    def test_e3_below_threshold_is_skip(self):
        norms = {"k5": 9.0, "e3": 0.1, "e6": 9.0, "se25": 9.0, "se50": 9.0}
        ths = {k: 0.5 for k in norms}
        assert decode_from_norms(norms, ths, skippable=True) == SKIP

    def test_tie_decodes_as_not_use(self):
        norms = {k: 0.5 for k in ("k5", "e3", "e6", "se25", "se50")}
        ths = {k: 0.5 for k in norms}
        assert decode_from_norms(norms, ths, skippable=True) == SKIP
        assert decode_from_norms(norms, ths, skippable=False) == MBConvType(3, 3, 0.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=1000, deadline=None)
    def test_against_subset_survival_oracle(self, seed):
        """Sentinel-survival through the literal nested masking must agree."""
        rng = np.random.default_rng(seed)
        norms = {k: float(rng.uniform(0, 2)) for k in ("k5", "e3", "e6", "se25", "se50")}
        ths = {k: float(rng.uniform(0, 2)) for k in norms}
        skippable = bool(rng.integers(0, 2))
        i_k5 = 1.0 if norms["k5"] > ths["k5"] else 0.0
        i_e3 = 1.0 if (norms["e3"] > ths["e3"] or not skippable) else 0.0
        i_e6 = 1.0 if norms["e6"] > ths["e6"] else 0.0
        i_25 = 1.0 if norms["se25"] > ths["se25"] else 0.0
        i_50 = 1.0 if norms["se50"] > ths["se50"] else 0.0
        # sentinel tensors: dims [channel-half, spatial-region]
        core = np.array([[1.0, 0.0], [0.0, 0.0]])
        shell = np.array([[0.0, 1.0], [0.0, 0.0]])
        core2 = np.array([[0.0, 0.0], [1.0, 0.0]])
        shell2 = np.array([[0.0, 0.0], [0.0, 1.0]])
        w_k = (core + core2) + i_k5 * (shell + shell2)
        first = w_k * np.array([[1.0, 1.0], [0.0, 0.0]])
        second = w_k * np.array([[0.0, 0.0], [1.0, 1.0]])
        w_dw = i_e3 * (first + i_e6 * second)
        w_se = i_25 * (np.array([1.0, 0.0]) + i_50 * np.array([0.0, 1.0]))
        if not w_dw.any():
            want = SKIP
        else:
            kernel = 5 if (w_dw[0, 1] or w_dw[1, 1]) else 3
            expansion = 6 if w_dw[1].any() else 3
            se = 0.5 if w_se[1] else (0.25 if w_se[0] else 0.0)
            want = MBConvType(kernel, expansion, se)
        assert decode_from_norms(norms, ths, skippable) == want

    def test_force_then_decode_roundtrip(self):
        for spec in (LayerSpec(4, 4, 1), LayerSpec(4, 8, 2)):
            layer = SuperkernelLayer(spec, np.random.default_rng(1))
            for t in (ALL_TYPES if spec.skippable else NON_SKIP_TYPES):
                layer.force_type(t)
                assert layer.decode() == t


class TestDropout:
    def test_schedule_decays_to_zero(self):
        sched = DropoutSchedule(p0=0.4, warmup_fraction=0.5)
        assert sched.p(0, 100) == 0.4
        assert sched.p(25, 100) == pytest.approx(0.2)
        assert sched.p(50, 100) == 0.0
        assert sched.p(99, 100) == 0.0

    def test_invalid_probability_rejected(self):
        with pytest.raises(ConfigError):
            DropoutSchedule(p0=1.5)
        with pytest.raises(ConfigError):
            draw_dropout_masks(np.random.default_rng(0), -0.1, 3)

    def test_p_zero_is_identity(self):
        net = Supernet(tiny_config(), seed=0)
        x = Tensor(np.random.default_rng(0).normal(size=(2, 1, 8, 8)))
        masks = draw_dropout_masks(np.random.default_rng(1), 0.0, 2)
        assert masks is None
        a, _, _ = net.forward(x, training=False)
        b, _, _ = net.forward(x, training=False, dropout_masks=masks)
        np.testing.assert_array_equal(a.data, b.data)

    def test_p_one_is_minimal_network(self):
        net = Supernet(tiny_config(), seed=3, mode="hard")
        net.force_architecture([MBConvType(5, 6, 0.5)] * 2)
        masks = draw_dropout_masks(np.random.default_rng(2), 1.0, 2)
        x = Tensor(np.random.default_rng(3).normal(size=(2, 1, 8, 8)))
        dropped, _, _ = net.forward(x, training=False, dropout_masks=masks, mode="hard")
        net.force_architecture([MBConvType(3, 3, 0.0)] * 2)
        minimal, _, _ = net.forward(x, training=False, mode="hard")
        np.testing.assert_array_equal(dropped.data, minimal.data)

    def test_masks_deterministic_under_seed(self):
        a = draw_dropout_masks(np.random.default_rng(9), 0.5, 4)
        b = draw_dropout_masks(np.random.default_rng(9), 0.5, 4)
        assert a == b


class TestSupernet:
    def test_parameter_count_identity(self):
        config = default_config()
        net = Supernet(config, seed=0)
        fixed = FixedNet(config, [MBConvType(5, 6, 0.5)] * config.num_layers, seed=0)
        assert net.trainable_count() == fixed.trainable_count() + 5 * config.num_layers

    def test_initial_decode_is_minimal(self):
        config = tiny_config(stride2=True)
        net = Supernet(config, seed=0, mode="sigmoid")
        decoded = decode_architecture(net)
        assert decoded[0] == SKIP            # skippable layer: undecided -> skip
        assert decoded[-1] == MBConvType(3, 3, 0.0)  # stride-2: minimal, never skip

    def test_initial_sigmoid_indicators_are_half(self):
        net = Supernet(tiny_config(), seed=0, mode="sigmoid")
        x = Tensor(np.random.default_rng(0).normal(size=(1, 1, 8, 8)))
        _, inds, _ = net.forward(x, training=True)
        for layer_inds in inds:
            for name in ("k5", "e3", "e6", "se25", "se50"):
                assert layer_inds[name].item() == pytest.approx(0.5, abs=1e-12)

    def test_threshold_gradient_matches_finite_differences(self):
        config = tiny_config()
        net = Supernet(config, seed=1, mode="sigmoid")
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 1, 8, 8))
        y = rng.integers(0, 3, size=4)

        def loss_value():
            logits, _, _ = net.forward(Tensor(x), training=True)
            return float(ad.cross_entropy(logits, y).data)

        with Graph() as g:
            logits, _, _ = net.forward(Tensor(x), training=True)
            g.backward(ad.cross_entropy(logits, y))
        t = net.layers[0].thresholds["k5"]
        analytic = float(t.grad)
        h = 1e-5
        orig = t.data.copy()
        t.data = orig + h
        fp = loss_value()
        t.data = orig - h
        fm = loss_value()
        t.data = orig
        numeric = (fp - fm) / (2 * h)
        assert rel_err(np.array(analytic), np.array(numeric)) < 1e-4

    def test_decoded_net_from_supernet_matches_full_forward(self):
        """Hard-mode supernet output equals the extracted compact network."""
        config = tiny_config(stride2=True)
        net = Supernet(config, seed=2, mode="hard")
        arch = [MBConvType(5, 3, 0.25), MBConvType(3, 6, 0.5)]
        net.force_architecture(arch)
        compact = fixed_net_from_supernet(net, arch)
        x = Tensor(np.random.default_rng(1).normal(size=(2, 1, 8, 8)))
        got, _, _ = net.forward(x, training=True, mode="hard")
        want = compact.forward(x, training=True)
        assert np.max(np.abs(got.data - want.data)) < 1e-11

    def test_state_roundtrip(self):
        net = Supernet(tiny_config(), seed=0)
        arrays = {k: v.copy() for k, v in net.state_arrays().items()}
        other = Supernet(tiny_config(), seed=99)
        other.load_state_arrays(arrays)
        for (_, a), (_, b) in zip(net.parameters(), other.parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_config_validation(self):
        with pytest.raises(ConfigError, match="channel"):
            SearchSpaceConfig(image_size=8, classes=2, stem_channels=3, head_channels=8,
                              layers=[LayerSpec(3, 4, 1)])
        with pytest.raises(ConfigError, match="stride"):
            SearchSpaceConfig(image_size=8, classes=2, stem_channels=4, head_channels=8,
                              layers=[LayerSpec(4, 4, 3)])
        with pytest.raises(ConfigError):
            SearchSpaceConfig(image_size=8, classes=2, stem_channels=4, head_channels=8,
                              layers=[])

    def test_architecture_json_roundtrip(self):
        arch = [SKIP, MBConvType(5, 6, 0.25), MBConvType(3, 3, 0.5)]
        rows = architecture_to_json(arch)
        assert rows[0]["skip"] is True
        assert architecture_from_json(rows) == arch

    def test_force_skip_on_stride2_rejected(self):
        layer = SuperkernelLayer(LayerSpec(4, 8, 2), np.random.default_rng(0))
        with pytest.raises(ConfigError, match="cannot skip"):
            layer.force_type(SKIP)
