"""Compact (non-searchable) networks built from concrete MBConv types.

These are the networks a finished search produces: each block holds only the
weights its type needs. A block can be initialized fresh or constructed from
the matching subset of a superkernel layer, which is what makes the
subset-equivalence checks meaningful.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .errors import ConfigError
from .searchspace import (MAX_EXPANSION, MBConvType, SearchSpaceConfig, SuperkernelLayer,
                          LayerSpec, conv_init, linear_init)


class FixedMBConv:
    """One mobile inverted bottleneck block with a fixed (k, e, se) shape."""

    def __init__(self, spec: LayerSpec, mbtype: MBConvType, rng=None, params=None):
        if mbtype.skip:
            raise ConfigError("skip layers have no block; construct FixedNet instead")
        self.spec = spec
        self.mbtype = mbtype
        cin, cout = spec.in_channels, spec.out_channels
        self.c_e = mbtype.expansion * cin
        self.n_se = int(round(mbtype.se * MAX_EXPANSION * cin))
        k = mbtype.kernel
        if params is None:
            params = {
                "pw_in": conv_init(rng, (self.c_e, cin, 1, 1)),
                "dw": conv_init(rng, (self.c_e, 1, k, k)),
                "pw_out": conv_init(rng, (cout, self.c_e, 1, 1)),
                "bn1_gamma": np.ones(self.c_e),
                "bn2_gamma": np.ones(self.c_e),
                "bn3_gamma": np.ones(cout),
            }
            if self.n_se:
                params["se_squeeze"] = conv_init(rng, (self.n_se, self.c_e, 1, 1))
                params["se_expand"] = conv_init(rng, (self.c_e, self.n_se, 1, 1))
        self.pw_in = Tensor(params["pw_in"], requires_grad=True)
        self.dw = Tensor(params["dw"], requires_grad=True)
        self.pw_out = Tensor(params["pw_out"], requires_grad=True)
        self.bn1_gamma = Tensor(params["bn1_gamma"], requires_grad=True)
        self.bn2_gamma = Tensor(params["bn2_gamma"], requires_grad=True)
        self.bn3_gamma = Tensor(params["bn3_gamma"], requires_grad=True)
        if self.n_se:
            self.se_squeeze = Tensor(params["se_squeeze"], requires_grad=True)
            self.se_expand = Tensor(params["se_expand"], requires_grad=True)
        self.bn1 = BatchNormState(self.c_e)
        self.bn2 = BatchNormState(self.c_e)
        self.bn3 = BatchNormState(cout)
        if k == 5:
            inner = np.zeros((self.c_e, 1, 5, 5))
            inner[:, :, 1:4, 1:4] = 1.0
            self._inner_mask = Tensor(inner)
        else:
            self._inner_mask = None

    def forward(self, x: Tensor, training: bool, inner_only: bool = False) -> Tensor:
        dw = self.dw
        if inner_only and self._inner_mask is not None:
            dw = ad.mul(self.dw, self._inner_mask)
        h = ad.conv2d(x, self.pw_in)
        h = ad.batchnorm(h, self.bn1_gamma, self.bn1, training)
        h = ad.relu6(h)
        h = ad.depthwise_conv2d(h, dw, stride=self.spec.stride, padding="same")
        h = ad.batchnorm(h, self.bn2_gamma, self.bn2, training)
        h = ad.relu6(h)
        if self.n_se:
            pooled = ad.global_avg_pool(h)
            s = ad.conv2d(pooled, self.se_squeeze)
            s = ad.relu6(s)
            s = ad.conv2d(s, self.se_expand)
            h = ad.scale_channels(h, ad.sigmoid(s))
        h = ad.conv2d(h, self.pw_out)
        h = ad.batchnorm(h, self.bn3_gamma, self.bn3, training)
        if self.spec.skippable:
            h = ad.add(h, x)
        return h

    def parameters(self):
        params = [("pw_in", self.pw_in), ("dw", self.dw), ("pw_out", self.pw_out),
                  ("bn1_gamma", self.bn1_gamma), ("bn2_gamma", self.bn2_gamma),
                  ("bn3_gamma", self.bn3_gamma)]
        if self.n_se:
            params += [("se_squeeze", self.se_squeeze), ("se_expand", self.se_expand)]
        return params

    def bn_states(self):
        return [("bn1", self.bn1), ("bn2", self.bn2), ("bn3", self.bn3)]


def block_params_from_superkernel(layer: SuperkernelLayer, mbtype: MBConvType) -> dict:
    """Copy the weight subset of a superkernel layer that `mbtype` selects."""
    if mbtype.skip:
        raise ConfigError("skip selects no weights")
    c_e = mbtype.expansion * layer.spec.in_channels
    n_se = int(round(mbtype.se * layer.c_max))
    k = mbtype.kernel
    off = (5 - k) // 2
    params = {
        "pw_in": layer.pw_in.data[:c_e].copy(),
        "dw": layer.dw.data[:c_e, :, off:off + k, off:off + k].copy(),
        "pw_out": layer.pw_out.data[:, :c_e].copy(),
        "bn1_gamma": layer.bn1_gamma.data[:c_e].copy(),
        "bn2_gamma": layer.bn2_gamma.data[:c_e].copy(),
        "bn3_gamma": layer.bn3_gamma.data.copy(),
    }
    if n_se:
        params["se_squeeze"] = layer.se_squeeze.data[:n_se, :c_e].copy()
        params["se_expand"] = layer.se_expand.data[:c_e, :n_se].copy()
    return params


class FixedNet:
    """Stem + concrete MBConv stack + head; skip entries contribute nothing."""

    def __init__(self, config: SearchSpaceConfig, architecture, seed: int = 0,
                 block_params=None):
        if len(architecture) != config.num_layers:
            raise ConfigError(f"architecture has {len(architecture)} entries for "
                              f"{config.num_layers} layers")
        for spec, t in zip(config.layers, architecture):
            if t.skip and not spec.skippable:
                raise ConfigError(f"layer {spec.in_channels}->{spec.out_channels} "
                                  f"stride {spec.stride} cannot be skipped")
        self.config = config
        self.architecture = list(architecture)
        rng = np.random.default_rng(seed)
        c0 = config.stem_channels
        self.stem_conv = Tensor(conv_init(rng, (c0, 1, 3, 3)), requires_grad=True)
        self.stem_gamma = Tensor(np.ones(c0), requires_grad=True)
        self.stem_bn = BatchNormState(c0)
        self.blocks = []
        for i, (spec, t) in enumerate(zip(config.layers, architecture)):
            if t.skip:
                self.blocks.append(None)
            else:
                given = block_params[i] if block_params else None
                self.blocks.append(FixedMBConv(spec, t, rng=rng, params=given))
        c_last = config.layers[-1].out_channels
        ch = config.head_channels
        self.head_conv = Tensor(conv_init(rng, (ch, c_last, 1, 1)), requires_grad=True)
        self.head_gamma = Tensor(np.ones(ch), requires_grad=True)
        self.head_bn = BatchNormState(ch)
        self.fc_w = Tensor(linear_init(rng, ch, config.classes), requires_grad=True)
        self.fc_b = Tensor(np.zeros(config.classes), requires_grad=True)

    def forward(self, x: Tensor, training: bool = True, inner_only: bool = False) -> Tensor:
        h = ad.conv2d(x, self.stem_conv, stride=self.config.stem_stride)
        h = ad.batchnorm(h, self.stem_gamma, self.stem_bn, training)
        h = ad.relu6(h)
        for block in self.blocks:
            if block is not None:
                h = block.forward(h, training, inner_only=inner_only)
        h = ad.conv2d(h, self.head_conv)
        h = ad.batchnorm(h, self.head_gamma, self.head_bn, training)
        h = ad.relu6(h)
        h = ad.global_avg_pool(h)
        h = ad.reshape(h, (h.data.shape[0], -1))
        return ad.add_bias(ad.matmul(h, self.fc_w), self.fc_b)

    def parameters(self):
        params = [("stem.conv", self.stem_conv), ("stem.gamma", self.stem_gamma)]
        for i, block in enumerate(self.blocks):
            if block is not None:
                params += [(f"blocks.{i}.{n}", p) for n, p in block.parameters()]
        params += [("head.conv", self.head_conv), ("head.gamma", self.head_gamma),
                   ("fc.w", self.fc_w), ("fc.b", self.fc_b)]
        return params

    def trainable_count(self) -> int:
        return sum(p.data.size for _, p in self.parameters())


def fixed_net_from_supernet(supernet, architecture=None, seed: int = 0) -> FixedNet:
    """A compact network whose weights are the superkernel subsets the
    (decoded or given) architecture selects; stem/head are copied too."""
    architecture = architecture if architecture is not None else supernet.decode()
    block_params = [None if t.skip else block_params_from_superkernel(layer, t)
                    for layer, t in zip(supernet.layers, architecture)]
    net = FixedNet(supernet.config, architecture, seed=seed, block_params=block_params)
    net.stem_conv.data = supernet.stem_conv.data.copy()
    net.stem_gamma.data = supernet.stem_gamma.data.copy()
    net.head_conv.data = supernet.head_conv.data.copy()
    net.head_gamma.data = supernet.head_gamma.data.copy()
    net.fc_w.data = supernet.fc_w.data.copy()
    net.fc_b.data = supernet.fc_b.data.copy()
    return net
