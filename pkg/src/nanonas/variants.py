"""Alternative search-space encodings: softmax over superkernel subsets, and
the classic multi-path supernet where every candidate is a separate block.

Both are bilevel formulations: architecture logits live apart from the
network weights and the two groups are updated in alternating phases.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .fixednet import FixedMBConv
from .latency import LatencyTable
from .searchspace import (NON_SKIP_TYPES, SKIP, MBConvType, SearchSpaceConfig, Supernet,
                          conv_init, linear_init)

# Logit magnitude that makes softmax exactly one-hot in float64.
ONE_HOT_LOGIT = 1e4

KERNEL_GROUP = (3, 5)
EXP_GROUP_SKIP = ("skip", 3, 6)
EXP_GROUP = (3, 6)
SE_GROUP = (0.0, 0.25, 0.5)


@contextmanager
def frozen(params):
    """Temporarily sever a parameter group from the graph (zero gradients)."""
    tensors = [p for _, p in params]
    for p in tensors:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in tensors:
            p.requires_grad = True


class SinglePathSoftmax:
    """Softmax-weighted subset mixing over one shared superkernel per layer."""

    def __init__(self, supernet: Supernet, seed: int = 0):
        self.net = supernet
        self.kernel_logits = []
        self.exp_logits = []
        self.se_logits = []
        for layer in supernet.layers:
            n_exp = len(EXP_GROUP_SKIP) if layer.spec.skippable else len(EXP_GROUP)
            self.kernel_logits.append(Tensor(np.zeros(2), requires_grad=True))
            self.exp_logits.append(Tensor(np.zeros(n_exp), requires_grad=True))
            self.se_logits.append(Tensor(np.zeros(3), requires_grad=True))

    def arch_parameters(self):
        params = []
        for i in range(len(self.net.layers)):
            params += [(f"layers.{i}.tau_k", self.kernel_logits[i]),
                       (f"layers.{i}.tau_e", self.exp_logits[i]),
                       (f"layers.{i}.tau_se", self.se_logits[i])]
        return params

    def weight_parameters(self):
        return self.net.weight_parameters()

    def _layer_probs(self, i):
        return (ad.softmax_probs(self.kernel_logits[i]),
                ad.softmax_probs(self.exp_logits[i]),
                ad.softmax_probs(self.se_logits[i]))

    def _layer_forward(self, x, i, training):
        layer = self.net.layers[i]
        p_k, p_e, p_se = self._layer_probs(i)
        p5 = ad.pick(p_k, 1)
        p3 = ad.pick(p_k, 0)
        if layer.spec.skippable:
            p_e3, p_e6 = ad.pick(p_e, 1), ad.pick(p_e, 2)
        else:
            p_e3, p_e6 = ad.pick(p_e, 0), ad.pick(p_e, 1)
        p_25, p_50 = ad.pick(p_se, 1), ad.pick(p_se, 2)

        inner = ad.mul(layer.dw, layer._mask_tensors["inner"])
        w_k = ad.add(ad.scale(inner, p3), ad.scale(layer.dw, p5))
        first = ad.mul(w_k, layer._mask_tensors["first"])
        w_dw = ad.add(ad.scale(first, p_e3), ad.scale(w_k, p_e6))
        w25 = ad.mul(layer.se_squeeze, layer._mask_tensors["se25"])
        w_se = ad.add(ad.scale(w25, p_25), ad.scale(layer.se_squeeze, p_50))
        se_on = ad.add(p_25, p_50)

        h = ad.conv2d(x, layer.pw_in)
        h = ad.batchnorm(h, layer.bn1_gamma, layer.bn1, training)
        h = ad.relu6(h)
        h = ad.depthwise_conv2d(h, w_dw, stride=layer.spec.stride, padding="same")
        h = ad.batchnorm(h, layer.bn2_gamma, layer.bn2, training)
        h = ad.relu6(h)
        pooled = ad.global_avg_pool(h)
        s = ad.conv2d(pooled, w_se)
        s = ad.relu6(s)
        s = ad.conv2d(s, layer.se_expand)
        gate = ad.sigmoid(s)
        gate_eff = ad.cadd(ad.scale(ad.cadd(gate, -1.0), se_on), 1.0)
        h = ad.scale_channels(h, gate_eff)
        h = ad.conv2d(h, layer.pw_out)
        h = ad.batchnorm(h, layer.bn3_gamma, layer.bn3, training)
        if layer.spec.skippable:
            h = ad.add(h, x)
        return h

    def forward(self, x: Tensor, training: bool = True):
        net = self.net
        h = ad.conv2d(x, net.stem_conv, stride=net.config.stem_stride)
        h = ad.batchnorm(h, net.stem_gamma, net.stem_bn, training)
        h = ad.relu6(h)
        for i in range(len(net.layers)):
            h = self._layer_forward(h, i, training)
        h = ad.conv2d(h, net.head_conv)
        h = ad.batchnorm(h, net.head_gamma, net.head_bn, training)
        h = ad.relu6(h)
        h = ad.global_avg_pool(h)
        h = ad.reshape(h, (h.data.shape[0], -1))
        return ad.add_bias(ad.matmul(h, net.fc_w), net.fc_b)

    def expected_runtime(self, table: LatencyTable):
        """Sum over layers of the probability-weighted table entries."""
        total = table.fixed_overhead_ms
        for i, layer in enumerate(self.net.layers):
            p_k, p_e, p_se = self._layer_probs(i)
            exp_group = EXP_GROUP_SKIP if layer.spec.skippable else EXP_GROUP
            for ki, k in enumerate(KERNEL_GROUP):
                for ei, e in enumerate(exp_group):
                    if e == "skip":
                        continue
                    for si, se in enumerate(SE_GROUP):
                        prob = ad.mul(ad.mul(ad.pick(p_k, ki), ad.pick(p_e, ei)),
                                      ad.pick(p_se, si))
                        entry = table.entries[(i, k, e, se)]
                        total = total + ad.cmul(prob, entry)
        return total

    def decode(self):
        arch = []
        for i, layer in enumerate(self.net.layers):
            k = KERNEL_GROUP[int(np.argmax(self.kernel_logits[i].data))]
            exp_group = EXP_GROUP_SKIP if layer.spec.skippable else EXP_GROUP
            e = exp_group[int(np.argmax(self.exp_logits[i].data))]
            se = SE_GROUP[int(np.argmax(self.se_logits[i].data))]
            arch.append(SKIP if e == "skip" else MBConvType(k, e, se))
        return arch

    def sample_architecture(self, rng):
        arch = []
        for i, layer in enumerate(self.net.layers):
            def draw(logits, options):
                z = logits.data - logits.data.max()
                p = np.exp(z) / np.exp(z).sum()
                return options[rng.choice(len(options), p=p)]
            k = draw(self.kernel_logits[i], KERNEL_GROUP)
            exp_group = EXP_GROUP_SKIP if layer.spec.skippable else EXP_GROUP
            e = draw(self.exp_logits[i], exp_group)
            se = draw(self.se_logits[i], SE_GROUP)
            arch.append(SKIP if e == "skip" else MBConvType(k, e, se))
        return arch

    def force_one_hot(self, architecture):
        """Saturate logits so softmax is exactly one-hot in float64."""
        for i, (layer, t) in enumerate(zip(self.net.layers, architecture)):
            exp_group = EXP_GROUP_SKIP if layer.spec.skippable else EXP_GROUP
            if t.skip:
                if "skip" not in exp_group:
                    raise ConfigError("cannot force skip on a non-skippable layer")
                e_val = "skip"
            else:
                e_val = t.expansion
            for logits, options, chosen in (
                    (self.kernel_logits[i], KERNEL_GROUP, 3 if t.skip else t.kernel),
                    (self.exp_logits[i], exp_group, e_val),
                    (self.se_logits[i], SE_GROUP, 0.0 if t.skip else t.se)):
                vals = np.full(len(options), -ONE_HOT_LOGIT)
                vals[options.index(chosen)] = ONE_HOT_LOGIT
                logits.data = vals


class MultiPathNet:
    """Every candidate type is its own block; paths mixed by softmax weights."""

    def __init__(self, config: SearchSpaceConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c0 = config.stem_channels
        self.stem_conv = Tensor(conv_init(rng, (c0, 1, 3, 3)), requires_grad=True)
        self.stem_gamma = Tensor(np.ones(c0), requires_grad=True)
        self.stem_bn = ad.BatchNormState(c0)
        self.paths = []        # per layer: list of (MBConvType, block-or-None)
        self.logits = []
        for spec in config.layers:
            layer_paths = []
            if spec.skippable:
                layer_paths.append((SKIP, None))
            for t in NON_SKIP_TYPES:
                layer_paths.append((t, FixedMBConv(spec, t, rng=rng)))
            self.paths.append(layer_paths)
            self.logits.append(Tensor(np.zeros(len(layer_paths)), requires_grad=True))
        c_last = config.layers[-1].out_channels
        ch = config.head_channels
        self.head_conv = Tensor(conv_init(rng, (ch, c_last, 1, 1)), requires_grad=True)
        self.head_gamma = Tensor(np.ones(ch), requires_grad=True)
        self.head_bn = ad.BatchNormState(ch)
        self.fc_w = Tensor(linear_init(rng, ch, config.classes), requires_grad=True)
        self.fc_b = Tensor(np.zeros(config.classes), requires_grad=True)

    def arch_parameters(self):
        return [(f"layers.{i}.alpha", l) for i, l in enumerate(self.logits)]

    def weight_parameters(self):
        params = [("stem.conv", self.stem_conv), ("stem.gamma", self.stem_gamma)]
        for i, layer_paths in enumerate(self.paths):
            for t, block in layer_paths:
                if block is not None:
                    params += [(f"layers.{i}.{t}.{n}", p) for n, p in block.parameters()]
        params += [("head.conv", self.head_conv), ("head.gamma", self.head_gamma),
                   ("fc.w", self.fc_w), ("fc.b", self.fc_b)]
        return params

    def forward(self, x: Tensor, training: bool = True):
        h = ad.conv2d(x, self.stem_conv, stride=self.config.stem_stride)
        h = ad.batchnorm(h, self.stem_gamma, self.stem_bn, training)
        h = ad.relu6(h)
        for i, layer_paths in enumerate(self.paths):
            alpha = ad.softmax_probs(self.logits[i])
            mixed = None
            for j, (t, block) in enumerate(layer_paths):
                out_j = h if block is None else block.forward(h, training)
                term = ad.scale(out_j, ad.pick(alpha, j))
                mixed = term if mixed is None else ad.add(mixed, term)
            h = mixed
        h = ad.conv2d(h, self.head_conv)
        h = ad.batchnorm(h, self.head_gamma, self.head_bn, training)
        h = ad.relu6(h)
        h = ad.global_avg_pool(h)
        h = ad.reshape(h, (h.data.shape[0], -1))
        return ad.add_bias(ad.matmul(h, self.fc_w), self.fc_b)

    def expected_runtime(self, table: LatencyTable):
        total = table.fixed_overhead_ms
        for i, layer_paths in enumerate(self.paths):
            alpha = ad.softmax_probs(self.logits[i])
            for j, (t, _) in enumerate(layer_paths):
                total = total + ad.cmul(ad.pick(alpha, j), table.lookup(i, t))
        return total

    def decode(self):
        return [self.paths[i][int(np.argmax(l.data))][0]
                for i, l in enumerate(self.logits)]

    def sample_architecture(self, rng):
        arch = []
        for i, l in enumerate(self.logits):
            z = l.data - l.data.max()
            p = np.exp(z) / np.exp(z).sum()
            arch.append(self.paths[i][rng.choice(len(p), p=p)][0])
        return arch

    def force_one_hot(self, architecture):
        for i, t in enumerate(architecture):
            types = [pt for pt, _ in self.paths[i]]
            vals = np.full(len(types), -ONE_HOT_LOGIT)
            vals[types.index(t)] = ONE_HOT_LOGIT
            self.logits[i].data = vals
