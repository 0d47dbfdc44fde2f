"""Masked-superkernel search space: every architecture decision is a nested
subset of shared weights, selected by trainable thresholds.

A layer stores one depthwise tensor at the largest kernel/expansion and one
squeeze tensor at the largest squeeze-excite ratio. Group-lasso norms of the
optional subsets are compared against per-layer thresholds through an
indicator (hard, sigmoid-relaxed, or straight-through), and the effective
kernels are composed from the surviving subsets. Decoding binarizes the same
comparisons.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, Tensor
from .errors import ConfigError

KERNEL_CHOICES = (3, 5)
EXPANSION_CHOICES = (3, 6)
SE_CHOICES = (0.0, 0.25, 0.5)
MAX_EXPANSION = 6
MAX_SE = 0.5

# Threshold values that pin an indicator fully on/off in every mode.
FORCE_ON_T = -1e9
FORCE_OFF_T = 1e9

INDICATOR_MODES = ("hard", "sigmoid", "ste")


@dataclass(frozen=True)
class MBConvType:
    """One of the 13 candidate layer types (12 block variants plus skip)."""

    kernel: int = 3
    expansion: int = 3
    se: float = 0.0
    skip: bool = False

    def __post_init__(self):
        if self.skip:
            if (self.kernel, self.expansion, self.se) != (3, 3, 0.0):
                raise ConfigError("skip type must use canonical (3, 3, 0.0) fields")
        else:
            if self.kernel not in KERNEL_CHOICES or self.expansion not in EXPANSION_CHOICES \
                    or self.se not in SE_CHOICES:
                raise ConfigError(f"invalid MBConv type ({self.kernel}, {self.expansion}, {self.se})")

    def __str__(self):
        if self.skip:
            return "skip"
        return f"mbconv-{self.kernel}x{self.kernel}-{self.expansion}-{self.se:g}"


SKIP = MBConvType(skip=True)
NON_SKIP_TYPES = tuple(MBConvType(k, e, s)
                       for k in KERNEL_CHOICES for e in EXPANSION_CHOICES for s in SE_CHOICES)
ALL_TYPES = (SKIP,) + NON_SKIP_TYPES
assert len(ALL_TYPES) == 13


@dataclass(frozen=True)
class LayerSpec:
    in_channels: int
    out_channels: int
    stride: int

    @property
    def skippable(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels


@dataclass
class SearchSpaceConfig:
    """Fixed backbone: stem/head widths plus the searchable layer stack."""

    image_size: int = 28
    classes: int = 4
    stem_channels: int = 8
    head_channels: int = 64
    stem_stride: int = 2
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.layers = [LayerSpec(**l) if isinstance(l, dict) else l for l in self.layers]
        if len(self.layers) < 1:
            raise ConfigError("need at least one searchable layer")
        if self.stem_stride not in (1, 2):
            raise ConfigError(f"stem stride must be 1 or 2, got {self.stem_stride}")
        prev = self.stem_channels
        for i, spec in enumerate(self.layers):
            if spec.stride not in (1, 2):
                raise ConfigError(f"layer {i}: stride must be 1 or 2")
            if spec.in_channels != prev:
                raise ConfigError(f"layer {i}: expects {spec.in_channels} input channels, "
                                  f"previous stage provides {prev}")
            if spec.in_channels % 2:
                raise ConfigError(f"layer {i}: channel count must be even for the "
                                  f"squeeze-ratio halves to be integral")
            prev = spec.out_channels

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def valid_types(self, i: int):
        return ALL_TYPES if self.layers[i].skippable else NON_SKIP_TYPES

    def spatial_dims(self):
        """(input_hw, output_hw) per searchable layer, after the stem stride."""
        dims = []
        h = -(-self.image_size // self.stem_stride)
        for spec in self.layers:
            out = -(-h // spec.stride)
            dims.append((h, out))
            h = out
        return dims

    def to_json(self) -> dict:
        return {
            "image_size": self.image_size,
            "classes": self.classes,
            "stem_channels": self.stem_channels,
            "head_channels": self.head_channels,
            "stem_stride": self.stem_stride,
            "layers": [{"in": l.in_channels, "out": l.out_channels, "stride": l.stride}
                       for l in self.layers],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SearchSpaceConfig":
        try:
            layers = [LayerSpec(l["in"], l["out"], l["stride"]) for l in obj["layers"]]
            return cls(image_size=obj["image_size"], classes=obj["classes"],
                       stem_channels=obj["stem_channels"], head_channels=obj["head_channels"],
                       stem_stride=obj.get("stem_stride", 2), layers=layers)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad search-space config: {exc}") from exc


def default_config(classes: int = 4, image_size: int = 28) -> SearchSpaceConfig:
    """Desk-scale five-layer backbone with two skippable layers."""
    return SearchSpaceConfig(
        image_size=image_size, classes=classes, stem_channels=8, head_channels=64,
        layers=[LayerSpec(8, 16, 1), LayerSpec(16, 16, 1), LayerSpec(16, 24, 2),
                LayerSpec(24, 24, 1), LayerSpec(24, 32, 2)])


def enumerable_config(n_layers: int = 3, channels: int = 8, classes: int = 4,
                      image_size: int = 16) -> SearchSpaceConfig:
    """All-skippable stack where every layer admits all 13 types."""
    return SearchSpaceConfig(
        image_size=image_size, classes=classes, stem_channels=channels, head_channels=32,
        layers=[LayerSpec(channels, channels, 1) for _ in range(n_layers)])


# ---------------------------------------------------------------------------
# indicators


def _np_sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def indicator(norm_sq, t, mode: str, beta: float = 5.0):
    """Architecture gate comparing a (normalized) subset norm to a threshold.

    hard: strict 0/1; sigmoid: relaxed in forward and backward; ste: hard
    forward with the (norm - t) surrogate in backward. Accepts plain floats
    (returns float) or scalar tensors (returns a graph scalar).
    """
    if beta <= 0:
        raise ConfigError(f"indicator beta must be > 0, got {beta}")
    if mode not in INDICATOR_MODES:
        raise ConfigError(f"indicator mode must be one of {INDICATOR_MODES}, got '{mode}'")
    if not isinstance(norm_sq, Tensor):
        if mode == "sigmoid":
            return _np_sigmoid(beta * (norm_sq - t))
        return 1.0 if norm_sq > t else 0.0
    if mode == "hard":
        return ad.hard_gate(norm_sq, t)
    if mode == "ste":
        return ad.ste_gate(norm_sq, t)
    return ad.sigmoid(ad.cmul(ad.sub(norm_sq, t), beta))


def decode_from_norms(norms: dict, thresholds: dict, skippable: bool) -> MBConvType:
    """Binarize the nested decisions: skip gates expansion, which gates nothing
    below it; kernel and squeeze decisions are independent of each other."""
    k5 = norms["k5"] > thresholds["k5"]
    e3 = norms["e3"] > thresholds["e3"]
    e6 = norms["e6"] > thresholds["e6"]
    se25 = norms["se25"] > thresholds["se25"]
    se50 = norms["se50"] > thresholds["se50"]
    if skippable and not e3:
        return SKIP
    kernel = 5 if k5 else 3
    expansion = 6 if e6 else 3
    se = (0.5 if se50 else 0.25) if se25 else 0.0
    return MBConvType(kernel, expansion, se)


# ---------------------------------------------------------------------------
# parameter initialization helpers


def conv_init(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)


def linear_init(rng, fan_in, fan_out):
    return rng.normal(0.0, math.sqrt(1.0 / fan_in), size=(fan_in, fan_out))


# ---------------------------------------------------------------------------
# the searchable layer


class SuperkernelLayer:
    """Superkernel weights, thresholds, masks, and normalization state for
    one searchable MBConv position."""

    def __init__(self, spec: LayerSpec, rng):
        self.spec = spec
        cin, cout = spec.in_channels, spec.out_channels
        self.c_max = MAX_EXPANSION * cin
        self.s_max = int(MAX_SE * MAX_EXPANSION * cin)
        self.c_half = (EXPANSION_CHOICES[0] * cin)   # channels active at e=3
        self.s_half = self.s_max // 2                # squeeze channels at se=0.25

        self.pw_in = Tensor(conv_init(rng, (self.c_max, cin, 1, 1)), requires_grad=True)
        self.dw = Tensor(conv_init(rng, (self.c_max, 1, 5, 5)), requires_grad=True)
        self.se_squeeze = Tensor(conv_init(rng, (self.s_max, self.c_max, 1, 1)), requires_grad=True)
        self.se_expand = Tensor(conv_init(rng, (self.c_max, self.s_max, 1, 1)), requires_grad=True)
        self.pw_out = Tensor(conv_init(rng, (cout, self.c_max, 1, 1)), requires_grad=True)
        self.bn1_gamma = Tensor(np.ones(self.c_max), requires_grad=True)
        self.bn2_gamma = Tensor(np.ones(self.c_max), requires_grad=True)
        self.bn3_gamma = Tensor(np.ones(cout), requires_grad=True)
        self.bn1 = BatchNormState(self.c_max)
        self.bn2 = BatchNormState(self.c_max)
        self.bn3 = BatchNormState(cout)
        self.thresholds = {name: Tensor(np.zeros(()), requires_grad=True)
                           for name in ("k5", "e3", "e6", "se25", "se50")}

        # nested subset masks over the stored tensors
        spatial_inner = np.zeros((1, 1, 5, 5))
        spatial_inner[:, :, 1:4, 1:4] = 1.0
        ones_dw = np.ones((self.c_max, 1, 5, 5))
        self.mask_inner3 = ones_dw * spatial_inner
        self.mask_outer = ones_dw - self.mask_inner3
        self.mask_first_half = np.zeros_like(ones_dw)
        self.mask_first_half[:self.c_half] = 1.0
        self.mask_second_half = ones_dw - self.mask_first_half
        sq_shape = (self.s_max, self.c_max, 1, 1)
        self.mask_se25 = np.zeros(sq_shape)
        self.mask_se25[:self.s_half] = 1.0
        self.mask_se50 = np.ones(sq_shape) - self.mask_se25
        self._mask_tensors = {
            "first": Tensor(self.mask_first_half), "second": Tensor(self.mask_second_half),
            "inner": Tensor(self.mask_inner3), "outer": Tensor(self.mask_outer),
            "se25": Tensor(self.mask_se25), "se50": Tensor(self.mask_se50),
        }

    # -- norms ---------------------------------------------------------------

    def norm_k5(self):
        return ad.cmul(ad.masked_sq_norm(self.dw, self.mask_outer), 1.0 / self.mask_outer.sum())

    def kernel_composed(self, ind_k5):
        """Spatial decision applied over the full channel extent."""
        inner = ad.mul(self.dw, self._mask_tensors["inner"])
        outer = ad.mul(self.dw, self._mask_tensors["outer"])
        return ad.add(inner, ad.scale(outer, ind_k5))

    def norms_e(self, w_k):
        n3 = ad.cmul(ad.masked_sq_norm(w_k, self.mask_first_half), 1.0 / self.mask_first_half.sum())
        n6 = ad.cmul(ad.masked_sq_norm(w_k, self.mask_second_half), 1.0 / self.mask_second_half.sum())
        return n3, n6

    def norm_se(self):
        n25 = ad.cmul(ad.masked_sq_norm(self.se_squeeze, self.mask_se25), 1.0 / self.mask_se25.sum())
        n50 = ad.cmul(ad.masked_sq_norm(self.se_squeeze, self.mask_se50), 1.0 / self.mask_se50.sum())
        return n25, n50

    # -- effective kernels ----------------------------------------------------

    def effective_depthwise(self, mode: str, beta: float, dropout=None):
        """Compose the depthwise kernel from gated subsets.

        Returns (kernel, indicators, norms). Whether the spatial shell and the
        second expansion half survive is decided by the indicators; on layers
        that cannot be skipped the outermost gate is pinned on.
        """
        drop = dropout or {}
        n_k5 = self.norm_k5()
        ind_k5 = indicator(n_k5, self.thresholds["k5"], mode, beta)
        if not drop.get("k5", 1):
            ind_k5 = Tensor(np.zeros(()))
        w_k = self.kernel_composed(ind_k5)
        n_e3, n_e6 = self.norms_e(w_k)
        ind_e6 = indicator(n_e6, self.thresholds["e6"], mode, beta)
        if not drop.get("e6", 1):
            ind_e6 = Tensor(np.zeros(()))
        first = ad.mul(w_k, self._mask_tensors["first"])
        second = ad.mul(w_k, self._mask_tensors["second"])
        base = ad.add(first, ad.scale(second, ind_e6))
        if self.spec.skippable:
            ind_e3 = indicator(n_e3, self.thresholds["e3"], mode, beta)
            w_dw = ad.scale(base, ind_e3)
        else:
            ind_e3 = Tensor(np.ones(()))
            w_dw = base
        inds = {"k5": ind_k5, "e3": ind_e3, "e6": ind_e6}
        norms = {"k5": n_k5, "e3": n_e3, "e6": n_e6}
        return w_dw, inds, norms

    def effective_se(self, mode: str, beta: float, dropout=None):
        """Squeeze kernel with the nested ratio gates applied."""
        drop = dropout or {}
        n25, n50 = self.norm_se()
        ind_25 = indicator(n25, self.thresholds["se25"], mode, beta)
        ind_50 = indicator(n50, self.thresholds["se50"], mode, beta)
        if not drop.get("se25", 1):
            ind_25 = Tensor(np.zeros(()))
        if not drop.get("se50", 1):
            ind_50 = Tensor(np.zeros(()))
        w25 = ad.mul(self.se_squeeze, self._mask_tensors["se25"])
        w50 = ad.mul(self.se_squeeze, self._mask_tensors["se50"])
        w_se = ad.scale(ad.add(w25, ad.scale(w50, ind_50)), ind_25)
        inds = {"se25": ind_25, "se50": ind_50}
        norms = {"se25": n25, "se50": n50}
        return w_se, inds, norms

    def forward(self, x: Tensor, mode: str, beta: float, training: bool, dropout=None):
        """Expand -> gated depthwise -> squeeze-excite -> project, with the
        residual shortcut when geometry allows."""
        h = ad.conv2d(x, self.pw_in)
        h = ad.batchnorm(h, self.bn1_gamma, self.bn1, training)
        h = ad.relu6(h)
        w_dw, inds, norms = self.effective_depthwise(mode, beta, dropout)
        h = ad.depthwise_conv2d(h, w_dw, stride=self.spec.stride, padding="same")
        h = ad.batchnorm(h, self.bn2_gamma, self.bn2, training)
        h = ad.relu6(h)
        w_se, se_inds, se_norms = self.effective_se(mode, beta, dropout)
        pooled = ad.global_avg_pool(h)
        s = ad.conv2d(pooled, w_se)
        s = ad.relu6(s)
        s = ad.conv2d(s, self.se_expand)
        gate = ad.sigmoid(s)
        # disabled squeeze path multiplies the main path by exactly 1
        gate_eff = ad.cadd(ad.scale(ad.cadd(gate, -1.0), se_inds["se25"]), 1.0)
        h = ad.scale_channels(h, gate_eff)
        h = ad.conv2d(h, self.pw_out)
        h = ad.batchnorm(h, self.bn3_gamma, self.bn3, training)
        if self.spec.skippable:
            h = ad.add(h, x)
        inds.update(se_inds)
        norms.update(se_norms)
        return h, inds, norms

    # -- bookkeeping ----------------------------------------------------------

    def weight_parameters(self):
        return [("pw_in", self.pw_in), ("dw", self.dw), ("se_squeeze", self.se_squeeze),
                ("se_expand", self.se_expand), ("pw_out", self.pw_out),
                ("bn1_gamma", self.bn1_gamma), ("bn2_gamma", self.bn2_gamma),
                ("bn3_gamma", self.bn3_gamma)]

    def threshold_parameters(self):
        return [(f"t_{k}", t) for k, t in self.thresholds.items()]

    def bn_states(self):
        return [("bn1", self.bn1), ("bn2", self.bn2), ("bn3", self.bn3)]

    def current_norms(self) -> dict:
        """Hard-mode normalized norms of every optional subset (floats)."""
        dw = self.dw.data
        nk5 = float(np.sum((dw * self.mask_outer) ** 2) / self.mask_outer.sum())
        k5_on = nk5 > self.thresholds["k5"].item()
        w_k = dw * self.mask_inner3 + (dw * self.mask_outer if k5_on else 0.0)
        ne3 = float(np.sum((w_k * self.mask_first_half) ** 2) / self.mask_first_half.sum())
        ne6 = float(np.sum((w_k * self.mask_second_half) ** 2) / self.mask_second_half.sum())
        sq = self.se_squeeze.data
        n25 = float(np.sum((sq * self.mask_se25) ** 2) / self.mask_se25.sum())
        n50 = float(np.sum((sq * self.mask_se50) ** 2) / self.mask_se50.sum())
        return {"k5": nk5, "e3": ne3, "e6": ne6, "se25": n25, "se50": n50}

    def decode(self) -> MBConvType:
        return decode_from_norms(self.current_norms(),
                                 {k: t.item() for k, t in self.thresholds.items()},
                                 self.spec.skippable)

    def force_type(self, t: MBConvType) -> None:
        """Pin thresholds so every indicator saturates to select `t`."""
        th = self.thresholds
        if t.skip:
            if not self.spec.skippable:
                raise ConfigError(f"layer with stride {self.spec.stride} "
                                  f"({self.spec.in_channels}->{self.spec.out_channels}) cannot skip")
            th["e3"].data = np.asarray(FORCE_OFF_T, dtype=np.float64)
            th["e6"].data = np.asarray(FORCE_OFF_T, dtype=np.float64)
            th["k5"].data = np.asarray(FORCE_OFF_T, dtype=np.float64)
            th["se25"].data = np.asarray(FORCE_OFF_T, dtype=np.float64)
            th["se50"].data = np.asarray(FORCE_OFF_T, dtype=np.float64)
            return
        th["e3"].data = np.asarray(FORCE_ON_T, dtype=np.float64)
        th["k5"].data = np.asarray(FORCE_ON_T if t.kernel == 5 else FORCE_OFF_T, dtype=np.float64)
        th["e6"].data = np.asarray(FORCE_ON_T if t.expansion == 6 else FORCE_OFF_T, dtype=np.float64)
        th["se25"].data = np.asarray(FORCE_ON_T if t.se > 0 else FORCE_OFF_T, dtype=np.float64)
        th["se50"].data = np.asarray(FORCE_ON_T if t.se == 0.5 else FORCE_OFF_T, dtype=np.float64)

    def init_thresholds(self, mode: str, beta: float) -> None:
        """Start every indicator undecided: each threshold equals the initial
        value of its (mode-consistent) normalized norm."""
        dw = self.dw.data
        nk5 = float(np.sum((dw * self.mask_outer) ** 2) / self.mask_outer.sum())
        self.thresholds["k5"].data = np.asarray(nk5, dtype=np.float64)
        ind = 0.5 if mode == "sigmoid" else 0.0
        w_k = dw * self.mask_inner3 + ind * (dw * self.mask_outer)
        ne3 = float(np.sum((w_k * self.mask_first_half) ** 2) / self.mask_first_half.sum())
        ne6 = float(np.sum((w_k * self.mask_second_half) ** 2) / self.mask_second_half.sum())
        self.thresholds["e3"].data = np.asarray(ne3, dtype=np.float64)
        self.thresholds["e6"].data = np.asarray(ne6, dtype=np.float64)
        sq = self.se_squeeze.data
        n25 = float(np.sum((sq * self.mask_se25) ** 2) / self.mask_se25.sum())
        n50 = float(np.sum((sq * self.mask_se50) ** 2) / self.mask_se50.sum())
        self.thresholds["se25"].data = np.asarray(n25, dtype=np.float64)
        self.thresholds["se50"].data = np.asarray(n50, dtype=np.float64)


# ---------------------------------------------------------------------------
# subset dropout


@dataclass
class DropoutSchedule:
    """Drop probability decaying linearly to zero by the end of warmup."""

    p0: float = 0.2
    warmup_fraction: float = 0.75

    def __post_init__(self):
        if not 0.0 <= self.p0 <= 1.0:
            raise ConfigError(f"dropout p0 must lie in [0, 1], got {self.p0}")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigError(f"warmup fraction must lie in [0, 1], got {self.warmup_fraction}")

    def warmup_steps(self, total_steps: int) -> int:
        return int(round(self.warmup_fraction * total_steps))

    def p(self, step: int, total_steps: int) -> float:
        w = self.warmup_steps(total_steps)
        if step >= w or w == 0:
            return 0.0
        return self.p0 * (1.0 - step / w)


OPTIONAL_SUBSETS = ("k5", "e6", "se25", "se50")


def draw_dropout_masks(rng, p: float, n_layers: int):
    """Keep-masks per layer: each optional subset dropped independently."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1], got {p}")
    if p == 0.0:
        return None
    draws = rng.uniform(size=(n_layers, len(OPTIONAL_SUBSETS)))
    return [{name: int(draws[i, j] >= p) for j, name in enumerate(OPTIONAL_SUBSETS)}
            for i in range(n_layers)]


# ---------------------------------------------------------------------------
# the supernet


class Supernet:
    """Single-path over-parameterized network covering the whole search space."""

    def __init__(self, config: SearchSpaceConfig, seed: int = 0, beta: float = 5.0,
                 mode: str = "sigmoid"):
        self.config = config
        self.beta = beta
        self.mode = mode
        rng = np.random.default_rng(seed)
        c0 = config.stem_channels
        self.stem_conv = Tensor(conv_init(rng, (c0, 1, 3, 3)), requires_grad=True)
        self.stem_gamma = Tensor(np.ones(c0), requires_grad=True)
        self.stem_bn = BatchNormState(c0)
        self.layers = [SuperkernelLayer(spec, rng) for spec in config.layers]
        c_last = config.layers[-1].out_channels
        ch = config.head_channels
        self.head_conv = Tensor(conv_init(rng, (ch, c_last, 1, 1)), requires_grad=True)
        self.head_gamma = Tensor(np.ones(ch), requires_grad=True)
        self.head_bn = BatchNormState(ch)
        self.fc_w = Tensor(linear_init(rng, ch, config.classes), requires_grad=True)
        self.fc_b = Tensor(np.zeros(config.classes), requires_grad=True)
        for layer in self.layers:
            layer.init_thresholds(mode, beta)

    def forward(self, x: Tensor, training: bool = True, mode: str = None,
                dropout_masks=None):
        """Returns (logits, per-layer indicator dicts, per-layer norm dicts)."""
        mode = mode or self.mode
        h = ad.conv2d(x, self.stem_conv, stride=self.config.stem_stride)
        h = ad.batchnorm(h, self.stem_gamma, self.stem_bn, training)
        h = ad.relu6(h)
        indicators, norms = [], []
        for i, layer in enumerate(self.layers):
            drop = dropout_masks[i] if dropout_masks else None
            h, inds, ns = layer.forward(h, mode, self.beta, training, drop)
            indicators.append(inds)
            norms.append(ns)
        h = ad.conv2d(h, self.head_conv)
        h = ad.batchnorm(h, self.head_gamma, self.head_bn, training)
        h = ad.relu6(h)
        h = ad.global_avg_pool(h)
        h = ad.reshape(h, (h.data.shape[0], -1))
        logits = ad.add_bias(ad.matmul(h, self.fc_w), self.fc_b)
        return logits, indicators, norms

    def weight_parameters(self):
        params = [("stem.conv", self.stem_conv), ("stem.gamma", self.stem_gamma)]
        for i, layer in enumerate(self.layers):
            params += [(f"layers.{i}.{n}", p) for n, p in layer.weight_parameters()]
        params += [("head.conv", self.head_conv), ("head.gamma", self.head_gamma),
                   ("fc.w", self.fc_w), ("fc.b", self.fc_b)]
        return params

    def threshold_parameters(self):
        params = []
        for i, layer in enumerate(self.layers):
            params += [(f"layers.{i}.{n}", p) for n, p in layer.threshold_parameters()]
        return params

    def parameters(self):
        return self.weight_parameters() + self.threshold_parameters()

    def bn_states(self):
        states = [("stem.bn", self.stem_bn)]
        for i, layer in enumerate(self.layers):
            states += [(f"layers.{i}.{n}", s) for n, s in layer.bn_states()]
        states.append(("head.bn", self.head_bn))
        return states

    def trainable_count(self) -> int:
        return sum(p.data.size for _, p in self.parameters())

    def decode(self):
        return [layer.decode() for layer in self.layers]

    def force_architecture(self, architecture) -> None:
        if len(architecture) != len(self.layers):
            raise ConfigError(f"architecture has {len(architecture)} layers, "
                              f"supernet has {len(self.layers)}")
        for layer, t in zip(self.layers, architecture):
            layer.force_type(t)

    def state_arrays(self) -> dict:
        arrays = {name: p.data for name, p in self.parameters()}
        for name, s in self.bn_states():
            arrays[f"{name}.mean"] = s.mean
            arrays[f"{name}.var"] = s.var
        return arrays

    def load_state_arrays(self, arrays: dict) -> None:
        for name, p in self.parameters():
            if name not in arrays:
                raise ConfigError(f"checkpoint missing array '{name}'")
            if arrays[name].shape != p.data.shape:
                raise ConfigError(f"checkpoint array '{name}' has shape "
                                  f"{arrays[name].shape}, expected {p.data.shape}")
            p.data = arrays[name].astype(np.float64)
        for name, s in self.bn_states():
            s.mean = arrays[f"{name}.mean"].astype(np.float64)
            s.var = arrays[f"{name}.var"].astype(np.float64)


def decode_architecture(supernet: Supernet):
    """Binarize the supernet's current thresholds into one concrete type per layer."""
    return supernet.decode()


# ---------------------------------------------------------------------------
# architecture (de)serialization


def architecture_to_json(architecture) -> list:
    rows = []
    for i, t in enumerate(architecture):
        rows.append({"layer": i, "kernel": t.kernel, "expansion": t.expansion,
                     "se": t.se, "skip": t.skip})
    return rows


def architecture_from_json(rows) -> list:
    try:
        ordered = sorted(rows, key=lambda r: r["layer"])
        return [SKIP if r["skip"] else MBConvType(r["kernel"], r["expansion"], float(r["se"]))
                for r in ordered]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad architecture json: {exc}") from exc


def save_architecture(path, architecture) -> None:
    with open(path, "w") as f:
        json.dump(architecture_to_json(architecture), f, indent=1, sort_keys=True)
        f.write("\n")


def load_architecture(path) -> list:
    with open(path) as f:
        return architecture_from_json(json.load(f))
