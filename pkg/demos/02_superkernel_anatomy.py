"""How one over-parameterized layer encodes thirteen architectures.

Forces the thresholds of a single searchable layer through a few candidate
types and confirms the layer output matches an independently constructed
compact block each time; then shows the decode rule and subset dropout.
"""

import numpy as np

from nanonas.autodiff import Tensor
from nanonas.fixednet import FixedMBConv, block_params_from_superkernel
from nanonas.searchspace import (ALL_TYPES, SKIP, LayerSpec, MBConvType,
                                 SuperkernelLayer, Supernet, default_config,
                                 draw_dropout_masks)

rng = np.random.default_rng(0)
spec = LayerSpec(8, 8, 1)
layer = SuperkernelLayer(spec, rng)
x = Tensor(rng.normal(size=(2, 8, 10, 10)))

print("== subset equivalence: forced thresholds vs standalone blocks ==")
for t in (SKIP, MBConvType(3, 3, 0.0), MBConvType(5, 6, 0.25), MBConvType(5, 6, 0.5)):
    layer.force_type(t)
    got, inds, _ = layer.forward(x, "hard", 5.0, training=True)
    if t.skip:
        want = x.data
    else:
        block = FixedMBConv(spec, t, params=block_params_from_superkernel(layer, t))
        want = block.forward(x, training=True).data
    print(f"{str(t):>20}: max |supernet - standalone| = {np.max(np.abs(got.data - want)):.2e}")

print("\n== the decode rule ==")
layer.force_type(MBConvType(5, 3, 0.25))
norms = layer.current_norms()
print("normalized subset norms:", {k: round(v, 4) for k, v in norms.items()})
print("thresholds pin the comparison, decode gives:", layer.decode())

print("\n== parameter sharing: one superkernel vs 12 separate blocks ==")
shared = sum(p.data.size for _, p in layer.weight_parameters())
separate = 0
for t in ALL_TYPES:
    if t.skip:
        continue
    block = FixedMBConv(spec, t, rng=np.random.default_rng(1))
    separate += sum(p.data.size for _, p in block.parameters())
print(f"superkernel layer: {shared} weights;  12 standalone blocks: {separate} "
      f"({separate / shared:.1f}x)")

print("\n== subset dropout during warmup ==")
net = Supernet(default_config(), seed=0)
for p in (0.5, 1.0):
    masks = draw_dropout_masks(np.random.default_rng(3), p, net.config.num_layers)
    dropped = sum(1 - m for layer_m in masks for m in layer_m.values())
    print(f"p={p}: {dropped}/{4 * net.config.num_layers} optional subsets dropped this step")
