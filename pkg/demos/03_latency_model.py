"""The lookup-table runtime model and its differentiable relaxation.

Generates a synthetic latency table, shows that the composed runtime model
reproduces exact table entries for hard decisions, and that the relaxed
model approaches the hard one as the sigmoid sharpens.
"""

import numpy as np

from nanonas.autodiff import Graph, Tensor
from nanonas.latency import hard_indicators, layer_runtime, lutgen, network_runtime
from nanonas.searchspace import ALL_TYPES, MBConvType, Supernet, default_config

config = default_config()
table = lutgen(config, seed=0, noise=0.05)

print("== table anatomy ==")
print(f"fixed stem+head overhead: {table.fixed_overhead_ms:.3f} ms")
print(f"layer 0 entries (k, e, se) -> ms:")
for k in (3, 5):
    for e in (3, 6):
        row = ", ".join(f"se={se:g}: {table.entries[(0, k, e, se)]:.3f}"
                        for se in (0.0, 0.25, 0.5))
        print(f"  k={k} e={e}: {row}")
print("squeeze-path scaling factors by depth (k=5, e=6, se=0.25):")
for i in table.layers():
    print(f"  layer {i}: s = {table.scaling[(i, 5, 6, 0.25)]:.4f}")

print("\n== hard decisions collapse to exact lookups ==")
worst = 0.0
for i in table.layers():
    for t in ALL_TYPES:
        got = layer_runtime(hard_indicators(t), table, i)
        worst = max(worst, abs(got - table.lookup(i, t)))
print(f"max |model - lookup| over {len(table.layers()) * 13} cases: {worst:.2e} ms")

arch = [MBConvType(5, 6, 0.5)] * config.num_layers
print(f"all-max network: {network_runtime(arch, table):.3f} ms")

print("\n== sigmoid relaxation converges to the hard model ==")
hard_value = None
for beta in (5.0, 50.0, 500.0):
    net = Supernet(config, seed=1, beta=beta, mode="sigmoid")
    shift_rng = np.random.default_rng(9)
    for layer in net.layers:
        for t in layer.thresholds.values():
            t.data = t.data + shift_rng.normal(0.0, 0.5 * (abs(float(t.data)) + 0.1))
    x = Tensor(np.random.default_rng(2).normal(size=(2, 1, 28, 28)))
    with Graph():
        _, inds, _ = net.forward(x, training=True)
        relaxed = float(network_runtime(inds, table).data)
    hard_value = network_runtime(net.decode(), table)
    print(f"beta={beta:>5}: relaxed {relaxed:8.3f} ms, hard {hard_value:8.3f} ms, "
          f"gap {abs(relaxed - hard_value):.4f}")
