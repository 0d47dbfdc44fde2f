"""A walk through the tensor/graph core.

Builds a couple of small graphs, checks a convolution against a direct loop
nest, and verifies an analytic gradient with finite differences — the same
checks the test suite automates, shown step by step.
"""

import numpy as np

import nanonas.autodiff as ad
from nanonas.autodiff import Graph, Tensor

rng = np.random.default_rng(0)

print("== scalar graph ==")
a = Tensor(2.0, requires_grad=True)
b = Tensor(3.0, requires_grad=True)
with Graph() as g:
    out = ad.mul(ad.add(a, b), a)  # (a+b)*a
    g.backward(out)
print(f"value  : {out.item()}")            # 10
print(f"d/da   : {float(a.grad)} (expect 2a+b = 7)")
print(f"d/db   : {float(b.grad)} (expect a = 2)")

print("\n== convolution vs a direct loop nest ==")
x = rng.normal(size=(1, 2, 6, 6))
w = rng.normal(size=(3, 2, 3, 3))
out = ad.conv2d(Tensor(x), Tensor(w), stride=1, padding="same")
xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
ref = np.zeros_like(out.data)
for n in range(1):
    for o in range(3):
        for y in range(6):
            for xx in range(6):
                for c in range(2):
                    for i in range(3):
                        for j in range(3):
                            ref[n, o, y, xx] += xp[n, c, y + i, xx + j] * w[o, c, i, j]
print(f"max |conv - loop nest| = {np.max(np.abs(out.data - ref)):.2e}")

print("\n== gradient vs central finite differences ==")
x = Tensor(rng.normal(size=(2, 3, 5, 5)), requires_grad=True)
w = Tensor(rng.normal(size=(3, 1, 3, 3)), requires_grad=True)
with Graph() as g:
    h = ad.depthwise_conv2d(x, w)
    loss = ad.masked_sq_norm(h, np.ones(h.data.shape))
    g.backward(loss)


def loss_value():
    h = ad.depthwise_conv2d(Tensor(x.data), Tensor(w.data))
    return float(np.sum(h.data * h.data))


h_step = 1e-5
i = (0, 0, 1, 1)
orig = w.data[i]
w.data[i] = orig + h_step
fp = loss_value()
w.data[i] = orig - h_step
fm = loss_value()
w.data[i] = orig
fd = (fp - fm) / (2 * h_step)
print(f"analytic dL/dw{list(i)}  = {w.grad[i]:+.8f}")
print(f"finite-difference      = {fd:+.8f}")

print("\n== determinism: same seed, bitwise-equal gradients ==")
def run():
    t = Tensor(rng_state.normal(size=(4, 3, 8, 8)), requires_grad=True)
    k = Tensor(np.ones((2, 3, 3, 3)) * 0.1, requires_grad=True)
    with Graph(seed=0) as g:
        out = ad.relu6(ad.conv2d(t, k, stride=2))
        g.backward(ad.masked_sq_norm(out, np.ones(out.data.shape)))
    return k.grad.copy()

rng_state = np.random.default_rng(42)
g1 = run()
rng_state = np.random.default_rng(42)
g2 = run()
print(f"bitwise equal: {np.array_equal(g1, g2)}")
