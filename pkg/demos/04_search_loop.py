"""One latency-aware search, end to end.

Runs a short search on the synthetic task, prints the trajectory of both
objective terms, decodes the result, and cross-checks the predicted runtime
against the exact table sum.
"""

import numpy as np

from nanonas.data import synth_classification
from nanonas.engine import SearchConfig, search, train_fixed
from nanonas.latency import lutgen, network_runtime
from nanonas.searchspace import DropoutSchedule, default_config

config = default_config()
dataset = synth_classification(classes=config.classes, n=640,
                               image_size=config.image_size, seed=0)
table = lutgen(config, seed=0, noise=0.05)

sc = SearchConfig(lambda_=0.2, epochs=4, batch_size=64, seed=0, proxy_epochs=2,
                  dropout=DropoutSchedule(p0=0.2, warmup_fraction=0.5))
print(f"searching: {config.num_layers} layers, lambda={sc.lambda_}, "
      f"{sc.epochs} epochs, batch {sc.batch_size}")
report = search(config, dataset, table, sc)

print("\nstep  ce      R(ms)   loss    drop_p  lambda")
stride = max(1, len(report.ce_trace) // 10)
for i in range(0, len(report.ce_trace), stride):
    print(f"{i:>4}  {report.ce_trace[i]:.4f}  {report.runtime_trace[i]:6.2f}  "
          f"{report.loss_trace[i]:.4f}  {report.dropout_trace[i]:.3f}   "
          f"{report.lambda_trace[i]:g}")

print(f"\nruntime term active from step {report.runtime_active_from_step} "
      f"(after subset-dropout warmup)")
print("decoded architecture:")
for i, t in enumerate(report.architecture):
    print(f"  layer {i}: {t}")
print(f"predicted runtime : {report.hard_runtime_ms:.3f} ms "
      f"(exact table sum {network_runtime(report.architecture, table):.3f})")
print(f"proxy accuracy    : {report.proxy_accuracy:.4f}")
print(f"audit             : {report.audit}")

fixed = train_fixed(config, report.architecture, dataset, epochs=2, seed=0)
print(f"\nper-step wall time: search {np.median(report.step_times_s) * 1e3:.0f} ms vs "
      f"compact training {np.median(fixed.step_times_s) * 1e3:.0f} ms "
      f"(ratio {np.median(report.step_times_s) / np.median(fixed.step_times_s):.3f})")
