"""Walkthrough: the numeric core and the six run indicators.

Trains a small MLP directly (no worker processes) and walks the indicator
kernel over the resulting loss curve, including the tail-slope windows.
"""

import math

import numpy as np

from gridrun import compute_all
from gridrun.trainer import AdamState, build_mlp, count_params, gen_dataset, train_epochs, transform

ds = gen_dataset(
    {"data_size": 2000, "train_prop": 0.9, "d_in": 4, "batch_size": 64,
     "noise_sigma": 0.05},
    seed=7,
)
ds = transform(ds, "standardisation")
print(f"dataset: {ds.train_X.shape[0]} train / {ds.test_X.shape[0]} test rows, "
      f"data_hash={ds.info['data_hash']}")

model = build_mlp("funnel", length=3, width=4, d_in=4, d_out=1, seed=1)
widths = [W.shape[1] for W, _ in model.layers[:-1]]
print(f"funnel MLP: hidden widths {widths}, {count_params(model)} parameters")

curve = train_epochs(
    model, AdamState.for_model(model), ds, np.random.default_rng(3),
    epochs=120, lr=1e-2,
)
print(f"trained 120 epochs: first/last train loss "
      f"{curve.train[0]:.4f} -> {curve.train[-1]:.4f}")

indicators = compute_all(curve, runtime_s=0.0)
n = curve.n
m = max(1, math.ceil(n / 20))
print(f"\nslope windows for n={n}: last {m} epochs vs the {m} before them, "
      f"one-epoch differences over the last {math.ceil(n / 10)} epochs")
print(f"  final train loss   {indicators.final_train_loss:.5f}")
print(f"  final test loss    {indicators.final_test_loss:.5f}")
print(f"  overfitting        {indicators.overfitting:.5f}   (0 = none, 1 = worst)")
print(f"  slope              {indicators.slope_mean:+.2e} "
      f"(+{indicators.slope_sigma_plus:.2e}/-{indicators.slope_sigma_minus:.2e})")
print(f"  trainability       {indicators.trainability:.3f}   (area under train curve)")
print("\na clearly negative slope says more epochs would still help; that is")
print("exactly what the rerun mechanism selects on (e.g. slope_mean < -1e-4)")
