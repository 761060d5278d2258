"""Hybrid loss and evaluation metrics on a controlled example: perturb a
reference response in the early window and in the tail separately and watch
which metric reacts.

Run: python demos/03_losses_and_metrics.py
"""

import numpy as np

from rirforge.losses import LossConfig, edc_loss, mse_loss, total_loss
from rirforge.metrics import edc_mae, rer_early, rmse_late

fs, k = 16000, 24576
k80 = round(0.080 * fs)
rng = np.random.default_rng(3)
decay = np.exp(-np.arange(k) / (0.4 * fs))  # ~0.4 s decay constant
x = rng.standard_normal(k) * decay
x[0] = 1.0
cond = np.zeros(k)
cond[:k80] = x[:k80] * 0.7  # an early-reflections-only conditioner

cases = {
    "perfect": x.copy(),
    "early error": x + 0.02 * np.pad(rng.standard_normal(k80), (0, k - k80)),
    "late error": x + 0.02 * np.pad(rng.standard_normal(k - k80), (k80, 0)) * decay[k80:].mean(),
    "wrong decay": rng.standard_normal(k) * np.exp(-np.arange(k) / (0.2 * fs)),
}

cfg = LossConfig(lambda_edc=1e-5)
print(f"{'case':12s} {'MSE':>10s} {'EDC loss':>10s} {'total':>10s} "
      f"{'RER_early':>10s} {'RMSE_late':>10s} {'EDC_MAE':>9s}")
for name, x_hat in cases.items():
    print(
        f"{name:12s} {mse_loss(x_hat, x):10.2e} {edc_loss(x_hat, x, cfg):10.4f} "
        f"{total_loss(x_hat, x, cfg):10.2e} "
        f"{rer_early(x_hat, x, cond, k80):10.2f} {rmse_late(x_hat, x, k80):10.2f} "
        f"{edc_mae(x_hat, x):9.3f}"
    )
print("\n(RER and RMSE in dB; perfect prediction clamps RMSE at -120 dB and")
print(" its RER is reported as -inf / excluded in aggregate reports)")
