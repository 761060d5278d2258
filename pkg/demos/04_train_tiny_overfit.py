"""Overfit the denoiser on a handful of simulated pairs, then complete an
RIR from its low-order conditioner. Miniature sizes so the whole thing runs
in about a minute; scale the constants up for a real desk run.

Run: python demos/04_train_tiny_overfit.py
"""

import time

import numpy as np

from rirforge import ism
from rirforge.diffusion import cosine_schedule, sample
from rirforge.losses import LossConfig
from rirforge.metrics import edc_mae, rer_early
from rirforge.nn.unet import UNetConfig, init_params, make_denoiser
from rirforge.training import adam_update, clip_grad_norm, init_adam, train_step

FS, K, T, N, STEPS = 8000, 1024, 50, 8, 300

rng = np.random.default_rng(0)
pairs = ism.sample_room_configs(N, rng)
x0, cond = [], []
for room, src, rcv in pairs:
    need = int(np.ceil(343.0 * K / FS / min(room.dims))) + 1
    x0.append(ism.simulate(room, src, rcv, need, FS, K).samples)
    cond.append(ism.simulate(room, src, rcv, 1, FS, K).samples)
x0, cond = np.stack(x0), np.stack(cond)
print(f"{N} pairs simulated (K={K}, fs={FS})")

cfg = UNetConfig(input_length=K, base_channels=8)
sched = cosine_schedule(T)
lcfg = LossConfig(lambda_edc=1e-5, cfg_dropout_p=0.2)
params = init_params(cfg, np.random.default_rng(1))
state = init_adam(params)
rng_tr = np.random.default_rng(2)

start = time.time()
for step in range(1, STEPS + 1):
    idx = rng_tr.integers(0, N, size=4)
    grads, info = train_step(params, cfg, x0[idx], cond[idx], rng_tr, lcfg, sched)
    clip_grad_norm(grads, 1.0)
    adam_update(params, grads, state, 1e-3)
    if step % 50 == 0:
        print(f"step {step:4d}: mse {info['mse']:.5f}  edc {info['edc']:.2f}  "
              f"({time.time() - start:.0f}s)")

denoiser = make_denoiser(params, cfg)
out = sample(denoiser, cond[:2], sched, guidance=1.0, rng=np.random.default_rng(9))
k80 = round(0.080 * FS)
for i in range(2):
    print(f"item {i}: EDC_MAE {edc_mae(out[i], x0[i]):.2f} dB, "
          f"RER_early {rer_early(out[i], x0[i], cond[i], k80):.2f} dB")
print("(a few hundred steps on 8 items only roughs in the decay; see the")
print(" acceptance suite for the full 64-item, 2000-step overfit run)")
