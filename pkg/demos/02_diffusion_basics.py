"""The diffusion machinery on its own: the cosine schedule, forward
corruption at increasing timesteps, and the exactness of the reverse
process when the denoiser is a perfect oracle.

Run: python demos/02_diffusion_basics.py
"""

import numpy as np

from rirforge.diffusion import cosine_schedule, forward_diffuse, reverse_mean, sample

sched = cosine_schedule(100)
print("cosine schedule, T = 100")
for t in (1, 25, 50, 75, 100):
    print(
        f"  t={t:3d}: alpha_bar {sched.alpha_bar[t]:.5f}  "
        f"alpha {sched.alpha[t]:.5f}  sigma {sched.sigma[t]:.5f}"
    )

rng = np.random.default_rng(0)
x0 = rng.standard_normal(2048) * np.exp(-np.arange(2048) / 400)
print("\nforward corruption (signal-to-noise in dB):")
for t in (1, 25, 50, 75, 100):
    eps = rng.standard_normal(2048)
    x_t = forward_diffuse(x0, t, eps, sched)
    sig = sched.alpha_bar[t] * np.sum(x0**2)
    noise = (1 - sched.alpha_bar[t]) * eps.size
    print(f"  t={t:3d}: ~{10 * np.log10(sig / noise):6.1f} dB")

# a perfect denoiser makes the sampler reproduce x0 exactly: the last
# reverse step collapses onto the prediction and adds no noise
out = sample(lambda x_t, c, t: x0, np.zeros(2048), sched, rng=np.random.default_rng(1))
print(f"\noracle-denoiser sampling error: {np.max(np.abs(out - x0)):.2e}")

# reverse_mean at t = 1 ignores x_t entirely
mu = reverse_mean(rng.standard_normal(8), x0[:8], 1, sched)
print(f"reverse mean at t=1 equals the prediction: {np.array_equal(mu, x0[:8])}")
