"""Walk through the image-source simulator: enumerate mirror images for a
shoebox room, render an impulse response, and look at how the reflection
order fills in the early part of the response.

Run: python demos/01_shoebox_ism.py
"""

import numpy as np

from rirforge import ism
from rirforge.signals import compute_edc, first_arrival_index

room = ism.Room(dims=(6.2, 4.8, 3.1), absorption=(0.12, 0.18, 0.25, 0.15, 0.30, 0.22))
src = ism.SourcePose((1.4, 1.2, 1.5))
rcv = ism.ReceiverPose((4.6, 3.5, 1.7))
fs, k = 16000, 16384

print(f"room {room.dims} m, absorption {room.absorption}")
for order in (0, 1, 3, 5, 7):
    images = ism.enumerate_images(room, src, order)
    rir = ism.simulate(room, src, rcv, order, fs, k)
    k80 = round(0.080 * fs)
    early = np.sum(rir.samples[:k80] ** 2)
    total = np.sum(rir.samples**2)
    print(
        f"order {order}: {len(images):5d} images, "
        f"first arrival at sample {first_arrival_index(rir.samples)}, "
        f"{100 * early / total:5.1f}% of energy inside 80 ms"
    )

# a dense response for reference: enough orders to cover the full window
need = int(np.ceil(343.0 * k / fs / min(room.dims))) + 1
full = ism.simulate(room, src, rcv, need, fs, k)
edc = compute_edc(full)
crossing = int(np.argmax(edc.values_db <= -60.0))
print(f"\norder-{need} response: EDC reaches -60 dB at {crossing / fs * 1000:.0f} ms")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = np.arange(k) / fs
    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    axes[0].plot(t, full.samples, lw=0.4)
    axes[0].set_ylabel("amplitude")
    axes[0].set_title(f"full ISM response (order {need})")
    axes[1].plot(t, edc.values_db, lw=1.0)
    axes[1].set_ylabel("EDC [dB]")
    axes[1].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig("demo01_ism.png", dpi=120)
    print("wrote demo01_ism.png")
except ImportError:
    print("(matplotlib not installed; skipping the plot)")
