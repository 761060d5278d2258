"""rirforge: diffusion-based room impulse response completion.

A numpy library covering the full pipeline: shoebox image-source simulation
of early reflections, signal preprocessing and energy decay curves, an
x-prediction DDPM with classifier-free guidance, a 1-D U-Net denoiser with
its own reverse-mode gradients, hybrid MSE+EDC training, and the evaluation
metrics, plus a CLI that ties dataset synthesis, training, completion, and
evaluation together.
"""

from . import errors
from .signals import Rir, Edc, normalize_peak, align_direct_path, fit_length, compute_edc

__version__ = "0.1.0"

__all__ = [
    "errors",
    "Rir",
    "Edc",
    "normalize_peak",
    "align_direct_path",
    "fit_length",
    "compute_edc",
    "__version__",
]
