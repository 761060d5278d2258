"""Shoebox image-source-method simulator.

Enumerates mirror images up to a maximum total reflection order, renders them
to a sampled impulse response with a windowed-sinc fractional delay and 1/d
spherical spreading, and composes the full conditioner pipeline (render,
direct-path alignment, peak normalization). Absorption is broadband per wall;
the amplitude reflection coefficient is sqrt(1 - alpha).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoincidentPoints, InfeasibleGeometry, InvalidGeometry
from .signals import (
    DEFAULT_KEEP_SECONDS,
    Rir,
    align_direct_path,
    normalize_peak,
)

SPEED_OF_SOUND = 343.0

# windowed-sinc fractional delay: 81 taps, Hann-shaped, centered on the delay
FRAC_DELAY_HALF_WIDTH = 40

_WALL_NAMES = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class Room:
    """Rectangular room: dimensions in meters and per-wall energy absorption.

    absorption order: walls at x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
    """

    dims: tuple[float, float, float]
    absorption: tuple[float, float, float, float, float, float]
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if len(self.dims) != 3 or any(d <= 0 for d in self.dims):
            raise ValueError(f"room dimensions must be positive, got {self.dims}")
        if len(self.absorption) != 6 or any(
            not 0.0 < a < 1.0 for a in self.absorption
        ):
            raise ValueError(
                f"need 6 per-wall absorption coefficients in (0, 1), got {self.absorption}"
            )
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "absorption", tuple(float(a) for a in self.absorption))

    def contains(self, position) -> bool:
        return all(0.0 < p < d for p, d in zip(position, self.dims))


@dataclass(frozen=True)
class SourcePose:
    position: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(p) for p in self.position))


@dataclass(frozen=True)
class ReceiverPose:
    position: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(p) for p in self.position))


@dataclass(frozen=True)
class ImageSource:
    position: tuple[float, float, float]
    amplitude: float
    order: int


def _axis_images(s: float, length: float, max_order: int):
    """Per-axis image coordinates with reflection counts at the two walls.

    Coordinates are (-1)^q * s + 2 m L for q in {0, 1} and integer m; the
    wall at 0 is hit |m - q| times and the wall at L is hit |m| times. The
    lattice bound |m| <= max_order + 1 suffices because each |m| costs at
    least |m| reflections.
    """
    bound = max_order + 1
    m = np.arange(-bound, bound + 1)
    coords, n_lo, n_hi = [], [], []
    for q in (0, 1):
        coords.append(((-1.0) ** q) * s + 2.0 * m * length)
        n_lo.append(np.abs(m - q))
        n_hi.append(np.abs(m))
    coords = np.concatenate(coords)
    n_lo = np.concatenate(n_lo)
    n_hi = np.concatenate(n_hi)
    keep = n_lo + n_hi <= max_order
    return coords[keep], n_lo[keep], n_hi[keep]


def enumerate_image_arrays(room: Room, src: SourcePose, max_order: int):
    """Vectorized image enumeration: (positions (N, 3), amplitudes, orders)."""
    if max_order < 0:
        raise ValueError(f"max_order must be >= 0, got {max_order}")
    if not room.contains(src.position):
        raise InvalidGeometry(f"source {src.position} outside room {room.dims}")
    beta = np.sqrt(1.0 - np.asarray(room.absorption))
    per_axis = [
        _axis_images(src.position[i], room.dims[i], max_order) for i in range(3)
    ]
    (cx, lx, hx), (cy, ly, hy), (cz, lz, hz) = per_axis
    order = (
        (lx + hx)[:, None, None]
        + (ly + hy)[None, :, None]
        + (lz + hz)[None, None, :]
    )
    keep = order <= max_order
    ix, iy, iz = np.nonzero(keep)
    positions = np.stack([cx[ix], cy[iy], cz[iz]], axis=1)
    amplitudes = (
        beta[0] ** lx[ix]
        * beta[1] ** hx[ix]
        * beta[2] ** ly[iy]
        * beta[3] ** hy[iy]
        * beta[4] ** lz[iz]
        * beta[5] ** hz[iz]
    )
    return positions, amplitudes, order[keep].astype(int)


def enumerate_images(room: Room, src: SourcePose, max_order: int) -> list[ImageSource]:
    """All image sources with total reflection order <= max_order."""
    positions, amplitudes, orders = enumerate_image_arrays(room, src, max_order)
    return [
        ImageSource(position=tuple(p), amplitude=float(a), order=int(o))
        for p, a, o in zip(positions, amplitudes, orders)
    ]


def _frac_delay_kernel(u: np.ndarray) -> np.ndarray:
    """Hann-windowed sinc evaluated at offsets u from the exact delay."""
    w = 0.5 * (1.0 + np.cos(np.pi * u / FRAC_DELAY_HALF_WIDTH))
    return np.where(np.abs(u) <= FRAC_DELAY_HALF_WIDTH, np.sinc(u) * w, 0.0)


def render_rir(
    images,
    rcv: ReceiverPose,
    sample_rate: int,
    k: int,
    c_sound: float = SPEED_OF_SOUND,
) -> Rir:
    """Sum delayed, attenuated image contributions into a length-k response.

    Each image contributes amplitude / (4 pi d) through the fractional-delay
    kernel centered at d * fs / c_sound samples; taps landing outside [0, k)
    are dropped.
    """
    if k <= 0:
        raise ValueError(f"output length must be positive, got {k}")
    out = np.zeros(k, dtype=np.float64)
    if isinstance(images, tuple) and len(images) == 2:
        positions, amplitudes = images
    elif len(images) == 0:
        return Rir(out, sample_rate)
    else:
        positions = np.array([im.position for im in images], dtype=np.float64)
        amplitudes = np.array([im.amplitude for im in images], dtype=np.float64)
    r = np.asarray(rcv.position, dtype=np.float64)
    offsets = np.arange(-FRAC_DELAY_HALF_WIDTH, FRAC_DELAY_HALF_WIDTH + 2)
    for lo in range(0, positions.shape[0], 8192):
        pos = positions[lo : lo + 8192]
        amp = amplitudes[lo : lo + 8192]
        d = np.linalg.norm(pos - r, axis=1)
        if np.any(d < 1e-6):
            raise CoincidentPoints("an image source coincides with the receiver")
        delay = d * sample_rate / c_sound
        gain = amp / (4.0 * np.pi * d)
        base = np.floor(delay).astype(np.int64)
        taps = base[:, None] + offsets[None, :]
        contrib = gain[:, None] * _frac_delay_kernel(taps - delay[:, None])
        valid = (taps >= 0) & (taps < k)
        np.add.at(out, taps[valid], contrib[valid])
    return Rir(out, sample_rate)


def truncate_window(rir: Rir, window_seconds: float) -> Rir:
    """Zero all samples at or past round(window_seconds * fs); length unchanged."""
    if window_seconds <= 0:
        raise ValueError(f"window_seconds must be positive, got {window_seconds}")
    cut = int(round(window_seconds * rir.sample_rate))
    if cut >= len(rir):
        return rir
    out = rir.samples.copy()
    out[cut:] = 0.0
    return Rir(out, rir.sample_rate)


def simulate(
    room: Room,
    src: SourcePose,
    rcv: ReceiverPose,
    max_order: int,
    sample_rate: int,
    k: int,
    keep_seconds: float = DEFAULT_KEEP_SECONDS,
) -> Rir:
    """Order-limited ISM response, direct-path aligned and peak normalized."""
    arrays = enumerate_image_arrays(room, src, max_order)
    rir = render_rir((arrays[0], arrays[1]), rcv, sample_rate, k, room.speed_of_sound)
    rir = align_direct_path(rir, keep_seconds)
    return normalize_peak(rir)


# ---------------------------------------------------------------------------
# random geometry sampling

@dataclass(frozen=True)
class GeometryRanges:
    """Sampling ranges for rooms and poses (broadband, unfurnished)."""

    dims_low: tuple[float, float, float] = (3.0, 3.0, 2.4)
    dims_high: tuple[float, float, float] = (10.0, 8.0, 4.0)
    absorption_low: float = 0.02
    absorption_high: float = 0.40
    wall_margin: float = 0.5
    min_separation: float = 0.3
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.dims_low, self.dims_high)):
            raise ValueError("dims_low must not exceed dims_high")
        if not 0.0 < self.absorption_low <= self.absorption_high < 1.0:
            raise ValueError("absorption range must lie inside (0, 1)")
        if self.wall_margin < 0 or self.min_separation < 0:
            raise ValueError("margins must be non-negative")


MAX_POSE_ATTEMPTS = 200


def sample_room(rng: np.random.Generator, ranges: GeometryRanges = GeometryRanges()) -> Room:
    dims = tuple(rng.uniform(lo, hi) for lo, hi in zip(ranges.dims_low, ranges.dims_high))
    absorption = tuple(rng.uniform(ranges.absorption_low, ranges.absorption_high) for _ in range(6))
    return Room(dims=dims, absorption=absorption, speed_of_sound=ranges.speed_of_sound)


def sample_position(
    room: Room, rng: np.random.Generator, margin: float
) -> tuple[float, float, float]:
    if any(d <= 2.0 * margin for d in room.dims):
        raise InfeasibleGeometry(
            f"margin {margin} leaves no interior in room {room.dims}"
        )
    return tuple(rng.uniform(margin, d - margin) for d in room.dims)


def sample_pose_pair(room: Room, rng: np.random.Generator, ranges: GeometryRanges):
    """A source/receiver pair satisfying margin and separation constraints."""
    src = sample_position(room, rng, ranges.wall_margin)
    for _ in range(MAX_POSE_ATTEMPTS):
        rcv = sample_position(room, rng, ranges.wall_margin)
        if np.linalg.norm(np.subtract(src, rcv)) >= ranges.min_separation:
            return SourcePose(src), ReceiverPose(rcv)
    raise InfeasibleGeometry(
        f"could not place a receiver {ranges.min_separation} m away from the source"
    )


def sample_room_configs(
    count: int,
    rng: np.random.Generator,
    ranges: GeometryRanges = GeometryRanges(),
) -> list[tuple[Room, SourcePose, ReceiverPose]]:
    """Reproducible random (room, source, receiver) triples."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    configs = []
    for _ in range(count):
        room = sample_room(rng, ranges)
        src, rcv = sample_pose_pair(room, rng, ranges)
        configs.append((room, src, rcv))
    return configs
