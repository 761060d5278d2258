"""On-disk dataset plumbing: float32 WAVs, line-delimited JSON manifests,
split assignment, and the run configuration shared by the CLI commands.

Manifest paths are stored relative to the manifest file so a dataset
directory can be relocated (and so reruns in different directories produce
byte-identical manifests).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import InvalidConfig

SPLITS = ("train", "valid", "test")
SOURCE_TAGS = ("ism", "surrogate", "external")


# ---------------------------------------------------------------------------
# WAV I/O (RIFF float32; float64 masters live only in checkpoints and tests)

def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    wavfile.write(path, sample_rate, np.asarray(samples, dtype=np.float32))


def read_wav(path) -> tuple[np.ndarray, int]:
    sample_rate, data = wavfile.read(path)
    return np.asarray(data, dtype=np.float64), int(sample_rate)


# ---------------------------------------------------------------------------
# manifest records

@dataclass(frozen=True)
class Record:
    id: str
    conditioner_path: str
    target_path: str
    room_id: str
    source_id: str
    receiver_id: str
    max_order: int
    split: str
    source_tag: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.source_tag not in SOURCE_TAGS:
            raise ValueError(
                f"source_tag must be one of {SOURCE_TAGS}, got {self.source_tag!r}"
            )


_FIELD_ORDER = [f.name for f in dataclasses.fields(Record)]


def write_manifest(path, records) -> None:
    """One JSON object per line, fixed key order."""
    with open(path, "w") as fh:
        for rec in records:
            row = {name: getattr(rec, name) for name in _FIELD_ORDER}
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path, check_files: bool = True) -> list[Record]:
    """Load records; ids must be unique and referenced files must exist."""
    base = Path(path).parent
    records: list[Record] = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                rec = Record(**row)
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                raise InvalidConfig(f"{path}:{lineno}: bad manifest record ({exc})")
            if rec.id in seen:
                raise InvalidConfig(f"{path}:{lineno}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            if check_files:
                for rel in (rec.conditioner_path, rec.target_path):
                    if not (base / rel).exists():
                        raise InvalidConfig(
                            f"{path}:{lineno}: missing referenced file {rel!r}"
                        )
            records.append(rec)
    return records


def resolve_path(manifest_path, rel: str) -> Path:
    return Path(manifest_path).parent / rel


def assign_splits(
    n: int,
    rng: np.random.Generator,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> list[str]:
    """Random split labels for n items by explicit shuffle (recorded seed).

    Test and validation sizes are rounded from their fractions; the remainder
    is training data.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    n_valid = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    if n_valid + n_test > n:
        raise ValueError("split fractions leave no training data")
    labels = ["train"] * (n - n_valid - n_test) + ["valid"] * n_valid + ["test"] * n_test
    order = rng.permutation(n)
    out = [""] * n
    for slot, item in enumerate(order):
        out[item] = labels[slot]
    return out


def load_split_arrays(manifest_path, records, k: int | None = None):
    """Read conditioner/target WAV pairs into (cond, target) float64 arrays."""
    conds, targets = [], []
    for rec in records:
        c, _ = read_wav(resolve_path(manifest_path, rec.conditioner_path))
        x, _ = read_wav(resolve_path(manifest_path, rec.target_path))
        if k is not None and (c.size != k or x.size != k):
            raise InvalidConfig(
                f"record {rec.id}: expected length {k}, got {c.size}/{x.size}"
            )
        conds.append(c)
        targets.append(x)
    return np.stack(conds), np.stack(targets)


# ---------------------------------------------------------------------------
# run configuration

PRESETS = {
    "desk": {"sample_rate": 8000, "k": 2048, "t_steps": 100, "base_channels": 8},
    "paper": {"sample_rate": 16000, "k": 24576, "t_steps": 1000, "base_channels": 32},
}


@dataclass(frozen=True)
class RunConfig:
    sample_rate: int = 16000
    k: int = 24576
    t_steps: int = 1000
    schedule_offset: float = 0.008
    lambda_edc: float = 1e-5
    cfg_dropout: float = 0.2
    guidance: float = 1.0
    max_order: int = 5
    seed: int = 0
    base_channels: int = 32
    keep_seconds: float = 0.0025
    edc_floor_db: float = -60.0
    preset: str = "paper"

    def __post_init__(self):
        if self.k <= 0 or self.k % 128 != 0:
            raise InvalidConfig(f"k must be a positive multiple of 128, got {self.k}")
        if self.guidance < 1.0:
            raise InvalidConfig(f"guidance must be >= 1, got {self.guidance}")
        if self.lambda_edc < 0.0:
            raise InvalidConfig(f"lambda must be >= 0, got {self.lambda_edc}")
        if not 0.0 <= self.cfg_dropout <= 1.0:
            raise InvalidConfig(f"cfg-dropout must be in [0, 1], got {self.cfg_dropout}")
        if self.t_steps < 1:
            raise InvalidConfig(f"t-steps must be >= 1, got {self.t_steps}")
        if self.sample_rate <= 0:
            raise InvalidConfig(f"sample-rate must be positive, got {self.sample_rate}")
        if self.max_order < 0:
            raise InvalidConfig(f"order must be >= 0, got {self.max_order}")

    @property
    def k80(self) -> int:
        return int(round(0.080 * self.sample_rate))


def build_run_config(config_file=None, preset: str | None = None, **overrides) -> RunConfig:
    """Layer a JSON config file and CLI overrides over a preset's defaults."""
    values: dict = {}
    if preset:
        if preset not in PRESETS:
            raise InvalidConfig(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
        values["preset"] = preset
    if config_file:
        try:
            loaded = json.loads(Path(config_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config file {config_file}: {exc}")
        if not isinstance(loaded, dict):
            raise InvalidConfig(f"config file {config_file} must hold a JSON object")
        unknown = set(loaded) - {f.name for f in dataclasses.fields(RunConfig)}
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise InvalidConfig(str(exc))


def echo_config(config: RunConfig, run_dir) -> None:
    """Write the effective configuration into the run directory."""
    Path(run_dir).mkdir(parents=True, exist_ok=True)
    payload = json.dumps(dataclasses.asdict(config), indent=2, sort_keys=True) + "\n"
    (Path(run_dir) / "config.json").write_text(payload)


def num_workers() -> int:
    """Worker-pool size from RIRFORGE_NUM_WORKERS (default 1 = serial)."""
    raw = os.environ.get("RIRFORGE_NUM_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfig(f"RIRFORGE_NUM_WORKERS must be an integer, got {raw!r}")
    return max(1, n)
