"""Versioned binary checkpoint container.

Layout: a little-endian uint32 format version, a little-endian uint64 header
length, a UTF-8 JSON header (network config, config hash, tensor directory,
optional run metadata), then the raw tensor blobs as little-endian float64 in
directory order. Parameter round-trips are bit-exact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptCheckpoint, VersionMismatch
from .unet import UNetConfig

FORMAT_VERSION = 1
_HEAD = struct.Struct("<IQ")


def config_hash(config: UNetConfig) -> str:
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _config_to_dict(config: UNetConfig) -> dict:
    return dataclasses.asdict(config)


def _config_from_dict(d: dict) -> UNetConfig:
    d = dict(d)
    d["channel_multipliers"] = tuple(d["channel_multipliers"])
    d["bottleneck_dilations"] = tuple(d["bottleneck_dilations"])
    return UNetConfig(**d)


def save_checkpoint(
    path,
    params: dict[str, np.ndarray],
    config: UNetConfig,
    optimizer_state: dict[str, np.ndarray] | None = None,
    extra: dict | None = None,
) -> None:
    """Write params (and optionally flat optimizer tensors) to ``path``.

    optimizer_state maps names to arrays; scalar entries go in the header via
    ``extra``. All blobs are stored as little-endian float64.
    """
    tensors: list[tuple[str, np.ndarray]] = list(params.items())
    if optimizer_state:
        tensors += [(f"opt.{k}", v) for k, v in optimizer_state.items()]
    directory = []
    offset = 0
    for name, arr in tensors:
        nbytes = arr.size * 8
        directory.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": str(arr.dtype),
                "offset": offset,
                "nbytes": nbytes,
            }
        )
        offset += nbytes
    header = {
        "config": _config_to_dict(config),
        "config_hash": config_hash(config),
        "tensors": directory,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expected_config: UNetConfig | None = None):
    """Read a checkpoint; returns (params, config, optimizer_state, extra).

    Raises CorruptCheckpoint on truncation or malformed contents and
    VersionMismatch on an unknown format version or (when expected_config is
    given) a config hash that differs from the expected one.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise CorruptCheckpoint(f"{path}: shorter than the fixed header")
    version, header_len = _HEAD.unpack_from(raw, 0)
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    body_start = _HEAD.size + header_len
    if len(raw) < body_start:
        raise CorruptCheckpoint(f"{path}: truncated header")
    try:
        header = json.loads(raw[_HEAD.size : body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: malformed header ({exc})") from exc
    try:
        config = _config_from_dict(header["config"])
        directory = header["tensors"]
        stored_hash = header["config_hash"]
        extra = header.get("extra", {})
    except (KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: incomplete header ({exc})") from exc
    if stored_hash != config_hash(config):
        raise CorruptCheckpoint(f"{path}: header config hash does not match config")
    if expected_config is not None and config_hash(expected_config) != stored_hash:
        raise VersionMismatch(f"{path}: checkpoint was written for a different config")
    params: dict[str, np.ndarray] = {}
    optimizer_state: dict[str, np.ndarray] = {}
    for entry in directory:
        start = body_start + entry["offset"]
        stop = start + entry["nbytes"]
        if stop > len(raw):
            raise CorruptCheckpoint(f"{path}: tensor {entry['name']!r} truncated")
        flat = np.frombuffer(raw[start:stop], dtype="<f8")
        arr = flat.reshape(entry["shape"]).astype(entry["dtype"], copy=True)
        name = entry["name"]
        if name.startswith("opt."):
            optimizer_state[name[4:]] = arr
        else:
            params[name] = arr
    return params, config, (optimizer_state or None), extra
