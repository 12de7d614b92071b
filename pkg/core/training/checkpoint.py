"""
Binary checkpoint codec.

Layout (little-endian):
    "CGCK" | u32 version | u64 step | u32 len + UTF-8 JSON config
    entries up to the last 32 bytes, each:
        u16 name len | name | u8 dtype (0=f64, 1=f32) | u8 rank | u32 dims... | payload
    RNG state: PCG64 state and increment as 4 x u64 (hi, lo, hi, lo)
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np

from ..errors import CheckpointError
from ..world.formats import atomic_write_bytes


logger = logging.getLogger(__name__)

MAGIC = b"CGCK"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f8"): 0, np.dtype("<f4"): 1}
_CODE_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_MASK64 = (1 << 64) - 1
RNG_BYTES = struct.calcsize("<4Q")


@dataclass
class Checkpoint:
    step: int
    config: Dict[str, Any]
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: Tuple[int, int, int, int] = (0, 0, 0, 0)
    version: int = VERSION


def pack_rng(generator: np.random.Generator) -> Tuple[int, int, int, int]:
    state = generator.bit_generator.state
    if state["bit_generator"] != "PCG64":
        raise ValueError(f"Only PCG64 generators can be checkpointed, got {state['bit_generator']}")
    s, inc = state["state"]["state"], state["state"]["inc"]
    return (s >> 64) & _MASK64, s & _MASK64, (inc >> 64) & _MASK64, inc & _MASK64


def unpack_rng(packed: Tuple[int, int, int, int]) -> np.random.Generator:
    s_hi, s_lo, inc_hi, inc_lo = packed
    bit_generator = np.random.PCG64()
    bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": (s_hi << 64) | s_lo, "inc": (inc_hi << 64) | inc_lo},
        "has_uint32": 0,
        "uinteger": 0,
    }
    return np.random.Generator(bit_generator)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    config_bytes = json.dumps(checkpoint.config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts: List[bytes] = [
        MAGIC,
        struct.pack("<IQ", checkpoint.version, checkpoint.step),
        struct.pack("<I", len(config_bytes)),
        config_bytes,
    ]
    for name, array in checkpoint.tensors.items():
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            raise CheckpointError(f"unsupported dtype {array.dtype}", entry=name)
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<BB", _DTYPE_CODES[dtype], array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    parts.append(struct.pack("<4Q", *checkpoint.rng_state))
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0
        self.limit = len(payload)

    @property
    def remaining(self) -> int:
        return self.limit - self.offset

    def take(self, size: int, what: str, entry=None) -> bytes:
        end = self.offset + size
        if end > self.limit:
            raise CheckpointError(f"file truncated while reading {what}", entry=entry)
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str, entry=None):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what, entry))


def decode_checkpoint(payload: bytes) -> Checkpoint:
    reader = _Reader(payload)
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic (not a checkpoint file)")
    version, step = reader.unpack("<IQ", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (config_len,) = reader.unpack("<I", "config length")
    try:
        config = json.loads(reader.take(config_len, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"config block is not valid JSON: {exc}") from None

    if len(payload) - reader.offset < RNG_BYTES:
        raise CheckpointError("file truncated while reading RNG state")
    # entries may not run into the trailing RNG state
    reader.limit = len(payload) - RNG_BYTES
    tensors: Dict[str, np.ndarray] = {}
    index = 0
    while reader.remaining > 0:
        (name_len,) = reader.unpack("<H", "entry name length", entry=f"#{index}")
        try:
            name = reader.take(name_len, "entry name", entry=f"#{index}").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("entry name is not UTF-8", entry=f"#{index}") from None
        code, rank = reader.unpack("<BB", "entry dtype", entry=name)
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"unknown dtype code {code}", entry=name)
        dims = reader.unpack(f"<{rank}I", "entry shape", entry=name)
        dtype = _CODE_DTYPES[code]
        n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        data = np.frombuffer(reader.take(n_bytes, "entry payload", entry=name), dtype=dtype)
        if name in tensors:
            raise CheckpointError("duplicate entry", entry=name)
        tensors[name] = data.reshape(dims).copy()
        index += 1

    reader.limit = len(payload)
    rng_state = reader.unpack("<4Q", "RNG state")
    return Checkpoint(step=step, config=config, tensors=tensors, rng_state=rng_state, version=version)


def save_checkpoint(path, checkpoint: Checkpoint) -> Path:
    """Atomic write (temp file + rename)"""
    path = Path(path)
    atomic_write_bytes(path, encode_checkpoint(checkpoint))
    logger.debug(f"Saved checkpoint step={checkpoint.step} entries={len(checkpoint.tensors)} to {path}")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def model_entries(module) -> Dict[str, np.ndarray]:
    """Parameters plus their Adam moments and step counts"""
    entries: Dict[str, np.ndarray] = {}
    for name, param in module.named_parameters():
        entries[name] = param.data
        entries[f"{name}#adam_m"] = param.adam_m
        entries[f"{name}#adam_v"] = param.adam_v
        entries[f"{name}#adam_step"] = np.array(float(param.adam_step), dtype=param.data.dtype)
    return entries


def restore_model(module, tensors: Dict[str, np.ndarray]) -> None:
    """Inverse of model_entries; names the first missing or mis-shaped entry"""
    module.load_state_dict({name: tensors[name] for name, _ in module.named_parameters() if name in tensors})
    for name, param in module.named_parameters():
        for suffix, shape in (("#adam_m", param.shape), ("#adam_v", param.shape), ("#adam_step", ())):
            key = name + suffix
            if key not in tensors:
                raise CheckpointError("missing optimizer state", entry=key)
            if tuple(tensors[key].shape) != tuple(shape):
                raise CheckpointError(
                    f"shape mismatch: file has {tensors[key].shape}, model expects {shape}", entry=key)
        param.adam_m = tensors[name + "#adam_m"].astype(param.data.dtype, copy=True)
        param.adam_v = tensors[name + "#adam_v"].astype(param.data.dtype, copy=True)
        param.adam_step = int(tensors[name + "#adam_step"])
