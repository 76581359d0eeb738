"""
Storage - atomic file writes, checkpoint codec and the JSON-lines metrics log

Checkpoint layout:
    b"OSMCAA1\\0"
    uint32 LE header length
    header: canonical JSON (sorted keys)
    every parameter tensor, then every optimizer velocity, as LE float64
"""
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union
import json
import logging
import os
import struct
import tempfile

import numpy as np
from pydantic import BaseModel

from app.engine.model import TENSOR_NAMES, ModelParams
from app.errors import CheckpointFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"OSMCAA1\0"
CHECKPOINT_VERSION = 1
_LEN = struct.Struct("<I")
_FLOAT = np.dtype("<f8")


@contextmanager
def atomic_write(path: PathLike, mode: str = "w") -> Iterator[Any]:
    """
    Write to a temp file next to path and rename it over path on success

    On any exception the temp file is removed and path is left untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": "\n"}
    try:
        with os.fdopen(fd, mode, **kwargs) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: PathLike, payload: Union[BaseModel, Dict[str, Any], List[Any]]) -> None:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json", by_alias=True)
    with atomic_write(path) as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    logger.info(f"Wrote {path}")


@dataclass
class Checkpoint:
    params: ModelParams
    velocity: Optional[ModelParams] = None
    epoch: int = 0
    config: Dict[str, Any] = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    params = ckpt.params
    params.validate()
    tensors = params.tensors()
    header = {
        "format": "osmcaa-checkpoint",
        "version": CHECKPOINT_VERSION,
        "dims": params.dims.model_dump(),
        "tensors": [[name, list(tensors[name].shape)] for name in TENSOR_NAMES],
        "has_velocity": ckpt.velocity is not None,
        "epoch": int(ckpt.epoch),
        "config": ckpt.config,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    chunks = [CHECKPOINT_MAGIC, _LEN.pack(len(header_bytes)), header_bytes]
    blocks = [params] if ckpt.velocity is None else [params, ckpt.velocity]
    for block in blocks:
        block_tensors = block.tensors()
        for name in TENSOR_NAMES:
            arr = block_tensors[name]
            if arr.shape != tensors[name].shape:
                raise CheckpointFormatError(
                    f"velocity {name} has shape {arr.shape}, parameter has {tensors[name].shape}"
                )
            chunks.append(np.ascontiguousarray(arr, dtype=_FLOAT).tobytes())
    return b"".join(chunks)


def decode_checkpoint(data: bytes) -> Checkpoint:
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointFormatError("not a checkpoint file (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    if len(data) < offset + _LEN.size:
        raise CheckpointFormatError("checkpoint truncated in header length")
    (header_len,) = _LEN.unpack_from(data, offset)
    offset += _LEN.size
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"checkpoint header is not valid JSON: {exc}")
    offset += header_len
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {header.get('version')!r}")

    shapes = {name: tuple(shape) for name, shape in header["tensors"]}
    if set(shapes) != set(TENSOR_NAMES):
        raise CheckpointFormatError(f"checkpoint tensors {sorted(shapes)} do not match {list(TENSOR_NAMES)}")

    def read_block() -> ModelParams:
        nonlocal offset
        tensors = {}
        for name in TENSOR_NAMES:
            count = int(np.prod(shapes[name], dtype=np.int64))
            end = offset + count * _FLOAT.itemsize
            if end > len(data):
                raise CheckpointFormatError(f"checkpoint truncated in tensor {name}")
            tensors[name] = np.frombuffer(data, dtype=_FLOAT, count=count, offset=offset).astype(np.float64).reshape(shapes[name])
            offset = end
        return ModelParams.from_tensors(tensors)

    params = read_block()
    velocity = read_block() if header.get("has_velocity") else None
    if offset != len(data):
        raise CheckpointFormatError(f"{len(data) - offset} trailing bytes after checkpoint tensors")
    return Checkpoint(params=params, velocity=velocity, epoch=int(header["epoch"]), config=header.get("config", {}))


def save_checkpoint(path: PathLike, ckpt: Checkpoint) -> None:
    payload = encode_checkpoint(ckpt)
    with atomic_write(path, "wb") as handle:
        handle.write(payload)
    logger.info(f"Saved checkpoint at epoch {ckpt.epoch} to {path}")


def load_checkpoint(path: PathLike) -> Checkpoint:
    with open(path, "rb") as handle:
        data = handle.read()
    try:
        return decode_checkpoint(data)
    except CheckpointFormatError as exc:
        raise CheckpointFormatError(f"{path}: {exc}")


class MetricsLog:
    """Append-only JSON-lines log, one serialized record per line"""

    def __init__(self, path: PathLike):
        self.path = Path(path)

    def start(self, resume: bool = False) -> None:
        """Truncate for a fresh run; keep existing lines when resuming"""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if resume and self.path.exists():
            return
        self.path.write_text("", encoding="utf-8")

    def append(self, record: BaseModel) -> None:
        with open(self.path, "a", encoding="utf-8", newline="\n") as handle:
            handle.write(record.model_dump_json() + "\n")

    def read(self) -> List[Dict[str, Any]]:
        with open(self.path, encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]
