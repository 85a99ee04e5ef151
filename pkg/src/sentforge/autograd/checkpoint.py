"""Self-describing checkpoint container.

Layout::

    b"SFORGE1\\n"
    uint64 little-endian: byte length of the JSON header
    JSON header (UTF-8): spec, meta, optimizer hyperparameters, tensor index
    tensor blob: little-endian float64 values, row-major, in index order

Each index entry is ``{"name", "shape", "offset", "count"}`` where
``offset`` and ``count`` are in float64 elements from the start of the blob.
Optimizer slot arrays are stored as tensors named ``optimizer/<param>/<slot>``.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from sentforge.autograd.optim import OptimizerState
from sentforge.errors import CheckpointError

MAGIC = b"SFORGE1\n"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    spec: dict
    params: dict
    optimizer: OptimizerState | None = None
    meta: dict = field(default_factory=dict)


def _as_array(x):
    return np.asarray(getattr(x, "data", x), dtype="<f8")


def save_checkpoint(path, spec, params, optimizer=None, meta=None):
    arrays = [(name, _as_array(v)) for name, v in params.items()]
    opt_header = None
    if optimizer is not None:
        opt_header = optimizer.hyperparameters()
        for pname, slot in optimizer.slots.items():
            for sname, arr in slot.items():
                arrays.append((f"optimizer/{pname}/{sname}", _as_array(arr)))
    index = []
    offset = 0
    for name, arr in arrays:
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size
    header = {
        "format_version": FORMAT_VERSION,
        "spec": spec,
        "meta": meta or {},
        "optimizer": opt_header,
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes(order="C"))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (missing SFORGE1 header)")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", raw[pos : pos + 8])
    pos += 8
    try:
        header = json.loads(raw[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
    blob = np.frombuffer(raw, dtype="<f8", offset=pos + hlen)
    params = {}
    slots = {}
    for entry in header["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > blob.size:
            raise CheckpointError(f"{path}: tensor {entry['name']!r} runs past end of file")
        arr = blob[start : start + count].astype(np.float64).reshape(entry["shape"])
        name = entry["name"]
        if name.startswith("optimizer/"):
            pname, sname = name[len("optimizer/") :].rsplit("/", 1)
            slots.setdefault(pname, {})[sname] = arr
        else:
            params[name] = arr
    optimizer = None
    if header["optimizer"] is not None:
        hp = dict(header["optimizer"])
        step_count = hp.pop("step_count", 0)
        optimizer = OptimizerState(**hp)
        optimizer.step_count = step_count
        optimizer.slots = slots
    return Checkpoint(spec=header["spec"], params=params, optimizer=optimizer, meta=header["meta"])
