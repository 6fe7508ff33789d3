"""Model checkpoints.

Byte layout (version 1)::

    b"MILCKPT 1\\n"
    <architecture descriptor: one line of UTF-8 JSON>\\n
    <parameter count as ASCII decimal>\\n
    <parameters: little-endian float64, concatenated in descriptor order>

The descriptor holds the model kind, its constructor arguments and the ordered
list of ``[name, shape]`` pairs used to slice the flat parameter array.
Round trips are bit-exact because parameters are stored as raw float64.
"""

import json
from pathlib import Path

import numpy as np

from ..core import MILError
from .nets import AttentionModel, InstanceModel, ParamModel

MAGIC = b"MILCKPT 1\n"


class CheckpointError(MILError):
    pass


def save_model(model: ParamModel, path) -> None:
    arch = model.architecture()
    arch["params"] = [[name, list(p.shape)] for name, p in model.params.items()]
    flat = model.get_flat().astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(arch, sort_keys=True).encode() + b"\n")
        fh.write(str(flat.size).encode() + b"\n")
        fh.write(flat.tobytes())


def _readline(buf: bytes, pos: int):
    end = buf.find(b"\n", pos)
    if end < 0:
        raise CheckpointError("truncated checkpoint header")
    return buf[pos:end], end + 1


def load_model(path) -> ParamModel:
    buf = Path(path).read_bytes()
    if not buf.startswith(MAGIC):
        raise CheckpointError("not a version-1 model checkpoint")
    pos = len(MAGIC)
    line, pos = _readline(buf, pos)
    try:
        arch = json.loads(line)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"bad architecture descriptor: {e}") from None
    line, pos = _readline(buf, pos)
    count = int(line)
    payload = buf[pos:]
    if len(payload) != 8 * count:
        raise CheckpointError(f"expected {count} float64 parameters, found {len(payload)} bytes")
    flat = np.frombuffer(payload, dtype="<f8").astype(float)

    kind = arch["kind"]
    C, d = arch["num_classes"], arch["feature_dim"]
    if kind == "instance":
        model = InstanceModel(C, d, pooling=arch["pooling"], hidden=arch["hidden"])
    elif kind == "attention":
        model = AttentionModel(C, d, arch["hidden"], arch["attention_hidden"], arch["use_attention"])
    else:
        raise CheckpointError(f"unknown model kind {kind!r}")
    shapes = [(name, tuple(shape)) for name, shape in arch["params"]]
    if shapes != [(n, p.shape) for n, p in model.params.items()]:
        raise CheckpointError("parameter layout does not match the architecture")
    model.set_flat(flat)
    return model
