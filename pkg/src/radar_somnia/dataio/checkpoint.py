"""Binary checkpoint format for :class:`ModelWeights`.

Layout::

    RADAR-SOMNIA-CKPT\\n
    format_version=1\\n
    config.<key>=<value>\\n      (one line per ModelConfig field)
    array <name> <d0>x<d1>...\\n  (one line per array, in file order)
    end\\n
    <raw little-endian float64 payloads, concatenated>
    <sha256 digest of everything above, 32 bytes>
"""

from __future__ import annotations

import ast
import hashlib
from pathlib import Path

import numpy as np

from ..errors import CorruptCheckpoint, VersionMismatch
from ..model.config import ModelConfig
from ..model.network import ModelWeights, param_shapes

MAGIC = b"RADAR-SOMNIA-CKPT\n"
FORMAT_VERSION = 1
_DIGEST = 32


def _encode_value(v):
    return repr(v)


def _decode_config(items):
    d = {}
    for k, raw in items.items():
        try:
            d[k] = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            raise CorruptCheckpoint(f"unreadable config value {k}={raw!r}") from None
    try:
        return ModelConfig(**d)
    except TypeError as exc:
        raise VersionMismatch(f"config fields do not match this version: {exc}") from None


def save_checkpoint(weights: ModelWeights, path):
    lines = [f"format_version={FORMAT_VERSION}"]
    for k, v in weights.config.to_dict().items():
        lines.append(f"config.{k}={_encode_value(v)}")
    names = list(param_shapes(weights.config))
    for name in names:
        shape = weights[name].shape
        lines.append(f"array {name} {'x'.join(str(s) for s in shape) or 'scalar'}")
    lines.append("end")
    head = MAGIC + ("\n".join(lines) + "\n").encode("ascii")
    body = b"".join(np.ascontiguousarray(weights[n], dtype="<f8").tobytes() for n in names)
    blob = head + body
    Path(path).write_bytes(blob + hashlib.sha256(blob).digest())


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> ModelWeights:
    """Read a checkpoint; raises CorruptCheckpoint or VersionMismatch.

    When ``expected_config`` is given the stored config must equal it.
    """
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise CorruptCheckpoint(f"{path}: not a checkpoint file")
    if len(blob) < len(MAGIC) + _DIGEST:
        raise CorruptCheckpoint(f"{path}: truncated")
    data, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(data).digest() != digest:
        raise CorruptCheckpoint(f"{path}: checksum mismatch")
    end = data.find(b"\nend\n")
    if end < 0:
        raise CorruptCheckpoint(f"{path}: header not terminated")
    header = data[len(MAGIC):end].decode("ascii").split("\n")
    payload = data[end + len(b"\nend\n"):]

    version = None
    cfg_items = {}
    arrays = []
    for line in header:
        if line.startswith("format_version="):
            version = int(line.split("=", 1)[1])
        elif line.startswith("config."):
            k, v = line[len("config."):].split("=", 1)
            cfg_items[k] = v
        elif line.startswith("array "):
            _, name, dims = line.split(" ")
            shape = () if dims == "scalar" else tuple(int(s) for s in dims.split("x"))
            arrays.append((name, shape))
        else:
            raise CorruptCheckpoint(f"{path}: unexpected header line {line!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    config = _decode_config(cfg_items)
    if expected_config is not None and config != expected_config:
        diff = [k for k in config.keys() if getattr(config, k) != getattr(expected_config, k)]
        raise VersionMismatch(f"{path}: model config differs in {', '.join(diff)}")

    out = {}
    offset = 0
    for name, shape in arrays:
        n = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + n > len(payload):
            raise CorruptCheckpoint(f"{path}: payload too short for {name}")
        out[name] = np.frombuffer(payload[offset:offset + n], dtype="<f8").reshape(shape).astype(np.float64)
        offset += n
    if offset != len(payload):
        raise CorruptCheckpoint(f"{path}: {len(payload) - offset} trailing bytes")
    try:
        return ModelWeights(config, out)
    except (KeyError, ValueError) as exc:
        raise VersionMismatch(f"{path}: arrays do not fit the config ({exc})") from None
