"""Binary parameter files: JSON header line + row-major little-endian float64."""
from __future__ import annotations

import json

import numpy as np


def write_params(path: str, header: dict, arrays: dict) -> None:
    header = dict(header)
    header["arrays"] = [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_params(path: str):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for meta in header["arrays"]:
            count = int(np.prod(meta["shape"])) if meta["shape"] else 1
            buf = fh.read(count * 8)
            arrays[meta["name"]] = np.frombuffer(buf, dtype="<f8").reshape(meta["shape"]).copy()
    return header, arrays
