"""Neural model persistence: JSON header plus raw float64 weight payload."""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ValidationError
from .mlp import MlpConfig
from .model import MlpClassifier, RnnClassifier, RnnConfig

MAGIC = b"QNNM"
VERSION = 1


def save_model(path, classifier, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    names = sorted(params.keys())
    header = {
        "kind": classifier.kind,
        "config": classifier.config.to_dict(),
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "meta": meta or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def load_model(path):
    """Returns (classifier, params, meta)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValidationError(f"{path} is not a neural model file")
        version, header_len = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise ValidationError(f"unsupported model file version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValidationError(f"model file truncated in {entry['name']}")
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if header["kind"] == "mlp":
        classifier = MlpClassifier(MlpConfig.from_dict(header["config"]))
    elif header["kind"] == "rnn":
        classifier = RnnClassifier(RnnConfig.from_dict(header["config"]))
    else:
        raise ValidationError(f"unknown model kind {header['kind']!r}")
    return classifier, params, header["meta"]
