"""PNG and JSON file helpers. Writes go through a temp file so failures leave nothing behind."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import cv2
import numpy as np


class ImageReadError(IOError):
    pass


def read_image(path, dtype=np.float32):
    """Read an 8- or 16-bit PNG (or anything OpenCV decodes) as RGB in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ImageReadError(f"{path}: no such file")
    data = np.fromfile(path, dtype=np.uint8)
    img = cv2.imdecode(data, cv2.IMREAD_UNCHANGED) if data.size else None
    if img is None:
        raise ImageReadError(f"{path}: cannot decode image")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageReadError(f"{path}: unsupported sample type {img.dtype}")
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    elif img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGB)
    else:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    return img.astype(dtype) / dtype(scale)


def _atomic_write(path, payload: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_png(arr):
    ok, buf = cv2.imencode(".png", arr)
    if not ok:
        raise IOError("PNG encoding failed")
    return buf.tobytes()


def to_uint16(img):
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_png16(path, img):
    a = to_uint16(img)
    if a.ndim == 3:
        a = cv2.cvtColor(a, cv2.COLOR_RGB2BGR)
    _atomic_write(path, _encode_png(a))


def write_mask_png(path, mask):
    """8-bit grayscale dump, value ``round(255 * m)``."""
    a = np.round(np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    _atomic_write(path, _encode_png(a))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_json(path, obj):
    _atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())
