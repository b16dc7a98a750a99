"""IDX binary image/label file parsing (the MNIST container format).

Big-endian throughout: a 4-byte magic (0x00000803 for 3-d image files,
0x00000801 for 1-d label files), one 4-byte big-endian size per dimension,
then raw unsigned bytes.  Errors name the byte offset that failed.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["read_idx", "write_idx", "IdxFormatError"]

MAGIC_IMAGES = 0x00000803
MAGIC_LABELS = 0x00000801


class IdxFormatError(ValueError):
    pass


def _read_exact(fh, count: int, offset: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise IdxFormatError(
            f"truncated IDX file: expected {count} bytes for {what} at byte offset {offset}, got {len(data)}"
        )
    return data


def read_idx(path, labels_path=None):
    """Read an IDX image file, optionally with a matching label file.

    Returns images normalized to [0, 1] with shape (n, rows, cols); with
    ``labels_path`` returns (images, labels) and checks the counts agree.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = struct.unpack(">I", _read_exact(fh, 4, 0, "magic number"))[0]
        if magic != MAGIC_IMAGES:
            raise IdxFormatError(
                f"bad image magic number 0x{magic:08x} at byte offset 0 in {path.name}"
            )
        dims = struct.unpack(">III", _read_exact(fh, 12, 4, "dimensions"))
        n, rows, cols = dims
        payload = _read_exact(fh, n * rows * cols, 16, f"{n}x{rows}x{cols} pixels")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)
    images = images.astype(np.float64) / 255.0

    if labels_path is None:
        return images

    labels_path = Path(labels_path)
    with open(labels_path, "rb") as fh:
        magic = struct.unpack(">I", _read_exact(fh, 4, 0, "magic number"))[0]
        if magic != MAGIC_LABELS:
            raise IdxFormatError(
                f"bad label magic number 0x{magic:08x} at byte offset 0 in {labels_path.name}"
            )
        n_labels = struct.unpack(">I", _read_exact(fh, 4, 4, "label count"))[0]
        if n_labels != n:
            raise IdxFormatError(
                f"label count {n_labels} does not match image count {n}"
            )
        labels = np.frombuffer(_read_exact(fh, n_labels, 8, "labels"), dtype=np.uint8)
    return images, labels.astype(np.int64)


def write_idx(path, images=None, labels=None) -> None:
    """Write an IDX image or label file (uint8 payload, big-endian header)."""
    path = Path(path)
    if (images is None) == (labels is None):
        raise ValueError("provide exactly one of images or labels")
    with open(path, "wb") as fh:
        if images is not None:
            arr = np.asarray(images)
            if arr.ndim != 3:
                raise ValueError("images must have shape (n, rows, cols)")
            if arr.dtype != np.uint8:
                arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
            fh.write(struct.pack(">IIII", MAGIC_IMAGES, *arr.shape))
            fh.write(arr.tobytes())
        else:
            arr = np.asarray(labels).astype(np.uint8)
            fh.write(struct.pack(">II", MAGIC_LABELS, arr.size))
            fh.write(arr.tobytes())
