"""Binary netpbm readers/writers (P6 color, P5 grey) and folder ingestion.

Only the 8-bit binary variants are supported; headers may contain '#'
comments. Writers quantize unit-scale pixels with round-half-even to the
0..255 grid.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from ..errors import DataError, FormatError, ShapeError
from ..masks import Mask
from .synthetic import Dataset


def _parse_header(data: bytes, magic: bytes, path: str):
    """Returns (width, height, payload offset); raises FormatError with the
    byte offset of the first malformed element."""
    if data[:2] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} magic", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header", offset=pos)
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
            continue
        if c == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise FormatError(f"{path}: non-numeric header field {token!r}", offset=start)
        fields.append(int(token))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(f"{path}: missing whitespace before payload", offset=pos)
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: non-positive dimensions {width}x{height}", offset=2)
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}", offset=2)
    return width, height, pos


def _read_payload(data: bytes, pos: int, count: int, path: str) -> np.ndarray:
    if len(data) - pos < count:
        raise FormatError(f"{path}: payload truncated, need {count} bytes "
                          f"have {len(data) - pos}", offset=pos)
    if len(data) - pos > count:
        raise FormatError(f"{path}: {len(data) - pos - count} trailing bytes",
                          offset=pos + count)
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)


def read_ppm(path) -> np.ndarray:
    """P6 file to a (3, H, W) float64 image in [0, 1]."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    w, h, pos = _parse_header(data, b"P6", path)
    flat = _read_payload(data, pos, w * h * 3, path)
    img = flat.reshape(h, w, 3).transpose(2, 0, 1)
    return img.astype(np.float64) / 255.0


def read_pgm_raw(path) -> np.ndarray:
    """P5 file to a (H, W) uint8 array."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    w, h, pos = _parse_header(data, b"P5", path)
    return _read_payload(data, pos, w * h, path).reshape(h, w)


def quantize_bytes(image: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, image):
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"P6 writer needs a (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    payload = quantize_bytes(img).transpose(1, 2, 0).tobytes()
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(payload)


def write_pgm(path, grey):
    g = np.asarray(grey)
    if g.ndim != 2:
        raise ShapeError(f"P5 writer needs a (H, W) array, got {g.shape}")
    h, w = g.shape
    if g.dtype == np.uint8:
        payload = g.tobytes()
    elif g.dtype == np.bool_:
        payload = np.where(g, np.uint8(255), np.uint8(0)).tobytes()
    else:
        payload = quantize_bytes(g).tobytes()
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(payload)


def load_mask_pgm(path, target_dims) -> Mask:
    """P5 greymap to a boolean mask: value >= 128 means attackable."""
    grey = read_pgm_raw(path)
    if grey.shape != tuple(target_dims):
        raise ShapeError(f"{os.fspath(path)}: mask dims {grey.shape} != "
                         f"image dims {tuple(target_dims)}")
    return Mask(grey >= 128)


def load_image_dir(path, labels_csv) -> Dataset:
    """Folder of P6 images listed in a 'filename,label' CSV, loaded in CSV
    row order with labels attached positionally."""
    path = os.fspath(path)
    labels_csv = os.fspath(labels_csv)
    try:
        with open(labels_csv, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{labels_csv}: {exc.strerror or exc}") from exc
    entries = []
    for lineno, row in enumerate(rows, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if lineno == 1 and row[0].strip().lower() == "filename":
            continue
        if len(row) != 2:
            raise DataError(f"{labels_csv}:{lineno}: expected 'filename,label', got {row!r}")
        name, label = row[0].strip(), row[1].strip()
        try:
            entries.append((name, int(label)))
        except ValueError:
            raise DataError(f"{labels_csv}:{lineno}: non-integer label {label!r}") from None
    if not entries:
        raise DataError(f"{labels_csv}: no image entries")
    images = []
    dims = None
    for name, _ in entries:
        full = os.path.join(path, name)
        if not os.path.exists(full):
            raise DataError(f"{full}: listed in {labels_csv} but missing")
        img = read_ppm(full)
        if dims is None:
            dims = img.shape
        elif img.shape != dims:
            raise DataError(f"{full}: dims {img.shape[1:]} differ from first image {dims[1:]}")
        images.append(img)
    labels = np.array([lab for _, lab in entries], dtype=np.int64)
    if labels.min() < 0:
        raise DataError(f"{labels_csv}: negative label")
    names = [f"class{c}" for c in range(int(labels.max()) + 1)]
    return Dataset(np.stack(images), labels, names, "all")
